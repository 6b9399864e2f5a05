"""Spiking U-Net for depth: strided encoder, residual bottleneck, upsampling
decoder with a depth head per scale.

Encoder blocks halve the resolution with a bias-free 3x3 stride-2 conv and
feed an integrate-and-fire population. The block variant decides where
attention sits and which tensor propagates:

  CE       conv -> IF, continuous conv output propagates
  CE-Att   attention -> conv -> IF, continuous conv output propagates
  DE       conv -> IF, spike train propagates
  DE-Att1  attention -> conv -> IF, spike train propagates
  DE-Att2  conv -> attention -> IF, spike train propagates

Residual blocks (IF, conv, IF, conv, attention, plus identity) keep the
bottleneck scale. Decoder blocks upsample by 2 (nearest), gate with
attention, 3x3 conv, IF; the spike train plus the matching-scale skip tensor
feeds the next layer. Skips are elementwise sums, and the full-resolution
skip is the network input itself. Each decoder layer also taps the upsampled
tensor through a 1x1 conv into an integrator population whose membrane after
step T is that scale's depth map. The final depth is the last layer's
membrane cropped back to the input geometry.

Forward resets every membrane, so samples are independent. Firing statistics
cover the spiking populations only (integrator heads never fire). Synaptic
operation counting distinguishes accumulate ops (conv windows reading binary
spike tensors, counted from actual spike positions) from the dense
multiply-accumulate total that the same network would spend with no sparsity.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tz
from . import neurons as nr
from . import attention as at
from . import events as ev
from .tensor import Tensor

ENCODER_VARIANTS = ("CE", "DE", "CE-Att", "DE-Att1", "DE-Att2")
NEURON_MODES = ("spiking", "smooth")
RESIDUAL_BLOCKS = 2
KERNEL = 3


@dataclass(frozen=True)
class ModelConfig:
    height: int = 64
    width: int = 64
    time_steps: int = 5
    in_channels: int = 4
    base_channels: int = 8
    layers: int = 4
    encoder_variant: str = "CE-Att"
    attention: str = "CS"
    reduction: int = 1
    v_threshold: float = 1.0
    v_reset: float = 0.0
    surrogate_alpha: float = 1.0
    neuron_mode: str = "spiking"
    conv_bias: bool = False

    def __post_init__(self):
        if self.encoder_variant not in ENCODER_VARIANTS:
            raise tz.ArgumentError("encoder_variant must be one of %s, got %r"
                                   % (ENCODER_VARIANTS, self.encoder_variant))
        if self.neuron_mode not in NEURON_MODES:
            raise tz.ArgumentError("neuron_mode must be one of %s, got %r"
                                   % (NEURON_MODES, self.neuron_mode))
        object.__setattr__(self, "attention", at.normalize_enabled(self.attention))
        for name in ("height", "width", "time_steps", "in_channels",
                     "base_channels", "layers", "reduction"):
            if getattr(self, name) < 1:
                raise tz.ArgumentError("%s must be >= 1, got %r" % (name, getattr(self, name)))

    @property
    def channel_ladder(self):
        return [self.in_channels] + [self.base_channels * (1 << i)
                                     for i in range(self.layers)]

    def if_params(self):
        return nr.IFParams(v_threshold=self.v_threshold, v_reset=self.v_reset,
                           surrogate_alpha=self.surrogate_alpha, mode=self.neuron_mode)

    def integrator_params(self):
        return nr.IFParams(v_reset=self.v_reset, mode="integrator")


@dataclass
class SpikeStats:
    """Spike and neuron-step totals per block group."""

    encoder_spikes: float = 0.0
    encoder_steps: int = 0
    residual_spikes: float = 0.0
    residual_steps: int = 0
    decoder_spikes: float = 0.0
    decoder_steps: int = 0

    def _rate(self, spikes, steps):
        return spikes / steps if steps else 0.0

    @property
    def rate_encoder(self):
        return self._rate(self.encoder_spikes, self.encoder_steps)

    @property
    def rate_residual(self):
        return self._rate(self.residual_spikes, self.residual_steps)

    @property
    def rate_decoder(self):
        return self._rate(self.decoder_spikes, self.decoder_steps)

    @property
    def rate_total(self):
        spikes = self.encoder_spikes + self.residual_spikes + self.decoder_spikes
        steps = self.encoder_steps + self.residual_steps + self.decoder_steps
        return self._rate(spikes, steps)

    def merge(self, other):
        self.encoder_spikes += other.encoder_spikes
        self.encoder_steps += other.encoder_steps
        self.residual_spikes += other.residual_spikes
        self.residual_steps += other.residual_steps
        self.decoder_spikes += other.decoder_spikes
        self.decoder_steps += other.decoder_steps


@dataclass
class LayerActivations:
    """Spike trains recorded during one forward, grouped by block family."""

    encoder: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    decoder: list = field(default_factory=list)
    predictions: list = field(default_factory=list)


def count_spikes(acts):
    """Build firing statistics from recorded spike trains."""
    stats = SpikeStats()
    for s in acts.encoder:
        stats.encoder_spikes += float(s.data.sum())
        stats.encoder_steps += s.data.size
    for s in acts.residual:
        stats.residual_spikes += float(s.data.sum())
        stats.residual_steps += s.data.size
    for s in acts.decoder:
        stats.decoder_spikes += float(s.data.sum())
        stats.decoder_steps += s.data.size
    return stats


@dataclass
class OpCounts:
    """Synaptic-operation tallies for one or more forwards."""

    ac_ops: float = 0.0
    dense_macs: int = 0

    @property
    def sparsity_ratio(self):
        return self.ac_ops / self.dense_macs if self.dense_macs else 0.0

    def merge(self, other):
        self.ac_ops += other.ac_ops
        self.dense_macs += other.dense_macs


def _spike_incidences(x4, k, stride, padding):
    """Count (nonzero input, output window) pairs for one conv application."""
    nnz = (x4 != 0.0).astype(np.float64).sum(axis=1)
    if padding > 0:
        nnz = np.pad(nnz, ((0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(nnz, (k, k), axis=(1, 2))
    return float(win[:, ::stride, ::stride].sum())


class _Recorder:
    def __init__(self):
        self.ops = OpCounts()

    def conv(self, x, weight, stride, padding, out):
        t_steps = x.data.shape[0]
        c_out, c_in, k, _ = weight.data.shape
        ho, wo = out.data.shape[-2], out.data.shape[-1]
        self.ops.dense_macs += t_steps * c_out * ho * wo * c_in * k * k
        if x.is_spike:
            self.ops.ac_ops += c_out * _spike_incidences(x.data, k, stride, padding)

    def attention_macs(self, params, x_shape):
        t, c, h, w = x_shape
        if "T" in params.enabled:
            hidden = params.t_steps // params.reduction
            self.ops.dense_macs += 2 * 2 * t * hidden  # two branches, two layers
        if "C" in params.enabled:
            hidden = params.channels // params.reduction
            self.ops.dense_macs += 2 * 2 * t * c * hidden
        if "S" in params.enabled:
            self.ops.dense_macs += t * h * w * 2 * KERNEL * KERNEL


def _init_conv(shape, rng):
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape))


def _register_attention(store, prefix, params):
    for name, t in params.parameters():
        store.add(prefix + ".att." + name, t)


class _ConvLayer:
    """Bias-free conv by default; optional per-layer bias."""

    def __init__(self, store, name, c_in, c_out, k, rng, bias):
        self.weight = store.add(name, _init_conv((c_out, c_in, k, k), rng))
        self.bias = store.add(name + "_bias", tz.zeros((c_out,))) if bias else None
        self.stride = 1
        self.padding = (k - 1) // 2

    def __call__(self, x, rec):
        out = tz.conv2d(x, self.weight, stride=self.stride, padding=self.padding)
        rec.conv(x, self.weight, self.stride, self.padding, out)
        if self.bias is not None:
            out = tz.add(out, tz.reshape(self.bias, (self.bias.data.shape[0], 1, 1)))
        return out


class EncoderBlock:
    def __init__(self, cfg, c_in, c_out, store, prefix, rng):
        self.variant = cfg.encoder_variant
        self.conv = _ConvLayer(store, prefix + ".conv", c_in, c_out, KERNEL, rng,
                               cfg.conv_bias)
        self.conv.stride = 2
        self.att = None
        if self.variant in ("CE-Att", "DE-Att1", "DE-Att2"):
            att_channels = c_out if self.variant == "DE-Att2" else c_in
            self.att = at.AttentionParams(cfg.time_steps, att_channels,
                                          reduction=cfg.reduction,
                                          enabled=cfg.attention, rng=rng)
            _register_attention(store, prefix, self.att)
        self.neuron = cfg.if_params()
        self.state = nr.IFState()

    def forward(self, x, rec, acts):
        if x.data.shape[-1] % 2 or x.data.shape[-2] % 2:
            raise tz.StateError("encoder expects even spatial dims, got %s"
                                % (x.data.shape,))
        if self.variant in ("CE-Att", "DE-Att1"):
            rec.attention_macs(self.att, x.data.shape)
            x = at.tcsa(x, self.att)
        y = self.conv(x, rec)
        if self.variant == "DE-Att2":
            rec.attention_macs(self.att, y.data.shape)
            y = at.tcsa(y, self.att)
        spikes, _ = nr.if_run(self.state, y, self.neuron)
        acts.encoder.append(spikes)
        return spikes if self.variant.startswith("DE") else y


class ResidualBlock:
    def __init__(self, cfg, channels, store, prefix, rng):
        self.conv1 = _ConvLayer(store, prefix + ".conv1", channels, channels,
                                KERNEL, rng, cfg.conv_bias)
        self.conv2 = _ConvLayer(store, prefix + ".conv2", channels, channels,
                                KERNEL, rng, cfg.conv_bias)
        self.att = at.AttentionParams(cfg.time_steps, channels,
                                      reduction=cfg.reduction,
                                      enabled=cfg.attention, rng=rng)
        _register_attention(store, prefix, self.att)
        self.neuron = cfg.if_params()
        self.state1 = nr.IFState()
        self.state2 = nr.IFState()

    def forward(self, x, rec, acts):
        s1, _ = nr.if_run(self.state1, x, self.neuron)
        acts.residual.append(s1)
        y1 = self.conv1(s1, rec)
        s2, _ = nr.if_run(self.state2, y1, self.neuron)
        acts.residual.append(s2)
        y2 = self.conv2(s2, rec)
        rec.attention_macs(self.att, y2.data.shape)
        gated = at.tcsa(y2, self.att)
        return tz.add(gated, x)


class DecoderBlock:
    def __init__(self, cfg, c_in, c_out, store, prefix, rng):
        self.conv = _ConvLayer(store, prefix + ".conv", c_in, c_out, KERNEL, rng,
                               cfg.conv_bias)
        self.head = _ConvLayer(store, prefix + ".head", c_in, 1, 1, rng, False)
        self.att = at.AttentionParams(cfg.time_steps, c_in,
                                      reduction=cfg.reduction,
                                      enabled=cfg.attention, rng=rng)
        _register_attention(store, prefix, self.att)
        self.neuron = cfg.if_params()
        self.head_neuron = cfg.integrator_params()
        self.state = nr.IFState()
        self.head_state = nr.IFState()

    def forward(self, x, skip, rec, acts):
        up = tz.nearest_upsample(x, 2)
        if skip.data.shape[0] != up.data.shape[0]:
            raise tz.DimensionError("skip time axis %d does not match %d"
                                    % (skip.data.shape[0], up.data.shape[0]))
        head_in = self.head(up, rec)
        _, membrane = nr.if_run(self.head_state, head_in, self.head_neuron)
        h, w = membrane.data.shape[-2], membrane.data.shape[-1]
        pred = tz.reshape(membrane, (h, w))
        acts.predictions.append(pred)
        rec.attention_macs(self.att, up.data.shape)
        gated = at.tcsa(up, self.att)
        y = self.conv(gated, rec)
        spikes, _ = nr.if_run(self.state, y, self.neuron)
        acts.decoder.append(spikes)
        if spikes.data.shape != skip.data.shape:
            raise tz.DimensionError("skip shape %s does not match decoder output %s"
                                    % (skip.data.shape, spikes.data.shape))
        return tz.add(spikes, skip), pred


class DepthNet:
    """Config-built network; parameters live in an ordered ParamStore."""

    def __init__(self, config, seed=0):
        self.config = config
        self.params = tz.ParamStore()
        rng = np.random.default_rng(seed)
        ladder = config.channel_ladder
        self.encoders = [EncoderBlock(config, ladder[i], ladder[i + 1],
                                      self.params, "enc%d" % i, rng)
                         for i in range(config.layers)]
        self.residuals = [ResidualBlock(config, ladder[-1], self.params,
                                        "res%d" % i, rng)
                          for i in range(RESIDUAL_BLOCKS)]
        self.decoders = [DecoderBlock(config, ladder[config.layers - i],
                                      ladder[config.layers - i - 1],
                                      self.params, "dec%d" % i, rng)
                         for i in range(config.layers)]
        self.last_activations = None
        self.last_ops = None

    def if_states(self):
        states = []
        for b in self.encoders:
            states.append(b.state)
        for b in self.residuals:
            states.extend((b.state1, b.state2))
        for b in self.decoders:
            states.extend((b.state, b.head_state))
        return states

    def forward(self, stacked):
        """Run one sample; returns (depth, per-scale predictions, stats)."""
        x = stacked.data if isinstance(stacked, ev.StackedTensor) else tz.as_tensor(stacked)
        if x.data.ndim != 4:
            raise tz.DimensionError("input must be [T, C, H, W], got %s" % (x.data.shape,))
        t, c, h, w = x.data.shape
        if t != self.config.time_steps:
            raise tz.DimensionError("time axis is %d, model expects %d"
                                    % (t, self.config.time_steps))
        if c != self.config.in_channels:
            raise tz.DimensionError("channel axis is %d, model expects %d"
                                    % (c, self.config.in_channels))
        if not x.is_spike:
            vals = x.data
            if ((vals == 0.0) | (vals == 1.0)).all():
                x.is_spike = True

        nr.reset_state(self.if_states())
        rec = _Recorder()
        acts = LayerActivations()

        mult = 1 << self.config.layers
        padded = tz.pad_bottom_right(x, (-h) % mult, (-w) % mult)
        padded.is_spike = x.is_spike

        skips = [padded]
        cur = padded
        for block in self.encoders:
            cur = block.forward(cur, rec, acts)
            skips.append(cur)
        for block in self.residuals:
            cur = block.forward(cur, rec, acts)
        for i, block in enumerate(self.decoders):
            cur, _ = block.forward(cur, skips[self.config.layers - 1 - i], rec, acts)

        full = acts.predictions[-1]
        depth = full
        if full.data.shape != (h, w):
            depth = tz.slice_nd(full, ((0, h), (0, w)))

        self.last_activations = acts
        self.last_ops = rec.ops
        return depth, list(acts.predictions), count_spikes(acts)


# ---------------------------------------------------------------------------
# checkpoints

_CHECKPOINT_MAGIC = b"SPKC0001"

_ATT_BITS = {"T": 1, "C": 2, "S": 4}


def save_checkpoint(path, entries):
    """Write named tensors in order: magic, count, then (name, tensor) pairs."""
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(entries)))
        for name, value in entries.items():
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise tz.ArgumentError("entry name too long: %r" % name[:40])
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            tz.write_tensor(fh, value)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _CHECKPOINT_MAGIC:
            raise tz.ArgumentError("%s: bad checkpoint magic %r" % (path, magic))
        (count,) = struct.unpack("<I", fh.read(4))
        entries = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            entries[name] = tz.read_tensor(fh)
    return entries


def config_to_entries(cfg):
    mask = sum(_ATT_BITS[m] for m in cfg.attention)
    scalars = {
        "cfg.height": cfg.height,
        "cfg.width": cfg.width,
        "cfg.time_steps": cfg.time_steps,
        "cfg.in_channels": cfg.in_channels,
        "cfg.base_channels": cfg.base_channels,
        "cfg.layers": cfg.layers,
        "cfg.encoder_variant": ENCODER_VARIANTS.index(cfg.encoder_variant),
        "cfg.attention": mask,
        "cfg.reduction": cfg.reduction,
        "cfg.v_threshold": cfg.v_threshold,
        "cfg.v_reset": cfg.v_reset,
        "cfg.surrogate_alpha": cfg.surrogate_alpha,
        "cfg.neuron_mode": NEURON_MODES.index(cfg.neuron_mode),
        "cfg.conv_bias": int(cfg.conv_bias),
    }
    return {k: np.float64(v) for k, v in scalars.items()}


def config_from_entries(entries):
    def geti(key):
        if key not in entries:
            raise tz.ArgumentError("checkpoint lacks %r" % key)
        return int(entries[key])

    def getf(key):
        if key not in entries:
            raise tz.ArgumentError("checkpoint lacks %r" % key)
        return float(entries[key])

    mask = geti("cfg.attention")
    enabled = "".join(m for m in at.MODULE_ORDER if mask & _ATT_BITS[m])
    return ModelConfig(
        height=geti("cfg.height"),
        width=geti("cfg.width"),
        time_steps=geti("cfg.time_steps"),
        in_channels=geti("cfg.in_channels"),
        base_channels=geti("cfg.base_channels"),
        layers=geti("cfg.layers"),
        encoder_variant=ENCODER_VARIANTS[geti("cfg.encoder_variant")],
        attention=enabled,
        reduction=geti("cfg.reduction"),
        v_threshold=getf("cfg.v_threshold"),
        v_reset=getf("cfg.v_reset"),
        surrogate_alpha=getf("cfg.surrogate_alpha"),
        neuron_mode=NEURON_MODES[geti("cfg.neuron_mode")],
        conv_bias=bool(geti("cfg.conv_bias")),
    )


def model_entries(model):
    entries = config_to_entries(model.config)
    for name, tensor in model.params:
        entries["param." + name] = tensor.data
    return entries


def save_model(path, model, extra=None):
    entries = model_entries(model)
    if extra:
        for k, v in extra.items():
            entries[k] = np.asarray(v, dtype=np.float64)
    save_checkpoint(path, entries)


def load_model(path):
    """Rebuild the model a checkpoint describes; returns (model, raw entries)."""
    entries = load_checkpoint(path)
    cfg = config_from_entries(entries)
    model = DepthNet(cfg, seed=0)
    for name, tensor in model.params:
        key = "param." + name
        if key not in entries:
            raise tz.ArgumentError("checkpoint lacks parameter %r" % name)
        stored = entries[key]
        if stored.shape != tensor.data.shape:
            raise tz.DimensionError("parameter %r has shape %s, model expects %s"
                                    % (name, stored.shape, tensor.data.shape))
        tensor.data = np.asarray(stored, dtype=np.float64)
    return model, entries
