"""Deterministic synthetic scenes with exact event timing and ground truth.

A scene is a set of fronto-parallel textured planes that tile the frame.
Each plane carries a triangular log-intensity stripe pattern (amplitude 1.0,
period in pixels) that translates horizontally under camera motion; a plane
at depth d translates at camera_velocity / d pixels per second, so nearer
planes move faster and fire more events per pixel. An event fires whenever a
pixel's log intensity crosses a line of the fixed level grid
{k * contrast_threshold}; crossing times come from the piecewise-linear
signal in closed form, then round to integer microseconds. Rising crossings
are positive polarity.

The right camera sees each plane's events shifted by
round(baseline_px / depth) pixels toward -x, dropping events that leave the
frame. Ground truth is the left view's plane depth, one frame per window,
timestamped at the window end, fully valid.

Event order is (t, y, x, polarity); generation is a pure function of the
scene spec, so the same spec yields byte-identical files.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import events as ev
from .tensor import Tensor


class ValidationError(ValueError):
    """Scene spec violates a structural constraint."""


AMPLITUDE = 1.0


@dataclass(frozen=True)
class PlaneSpec:
    depth_m: float
    x0: int
    y0: int
    width: int
    height: int
    period_px: float


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    height: int = 64
    width: int = 64
    n_windows: int = 8
    window_len_us: int = 50000
    camera_velocity: float = 80.0
    contrast_threshold: float = 0.4
    baseline_px: float = 16.0
    noise_rate_hz: float = 0.0
    planes: tuple = ()

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("geometry must be positive, got %dx%d"
                                  % (self.height, self.width))
        if self.n_windows < 1:
            raise ValidationError("n_windows must be >= 1, got %d" % self.n_windows)
        if self.window_len_us < 1:
            raise ValidationError("window_len_us must be >= 1, got %d" % self.window_len_us)
        if self.contrast_threshold <= 0:
            raise ValidationError("contrast_threshold must be positive, got %r"
                                  % (self.contrast_threshold,))
        if self.camera_velocity < 0:
            raise ValidationError("camera_velocity must be >= 0, got %r"
                                  % (self.camera_velocity,))
        if self.baseline_px < 0:
            raise ValidationError("baseline_px must be >= 0, got %r" % (self.baseline_px,))
        if self.noise_rate_hz < 0:
            raise ValidationError("noise_rate_hz must be >= 0, got %r"
                                  % (self.noise_rate_hz,))
        if not self.planes:
            raise ValidationError("scene needs at least one plane")
        cover = np.zeros((self.height, self.width), dtype=np.int64)
        for p in self.planes:
            if p.depth_m <= 0:
                raise ValidationError("plane depth must be positive, got %r" % (p.depth_m,))
            if p.period_px <= 0:
                raise ValidationError("texture period must be positive, got %r"
                                      % (p.period_px,))
            if (p.x0 < 0 or p.y0 < 0 or p.width < 1 or p.height < 1
                    or p.x0 + p.width > self.width or p.y0 + p.height > self.height):
                raise ValidationError("plane region (x0=%d, y0=%d, w=%d, h=%d) leaves "
                                      "the %dx%d frame"
                                      % (p.x0, p.y0, p.width, p.height,
                                         self.height, self.width))
            cover[p.y0:p.y0 + p.height, p.x0:p.x0 + p.width] += 1
        if (cover > 1).any():
            y, x = np.argwhere(cover > 1)[0]
            raise ValidationError("plane regions overlap at (x=%d, y=%d)" % (x, y))
        if (cover == 0).any():
            y, x = np.argwhere(cover == 0)[0]
            raise ValidationError("plane regions leave a gap at (x=%d, y=%d)" % (x, y))

    @property
    def duration_us(self):
        return self.n_windows * self.window_len_us


def _triangle(u):
    return 4.0 * np.abs(u - np.floor(u) - 0.5) - 1.0


def _column_crossings(u0, omega, duration_s, threshold):
    """Crossing (time_s, polarity) pairs for L(t) = tri(u0 - omega t).

    The signal is piecewise linear with breakpoints at u = m/2; each segment
    runs peak-to-trough or trough-to-peak. A rising segment fires every grid
    level in (L_start, L_end]; a falling one fires levels in [L_end, L_start),
    so a segment boundary sitting exactly on a level fires once. A level equal
    to the amplitude is only ever touched by a turning point, never crossed,
    and fires nothing.
    """
    out = []
    if omega <= 0 or duration_s <= 0:
        return out
    m_hi = int(np.floor(2.0 * u0))
    m_lo = int(np.ceil(2.0 * (u0 - omega * duration_s)))
    knots = [0.0]
    for m in range(m_hi, m_lo - 1, -1):
        t = (u0 - 0.5 * m) / omega
        if 0.0 < t < duration_s:
            knots.append(t)
    knots.append(duration_s)
    amp = AMPLITUDE
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        la = amp * _triangle(u0 - omega * a)
        lb = amp * _triangle(u0 - omega * b)
        if lb > la:
            k_first = int(np.floor(la / threshold)) + 1
            k_last = int(np.floor(lb / threshold))
            for k in range(k_first, k_last + 1):
                q = k * threshold
                if abs(q) >= amp:
                    continue
                out.append((a + (q - la) / (lb - la) * (b - a), 1))
        elif lb < la:
            k_first = int(np.ceil(la / threshold)) - 1
            k_last = int(np.ceil(lb / threshold))
            for k in range(k_first, k_last - 1, -1):
                q = k * threshold
                if abs(q) >= amp:
                    continue
                out.append((a + (q - la) / (lb - la) * (b - a), -1))
    return out


def _plane_events(spec, plane, rng):
    """All left-view events of one plane, unsorted."""
    phase = rng.uniform(0.0, 1.0)
    speed = spec.camera_velocity / plane.depth_m
    omega = speed / plane.period_px
    duration_s = spec.duration_us * 1e-6
    rows = range(plane.y0, plane.y0 + plane.height)
    out = []
    for x in range(plane.x0, plane.x0 + plane.width):
        u0 = x / plane.period_px + phase
        for t_s, pol in _column_crossings(u0, omega, duration_s, spec.contrast_threshold):
            t_us = int(round(t_s * 1e6))
            if 0 <= t_us < spec.duration_us:
                for y in rows:
                    out.append(ev.Event(t=t_us, x=x, y=y, p=pol))
    return out


def _noise_events(spec, rng):
    expected = spec.noise_rate_hz * spec.height * spec.width * spec.duration_us * 1e-6
    count = int(round(expected))
    out = []
    for _ in range(count):
        out.append(ev.Event(t=int(rng.integers(0, spec.duration_us)),
                            x=int(rng.integers(0, spec.width)),
                            y=int(rng.integers(0, spec.height)),
                            p=int(rng.choice([-1, 1]))))
    return out


def _sort_events(events):
    return sorted(events, key=lambda e: (e.t, e.y, e.x, e.p))


def disparity_px(spec, plane):
    return int(round(spec.baseline_px / plane.depth_m))


@dataclass
class SceneData:
    spec: SceneSpec
    events_left: list
    events_right: list
    gt_frames: list


def generate_scene(spec):
    """Render the event streams and ground-truth frames for one scene."""
    rng = np.random.default_rng(spec.seed)
    left = []
    right = []
    for plane in spec.planes:
        plane_left = _plane_events(spec, plane, rng)
        left.extend(plane_left)
        d = disparity_px(spec, plane)
        for e in plane_left:
            xr = e.x - d
            if 0 <= xr < spec.width:
                right.append(ev.Event(t=e.t, x=xr, y=e.y, p=e.p))
    left.extend(_noise_events(spec, rng))
    right.extend(_noise_events(spec, rng))
    left = _sort_events(left)
    right = _sort_events(right)

    depth_map = np.zeros((spec.height, spec.width))
    for plane in spec.planes:
        depth_map[plane.y0:plane.y0 + plane.height,
                  plane.x0:plane.x0 + plane.width] = plane.depth_m
    valid = np.ones((spec.height, spec.width), dtype=bool)
    frames = []
    for k in range(spec.n_windows):
        frames.append(ev.DepthFrame(depth=Tensor(depth_map.copy()),
                                    valid=valid.copy(),
                                    t=(k + 1) * spec.window_len_us))
    return SceneData(spec=spec, events_left=left, events_right=right, gt_frames=frames)


# ---------------------------------------------------------------------------
# scene spec files (key = value dialect)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_scene_spec(spec):
    lines = [
        "seed = %d" % spec.seed,
        "height = %d" % spec.height,
        "width = %d" % spec.width,
        "n_windows = %d" % spec.n_windows,
        "window_len_us = %d" % spec.window_len_us,
        "camera_velocity = %s" % _fmt(spec.camera_velocity),
        "contrast_threshold = %s" % _fmt(spec.contrast_threshold),
        "baseline_px = %s" % _fmt(spec.baseline_px),
        "noise_rate_hz = %s" % _fmt(spec.noise_rate_hz),
    ]
    for i, p in enumerate(spec.planes):
        lines.append("plane.%d = %s, %d, %d, %d, %d, %s"
                     % (i, _fmt(p.depth_m), p.x0, p.y0, p.width, p.height,
                        _fmt(p.period_px)))
    return "\n".join(lines) + "\n"


_SCENE_INT_KEYS = ("seed", "height", "width", "n_windows", "window_len_us")
_SCENE_FLOAT_KEYS = ("camera_velocity", "contrast_threshold", "baseline_px",
                     "noise_rate_hz")


def parse_scene_spec(text):
    if hasattr(text, "read"):
        text = text.read()
    fields = {}
    planes = {}
    for i, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ev.ParseError("line %d: expected key = value, got %r" % (i, raw))
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key.startswith("plane."):
            idx_text = key[len("plane."):]
            if not idx_text.isdigit():
                raise ev.ParseError("line %d: bad plane index %r" % (i, idx_text))
            idx = int(idx_text)
            if idx in planes:
                raise ev.ParseError("line %d: duplicate plane.%d" % (i, idx))
            parts = [p.strip() for p in value.split(",")]
            if len(parts) != 6:
                raise ev.ParseError("line %d: plane needs 6 fields "
                                    "(depth, x0, y0, width, height, period), got %d"
                                    % (i, len(parts)))
            try:
                planes[idx] = PlaneSpec(depth_m=float(parts[0]), x0=int(parts[1]),
                                        y0=int(parts[2]), width=int(parts[3]),
                                        height=int(parts[4]), period_px=float(parts[5]))
            except ValueError:
                raise ev.ParseError("line %d: bad plane fields %r" % (i, value))
        elif key in _SCENE_INT_KEYS:
            if key in fields:
                raise ev.ParseError("line %d: duplicate key %r" % (i, key))
            try:
                fields[key] = int(value)
            except ValueError:
                raise ev.ParseError("line %d: %s must be an integer, got %r"
                                    % (i, key, value))
        elif key in _SCENE_FLOAT_KEYS:
            if key in fields:
                raise ev.ParseError("line %d: duplicate key %r" % (i, key))
            try:
                fields[key] = float(value)
            except ValueError:
                raise ev.ParseError("line %d: %s must be a number, got %r"
                                    % (i, key, value))
        else:
            raise ev.ParseError("line %d: unknown key %r" % (i, key))
    if planes:
        indices = sorted(planes)
        if indices != list(range(len(indices))):
            raise ev.ParseError("plane indices must be 0..%d without holes, got %s"
                                % (len(indices) - 1, indices))
        fields["planes"] = tuple(planes[i] for i in indices)
    return SceneSpec(**fields)


def load_scene_spec(path):
    with open(path, "r") as fh:
        return parse_scene_spec(fh)


# ---------------------------------------------------------------------------
# dataset directories


MANIFEST_NAME = "manifest.txt"


@dataclass
class DatasetManifest:
    height: int
    width: int
    window_len_us: int
    n_windows: int
    binocular: bool
    events_left: str
    events_right: str
    window_starts: list
    gt_files: list


def write_dataset(spec, out_dir):
    """Generate the scene and lay out a dataset directory; returns the manifest."""
    data = generate_scene(spec)
    os.makedirs(out_dir, exist_ok=True)
    ev.save_events(os.path.join(out_dir, "events_left.csv"), data.events_left)
    ev.save_events(os.path.join(out_dir, "events_right.csv"), data.events_right)
    gt_files = []
    for k, frame in enumerate(data.gt_frames):
        name = "gt_%04d.txt" % k
        ev.save_depth_frame(os.path.join(out_dir, name), frame)
        gt_files.append(name)

    lines = [
        "height = %d" % spec.height,
        "width = %d" % spec.width,
        "window_len_us = %d" % spec.window_len_us,
        "n_windows = %d" % spec.n_windows,
        "binocular = true",
        "events_left = events_left.csv",
        "events_right = events_right.csv",
    ]
    for k in range(spec.n_windows):
        lines.append("window.%d = %d" % (k, k * spec.window_len_us))
    for k, name in enumerate(gt_files):
        lines.append("gt.%d = %s" % (k, name))
    for spec_line in serialize_scene_spec(spec).strip().split("\n"):
        key, _, value = spec_line.partition(" = ")
        lines.append("spec.%s = %s" % (key, value))
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return load_manifest(os.path.join(out_dir, MANIFEST_NAME))


def load_manifest(path):
    with open(path, "r") as fh:
        text = fh.read()
    fields = {}
    windows = {}
    gts = {}
    for i, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ev.ParseError("line %d: expected key = value, got %r" % (i, raw))
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key.startswith("spec."):
            continue
        if key.startswith("window."):
            windows[int(key.split(".", 1)[1])] = int(value)
        elif key.startswith("gt."):
            gts[int(key.split(".", 1)[1])] = value
        elif key in ("height", "width", "window_len_us", "n_windows"):
            fields[key] = int(value)
        elif key == "binocular":
            fields[key] = value == "true"
        elif key in ("events_left", "events_right"):
            fields[key] = value
        else:
            raise ev.ParseError("line %d: unknown manifest key %r" % (i, key))
    for need in ("height", "width", "window_len_us", "n_windows", "events_left"):
        if need not in fields:
            raise ev.ParseError("manifest lacks key %r" % need)
    n = fields["n_windows"]
    starts = [windows.get(k) for k in range(n)]
    gt_files = [gts.get(k) for k in range(n)]
    if any(s is None for s in starts) or any(g is None for g in gt_files):
        raise ev.ParseError("manifest needs window.k and gt.k for k in 0..%d" % (n - 1))
    return DatasetManifest(height=fields["height"], width=fields["width"],
                           window_len_us=fields["window_len_us"], n_windows=n,
                           binocular=fields.get("binocular", False),
                           events_left=fields["events_left"],
                           events_right=fields.get("events_right", ""),
                           window_starts=starts, gt_files=gt_files)
