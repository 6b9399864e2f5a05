"""Event stream parsing, cumulative stacking, and ground-truth alignment.

Event CSV dialect: header line "t_us,x,y,p", then one record per line with
unsigned decimal fields. Polarity is stored as 0/1 on disk and carried as
-1/+1 in memory. Timestamps are microseconds and must be non-decreasing.

Stacking splits a window of length L into T equal sub-bins and emits T
frames of per-pixel, per-polarity event counts. Frame tau of the cumulative
mode counts everything from the window start through the end of sub-bin tau,
so frames are nested supersets and frame T-1 holds the whole window. The
repeat mode emits the whole-window histogram at every step.

Ground-truth depth files: first line "H W t_us", then H rows of W values in
meters; the token "nan" marks an invalid pixel. Invalid pixels are stored as
0.0 behind a boolean mask so no NaN enters arithmetic.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .tensor import Tensor


class ParseError(ValueError):
    """Malformed text input; carries a 1-based line number where known."""


class OrderingError(ValueError):
    """Timestamps decrease."""


class BoundsError(ValueError):
    """Event coordinates outside the sensor geometry."""


class AlignmentError(ValueError):
    """No ground-truth frame close enough to a window boundary."""


@dataclass(frozen=True)
class Event:
    t: int
    x: int
    y: int
    p: int  # +1 or -1


@dataclass
class StackedTensor:
    """Event counts as [T, C, H, W] with the window that produced them."""

    data: Tensor
    window_start: int
    window_len: int

    @property
    def shape(self):
        return self.data.shape


@dataclass
class DepthFrame:
    """Metric depth with validity mask; invalid pixels hold 0.0."""

    depth: Tensor
    valid: np.ndarray
    t: int

    def __post_init__(self):
        if self.depth.data.ndim != 2:
            raise tz.DimensionError("depth must be rank 2, got %s" % (self.depth.data.shape,))
        if self.valid.shape != self.depth.data.shape:
            raise tz.DimensionError("valid mask shape %s does not match depth %s"
                                    % (self.valid.shape, self.depth.data.shape))
        d = self.depth.data[self.valid]
        if d.size and (not np.isfinite(d).all() or (d <= 0).any()):
            raise ParseError("valid depth values must be finite and positive")


EVENT_HEADER = "t_us,x,y,p"


def parse_events(text):
    """Parse the CSV dialect into a time-ordered event list."""
    if hasattr(text, "read"):
        text = text.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines or lines[0] != EVENT_HEADER:
        raise ParseError("line 1: expected header %r" % EVENT_HEADER)
    out = []
    last_t = -1
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError("line %d: expected 4 fields, got %d" % (i, len(parts)))
        vals = []
        for field in parts:
            if not field.isdigit():
                raise ParseError("line %d: field %r is not an unsigned integer" % (i, field))
            vals.append(int(field))
        t, x, y, p = vals
        if p not in (0, 1):
            raise ParseError("line %d: polarity must be 0 or 1, got %d" % (i, p))
        if t < last_t:
            raise OrderingError("line %d: timestamp %d decreases from %d" % (i, t, last_t))
        last_t = t
        out.append(Event(t=t, x=x, y=y, p=1 if p == 1 else -1))
    return out


def serialize_events(events):
    """Canonical CSV text: header plus one record per line, newline-terminated."""
    rows = [EVENT_HEADER]
    for ev in events:
        rows.append("%d,%d,%d,%d" % (ev.t, ev.x, ev.y, 1 if ev.p > 0 else 0))
    return "\n".join(rows) + "\n"


def load_events(path):
    with open(path, "r") as fh:
        return parse_events(fh)


def save_events(path, events):
    with open(path, "w") as fh:
        fh.write(serialize_events(events))


def _check_geometry(events, height, width, lo, hi):
    for ev in events:
        if lo <= ev.t < hi:
            if not (0 <= ev.x < width and 0 <= ev.y < height):
                raise BoundsError("event at t=%d has (x=%d, y=%d) outside %dx%d"
                                  % (ev.t, ev.x, ev.y, height, width))


def _bin_counts(events, window_start, window_len, t_steps, height, width):
    """Per-sub-bin histograms [T, 2, H, W]; channel 0 positive, 1 negative."""
    hi = window_start + window_len
    counts = np.zeros((t_steps, 2, height, width))
    ts = np.array([ev.t for ev in events], dtype=np.int64)
    keep = (ts >= window_start) & (ts < hi)
    if keep.any():
        xs = np.array([ev.x for ev in events], dtype=np.int64)[keep]
        ys = np.array([ev.y for ev in events], dtype=np.int64)[keep]
        ps = np.array([0 if ev.p > 0 else 1 for ev in events], dtype=np.int64)[keep]
        tk = ts[keep]
        taus = (tk - window_start) * t_steps // window_len
        flat = ((taus * 2 + ps) * height + ys) * width + xs
        np.add.at(counts.reshape(-1), flat, 1.0)
    return counts


def _validate_stack_args(window_len, t_steps, height, width):
    if t_steps < 1:
        raise tz.ArgumentError("t_steps must be >= 1, got %d" % t_steps)
    if window_len < 1:
        raise tz.ArgumentError("window_len must be >= 1, got %d" % window_len)
    if window_len % t_steps != 0:
        raise tz.ArgumentError("window_len %d not divisible by t_steps %d"
                               % (window_len, t_steps))
    if height < 1 or width < 1:
        raise tz.ArgumentError("geometry must be positive, got %dx%d" % (height, width))


def cumulative_stack(events, window_start, window_len, t_steps, height, width,
                     binarize=False):
    """Nested event-count frames over one window."""
    _validate_stack_args(window_len, t_steps, height, width)
    _check_geometry(events, height, width, window_start, window_start + window_len)
    counts = _bin_counts(events, window_start, window_len, t_steps, height, width)
    data = np.cumsum(counts, axis=0)
    return _finish_stack(data, window_start, window_len, binarize)


def repeat_stack(events, window_start, window_len, t_steps, height, width,
                 binarize=False):
    """The whole-window histogram replicated at every step."""
    _validate_stack_args(window_len, t_steps, height, width)
    _check_geometry(events, height, width, window_start, window_start + window_len)
    counts = _bin_counts(events, window_start, window_len, 1, height, width)
    data = np.repeat(counts, t_steps, axis=0)
    return _finish_stack(data, window_start, window_len, binarize)


def _finish_stack(data, window_start, window_len, binarize):
    if binarize:
        data = (data > 0).astype(np.float64)
    t = Tensor(data)
    if binarize:
        t.is_spike = True
    return StackedTensor(data=t, window_start=window_start, window_len=window_len)


def binocular_concat(left, right):
    """Stack two views along channels: [left+, left-, right+, right-]."""
    if left.window_start != right.window_start or left.window_len != right.window_len:
        raise AlignmentError("views cover different windows: [%d, +%d) vs [%d, +%d)"
                             % (left.window_start, left.window_len,
                                right.window_start, right.window_len))
    if left.data.shape != right.data.shape:
        raise tz.DimensionError("view shapes differ: %s vs %s"
                                % (left.data.shape, right.data.shape))
    joined = tz.concat([left.data, right.data], axis=1)
    joined.is_spike = left.data.is_spike and right.data.is_spike
    return StackedTensor(data=joined, window_start=left.window_start,
                         window_len=left.window_len)


def align_ground_truth(frames, window_start, window_len):
    """Pick the frame nearest the window end; ties go to the earlier frame.

    A frame farther than half a window from the boundary is a miss.
    """
    if not frames:
        raise AlignmentError("no ground-truth frames given")
    edge = window_start + window_len
    best = None
    best_d = None
    for fr in frames:
        d = abs(fr.t - edge)
        if best is None or d < best_d:
            best, best_d = fr, d
    if best_d > window_len // 2:
        raise AlignmentError("nearest ground truth at t=%d is %d us from window end %d "
                             "(tolerance %d)" % (best.t, best_d, edge, window_len // 2))
    return best


# ---------------------------------------------------------------------------
# depth ground-truth files


def parse_depth_frame(text):
    if hasattr(text, "read"):
        text = text.read()
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise ParseError("line 1: empty depth file")
    head = lines[0].split()
    if len(head) != 3:
        raise ParseError("line 1: expected 'H W t_us', got %r" % lines[0])
    try:
        h, w, t = int(head[0]), int(head[1]), int(head[2])
    except ValueError:
        raise ParseError("line 1: expected integers in 'H W t_us', got %r" % lines[0])
    if len(lines) != 1 + h:
        raise ParseError("expected %d depth rows, got %d" % (h, len(lines) - 1))
    depth = np.zeros((h, w))
    valid = np.zeros((h, w), dtype=bool)
    for r, line in enumerate(lines[1:], start=2):
        cells = line.split()
        if len(cells) != w:
            raise ParseError("line %d: expected %d values, got %d" % (r, w, len(cells)))
        for c, cell in enumerate(cells):
            if cell == "nan":
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError("line %d: bad depth value %r" % (r, cell))
            depth[r - 2, c] = v
            valid[r - 2, c] = True
    return DepthFrame(depth=Tensor(depth), valid=valid, t=t)


def serialize_depth_frame(frame):
    h, w = frame.depth.data.shape
    rows = ["%d %d %d" % (h, w, frame.t)]
    for r in range(h):
        cells = []
        for c in range(w):
            cells.append(repr(float(frame.depth.data[r, c])) if frame.valid[r, c] else "nan")
        rows.append(" ".join(cells))
    return "\n".join(rows) + "\n"


def load_depth_frame(path):
    with open(path, "r") as fh:
        return parse_depth_frame(fh)


def save_depth_frame(path, frame):
    with open(path, "w") as fh:
        fh.write(serialize_depth_frame(frame))
