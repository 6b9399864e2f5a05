"""Independent oracles shared across test modules.

Everything here is written the slow obvious way on purpose: quadruple loops,
scalar stepping, explicit recounts. The package must agree with these, not
the other way around.
"""

import numpy as np

from spikedepth import tensor as tz


def naive_conv2d(x, w, stride=1, padding=0):
    """Reference cross-correlation, scalar loops, rank-3 input."""
    c_out, c_in, k, _ = w.shape
    assert x.shape[0] == c_in
    h, wd = x.shape[1], x.shape[2]
    xp = np.zeros((c_in, h + 2 * padding, wd + 2 * padding))
    xp[:, padding:padding + h, padding:padding + wd] = x
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for c in range(c_in):
                    for u in range(k):
                        for v in range(k):
                            acc += xp[c, i * stride + u, j * stride + v] * w[o, c, u, v]
                out[o, i, j] = acc
    return out


def central_diff(f, arrays, eps=1e-5):
    """Central finite differences of scalar f() w.r.t. each array, in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f()
            flat[i] = orig - eps
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def assert_grads_close(analytic, fd, rtol=1e-6, atol=1e-9, label=""):
    analytic = np.asarray(analytic)
    fd = np.asarray(fd)
    assert analytic.shape == fd.shape, (label, analytic.shape, fd.shape)
    scale = np.maximum(np.abs(analytic), np.abs(fd))
    err = np.abs(analytic - fd)
    bad = err > np.maximum(rtol * scale, atol)
    assert not bad.any(), "%s: worst err %.3e at %s (analytic %.6e, fd %.6e)" % (
        label, err.max(), np.unravel_index(err.argmax(), err.shape),
        analytic.reshape(-1)[err.argmax()], fd.reshape(-1)[err.argmax()])


def check_op_gradient(build, arrays, eps=1e-5, rtol=1e-6, atol=1e-9, label=""):
    """Compare taped gradients of sum(op(...)) against central differences.

    build(tensors) -> output Tensor; arrays are the raw leaf buffers, wrapped
    once so finite differencing can perturb them in place.
    """
    leaves = [tz.Tensor(a, requires_grad=True) for a in arrays]
    for leaf, a in zip(leaves, arrays):
        leaf.data = a  # share the buffer with the perturbed array
    with tz.Tape() as tape:
        out = build(leaves)
        loss = tz.sum_all(out)
    tz.backward(loss, tape)

    def f():
        return float(tz.sum_all(build(leaves)).data)

    fd = central_diff(f, arrays, eps=eps)
    for leaf, g, a in zip(leaves, fd, arrays):
        got = leaf.grad if leaf.grad is not None else np.zeros_like(a)
        assert_grads_close(got, g, rtol=rtol, atol=atol, label=label)


def brute_if_trace(inputs, v_th, v_reset, mode="spiking"):
    """Scalar-stepped reference of the membrane recurrence.

    inputs: [T, ...] array. Returns (spikes [T, ...] or None, final membrane).
    """
    v = np.zeros_like(inputs[0])
    spikes = []
    for t in range(inputs.shape[0]):
        h = v + inputs[t]
        if mode == "integrator":
            v = h
            continue
        s = (h - v_th >= 0).astype(np.float64)
        spikes.append(s)
        v = h * (1.0 - s) + v_reset * s
    if mode == "integrator":
        return None, v
    return np.stack(spikes, axis=0), v


def recount_stack(events, window_start, window_len, t_steps, height, width,
                  mode="cumulative"):
    """Per-(frame, channel, pixel) recount of the stacking definition."""
    out = np.zeros((t_steps, 2, height, width))
    for tau in range(t_steps):
        if mode == "cumulative":
            hi = window_start + (tau + 1) * window_len // t_steps
        else:
            hi = window_start + window_len
        for ev in events:
            if window_start <= ev.t < hi:
                ch = 0 if ev.p > 0 else 1
                out[tau, ch, ev.y, ev.x] += 1.0
    return out
