"""Pure numpy implementations of the hot kernels.

The compiled module ``_ckernels`` exposes the same functions and must stay
bit-identical with these (same accumulation order in ``col2im``, same
integer mixing in ``counter_uniform``).
"""
import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(GOLDEN)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO_M53 = 2.0 ** -53


def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def counter_uniform(key, counters):
    """Uniform deviates in the open interval (0, 1), one per uint64 counter."""
    counters = np.ascontiguousarray(counters, dtype=np.uint64)
    k = np.uint64(key)
    with np.errstate(over="ignore"):
        z = _mix64((counters + np.uint64(1)) * _GOLDEN ^ k)
        z = _mix64(z + k)
    return ((z >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def im2col(x, k, stride, padding, ho, wo):
    """Gather zero-padded ``k``x``k`` windows of an ``(N, C, H, W)`` batch into a
    ``(C*k*k, N*ho*wo)`` column matrix (rows ``(c, i, j)``, columns ``(n, y, x)``)."""
    x = np.asarray(x, dtype=np.float64)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c = x.shape[:2]
    sn, sc, sh, sw = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(c, k, k, n, ho, wo),
        strides=(sc, sh, sw, sn, sh * stride, sw * stride),
        writeable=False,
    )
    return view.reshape(c * k * k, n * ho * wo)


def col2im(cols, shape, k, stride, padding, ho, wo):
    """Adjoint of :func:`im2col`: scatter-add columns into an ``(N, C, H, W)``
    array, dropping contributions that land in the zero padding."""
    n, c, h, w = shape
    out = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    cols = cols.reshape(c, k, k, n, ho, wo)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, i, j].transpose(1, 0, 2, 3)
    if padding:
        out = np.ascontiguousarray(out[:, :, padding:padding + h, padding:padding + w])
    return out
