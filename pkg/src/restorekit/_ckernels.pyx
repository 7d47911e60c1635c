# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t
from libc.string cimport memcpy, memset

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def counter_uniform(key, counters):
    cdef uint64_t k = <uint64_t>int(key)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] flat = np.ascontiguousarray(counters, dtype=np.uint64).ravel()
    cdef Py_ssize_t n = flat.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef const cnp.uint64_t[::1] cv = flat
    cdef Py_ssize_t i
    cdef uint64_t z
    with nogil:
        for i in range(n):
            z = mix64((cv[i] + 1) * GOLDEN ^ k)
            z = mix64(z + k)
            o[i] = (<double>(z >> 11) + 0.5) * TWO_M53
    return out.reshape(np.shape(counters))


cdef inline void _valid_range(Py_ssize_t j, int stride, int padding, Py_ssize_t w, Py_ssize_t wo,
                              Py_ssize_t* lo, Py_ssize_t* hi) noexcept nogil:
    # output columns xx whose source column xx*stride + j - padding lies in [0, w)
    cdef Py_ssize_t a = padding - j
    cdef Py_ssize_t first = 0 if a <= 0 else (a + stride - 1) // stride
    cdef Py_ssize_t b = w - 1 + padding - j
    cdef Py_ssize_t last = -1 if b < 0 else b // stride
    lo[0] = first if first < wo else wo
    hi[0] = last + 1 if last + 1 < wo else wo
    if hi[0] < lo[0]:
        hi[0] = lo[0]


def im2col(xin, int k, int stride, int padding, int ho, int wo):
    cdef cnp.ndarray[double, ndim=4, mode="c"] x = np.ascontiguousarray(xin, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t plane = ho * wo
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((c * k * k, n * plane), dtype=np.float64)
    cdef double* src = <double*>x.data
    cdef double* dst = <double*>out.data
    cdef Py_ssize_t ncols = n * plane
    cdef Py_ssize_t b, ch, i, j, y, xx, sy, lo, hi
    cdef double* orow
    cdef double* irow
    with nogil:
        for ch in range(c):
            for i in range(k):
                for j in range(k):
                    _valid_range(j, stride, padding, w, wo, &lo, &hi)
                    for b in range(n):
                        orow = dst + ((ch * k + i) * k + j) * ncols + b * plane
                        for y in range(ho):
                            sy = y * stride + i - padding
                            if sy < 0 or sy >= h:
                                memset(orow, 0, wo * sizeof(double))
                            else:
                                irow = src + ((b * c + ch) * h + sy) * w + j - padding
                                if lo > 0:
                                    memset(orow, 0, lo * sizeof(double))
                                if stride == 1:
                                    memcpy(orow + lo, irow + lo, (hi - lo) * sizeof(double))
                                else:
                                    for xx in range(lo, hi):
                                        orow[xx] = irow[xx * stride]
                                if hi < wo:
                                    memset(orow + hi, 0, (wo - hi) * sizeof(double))
                            orow += wo
    return out


def col2im(cols, shape, int k, int stride, int padding, int ho, int wo):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t plane = ho * wo
    cdef cnp.ndarray[double, ndim=4, mode="c"] out = np.zeros((n, c, h, w), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] cv = np.ascontiguousarray(cols, dtype=np.float64).reshape(c * k * k, n * plane)
    cdef double* dst = <double*>out.data
    cdef double* src = <double*>cv.data
    cdef Py_ssize_t ncols = n * plane
    cdef Py_ssize_t b, ch, i, j, y, xx, sy, lo, hi
    cdef double* crow
    cdef double* orow
    with nogil:
        for ch in range(c):
            for i in range(k):
                for j in range(k):
                    _valid_range(j, stride, padding, w, wo, &lo, &hi)
                    for b in range(n):
                        crow = src + ((ch * k + i) * k + j) * ncols + b * plane
                        for y in range(ho):
                            sy = y * stride + i - padding
                            if 0 <= sy < h:
                                orow = dst + ((b * c + ch) * h + sy) * w + j - padding
                                for xx in range(lo, hi):
                                    orow[xx * stride] += crow[xx]
                            crow += wo
    return out
