# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Direct 2-D convolution kernels (cross-correlation) with OpenMP parallelism.

Each routine writes every output element from exactly one thread, so results
are deterministic for a fixed input regardless of thread count.
"""

from cython.parallel cimport prange

cimport openmp


ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _lo(Py_ssize_t k, Py_ssize_t pad, Py_ssize_t stride) noexcept nogil:
    # smallest output index whose receptive-field row/col k lands inside the input
    if pad <= k:
        return 0
    return (pad - k + stride - 1) // stride


cdef inline Py_ssize_t _hi(Py_ssize_t k, Py_ssize_t pad, Py_ssize_t stride,
                           Py_ssize_t n_in, Py_ssize_t n_out) noexcept nogil:
    # largest valid output index (inclusive); may be < _lo for empty ranges
    cdef Py_ssize_t top = n_in - 1 + pad - k
    if top < 0:
        return -1
    top = top // stride
    if top > n_out - 1:
        top = n_out - 1
    return top


cdef int _threads(int num_threads) noexcept nogil:
    if num_threads > 0:
        return num_threads
    return openmp.omp_get_max_threads()


def conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w, real[::1] bias,
                   real[:, :, :, ::1] out, int stride, int pad, int num_threads):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t HO = out.shape[2], WO = out.shape[3]
    cdef Py_ssize_t bo, b, o, c, kh, kw, oh, ow
    cdef Py_ssize_t oh0, oh1, ow0, ow1, base
    cdef real wv, bv
    cdef real *xrow
    cdef real *orow
    cdef real *xp
    cdef real *wp
    cdef real *op
    cdef int nt = _threads(num_threads)
    xp = &x[0, 0, 0, 0]
    wp = &w[0, 0, 0, 0]
    op = &out[0, 0, 0, 0]
    with nogil:
        for bo in prange(B * O, num_threads=nt, schedule='static'):
            b = bo // O
            o = bo % O
            orow = op + (b * O + o) * HO * WO
            bv = bias[o]
            for oh in range(HO * WO):
                orow[oh] = bv
            for c in range(C):
                for kh in range(K):
                    oh0 = _lo(kh, pad, stride)
                    oh1 = _hi(kh, pad, stride, H, HO)
                    for kw in range(K):
                        ow0 = _lo(kw, pad, stride)
                        ow1 = _hi(kw, pad, stride, W, WO)
                        wv = wp[((o * C + c) * K + kh) * K + kw]
                        for oh in range(oh0, oh1 + 1):
                            xrow = xp + ((b * C + c) * H + oh * stride + kh - pad) * W + kw - pad
                            orow = op + ((b * O + o) * HO + oh) * WO
                            if stride == 1:
                                for ow in range(ow0, ow1 + 1):
                                    orow[ow] += wv * xrow[ow]
                            else:
                                for ow in range(ow0, ow1 + 1):
                                    orow[ow] += wv * xrow[ow * stride]


def conv2d_backward_input(real[:, :, :, ::1] dout, real[:, :, :, ::1] w,
                          real[:, :, :, ::1] dx, int stride, int pad, int num_threads):
    cdef Py_ssize_t B = dx.shape[0], C = dx.shape[1], H = dx.shape[2], W = dx.shape[3]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t HO = dout.shape[2], WO = dout.shape[3]
    cdef Py_ssize_t bc, b, c, o, kh, kw, oh, ow
    cdef Py_ssize_t oh0, oh1, ow0, ow1
    cdef real wv
    cdef real *gp
    cdef real *wp
    cdef real *dp
    cdef real *grow
    cdef real *drow
    cdef int nt = _threads(num_threads)
    gp = &dout[0, 0, 0, 0]
    wp = &w[0, 0, 0, 0]
    dp = &dx[0, 0, 0, 0]
    with nogil:
        for bc in prange(B * C, num_threads=nt, schedule='static'):
            b = bc // C
            c = bc % C
            drow = dp + (b * C + c) * H * W
            for oh in range(H * W):
                drow[oh] = 0
            for o in range(O):
                for kh in range(K):
                    oh0 = _lo(kh, pad, stride)
                    oh1 = _hi(kh, pad, stride, H, HO)
                    for kw in range(K):
                        ow0 = _lo(kw, pad, stride)
                        ow1 = _hi(kw, pad, stride, W, WO)
                        wv = wp[((o * C + c) * K + kh) * K + kw]
                        for oh in range(oh0, oh1 + 1):
                            grow = gp + ((b * O + o) * HO + oh) * WO
                            drow = dp + ((b * C + c) * H + oh * stride + kh - pad) * W + kw - pad
                            if stride == 1:
                                for ow in range(ow0, ow1 + 1):
                                    drow[ow] += wv * grow[ow]
                            else:
                                for ow in range(ow0, ow1 + 1):
                                    drow[ow * stride] += wv * grow[ow]


def conv2d_backward_weight(real[:, :, :, ::1] x, real[:, :, :, ::1] dout,
                           real[:, :, :, ::1] dw, int stride, int pad, int num_threads):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = dw.shape[0], K = dw.shape[2]
    cdef Py_ssize_t HO = dout.shape[2], WO = dout.shape[3]
    cdef Py_ssize_t oc, o, b, c, kh, kw, oh, ow
    cdef Py_ssize_t oh0, oh1, ow0, ow1
    cdef real acc
    cdef real *xp
    cdef real *gp
    cdef real *xrow
    cdef real *grow
    cdef int nt = _threads(num_threads)
    xp = &x[0, 0, 0, 0]
    gp = &dout[0, 0, 0, 0]
    with nogil:
        for oc in prange(O * C, num_threads=nt, schedule='static'):
            o = oc // C
            c = oc % C
            for kh in range(K):
                oh0 = _lo(kh, pad, stride)
                oh1 = _hi(kh, pad, stride, H, HO)
                for kw in range(K):
                    ow0 = _lo(kw, pad, stride)
                    ow1 = _hi(kw, pad, stride, W, WO)
                    acc = 0
                    for b in range(B):
                        for oh in range(oh0, oh1 + 1):
                            xrow = xp + ((b * C + c) * H + oh * stride + kh - pad) * W + kw - pad
                            grow = gp + ((b * O + o) * HO + oh) * WO
                            if stride == 1:
                                for ow in range(ow0, ow1 + 1):
                                    acc = acc + xrow[ow] * grow[ow]
                            else:
                                for ow in range(ow0, ow1 + 1):
                                    acc = acc + xrow[ow * stride] * grow[ow]
                    dw[o, c, kh, kw] = acc
