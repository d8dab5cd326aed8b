# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree-recursion kernels.

Same contracts as _tree_numpy: leafward forward factors, rootward
upward factors, and root-to-vertex sign-alternating products, batched
over replicates along axis 0.  Shells are contiguous index ranges and
parent/child indices follow from shell-offset arithmetic.
"""


def forward_pass(double[:, ::1] pot, double complex z, long[::1] offsets,
                 int branching, double complex[:, ::1] out):
    cdef Py_ssize_t nb = pot.shape[0]
    cdef Py_ssize_t depth = offsets.shape[0] - 2
    cdef Py_ssize_t b, s, v, c0, j
    cdef Py_ssize_t k
    cdef double complex acc
    with nogil:
        for b in range(nb):
            for v in range(offsets[depth], offsets[depth + 1]):
                out[b, v] = 1.0 / (pot[b, v] - z)
            for s in range(depth - 1, -1, -1):
                k = branching + 1 if s == 0 else branching
                for v in range(offsets[s], offsets[s + 1]):
                    c0 = offsets[s + 1] + (v - offsets[s]) * k
                    acc = 0
                    for j in range(k):
                        acc = acc + out[b, c0 + j]
                    out[b, v] = 1.0 / (pot[b, v] - z - acc)


def upward_pass(double complex[:, ::1] gamma, long[::1] offsets, int branching,
                Py_ssize_t max_depth, double complex[:, ::1] out):
    cdef Py_ssize_t nb = gamma.shape[0]
    cdef Py_ssize_t b, s, v, p
    with nogil:
        for b in range(nb):
            out[b, 0] = 0
            for s in range(1, max_depth + 1):
                for v in range(offsets[s], offsets[s + 1]):
                    p = 0 if s == 1 else offsets[s - 1] + (v - offsets[s]) // branching
                    out[b, v] = 1.0 / (1.0 / gamma[b, p] - out[b, p] + gamma[b, v])


def products_pass(double complex[:, ::1] factors, long[::1] offsets, int branching,
                  Py_ssize_t max_depth, double complex[:, ::1] out):
    cdef Py_ssize_t nb = factors.shape[0]
    cdef Py_ssize_t b, s, v, p
    with nogil:
        for b in range(nb):
            out[b, 0] = 1
            for s in range(1, max_depth + 1):
                for v in range(offsets[s], offsets[s + 1]):
                    p = 0 if s == 1 else offsets[s - 1] + (v - offsets[s]) // branching
                    out[b, v] = -factors[b, v] * out[b, p]
