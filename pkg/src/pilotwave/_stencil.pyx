# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Hot stencil kernels: 7-point complex Laplacian and trilinear gathers.

Pure-numpy fallbacks with identical semantics live in ``kernels.py``; the
dispatcher selects this module when the build produced it.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def laplacian_dirichlet(const cnp.complex128_t[:, :, ::1] f,
                        cnp.complex128_t[:, :, ::1] out,
                        double ax, double ay, double az):
    """out = lap(f) on interior nodes, 0 on the boundary ring.

    ax/ay/az are the inverse squared spacings 1/dx^2 etc.
    """
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double diag = 2.0 * (ax + ay + az)
    out[:, :, :] = 0.0
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                out[i, j, k] = (
                    ax * (f[i + 1, j, k] + f[i - 1, j, k])
                    + ay * (f[i, j + 1, k] + f[i, j - 1, k])
                    + az * (f[i, j, k + 1] + f[i, j, k - 1])
                    - diag * f[i, j, k]
                )


def laplacian_periodic(const cnp.complex128_t[:, :, ::1] f,
                       cnp.complex128_t[:, :, ::1] out,
                       double ax, double ay, double az):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2]
    cdef Py_ssize_t i, j, k, ip, im, jp, jm, kp, km
    cdef double diag = 2.0 * (ax + ay + az)
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        im = i - 1 if i > 0 else nx - 1
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            jm = j - 1 if j > 0 else ny - 1
            for k in range(nz):
                kp = k + 1 if k + 1 < nz else 0
                km = k - 1 if k > 0 else nz - 1
                out[i, j, k] = (
                    ax * (f[ip, j, k] + f[im, j, k])
                    + ay * (f[i, jp, k] + f[i, jm, k])
                    + az * (f[i, j, kp] + f[i, j, km])
                    - diag * f[i, j, k]
                )


def trilinear_gather(const cnp.complex128_t[:, :, ::1] f,
                     const double[:, ::1] pts,
                     double hx, double hy, double hz,
                     bint periodic,
                     cnp.complex128_t[::1] out):
    """Trilinear interpolation of f at an (n, 3) array of positions.

    Dirichlet grids clamp to the node box; periodic grids wrap.
    """
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2]
    cdef Py_ssize_t m, i0, j0, k0, i1, j1, k1
    cdef double x, y, z, fx, fy, fz, gx, gy, gz
    for m in range(n):
        x = pts[m, 0] / hx
        y = pts[m, 1] / hy
        z = pts[m, 2] / hz
        if periodic:
            x = x - nx * (<long>(x / nx) - (1 if x < 0 else 0))
            y = y - ny * (<long>(y / ny) - (1 if y < 0 else 0))
            z = z - nz * (<long>(z / nz) - (1 if z < 0 else 0))
            i0 = <Py_ssize_t>x
            j0 = <Py_ssize_t>y
            k0 = <Py_ssize_t>z
            if i0 >= nx: i0 = nx - 1
            if j0 >= ny: j0 = ny - 1
            if k0 >= nz: k0 = nz - 1
            i1 = i0 + 1 if i0 + 1 < nx else 0
            j1 = j0 + 1 if j0 + 1 < ny else 0
            k1 = k0 + 1 if k0 + 1 < nz else 0
        else:
            if x < 0: x = 0
            if y < 0: y = 0
            if z < 0: z = 0
            if x > nx - 1: x = nx - 1
            if y > ny - 1: y = ny - 1
            if z > nz - 1: z = nz - 1
            i0 = <Py_ssize_t>x
            j0 = <Py_ssize_t>y
            k0 = <Py_ssize_t>z
            if i0 > nx - 2: i0 = nx - 2
            if j0 > ny - 2: j0 = ny - 2
            if k0 > nz - 2: k0 = nz - 2
            i1 = i0 + 1
            j1 = j0 + 1
            k1 = k0 + 1
        fx = x - i0
        fy = y - j0
        fz = z - k0
        gx = 1.0 - fx
        gy = 1.0 - fy
        gz = 1.0 - fz
        out[m] = (
            gx * gy * gz * f[i0, j0, k0]
            + fx * gy * gz * f[i1, j0, k0]
            + gx * fy * gz * f[i0, j1, k0]
            + gx * gy * fz * f[i0, j0, k1]
            + fx * fy * gz * f[i1, j1, k0]
            + fx * gy * fz * f[i1, j0, k1]
            + gx * fy * fz * f[i0, j1, k1]
            + fx * fy * fz * f[i1, j1, k1]
        )
