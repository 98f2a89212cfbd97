# cython: language_level=3
"""Compiled rigid-body kernels; see _kernels_py.py for the reference semantics.

Every floating-point expression here follows the pure-Python module in the
same order so both backends agree bit for bit.
"""

from libc.math cimport atan2, cos, sin, sqrt, fabs

cdef double FLOOR_TOL = 1e-9
cdef double CONTACT_SLOP = 1e-9
cdef double EDGE_EPS = 1e-6

BACKEND = "cython"


cdef inline void _axes(double w, double x, double y, double z, double[3][3] ax) noexcept nogil:
    ax[0][0] = 1.0 - 2.0 * (y * y + z * z)
    ax[0][1] = 2.0 * (x * y + w * z)
    ax[0][2] = 2.0 * (x * z - w * y)
    ax[1][0] = 2.0 * (x * y - w * z)
    ax[1][1] = 1.0 - 2.0 * (x * x + z * z)
    ax[1][2] = 2.0 * (y * z + w * x)
    ax[2][0] = 2.0 * (x * z + w * y)
    ax[2][1] = 2.0 * (y * z - w * x)
    ax[2][2] = 1.0 - 2.0 * (x * x + y * y)


cdef inline double _dot(double* u, double* v) noexcept nogil:
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


cdef int _overlap(double* pa, double* qa, double* ha,
                  double* pb, double* qb, double* hb, double* out) noexcept nogil:
    cdef double A[3][3]
    cdef double B[3][3]
    cdef double cand[15][3]
    cdef double ca[3]
    cdef double cb[3]
    cdef double t[3]
    cdef double bn[3]
    cdef double lx, ly, lz, ln, ra, rb, d, ov
    cdef double best = -1.0
    cdef int found = 0
    cdef int k, m, c, nc = 0
    cdef double* L

    _axes(qa[0], qa[1], qa[2], qa[3], A)
    _axes(qb[0], qb[1], qb[2], qb[3], B)
    for k in range(3):
        ca[k] = pa[k] + ha[2] * A[2][k]
        cb[k] = pb[k] + hb[2] * B[2][k]
    t[0] = cb[0] - ca[0]
    t[1] = cb[1] - ca[1]
    t[2] = cb[2] - ca[2]
    bn[0] = 0.0
    bn[1] = 0.0
    bn[2] = 0.0

    for k in range(3):
        cand[nc][0] = A[k][0]
        cand[nc][1] = A[k][1]
        cand[nc][2] = A[k][2]
        nc += 1
    for k in range(3):
        cand[nc][0] = B[k][0]
        cand[nc][1] = B[k][1]
        cand[nc][2] = B[k][2]
        nc += 1
    for k in range(3):
        for m in range(3):
            lx = A[k][1] * B[m][2] - A[k][2] * B[m][1]
            ly = A[k][2] * B[m][0] - A[k][0] * B[m][2]
            lz = A[k][0] * B[m][1] - A[k][1] * B[m][0]
            ln = sqrt(lx * lx + ly * ly + lz * lz)
            if ln < EDGE_EPS:
                continue
            cand[nc][0] = lx / ln
            cand[nc][1] = ly / ln
            cand[nc][2] = lz / ln
            nc += 1

    for c in range(nc):
        L = cand[c]
        ra = ha[0] * fabs(_dot(A[0], L)) + ha[1] * fabs(_dot(A[1], L)) + ha[2] * fabs(_dot(A[2], L))
        rb = hb[0] * fabs(_dot(B[0], L)) + hb[1] * fabs(_dot(B[1], L)) + hb[2] * fabs(_dot(B[2], L))
        d = _dot(t, L)
        ov = ra + rb - fabs(d)
        if ov <= CONTACT_SLOP:
            return 0
        if not found or ov < best - 1e-9:
            found = 1
            best = ov
            if d < 0.0:
                bn[0] = -L[0]
                bn[1] = -L[1]
                bn[2] = -L[2]
            else:
                bn[0] = L[0]
                bn[1] = L[1]
                bn[2] = L[2]
    out[0] = bn[0]
    out[1] = bn[1]
    out[2] = bn[2]
    out[3] = best
    out[4] = 0.5 * (ca[0] + cb[0])
    out[5] = 0.5 * (ca[1] + cb[1])
    out[6] = 0.5 * (ca[2] + cb[2])
    return 1


def box_overlap(pa, qa, ha, pb, qb, hb):
    cdef double a_p[3]
    cdef double a_q[4]
    cdef double a_h[3]
    cdef double b_p[3]
    cdef double b_q[4]
    cdef double b_h[3]
    cdef double out[7]
    cdef int k
    for k in range(3):
        a_p[k] = pa[k]
        a_h[k] = ha[k]
        b_p[k] = pb[k]
        b_h[k] = hb[k]
    for k in range(4):
        a_q[k] = qa[k]
        b_q[k] = qb[k]
    if not _overlap(a_p, a_q, a_h, b_p, b_q, b_h, out):
        return None
    return (out[0], out[1], out[2], out[3], out[4], out[5], out[6])


cdef list _detect(double[:, ::1] p, double[:, ::1] q, double[:, ::1] h):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i, j
    cdef double out[7]
    cdef list res = []
    for i in range(n):
        for j in range(i + 1, n):
            if _overlap(&p[i, 0], &q[i, 0], &h[i, 0], &p[j, 0], &q[j, 0], &h[j, 0], out):
                res.append((i, j, out[0], out[1], out[2], out[3], out[4], out[5], out[6], 0.0))
    return res


def detect(double[:, ::1] pos, double[:, ::1] quat, double[:, ::1] half):
    return _detect(pos, quat, half)


def step(double[:, ::1] p, double[:, ::1] v, double[:, ::1] q, double[:, ::1] h,
         double[::1] im, double[::1] eng, double[::1] flt,
         double g, double dt, double mu_eff, double e, double rest_speed, double heading_eps):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i, j
    cdef double dv_fric = mu_eff * g * dt
    cdef double w, x, y, z, az, vx, vy, vz, s, f, px, py, pz
    cdef double nx, ny, nz, depth, vn, imp, a, b, tot, half_yaw, r
    cdef bint on_floor
    cdef list contacts, resolved

    for i in range(n):
        w = q[i, 0]
        x = q[i, 1]
        y = q[i, 2]
        z = q[i, 3]
        on_floor = p[i, 2] <= FLOOR_TOL
        az = flt[i] - g
        vx = v[i, 0]
        vy = v[i, 1]
        if eng[i] != 0.0:
            vx = vx + (eng[i] * (1.0 - 2.0 * (y * y + z * z))) * dt
            vy = vy + (eng[i] * (2.0 * (x * y + w * z))) * dt
        vz = v[i, 2] + az * dt
        if eng[i] == 0.0 and on_floor:
            s = sqrt(vx * vx + vy * vy)
            if s <= dv_fric:
                vx = 0.0
                vy = 0.0
            else:
                f = (s - dv_fric) / s
                vx = vx * f
                vy = vy * f
        px = p[i, 0] + vx * dt
        py = p[i, 1] + vy * dt
        pz = p[i, 2] + vz * dt
        if pz < 0.0:
            pz = 0.0
            if vz < 0.0:
                if -vz > rest_speed:
                    vz = -e * vz
                else:
                    vz = 0.0
        p[i, 0] = px
        p[i, 1] = py
        p[i, 2] = pz
        v[i, 0] = vx
        v[i, 1] = vy
        v[i, 2] = vz

    contacts = _detect(p, q, h)
    resolved = []
    for c in contacts:
        i = c[0]
        j = c[1]
        nx = c[2]
        ny = c[3]
        nz = c[4]
        depth = c[5]
        vn = (v[j, 0] - v[i, 0]) * nx + (v[j, 1] - v[i, 1]) * ny + (v[j, 2] - v[i, 2]) * nz
        imp = 0.0
        if vn < 0.0:
            imp = -(1.0 + e) * vn / (im[i] + im[j])
            a = imp * im[i]
            b = imp * im[j]
            v[i, 0] = v[i, 0] - a * nx
            v[i, 1] = v[i, 1] - a * ny
            v[i, 2] = v[i, 2] - a * nz
            v[j, 0] = v[j, 0] + b * nx
            v[j, 1] = v[j, 1] + b * ny
            v[j, 2] = v[j, 2] + b * nz
        resolved.append((i, j, nx, ny, nz, depth, c[6], c[7], c[8], imp))

    for c in resolved:
        i = c[0]
        j = c[1]
        nx = c[2]
        ny = c[3]
        nz = c[4]
        depth = c[5]
        tot = im[i] + im[j]
        a = depth * im[i] / tot
        b = depth * im[j] / tot
        p[i, 0] = p[i, 0] - a * nx
        p[i, 1] = p[i, 1] - a * ny
        r = p[i, 2] - a * nz
        p[i, 2] = r if r > 0.0 else 0.0
        p[j, 0] = p[j, 0] + b * nx
        p[j, 1] = p[j, 1] + b * ny
        r = p[j, 2] + b * nz
        p[j, 2] = r if r > 0.0 else 0.0

    for i in range(n):
        vx = v[i, 0]
        vy = v[i, 1]
        if sqrt(vx * vx + vy * vy) > heading_eps:
            half_yaw = 0.5 * atan2(vy, vx)
            q[i, 0] = cos(half_yaw)
            q[i, 1] = 0.0
            q[i, 2] = 0.0
            q[i, 3] = sin(half_yaw)

    return resolved
