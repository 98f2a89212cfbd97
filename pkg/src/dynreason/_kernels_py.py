"""Pure-Python rigid-body kernels.

This is the reference the Cython module mirrors expression by expression;
both must produce bit-identical floats, so keep evaluation order in sync
when editing either file.

State layout (numpy float64, modified in place by ``step``):
    pos (n, 3)   base-centre position; the box centre sits ``hz`` above it
    vel (n, 3)
    quat (n, 4)  w, x, y, z
    half (n, 3)  body-frame half extents
    inv_mass, engine, floating (n,)

A contact is the tuple (i, j, nx, ny, nz, depth, px, py, pz, impulse) with
i < j and the normal pointing from i to j.
"""

from math import atan2, cos, sin, sqrt

FLOOR_TOL = 1e-9
CONTACT_SLOP = 1e-9
EDGE_EPS = 1e-6

BACKEND = "python"


def _axes(q):
    w, x, y, z = q
    return (
        (1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y + w * z), 2.0 * (x * z - w * y)),
        (2.0 * (x * y - w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z + w * x)),
        (2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)),
    )


def _dot(u, v):
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


def _center(p, ax, h):
    a2 = ax[2]
    return (p[0] + h[2] * a2[0], p[1] + h[2] * a2[1], p[2] + h[2] * a2[2])


def _overlap(pa, qa, ha, pb, qb, hb):
    """Separating-axis test for two oriented boxes.

    Returns None when separated (touching counts as separated), otherwise
    (nx, ny, nz, depth, px, py, pz) for the axis of least penetration.
    """
    A = _axes(qa)
    B = _axes(qb)
    ca = _center(pa, A, ha)
    cb = _center(pb, B, hb)
    t = (cb[0] - ca[0], cb[1] - ca[1], cb[2] - ca[2])

    best = -1.0
    bn = (0.0, 0.0, 0.0)
    found = False

    candidates = []
    for k in range(3):
        candidates.append(A[k])
    for k in range(3):
        candidates.append(B[k])
    for k in range(3):
        for m in range(3):
            u = A[k]
            v = B[m]
            lx = u[1] * v[2] - u[2] * v[1]
            ly = u[2] * v[0] - u[0] * v[2]
            lz = u[0] * v[1] - u[1] * v[0]
            ln = sqrt(lx * lx + ly * ly + lz * lz)
            if ln < EDGE_EPS:
                continue
            candidates.append((lx / ln, ly / ln, lz / ln))

    for L in candidates:
        ra = ha[0] * abs(_dot(A[0], L)) + ha[1] * abs(_dot(A[1], L)) + ha[2] * abs(_dot(A[2], L))
        rb = hb[0] * abs(_dot(B[0], L)) + hb[1] * abs(_dot(B[1], L)) + hb[2] * abs(_dot(B[2], L))
        d = _dot(t, L)
        ov = ra + rb - abs(d)
        if ov <= CONTACT_SLOP:
            return None
        if not found or ov < best - 1e-9:
            found = True
            best = ov
            if d < 0.0:
                bn = (-L[0], -L[1], -L[2])
            else:
                bn = (L[0], L[1], L[2])
    return (
        bn[0],
        bn[1],
        bn[2],
        best,
        0.5 * (ca[0] + cb[0]),
        0.5 * (ca[1] + cb[1]),
        0.5 * (ca[2] + cb[2]),
    )


def box_overlap(pa, qa, ha, pb, qb, hb):
    return _overlap(
        tuple(float(c) for c in pa),
        tuple(float(c) for c in qa),
        tuple(float(c) for c in ha),
        tuple(float(c) for c in pb),
        tuple(float(c) for c in qb),
        tuple(float(c) for c in hb),
    )


def _detect(p, q, h):
    n = len(p)
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            r = _overlap(p[i], q[i], h[i], p[j], q[j], h[j])
            if r is not None:
                out.append((i, j, r[0], r[1], r[2], r[3], r[4], r[5], r[6], 0.0))
    return out


def detect(pos, quat, half):
    return _detect(pos.tolist(), quat.tolist(), half.tolist())


def step(pos, vel, quat, half, inv_mass, engine, floating, g, dt, mu_eff, e, rest_speed, heading_eps):
    p = pos.tolist()
    v = vel.tolist()
    q = quat.tolist()
    h = half.tolist()
    im = inv_mass.tolist()
    eng = engine.tolist()
    flt = floating.tolist()
    n = len(p)
    dv_fric = mu_eff * g * dt

    for i in range(n):
        pi, vi = p[i], v[i]
        w, x, y, z = q[i]
        on_floor = pi[2] <= FLOOR_TOL
        az = flt[i] - g
        vx = vi[0]
        vy = vi[1]
        if eng[i] != 0.0:
            vx = vx + (eng[i] * (1.0 - 2.0 * (y * y + z * z))) * dt
            vy = vy + (eng[i] * (2.0 * (x * y + w * z))) * dt
        vz = vi[2] + az * dt
        if eng[i] == 0.0 and on_floor:
            s = sqrt(vx * vx + vy * vy)
            if s <= dv_fric:
                vx = 0.0
                vy = 0.0
            else:
                f = (s - dv_fric) / s
                vx = vx * f
                vy = vy * f
        px = pi[0] + vx * dt
        py = pi[1] + vy * dt
        pz = pi[2] + vz * dt
        if pz < 0.0:
            pz = 0.0
            if vz < 0.0:
                if -vz > rest_speed:
                    vz = -e * vz
                else:
                    vz = 0.0
        p[i] = [px, py, pz]
        v[i] = [vx, vy, vz]

    contacts = _detect(p, q, h)
    resolved = []
    for c in contacts:
        i, j, nx, ny, nz, depth, cx, cy, cz, _ = c
        vi, vj = v[i], v[j]
        vn = (vj[0] - vi[0]) * nx + (vj[1] - vi[1]) * ny + (vj[2] - vi[2]) * nz
        imp = 0.0
        if vn < 0.0:
            imp = -(1.0 + e) * vn / (im[i] + im[j])
            a = imp * im[i]
            b = imp * im[j]
            v[i] = [vi[0] - a * nx, vi[1] - a * ny, vi[2] - a * nz]
            v[j] = [vj[0] + b * nx, vj[1] + b * ny, vj[2] + b * nz]
        resolved.append((i, j, nx, ny, nz, depth, cx, cy, cz, imp))

    for c in resolved:
        i, j, nx, ny, nz, depth = c[:6]
        tot = im[i] + im[j]
        a = depth * im[i] / tot
        b = depth * im[j] / tot
        pi, pj = p[i], p[j]
        p[i] = [pi[0] - a * nx, pi[1] - a * ny, max(0.0, pi[2] - a * nz)]
        p[j] = [pj[0] + b * nx, pj[1] + b * ny, max(0.0, pj[2] + b * nz)]

    for i in range(n):
        vx, vy = v[i][0], v[i][1]
        if sqrt(vx * vx + vy * vy) > heading_eps:
            half_yaw = 0.5 * atan2(vy, vx)
            q[i] = [cos(half_yaw), 0.0, 0.0, sin(half_yaw)]

    pos[:] = p
    vel[:] = v
    quat[:] = q
    return resolved
