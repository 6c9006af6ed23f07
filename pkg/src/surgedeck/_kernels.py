"""Hot numeric kernels with two interchangeable backends.

Both the Gerstner wave-displacement kernel and the camera-objective kernel
exist twice: a numba ``@njit`` version and a vectorized pure-numpy version
that mirrors the same arithmetic.  The active backend is chosen at import
time from the ``SURGEDECK_NUMBA`` environment variable ("0"/"false"/"off"
forces the numpy path; default is numba when importable).  ``surgedeck
bench`` times both.

All kernels are deterministic: no threading, no fastmath.
"""

from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("SURGEDECK_NUMBA", "").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "off", "no")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


BACKEND = "numba" if (HAVE_NUMBA and _WANT_NUMBA) else "numpy"


# ---------------------------------------------------------------------------
# Gerstner cascade displacement + analytic normals
#
# Tile directions are precomputed on a lattice of pitch lam per level (tile
# centers sit at integer multiples of lam).  Level arrays are flattened into
# one buffer; lvl_off/lvl_nx/lvl_ny index it.


def _gerstner_numpy(verts, dry, t, lam, s, k, c,
                    mx0, my0, nx, ny, off, dirs, valid, literal_blend):
    nv = verts.shape[0]
    disp = np.zeros((nv, 3))
    nrm = np.zeros((nv, 3))
    x = verts[:, 0]
    y = verts[:, 1]
    for lv in range(lam.shape[0]):
        l, sl, kl, cl = lam[lv], s[lv], k[lv], c[lv]
        bx = 2.0 * np.floor(x / (2.0 * l)) + 1.0   # base tile center index
        by = 2.0 * np.floor(y / (2.0 * l)) + 1.0
        dxc = x - bx * l
        dyc = y - by * l
        sx = np.where(dxc >= 0.0, 1.0, -1.0)
        sy = np.where(dyc >= 0.0, 1.0, -1.0)
        adx = np.abs(dxc)
        ady = np.abs(dyc)
        if literal_blend:
            alpha = 0.5 - 0.5 * np.cos(adx / (2.0 * l))
            beta = 0.5 - 0.5 * np.cos(ady / (2.0 * l))
        else:
            alpha = 0.5 - 0.5 * np.cos(math.pi * adx / l)
            beta = 0.5 - 0.5 * np.cos(math.pi * ady / l)
        lvl_n = np.zeros((nv, 3))
        lvl_d = np.zeros((nv, 3))
        for ca, cb in ((0, 0), (1, 0), (0, 1), (1, 1)):
            w = (alpha if ca else (1.0 - alpha)) * (beta if cb else (1.0 - beta))
            tmx = (bx + ca * sx).astype(np.int64) - mx0[lv]
            tmy = (by + cb * sy).astype(np.int64) - my0[lv]
            inb = (tmx >= 0) & (tmx < nx[lv]) & (tmy >= 0) & (tmy < ny[lv])
            idx = off[lv] + np.clip(tmy, 0, ny[lv] - 1) * nx[lv] + np.clip(tmx, 0, nx[lv] - 1)
            ok = inb & (valid[idx] != 0)
            vx = np.where(ok, dirs[idx, 0], 0.0)
            vy = np.where(ok, dirs[idx, 1], 0.0)
            f = kl * (x * vx + y * vy) - cl * t
            cf = np.cos(f)
            sf = np.sin(f)
            a = sl / kl
            lvl_d[:, 0] += np.where(ok, w * a * cf * vx, 0.0)
            lvl_d[:, 1] += np.where(ok, w * a * cf * vy, 0.0)
            lvl_d[:, 2] += np.where(ok, w * a * sf, 0.0)
            lvl_n[:, 0] += np.where(ok, -w * vx * sl * cf, 0.0)
            lvl_n[:, 1] += np.where(ok, -w * vy * sl * cf, 0.0)
            lvl_n[:, 2] += np.where(ok, w * (1.0 - sl * sf), w)
        if lv == 0:
            wet = dry == 0
            disp[wet] += lvl_d[wet]
            lvl_n[~wet] = (0.0, 0.0, 1.0)
        else:
            disp += lvl_d
        norm = np.sqrt(np.sum(lvl_n * lvl_n, axis=1))
        nrm += lvl_n / norm[:, None]
    norm = np.sqrt(np.sum(nrm * nrm, axis=1))
    nrm /= norm[:, None]
    return disp, nrm


@njit(cache=True)
def _gerstner_numba(verts, dry, t, lam, s, k, c,
                    mx0, my0, nx, ny, off, dirs, valid, literal_blend):
    nv = verts.shape[0]
    disp = np.zeros((nv, 3))
    nrm = np.zeros((nv, 3))
    nlev = lam.shape[0]
    for i in range(nv):
        x = verts[i, 0]
        y = verts[i, 1]
        tnx = 0.0
        tny = 0.0
        tnz = 0.0
        for lv in range(nlev):
            l = lam[lv]
            sl = s[lv]
            kl = k[lv]
            cl = c[lv]
            bx = 2.0 * math.floor(x / (2.0 * l)) + 1.0
            by = 2.0 * math.floor(y / (2.0 * l)) + 1.0
            dxc = x - bx * l
            dyc = y - by * l
            sx = 1.0 if dxc >= 0.0 else -1.0
            sy = 1.0 if dyc >= 0.0 else -1.0
            adx = abs(dxc)
            ady = abs(dyc)
            if literal_blend:
                alpha = 0.5 - 0.5 * math.cos(adx / (2.0 * l))
                beta = 0.5 - 0.5 * math.cos(ady / (2.0 * l))
            else:
                alpha = 0.5 - 0.5 * math.cos(math.pi * adx / l)
                beta = 0.5 - 0.5 * math.cos(math.pi * ady / l)
            lnx = 0.0
            lny = 0.0
            lnz = 0.0
            ldx = 0.0
            ldy = 0.0
            ldz = 0.0
            for corner in range(4):
                ca = corner & 1
                cb = corner >> 1
                w = (alpha if ca else (1.0 - alpha)) * (beta if cb else (1.0 - beta))
                tmx = np.int64(bx + ca * sx) - mx0[lv]
                tmy = np.int64(by + cb * sy) - my0[lv]
                ok = False
                vx = 0.0
                vy = 0.0
                if 0 <= tmx < nx[lv] and 0 <= tmy < ny[lv]:
                    idx = off[lv] + tmy * nx[lv] + tmx
                    if valid[idx] != 0:
                        ok = True
                        vx = dirs[idx, 0]
                        vy = dirs[idx, 1]
                if ok:
                    f = kl * (x * vx + y * vy) - cl * t
                    cf = math.cos(f)
                    sf = math.sin(f)
                    a = sl / kl
                    ldx += w * a * cf * vx
                    ldy += w * a * cf * vy
                    ldz += w * a * sf
                    lnx += -w * vx * sl * cf
                    lny += -w * vy * sl * cf
                    lnz += w * (1.0 - sl * sf)
                else:
                    lnz += w
            if lv == 0 and dry[i] != 0:
                lnx = 0.0
                lny = 0.0
                lnz = 1.0
            else:
                disp[i, 0] += ldx
                disp[i, 1] += ldy
                disp[i, 2] += ldz
            ln = math.sqrt(lnx * lnx + lny * lny + lnz * lnz)
            tnx += lnx / ln
            tny += lny / ln
            tnz += lnz / ln
        tn = math.sqrt(tnx * tnx + tny * tny + tnz * tnz)
        nrm[i, 0] = tnx / tn
        nrm[i, 1] = tny / tn
        nrm[i, 2] = tnz / tn
    return disp, nrm


# ---------------------------------------------------------------------------
# Camera view objective over particle batches
#
# weights layout: [w_u, Omega, w_o, w_d, w_l, A_p, K, k_norm,
#                  E_R, E_O, E_D, E_L]


def _ray_blocked_scalar(px, py, pz, qx, qy, qz, t_stop,
                        gox, goy, gcs, heights):
    """Exact grid-column traversal; blocked when the segment dips below a
    column's obstacle height anywhere in (0, t_stop)."""
    if t_stop <= 0.0:
        return False
    dx = qx - px
    dy = qy - py
    dz = qz - pz
    gr, gc = heights.shape
    ts = [0.0, t_stop]
    if dx != 0.0:
        i0 = int(math.floor((min(px, px + t_stop * dx) - gox) / gcs))
        i1 = int(math.ceil((max(px, px + t_stop * dx) - gox) / gcs))
        for i in range(max(i0, 0), min(i1, gc) + 1):
            t = (gox + i * gcs - px) / dx
            if 0.0 < t < t_stop:
                ts.append(t)
    if dy != 0.0:
        j0 = int(math.floor((min(py, py + t_stop * dy) - goy) / gcs))
        j1 = int(math.ceil((max(py, py + t_stop * dy) - goy) / gcs))
        for j in range(max(j0, 0), min(j1, gr) + 1):
            t = (goy + j * gcs - py) / dy
            if 0.0 < t < t_stop:
                ts.append(t)
    ts.sort()
    for n in range(len(ts) - 1):
        t0 = ts[n]
        t1 = ts[n + 1]
        if t1 <= t0:
            continue
        tm = 0.5 * (t0 + t1)
        ix = int(math.floor((px + tm * dx - gox) / gcs))
        iy = int(math.floor((py + tm * dy - goy) / gcs))
        if ix < 0 or ix >= gc or iy < 0 or iy >= gr:
            continue
        zmin = min(pz + t0 * dz, pz + t1 * dz)
        if zmin < heights[iy, ix]:
            return True
    return False


@njit(cache=True)
def _objective_numba(poses, pois, gox, goy, gcs, heights,
                     mox, moy, mcs, mask, weights, yaw_offsets, scratch):
    w_u, omega, w_o, w_d, w_l = weights[0], weights[1], weights[2], weights[3], weights[4]
    a_max, kay, k_norm = weights[5], weights[6], weights[7]
    e_r, e_o, e_d, e_l = weights[8], weights[9], weights[10], weights[11]
    ns = poses.shape[0]
    m = pois.shape[0]
    nsc = yaw_offsets.shape[0]
    gr, gc = heights.shape
    mr, mc = mask.shape
    out = np.zeros(ns)
    dists = np.empty(m)
    o_terms = np.empty(m)
    d_terms = np.empty(m)
    for si in range(ns):
        px, py, pz = poses[si, 0], poses[si, 1], poses[si, 2]
        yaw0, pitch = poses[si, 3], poses[si, 4]
        a_p = abs(pitch)
        # location preference: offshore cell under the camera
        mi = int(math.floor((px - mox) / mcs))
        mj = int(math.floor((py - moy) / mcs))
        l_term = e_l
        if 0 <= mi < mc and 0 <= mj < mr and mask[mj, mi] != 0:
            l_term = 0.0
        # per-POI terms that do not depend on view direction
        for pi in range(m):
            ex = pois[pi, 0] - px
            ey = pois[pi, 1] - py
            ez = pois[pi, 2] - pz
            dist = math.sqrt(ex * ex + ey * ey + ez * ez)
            dists[pi] = dist
            dd = dist * dist / k_norm
            d_terms[pi] = e_d if dd > kay else dd
            # occlusion: grid cuboids, then other POI spheres
            blocked = False
            t_stop = 0.0
            if dist > 1e-12:
                t_stop = 1.0 - pois[pi, 3] / dist
            if t_stop > 0.0:
                nt = 0
                scratch[nt] = 0.0
                nt += 1
                scratch[nt] = t_stop
                nt += 1
                if ex != 0.0:
                    lo = min(px, px + t_stop * ex)
                    hi = max(px, px + t_stop * ex)
                    i0 = int(math.floor((lo - gox) / gcs))
                    i1 = int(math.ceil((hi - gox) / gcs))
                    if i0 < 0:
                        i0 = 0
                    if i1 > gc:
                        i1 = gc
                    for i in range(i0, i1 + 1):
                        t = (gox + i * gcs - px) / ex
                        if 0.0 < t < t_stop:
                            scratch[nt] = t
                            nt += 1
                if ey != 0.0:
                    lo = min(py, py + t_stop * ey)
                    hi = max(py, py + t_stop * ey)
                    j0 = int(math.floor((lo - goy) / gcs))
                    j1 = int(math.ceil((hi - goy) / gcs))
                    if j0 < 0:
                        j0 = 0
                    if j1 > gr:
                        j1 = gr
                    for j in range(j0, j1 + 1):
                        t = (goy + j * gcs - py) / ey
                        if 0.0 < t < t_stop:
                            scratch[nt] = t
                            nt += 1
                seg = scratch[:nt]
                seg.sort()
                for n in range(nt - 1):
                    t0 = seg[n]
                    t1 = seg[n + 1]
                    if t1 <= t0:
                        continue
                    tm = 0.5 * (t0 + t1)
                    ix = int(math.floor((px + tm * ex - gox) / gcs))
                    iy = int(math.floor((py + tm * ey - goy) / gcs))
                    if ix < 0 or ix >= gc or iy < 0 or iy >= gr:
                        continue
                    z0 = pz + t0 * ez
                    z1 = pz + t1 * ez
                    zmin = z0 if z0 < z1 else z1
                    if zmin < heights[iy, ix]:
                        blocked = True
                        break
                if not blocked:
                    for pj in range(m):
                        if pj == pi:
                            continue
                        cx = pois[pj, 0] - px
                        cy = pois[pj, 1] - py
                        cz = pois[pj, 2] - pz
                        rj = pois[pj, 3]
                        a = dist * dist
                        b = -2.0 * (cx * ex + cy * ey + cz * ez)
                        cc = cx * cx + cy * cy + cz * cz - rj * rj
                        disc = b * b - 4.0 * a * cc
                        if disc <= 0.0:
                            continue
                        sq = math.sqrt(disc)
                        t_in = (-b - sq) / (2.0 * a)
                        t_out = (-b + sq) / (2.0 * a)
                        if t_out > 0.0 and t_in < t_stop:
                            blocked = True
                            break
            o_terms[pi] = e_o if blocked else 0.0
        total = 0.0
        for sc in range(nsc):
            yaw = yaw0 + yaw_offsets[sc]
            cp = math.cos(pitch)
            dvx = cp * math.cos(yaw)
            dvy = cp * math.sin(yaw)
            dvz = math.sin(pitch)
            for pi in range(m):
                ex = pois[pi, 0] - px
                ey = pois[pi, 1] - py
                ez = pois[pi, 2] - pz
                if dists[pi] < 1e-12:
                    dot = 1.0
                else:
                    dot = (ex * dvx + ey * dvy + ez * dvz) / dists[pi]
                if a_p > a_max:
                    r_term = e_r
                else:
                    r_term = w_u * (2.0 * a_p / math.pi) ** 2 - dot
                total += (omega + r_term + w_o * o_terms[pi]
                          + w_d * d_terms[pi] + w_l * l_term)
        out[si] = total
    return out


def _objective_numpy(poses, pois, gox, goy, gcs, heights,
                     mox, moy, mcs, mask, weights, yaw_offsets, scratch=None):
    w_u, omega, w_o, w_d, w_l = weights[:5]
    a_max, kay, k_norm = weights[5], weights[6], weights[7]
    e_r, e_o, e_d, e_l = weights[8], weights[9], weights[10], weights[11]
    ns = poses.shape[0]
    m = pois.shape[0]
    nsc = yaw_offsets.shape[0]
    gr, gc = heights.shape
    mr, mc = mask.shape

    px, py, pz = poses[:, 0], poses[:, 1], poses[:, 2]
    pitch = poses[:, 4]
    a_p = np.abs(pitch)

    mi = np.floor((px - mox) / mcs).astype(np.int64)
    mj = np.floor((py - moy) / mcs).astype(np.int64)
    inm = (mi >= 0) & (mi < mc) & (mj >= 0) & (mj < mr)
    offshore = np.zeros(ns, dtype=bool)
    offshore[inm] = mask[mj[inm], mi[inm]] != 0
    l_term = np.where(offshore, 0.0, e_l)

    # rays: (ns, nsc, m)
    yaw = poses[:, 3][:, None] + yaw_offsets[None, :]
    cp = np.cos(pitch)[:, None]
    dvx = cp * np.cos(yaw)
    dvy = cp * np.sin(yaw)
    dvz = np.sin(pitch)[:, None]

    ex = pois[None, :, 0] - px[:, None]
    ey = pois[None, :, 1] - py[:, None]
    ez = pois[None, :, 2] - pz[:, None]
    dist = np.sqrt(ex * ex + ey * ey + ez * ez)
    safe = np.maximum(dist, 1e-12)
    dot = (ex[:, None, :] * dvx[:, :, None] + ey[:, None, :] * dvy[:, :, None]
           + ez[:, None, :] * dvz[:, :, None]) / safe[:, None, :]
    dot = np.where(dist[:, None, :] < 1e-12, 1.0, dot)
    r_term = np.where(a_p[:, None, None] > a_max,
                      e_r, w_u * (2.0 * a_p[:, None, None] / math.pi) ** 2 - dot)

    dd = dist * dist / k_norm
    d_term = np.where(dd > kay, e_d, dd)

    # occlusion along each (pose, poi) ray; shared across screens
    t_stop = np.where(dist > 1e-12, 1.0 - pois[None, :, 3] / safe, 0.0)
    live = t_stop > 0.0
    r = ns * m
    fx = np.broadcast_to(px[:, None], (ns, m)).reshape(r)
    fy = np.broadcast_to(py[:, None], (ns, m)).reshape(r)
    fz = np.broadcast_to(pz[:, None], (ns, m)).reshape(r)
    rdx = ex.reshape(r)
    rdy = ey.reshape(r)
    rdz = ez.reshape(r)
    rts = t_stop.reshape(r)

    ivals = gox + gcs * np.arange(gc + 1)
    jvals = goy + gcs * np.arange(gr + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = (ivals[None, :] - fx[:, None]) / rdx[:, None]
        ty = (jvals[None, :] - fy[:, None]) / rdy[:, None]
    tx = np.where((tx > 0.0) & (tx < rts[:, None]), tx, np.inf)
    ty = np.where((ty > 0.0) & (ty < rts[:, None]), ty, np.inf)
    ends = np.stack([np.zeros(r), np.where(rts > 0.0, rts, np.inf)], axis=1)
    allt = np.concatenate([ends, tx, ty], axis=1)
    allt = np.sort(allt, axis=1)
    t0 = allt[:, :-1]
    t1 = allt[:, 1:]
    ok = np.isfinite(t1) & (t1 > t0)
    tm = 0.5 * (t0 + t1)
    cx = np.floor((fx[:, None] + tm * rdx[:, None] - gox) / gcs).astype(np.int64)
    cy = np.floor((fy[:, None] + tm * rdy[:, None] - goy) / gcs).astype(np.int64)
    ing = ok & (cx >= 0) & (cx < gc) & (cy >= 0) & (cy < gr)
    h = np.full(allt.shape[0:1] + t0.shape[1:], -np.inf)
    h[ing] = heights[cy[ing], cx[ing]]
    zmin = np.minimum(fz[:, None] + t0 * rdz[:, None], fz[:, None] + t1 * rdz[:, None])
    blocked = np.any(ing & (zmin < h), axis=1)

    # other-POI sphere hits
    if m > 1:
        ccx = pois[None, None, :, 0] - px[:, None, None]
        ccy = pois[None, None, :, 1] - py[:, None, None]
        ccz = pois[None, None, :, 2] - pz[:, None, None]
        rj = pois[None, None, :, 3]
        a = (dist * dist)[:, :, None]
        b = -2.0 * (ccx * ex[:, :, None] + ccy * ey[:, :, None] + ccz * ez[:, :, None])
        cc = ccx * ccx + ccy * ccy + ccz * ccz - rj * rj
        disc = b * b - 4.0 * a * cc
        sq = np.sqrt(np.maximum(disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_in = (-b - sq) / (2.0 * a)
            t_out = (-b + sq) / (2.0 * a)
        hit = (disc > 0.0) & (t_out > 0.0) & (t_in < t_stop[:, :, None])
        same = np.eye(m, dtype=bool)[None, :, :]
        hit = hit & ~same
        blocked = blocked | np.any(hit, axis=2).reshape(r)

    blocked = (blocked & live.reshape(r)).reshape(ns, m)
    o_term = np.where(blocked, e_o, 0.0)

    per = (omega
           + r_term
           + w_o * o_term[:, None, :]
           + w_d * d_term[:, None, :]
           + w_l * l_term[:, None, None])
    return per.sum(axis=(1, 2))


# ---------------------------------------------------------------------------
# dispatch


def gerstner_cascade(verts, dry, t, lam, s, k, c,
                     mx0, my0, nx, ny, off, dirs, valid, literal_blend=False):
    """Displacement offsets and unit normals for a wave cascade.

    Returns ``(disp (V,3), normal (V,3))``.
    """
    args = (np.ascontiguousarray(verts, dtype=np.float64),
            np.ascontiguousarray(dry, dtype=np.uint8), float(t),
            lam, s, k, c, mx0, my0, nx, ny, off,
            np.ascontiguousarray(dirs, dtype=np.float64),
            np.ascontiguousarray(valid, dtype=np.uint8), bool(literal_blend))
    if BACKEND == "numba":
        return _gerstner_numba(*args)
    return _gerstner_numpy(*args)


def objective_batch(poses, pois, grid_origin, grid_cell, grid_heights,
                    mask_origin, mask_cell, mask, weights, yaw_offsets,
                    backend=None):
    """Vectorized multi-display view objective for a batch of poses."""
    poses = np.ascontiguousarray(poses, dtype=np.float64)
    pois = np.ascontiguousarray(pois, dtype=np.float64)
    heights = np.ascontiguousarray(grid_heights, dtype=np.float64)
    m8 = np.ascontiguousarray(mask, dtype=np.uint8)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    yo = np.ascontiguousarray(yaw_offsets, dtype=np.float64)
    be = backend or BACKEND
    if be == "numba":
        scratch = np.empty(heights.shape[0] + heights.shape[1] + 8)
        return _objective_numba(poses, pois,
                                float(grid_origin[0]), float(grid_origin[1]), float(grid_cell), heights,
                                float(mask_origin[0]), float(mask_origin[1]), float(mask_cell), m8,
                                w, yo, scratch)
    return _objective_numpy(poses, pois,
                            float(grid_origin[0]), float(grid_origin[1]), float(grid_cell), heights,
                            float(mask_origin[0]), float(mask_origin[1]), float(mask_cell), m8,
                            w, yo)


def gerstner_cascade_backend(backend, *args, **kwargs):
    """Explicit-backend variant used by the benchmark."""
    fn = _gerstner_numba if backend == "numba" else _gerstner_numpy
    verts, dry, t = args[0], args[1], args[2]
    rest = args[3:]
    return fn(np.ascontiguousarray(verts, dtype=np.float64),
              np.ascontiguousarray(dry, dtype=np.uint8), float(t), *rest,
              **kwargs)
