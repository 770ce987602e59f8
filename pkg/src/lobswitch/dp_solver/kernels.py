"""Node-parallel layer sweeps, compiled with numba.

Each sweep writes only to its own node's outputs, every per-node reduction
runs in a fixed order, and no accumulation crosses nodes, so results are
bitwise identical for any worker count.  Candidate rows arrive pre-sorted
(wait first, then lexicographic (ua, ub)) and the hidden-flag loop runs in
lexicographic (ha, hb) order, which makes the strict argmax implement the
deterministic tie-break.

Volumes and inventory are integers on the grid; fractional trade results
are truncated to the nearest node (half-ties toward the smaller value)
before any table lookup.
"""

from __future__ import annotations

import warnings

import numpy as np

with warnings.catch_warnings():
    warnings.filterwarnings("ignore", message=".*TBB.*")
    import numba
    from numba import njit, prange

__all__ = ["interior_binomial_layer", "interior_mc_layer", "arrival_layer",
           "terminal_layer", "set_threads"]

VARIANT_LINEAR = 0
VARIANT_TARGET_ABS = 1
VARIANT_TARGET_QUAD = 2
VARIANT_LIQUIDATION = 3


def set_threads(threads: int) -> int:
    """Select the worker count, clamped to what this process can launch."""
    limit = numba.config.NUMBA_NUM_THREADS
    n = max(1, min(int(threads), limit))
    if n != threads:
        warnings.warn(f"thread count {threads} clamped to {n} "
                      f"(NUMBA_NUM_THREADS={limit})")
    numba.set_num_threads(n)
    return n


@njit(cache=True, inline="always")
def _round_half_down(x):
    return np.int64(np.ceil(x - 0.5))


@njit(cache=True, inline="always")
def _inventory_value(code, z, pa, pb, z0, upen_a, upen_b):
    if code == VARIANT_LINEAR:
        return z
    if code == VARIANT_TARGET_ABS:
        return abs(z - z0)
    if code == VARIANT_TARGET_QUAD:
        return (z - z0) * (z - z0)
    if z > 0.0:
        return (pb - upen_b) * z
    if z < 0.0:
        return (pa + upen_a) * z
    return 0.0


@njit(cache=True, inline="always")
def _vol_step(q1, p1, r, delta, qmax, pmax, up):
    """Volume move by r with depletion reset; price steps away by one tick
    (up for the ask side, down for the bid side).  Returns (q2, p2)."""
    q2 = q1 + r
    p2 = p1
    if q2 <= 0:
        p2 = p1 + 1 if up else p1 - 1
        q2 = delta
    if q2 > qmax:
        q2 = qmax
    if up:
        if p2 > pmax:
            p2 = pmax
    else:
        if p2 < pmax:
            p2 = pmax
    return q2, p2


@njit(cache=True, parallel=True)
def terminal_layer(node_qa, node_qb, node_z, node_pair,
                   pair_pa, pair_pb, cand_off,
                   c_iua, c_fua, c_iub, c_fub,
                   delta_a, delta_b, r_c, r_i,
                   variant, z0, upen_a, upen_b,
                   v_out, pol_ua, pol_ub):
    n = node_qa.shape[0]
    for i in prange(n):
        qa = float(node_qa[i])
        qb = float(node_qb[i])
        z = float(node_z[i])
        pair = node_pair[i]
        pa = float(pair_pa[pair])
        pb = float(pair_pb[pair])
        best = -np.inf
        best_c = -1
        for c in range(cand_off[pair], cand_off[pair + 1]):
            iua = c_iua[c]
            fua = c_fua[c]
            iub = c_iub[c]
            fub = c_fub[c]
            ua = iua + fua
            ub = iub + fub
            if ua >= 1.0:
                ga = qa + (ua - 1.0) * delta_a
                fa = pa * ga + (0.5 * iua * (iua - 1) + iua * fua) * delta_a
            else:
                ga = ua * qa
                fa = pa * ua * qa
            if ub >= 1.0:
                gb = qb + (ub - 1.0) * delta_b
                fb = pb * gb + (0.5 * iub * (iub - 1) + iub * fub) * delta_b
            else:
                gb = ub * qb
                fb = pb * ub * qb
            z1 = z + ga - gb
            pa1 = pa + iua
            pb1 = pb - iub
            val = r_c * (-fa + fb) + r_i * _inventory_value(
                variant, z1, pa1, pb1, z0, upen_a, upen_b)
            if val > best:
                best = val
                best_c = c
        v_out[i] = best
        pol_ua[i] = np.float32(c_iua[best_c] + c_fua[best_c])
        pol_ub[i] = np.float32(c_iub[best_c] + c_fub[best_c])


@njit(cache=True, parallel=True)
def interior_binomial_layer(node_qa, node_qb, node_z, node_pair,
                            pair_pa, pair_pb, pair_index,
                            cand_off, c_wait, c_iua, c_iub, c_hmask,
                            nq, nz, zmin, zmax, qmax,
                            pa_min, pa_max, pb_min, pb_max,
                            delta_a, delta_b, r_c, fill_prob,
                            v0_next, w_high,
                            v_out, pol_wait, pol_ua, pol_ub, pol_ha, pol_hb,
                            clamp_out):
    n = node_qa.shape[0]
    ida = np.int64(delta_a)
    idb = np.int64(delta_b)
    for i in prange(n):
        qa = node_qa[i]
        qb = node_qb[i]
        z = node_z[i]
        pair = node_pair[i]
        pa = pair_pa[pair]
        pb = pair_pb[pair]
        clamps = 0
        best = -np.inf
        best_c = -1
        best_h = 0
        for c in range(cand_off[pair], cand_off[pair + 1]):
            iua = c_iua[c]
            iub = c_iub[c]
            if c_wait[c] == 1:
                qa1 = qa
                qb1 = qb
                pa1 = pa
                pb1 = pb
                z1 = z
                f_alpha = 0.0
            else:
                if iua >= 1:
                    ga = float(qa) + (iua - 1.0) * delta_a
                    fa = pa * ga + 0.5 * iua * (iua - 1.0) * delta_a
                    qa1 = ida
                else:
                    ga = 0.0
                    fa = 0.0
                    qa1 = qa
                if iub >= 1:
                    gb = float(qb) + (iub - 1.0) * delta_b
                    fb = pb * gb + 0.5 * iub * (iub - 1.0) * delta_b
                    qb1 = idb
                else:
                    gb = 0.0
                    fb = 0.0
                    qb1 = qb
                f_alpha = -fa + fb
                z1 = z + _round_half_down(ga - gb)
                if z1 > zmax:
                    z1 = zmax
                    clamps += 1
                elif z1 < zmin:
                    z1 = zmin
                    clamps += 1
                pa1 = pa + iua
                if pa1 > pa_max:
                    pa1 = pa_max
                    clamps += 1
                pb1 = pb - iub
                if pb1 < pb_min:
                    pb1 = pb_min
                    clamps += 1
            mid1 = 0.5 * (pa1 + pb1)
            s1 = pa1 - pb1
            use_high = s1 >= 2
            base_cash = r_c * f_alpha
            hm = c_hmask[c]
            for hcode in range(3):
                if hm & (1 << hcode) == 0:
                    continue
                # hcode 0 -> (0,0), 1 -> (0,1) resting sell, 2 -> (1,0) resting buy
                if hcode == 0:
                    drift = 0.0
                    dz = np.int64(0)
                elif hcode == 1:
                    drift = r_c * delta_b * mid1 * fill_prob
                    dz = -idb
                else:
                    drift = -r_c * delta_a * mid1 * fill_prob
                    dz = ida
                z2 = z1 + dz
                if z2 > zmax:
                    z2 = zmax
                    clamps += 1
                elif z2 < zmin:
                    z2 = zmin
                    clamps += 1
                acc = 0.0
                for combo in range(4):
                    ra = np.int64(-1) if combo < 2 else np.int64(1)
                    rb = np.int64(-1) if combo % 2 == 0 else np.int64(1)
                    qa2, pa2 = _vol_step(qa1, pa1, ra, ida, qmax, pa_max, True)
                    qb2, pb2 = _vol_step(qb1, pb1, rb, idb, qmax, pb_min, False)
                    pair2 = pair_index[pa2 - pa_min, pb2 - pb_min]
                    base = ((pair2 * nz) * nq + qb2) * nq + qa2
                    idx0 = base + (z1 - zmin) * nq * nq
                    if use_high:
                        if hcode == 0:
                            acc += 0.25 * w_high[idx0]
                        else:
                            idx1 = base + (z2 - zmin) * nq * nq
                            acc += 0.25 * (0.75 * w_high[idx0] + 0.25 * w_high[idx1])
                    else:
                        if hcode == 0:
                            acc += 0.25 * v0_next[idx0]
                        else:
                            idx1 = base + (z2 - zmin) * nq * nq
                            acc += 0.25 * (0.75 * v0_next[idx0] + 0.25 * v0_next[idx1])
                val = base_cash + drift + acc
                if val > best:
                    best = val
                    best_c = c
                    best_h = hcode
        v_out[i] = best
        pol_wait[i] = c_wait[best_c]
        pol_ua[i] = np.float32(c_iua[best_c])
        pol_ub[i] = np.float32(c_iub[best_c])
        pol_ha[i] = np.uint8(1) if best_h == 2 else np.uint8(0)
        pol_hb[i] = np.uint8(1) if best_h == 1 else np.uint8(0)
        clamp_out[i] = clamps


@njit(cache=True, parallel=True)
def interior_mc_layer(node_qa, node_qb, node_z, node_pair,
                      pair_pa, pair_pb, pair_index,
                      cand_off, c_wait, c_iua, c_iub, c_hmask,
                      nq, nz, zmin, zmax, qmax,
                      pa_min, pa_max, pb_min, pb_max,
                      delta_a, delta_b, r_c, dt,
                      sigma_a, sigma_b, lam_a_tab, lam_b_tab,
                      th_a_tab, th_b_tab,
                      normals, unis,
                      v0_next, va_next, vb_next,
                      v_out, pol_wait, pol_ua, pol_ub, pol_ha, pol_hb,
                      clamp_out):
    n = node_qa.shape[0]
    m_samples = normals.shape[1]
    sqdt = np.sqrt(dt)
    for i in prange(n):
        qa = node_qa[i]
        qb = node_qb[i]
        z = node_z[i]
        pair = node_pair[i]
        pa = pair_pa[pair]
        pb = pair_pb[pair]
        clamps = 0
        best = -np.inf
        best_c = -1
        best_h = 0
        for c in range(cand_off[pair], cand_off[pair + 1]):
            iua = c_iua[c]
            iub = c_iub[c]
            if c_wait[c] == 1:
                qa1 = float(qa)
                qb1 = float(qb)
                pa1 = pa
                pb1 = pb
                z1 = np.int64(z)
                f_alpha = 0.0
            else:
                if iua >= 1:
                    ga = float(qa) + (iua - 1.0) * delta_a
                    fa = pa * ga + 0.5 * iua * (iua - 1.0) * delta_a
                    qa1 = delta_a
                else:
                    ga = 0.0
                    fa = 0.0
                    qa1 = float(qa)
                if iub >= 1:
                    gb = float(qb) + (iub - 1.0) * delta_b
                    fb = pb * gb + 0.5 * iub * (iub - 1.0) * delta_b
                    qb1 = delta_b
                else:
                    gb = 0.0
                    fb = 0.0
                    qb1 = float(qb)
                f_alpha = -fa + fb
                z1 = z + _round_half_down(ga - gb)
                if z1 > zmax:
                    z1 = zmax
                    clamps += 1
                elif z1 < zmin:
                    z1 = zmin
                    clamps += 1
                pa1 = pa + iua
                if pa1 > pa_max:
                    pa1 = pa_max
                    clamps += 1
                pb1 = pb - iub
                if pb1 < pb_min:
                    pb1 = pb_min
                    clamps += 1
            mid1 = 0.5 * (pa1 + pb1)
            s1 = pa1 - pb1
            p_lam_a = min(lam_a_tab[s1] * dt, 1.0)
            p_lam_b = min(lam_b_tab[s1] * dt, 1.0)
            p_th_a = min(th_a_tab[s1] * dt, 1.0)
            p_th_b = min(th_b_tab[s1] * dt, 1.0)
            base_cash = r_c * f_alpha
            hm = c_hmask[c]
            for hcode in range(3):
                if hm & (1 << hcode) == 0:
                    continue
                if hcode == 0:
                    drift = 0.0
                elif hcode == 1:
                    drift = r_c * delta_b * mid1 * p_lam_b
                else:
                    drift = -r_c * delta_a * mid1 * p_lam_a
                acc = 0.0
                for m in range(m_samples):
                    qa2f = qa1 + sigma_a * sqdt * normals[i, m, 0]
                    pa2 = pa1
                    if qa2f <= 0.0:
                        pa2 = pa1 + 1
                        qa2f = delta_a
                    qb2f = qb1 + sigma_b * sqdt * normals[i, m, 1]
                    pb2 = pb1
                    if qb2f <= 0.0:
                        pb2 = pb1 - 1
                        qb2f = delta_b
                    qa2 = _round_half_down(qa2f)
                    if qa2 < 0:
                        qa2 = 0
                    elif qa2 > qmax:
                        qa2 = qmax
                    qb2 = _round_half_down(qb2f)
                    if qb2 < 0:
                        qb2 = 0
                    elif qb2 > qmax:
                        qb2 = qmax
                    if pa2 > pa_max:
                        pa2 = pa_max
                    if pb2 < pb_min:
                        pb2 = pb_min
                    z2 = z1
                    if hcode == 2 and unis[i, m, 0] < p_lam_a:
                        z2 = z1 + _round_half_down(delta_a)
                    elif hcode == 1 and unis[i, m, 1] < p_lam_b:
                        z2 = z1 - _round_half_down(delta_b)
                    if z2 > zmax:
                        z2 = zmax
                    elif z2 < zmin:
                        z2 = zmin
                    pair2 = pair_index[pa2 - pa_min, pb2 - pb_min]
                    idx = ((pair2 * nz + (z2 - zmin)) * nq + qb2) * nq + qa2
                    na = unis[i, m, 2] < p_th_a
                    nb = unis[i, m, 3] < p_th_b
                    if na and nb:
                        acc += 0.5 * (va_next[idx] + vb_next[idx])
                    elif na:
                        acc += va_next[idx]
                    elif nb:
                        acc += vb_next[idx]
                    else:
                        acc += v0_next[idx]
                val = base_cash + drift + acc / m_samples
                if val > best:
                    best = val
                    best_c = c
                    best_h = hcode
        v_out[i] = best
        pol_wait[i] = c_wait[best_c]
        pol_ua[i] = np.float32(c_iua[best_c])
        pol_ub[i] = np.float32(c_iub[best_c])
        pol_ha[i] = np.uint8(1) if best_h == 2 else np.uint8(0)
        pol_hb[i] = np.uint8(1) if best_h == 1 else np.uint8(0)
        clamp_out[i] = clamps


@njit(cache=True, parallel=True)
def arrival_layer(ask_side, node_qa, node_qb, node_z, node_pair,
                  pair_pa, pair_pb, pair_index,
                  cand_off, c_iarr, c_farr, c_iother,
                  nq, nz, zmin, zmax, qmax,
                  pa_min, pa_max, pb_min, pb_max,
                  delta_a, delta_b, eps, r_c,
                  v0_layer,
                  v_out, pol_ua, pol_ub, clamp_out):
    """Arrival-instant values: forced trade chained into the same-instant
    no-arrival value at the truncated post-trade node.

    ``c_iarr``/``c_farr`` are the integer/fraction parts of the arrival-side
    component, ``c_iother`` the integer component on the quiet side.
    """
    n = node_qa.shape[0]
    for i in prange(n):
        qa = float(node_qa[i])
        qb = float(node_qb[i])
        z = float(node_z[i])
        pair = node_pair[i]
        pa = pair_pa[pair]
        pb = pair_pb[pair]
        clamps = 0
        best = -np.inf
        best_c = -1
        for c in range(cand_off[pair], cand_off[pair + 1]):
            iu = c_iarr[c]
            fu = c_farr[c]
            io = c_iother[c]
            u = iu + fu
            if ask_side:
                q_arr = qa
                p_arr = float(pa)
                d_arr = delta_a
                q_oth = qb
                p_oth = float(pb)
                d_oth = delta_b
            else:
                q_arr = qb
                p_arr = float(pb)
                d_arr = delta_b
                q_oth = qa
                p_oth = float(pa)
                d_oth = delta_a
            g_arr = 0.0
            f_arr = 0.0
            if u >= 1.0:
                g_arr += q_arr + (u - 1.0) * d_arr
                f_arr += p_arr * (q_arr + (u - 1.0) * d_arr) + 0.5 * u * (u - 1.0) * d_arr
            if u >= 0.0:
                g_arr += d_arr
                f_arr += (p_arr - 1.0) * d_arr if ask_side else (p_arr + 1.0) * d_arr
            if iu <= 0:
                g_arr += fu * q_arr
                f_arr += ((p_arr + eps) if ask_side else (p_arr - eps)) * fu * q_arr
            g_oth = 0.0
            f_oth = 0.0
            if io >= 1:
                g_oth = q_oth + (io - 1.0) * d_oth
                f_oth = p_oth * g_oth + 0.5 * io * (io - 1.0) * d_oth
            if ask_side:
                f_alpha = -f_arr + f_oth
                g_alpha = g_arr - g_oth
                q_arr1 = d_arr if iu != 0 else (1.0 - fu) * q_arr
                q_oth1 = d_oth if io != 0 else q_oth
                qa1f = q_arr1
                qb1f = q_oth1
                pa1 = pa + iu
                pb1 = pb - io
            else:
                f_alpha = -f_oth + f_arr
                g_alpha = g_oth - g_arr
                q_arr1 = d_arr if iu != 0 else (1.0 - fu) * q_arr
                q_oth1 = d_oth if io != 0 else q_oth
                qa1f = q_oth1
                qb1f = q_arr1
                pa1 = pa + io
                pb1 = pb - iu
            z1 = _round_half_down(z + g_alpha)
            if z1 > zmax:
                z1 = zmax
                clamps += 1
            elif z1 < zmin:
                z1 = zmin
                clamps += 1
            qa1 = _round_half_down(qa1f)
            if qa1 < 0:
                qa1 = 0
            elif qa1 > qmax:
                qa1 = qmax
            qb1 = _round_half_down(qb1f)
            if qb1 < 0:
                qb1 = 0
            elif qb1 > qmax:
                qb1 = qmax
            if pa1 > pa_max:
                pa1 = pa_max
            elif pa1 < pa_min:
                pa1 = pa_min
            if pb1 < pb_min:
                pb1 = pb_min
            elif pb1 > pb_max:
                pb1 = pb_max
            if pa1 <= pb1:
                pb1 = pa1 - 1
                if pb1 < pb_min:
                    pb1 = pb_min
                    pa1 = pb_min + 1
            pair1 = pair_index[pa1 - pa_min, pb1 - pb_min]
            idx = ((pair1 * nz + (z1 - zmin)) * nq + qb1) * nq + qa1
            val = r_c * f_alpha + v0_layer[idx]
            if val > best:
                best = val
                best_c = c
        v_out[i] = best
        if ask_side:
            pol_ua[i] = np.float32(c_iarr[best_c] + c_farr[best_c])
            pol_ub[i] = np.float32(c_iother[best_c])
        else:
            pol_ua[i] = np.float32(c_iother[best_c])
            pol_ub[i] = np.float32(c_iarr[best_c] + c_farr[best_c])
        clamp_out[i] = clamps
