"""Numpy implementations of the hot kernels (fallback when the compiled
extension is unavailable).  Signatures mirror ``cykernels`` exactly; the
algorithms are identical so the two backends agree to rounding."""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

BACKEND_NAME = "python"


def _bspline_eval(t_lo, h, n_intervals, coeff, x):
    """Evaluate a cubic spline given scipy CubicSpline coefficients on a
    uniform node grid starting at t_lo with step h."""
    i = np.clip(((x - t_lo) / h).astype(int), 0, n_intervals - 1)
    s = x - (t_lo + i * h)
    return ((coeff[0, i] * s + coeff[1, i]) * s + coeff[2, i]) * s + coeff[3, i]


def trajectory_batch(t_nodes, b_nodes, b_coeff, t0, a0, b0, z_exit,
                     charge_over_mass, max_flight, bisect_tol):
    """First-return times for surface-launched trajectories.

    The excursion in a spatially uniform field has the exact quadrature form
    z(t) = z_exit + (|e|/m) [B(t) - B(t0) - A(t0) (t - t0)] where B is the
    running integral of the vector potential; the first zero of z after t0
    (within max_flight) is located on the dense node grid and refined by
    bisection on the spline to bisect_tol seconds.

    Returns an array of re-collision times, NaN where the electron does not
    return inside the window.
    """
    t_lo = t_nodes[0]
    h = t_nodes[1] - t_nodes[0]
    m_nodes = len(t_nodes)
    n = len(t0)
    qm = charge_over_mass
    t1_out = np.full(n, np.nan)

    # constant per sample: z(t) = r0[i] + qm*(B(t) - a0[i]*t)
    r0 = z_exit - qm * (b0 - a0 * t0)

    j_first = np.ceil((t0 - t_lo) / h).astype(int)
    j_first = np.maximum(j_first, 0)
    same = t_lo + j_first * h <= t0
    j_first = np.where(same, j_first + 1, j_first)
    t_win = t0 + max_flight
    j_last = np.minimum(((t_win - t_lo) / h).astype(int), m_nodes - 1)

    lo_arr = np.full(n, np.nan)
    hi_arr = np.full(n, np.nan)

    chunk = 512
    group = 2048
    for g0 in range(0, n, group):
        g1 = min(g0 + group, n)
        idx = np.arange(g0, g1)
        j_cur = j_first[idx].copy()
        alive = np.ones(len(idx), dtype=bool)
        while np.any(alive):
            ai = idx[alive]
            jc = j_cur[alive]
            cols = jc[:, None] + np.arange(chunk)[None, :]
            np.clip(cols, 0, m_nodes - 1, out=cols)
            tt = t_lo + cols * h
            zz = r0[ai, None] + qm * (b_nodes[cols] - a0[ai, None] * tt)
            valid = cols <= j_last[ai, None]
            neg = (zz <= 0.0) & valid
            hit = neg.any(axis=1)
            first = np.argmax(neg, axis=1)
            if np.any(hit):
                rows = np.nonzero(hit)[0]
                gi = ai[rows]
                jhit = cols[rows, first[rows]]
                hi_arr[gi] = t_lo + jhit * h
                prev = t_lo + (jhit - 1) * h
                lo_arr[gi] = np.maximum(prev, t0[gi])
            exhausted = cols[:, -1] >= j_last[ai]
            done = hit | exhausted
            # window-end partial interval for exhausted, unhit samples
            tail = exhausted & ~hit
            if np.any(tail):
                gi = ai[tail]
                tw = t_win[gi]
                bw = _bspline_eval(t_lo, h, b_coeff.shape[1], b_coeff, tw)
                zw = r0[gi] + qm * (bw - a0[gi] * tw)
                crossed = zw <= 0.0
                if np.any(crossed):
                    gj = gi[crossed]
                    hi_arr[gj] = tw[crossed]
                    lo_arr[gj] = np.maximum(t_lo + j_last[gj] * h, t0[gj])
            j_cur[alive] += chunk
            sub = np.nonzero(alive)[0]
            alive[sub[done]] = False

    # vectorized bisection on the bracketed samples
    br = np.nonzero(~np.isnan(hi_arr))[0]
    if len(br):
        lo = lo_arr[br]
        hi = hi_arr[br]
        rr = r0[br]
        aa = a0[br]
        for _ in range(80):
            wide = (hi - lo) > bisect_tol
            if not np.any(wide):
                break
            mid = 0.5 * (lo + hi)
            bm = _bspline_eval(t_lo, h, b_coeff.shape[1], b_coeff, mid)
            zm = rr + qm * (bm - aa * mid)
            pos = zm > 0.0
            lo = np.where(wide & pos, mid, lo)
            hi = np.where(wide & ~pos, mid, hi)
        t1_out[br] = 0.5 * (lo + hi)
    return t1_out


def cn_propagate(psi_init, v_static, cap, laser, e_mid, kinetic, alpha,
                 psi_proj, dz, record_every):
    """Crank-Nicolson propagation of a 1-D wavefunction.

    H(t) = kinetic 3-point stencil + v_static - i*cap + e_mid[k]*laser, with
    the field taken at each step midpoint.  Records the projection onto
    psi_proj and the norm every record_every steps (index 0 = initial state).

    Returns (psi_final, populations, norms).
    """
    nz = len(psi_init)
    nsteps = len(e_mid)
    psi = psi_init.astype(complex).copy()
    d_static = 2.0 * kinetic + v_static - 1j * cap
    off = 1j * alpha * (-kinetic)

    n_rec = nsteps // record_every + 1
    pops = np.empty(n_rec)
    norms = np.empty(n_rec)
    proj = np.conj(psi_proj)

    def _record(r):
        ov = np.dot(proj, psi) * dz
        pops[r] = np.abs(ov) ** 2
        norms[r] = np.real(np.dot(np.conj(psi), psi)) * dz

    _record(0)
    ab = np.zeros((3, nz), dtype=complex)
    ab[0, 1:] = off
    ab[2, :-1] = off
    rec = 0
    for k in range(nsteps):
        adiag = 1.0 + 1j * alpha * (d_static + e_mid[k] * laser)
        rhs = (2.0 - adiag) * psi
        rhs[:-1] -= off * psi[1:]
        rhs[1:] -= off * psi[:-1]
        ab[1, :] = adiag
        psi = solve_banded((1, 1), ab, rhs, check_finite=False,
                           overwrite_b=True)
        if (k + 1) % record_every == 0:
            rec += 1
            _record(rec)
    return psi, pops[:rec + 1], norms[:rec + 1]
