# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: trajectory first-return search and Crank-Nicolson
stepping.  Mirrors pykernels; see there for the algorithm notes."""
import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, isnan, NAN

cnp.import_array()

BACKEND_NAME = "cython"


cdef inline double _bspline_eval(double t_lo, double h, Py_ssize_t n_int,
                                 const double[:, ::1] c, double x) nogil:
    cdef Py_ssize_t i = <Py_ssize_t>((x - t_lo) / h)
    if i < 0:
        i = 0
    elif i >= n_int:
        i = n_int - 1
    cdef double s = x - (t_lo + i * h)
    return ((c[0, i] * s + c[1, i]) * s + c[2, i]) * s + c[3, i]


def trajectory_batch(const double[::1] t_nodes, const double[::1] b_nodes,
                     const double[:, ::1] b_coeff, const double[::1] t0,
                     const double[::1] a0, const double[::1] b0,
                     const double[::1] z_exit, double charge_over_mass,
                     double max_flight, double bisect_tol):
    cdef Py_ssize_t n = t0.shape[0]
    cdef Py_ssize_t m_nodes = t_nodes.shape[0]
    cdef Py_ssize_t n_int = b_coeff.shape[1]
    cdef double t_lo = t_nodes[0]
    cdef double h = t_nodes[1] - t_nodes[0]
    cdef double qm = charge_over_mass

    out = np.full(n, np.nan)
    cdef double[::1] t1_out = out

    cdef Py_ssize_t i, j, j_first, j_last, it
    cdef double r0, t_win, tt, zz, lo, hi, mid, zm, tprev
    cdef bint found

    with nogil:
        for i in range(n):
            r0 = z_exit[i] - qm * (b0[i] - a0[i] * t0[i])
            j_first = <Py_ssize_t>ceil((t0[i] - t_lo) / h)
            if j_first < 0:
                j_first = 0
            if t_lo + j_first * h <= t0[i]:
                j_first += 1
            t_win = t0[i] + max_flight
            j_last = <Py_ssize_t>floor((t_win - t_lo) / h)
            if j_last > m_nodes - 1:
                j_last = m_nodes - 1
            found = False
            lo = t0[i]
            hi = NAN
            for j in range(j_first, j_last + 1):
                tt = t_lo + j * h
                zz = r0 + qm * (b_nodes[j] - a0[i] * tt)
                if zz <= 0.0:
                    hi = tt
                    tprev = tt - h
                    lo = tprev if tprev > t0[i] else t0[i]
                    found = True
                    break
            if not found:
                # partial interval between the last node and the window end
                zz = r0 + qm * (_bspline_eval(t_lo, h, n_int, b_coeff, t_win)
                                - a0[i] * t_win)
                if zz <= 0.0:
                    hi = t_win
                    tt = t_lo + j_last * h
                    lo = tt if tt > t0[i] else t0[i]
                    found = True
            if not found:
                continue
            for it in range(80):
                if hi - lo <= bisect_tol:
                    break
                mid = 0.5 * (lo + hi)
                zm = r0 + qm * (_bspline_eval(t_lo, h, n_int, b_coeff, mid)
                                - a0[i] * mid)
                if zm > 0.0:
                    lo = mid
                else:
                    hi = mid
            t1_out[i] = 0.5 * (lo + hi)
    return out


def cn_propagate(psi_init, const double[::1] v_static, const double[::1] cap,
                 const double[::1] laser, const double[::1] e_mid,
                 double kinetic, double alpha, psi_proj, double dz,
                 Py_ssize_t record_every):
    cdef Py_ssize_t nz = len(psi_init)
    cdef Py_ssize_t nsteps = e_mid.shape[0]
    psi_arr = np.ascontiguousarray(psi_init, dtype=complex).copy()
    proj_arr = np.ascontiguousarray(np.conj(psi_proj))
    cdef double complex[::1] psi = psi_arr
    cdef double complex[::1] proj = proj_arr

    cdef Py_ssize_t n_rec = nsteps // record_every + 1
    pops_arr = np.empty(n_rec)
    norms_arr = np.empty(n_rec)
    cdef double[::1] pops = pops_arr
    cdef double[::1] norms = norms_arr

    # A = I + i alpha H: diag (ar_j + i ai_j), off-diagonal i*b (pure
    # imaginary, constant).  The system is scaled by 1/(i b) so the Thomas
    # sweep runs with unit off-diagonals: one real division + a few
    # multiplies per node, in explicit real arithmetic.
    cdef double b = -alpha * kinetic
    cdef double inv_b = 1.0 / b
    scratch = np.empty((8, nz))
    cdef double[:, ::1] w = scratch
    # rows: 0 ar(static), 1 ai(static), 2 rhs_r, 3 rhs_i, 4 cp_r, 5 cp_i,
    #       6 psi_r view scratch, 7 psi_i view scratch (d' stored in 2,3)

    cdef double two_kin = 2.0 * kinetic
    cdef Py_ssize_t k, j, rec
    cdef double em, nrm, ovr, ovi
    cdef double ar, ai, pr, pi, qr, qi, rr, ri, dr, di, m2, cr, ci

    with nogil:
        for j in range(nz):
            w[0, j] = 1.0 + alpha * cap[j]          # real part of A diagonal
            w[1, j] = alpha * (two_kin + v_static[j])  # imag part, static piece
        ovr = 0.0
        ovi = 0.0
        nrm = 0.0
        for j in range(nz):
            pr = psi[j].real
            pi = psi[j].imag
            qr = proj[j].real
            qi = proj[j].imag
            ovr += qr * pr - qi * pi
            ovi += qr * pi + qi * pr
            nrm += pr * pr + pi * pi
        pops[0] = (ovr * ovr + ovi * ovi) * dz * dz
        norms[0] = nrm * dz
        rec = 0
        for k in range(nsteps):
            em = alpha * e_mid[k]
            # rhs = (2 - a_j) psi_j - i b (psi_{j-1} + psi_{j+1}), then
            # scaled by 1/(i b) = -i/b:  rhs' = -i rhs / b
            for j in range(nz):
                ar = w[0, j]
                ai = w[1, j] + em * laser[j]
                pr = psi[j].real
                pi = psi[j].imag
                rr = (2.0 - ar) * pr + ai * pi
                ri = (2.0 - ar) * pi - ai * pr
                if j > 0:
                    rr += b * psi[j - 1].imag
                    ri -= b * psi[j - 1].real
                if j < nz - 1:
                    rr += b * psi[j + 1].imag
                    ri -= b * psi[j + 1].real
                # store scaled rhs and scaled diagonal a' = a/(i b) = -i a/b
                w[2, j] = ri * inv_b
                w[3, j] = -rr * inv_b
                w[6, j] = ai * inv_b       # a' real part
                w[7, j] = -ar * inv_b      # a' imag part
            # forward sweep, unit off-diagonals: denom = a'_j - cp_{j-1}
            dr = w[6, 0]
            di = w[7, 0]
            m2 = 1.0 / (dr * dr + di * di)
            w[4, 0] = dr * m2
            w[5, 0] = -di * m2
            rr = w[2, 0]
            ri = w[3, 0]
            w[2, 0] = (rr * dr + ri * di) * m2
            w[3, 0] = (ri * dr - rr * di) * m2
            for j in range(1, nz):
                dr = w[6, j] - w[4, j - 1]
                di = w[7, j] - w[5, j - 1]
                m2 = 1.0 / (dr * dr + di * di)
                cr = dr * m2
                ci = -di * m2
                w[4, j] = cr
                w[5, j] = ci
                rr = w[2, j] - w[2, j - 1]
                ri = w[3, j] - w[3, j - 1]
                w[2, j] = rr * cr - ri * ci
                w[3, j] = rr * ci + ri * cr
            # back substitution: psi_j = d'_j - cp_j * psi_{j+1}
            pr = w[2, nz - 1]
            pi = w[3, nz - 1]
            psi[nz - 1] = pr + 1j * pi
            for j in range(nz - 2, -1, -1):
                rr = w[4, j] * pr - w[5, j] * pi
                ri = w[4, j] * pi + w[5, j] * pr
                pr = w[2, j] - rr
                pi = w[3, j] - ri
                psi[j] = pr + 1j * pi
            if (k + 1) % record_every == 0:
                rec += 1
                ovr = 0.0
                ovi = 0.0
                nrm = 0.0
                for j in range(nz):
                    pr = psi[j].real
                    pi = psi[j].imag
                    qr = proj[j].real
                    qi = proj[j].imag
                    ovr += qr * pr - qi * pi
                    ovi += qr * pi + qi * pr
                    nrm += pr * pr + pi * pi
                pops[rec] = (ovr * ovr + ovi * ovi) * dz * dz
                norms[rec] = nrm * dz
    return psi_arr, pops_arr[:rec + 1], norms_arr[:rec + 1]
