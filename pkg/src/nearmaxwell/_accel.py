"""Numba kernels for the collision quadrature hot loops.

Every kernel writes each output element from exactly one thread with a
fixed inner summation order, so results are bit-identical across thread
counts.  The pure-numpy fallbacks in ``collision`` implement the same
sums; the two paths agree to floating-point roundoff.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap

    prange = range


def set_threads(n: int) -> None:
    if HAVE_NUMBA and n > 0:
        try:
            numba.set_num_threads(n)
        except ValueError:
            pass


@njit(parallel=True, fastmath=True, cache=True)
def shift_xy(src, i1, w1, i2, w2, out):  # pragma: no cover - jitted
    """out[n, a, b] = src interpolated at (x1_a + alpha1, x2_b + alpha2).

    Separable two-pass cubic shift; ``i1/w1`` index the first space axis,
    ``i2/w2`` the second.
    """
    N, X1, X2 = src.shape
    for n in prange(N):
        tmp = np.empty((X1, X2))
        for a in range(X1):
            s0 = i1[a]
            for b in range(X2):
                tmp[a, b] = (w1[a, 0] * src[n, s0, b]
                             + w1[a, 1] * src[n, s0 + 1, b]
                             + w1[a, 2] * src[n, s0 + 2, b]
                             + w1[a, 3] * src[n, s0 + 3, b])
        for a in range(X1):
            for b in range(X2):
                s0 = i2[b]
                out[n, a, b] = (w2[b, 0] * tmp[a, s0]
                                + w2[b, 1] * tmp[a, s0 + 1]
                                + w2[b, 2] * tmp[a, s0 + 2]
                                + w2[b, 3] * tmp[a, s0 + 3])


@njit(parallel=True, fastmath=True, cache=True)
def build_phi_2d(src, M0, fx, fv, st1, w1, st2, w2, keep, out):  # pragma: no cover
    """Phi[d, n, X] = (shifted src)[n, X] * M0[n, X] * fx[d, X] * fv[d, n].

    src: (N, X1, X2) rotated field; the per-d shift stencils st/w act on
    the two space axes.  Slices with keep[d] False are left untouched
    (consumers skip them).
    """
    nd, N = fv.shape
    X1 = src.shape[1]
    X2 = src.shape[2]
    for n in prange(N):
        tmp = np.empty((X1, X2))
        for d in range(nd):
            if not keep[d]:
                continue
            for a in range(X1):
                s0 = st1[d, a]
                for b in range(X2):
                    tmp[a, b] = (w1[d, a, 0] * src[n, s0, b]
                                 + w1[d, a, 1] * src[n, s0 + 1, b]
                                 + w1[d, a, 2] * src[n, s0 + 2, b]
                                 + w1[d, a, 3] * src[n, s0 + 3, b])
            fvd = fv[d, n]
            for a in range(X1):
                base = a * X2
                for b in range(X2):
                    s0 = st2[d, b]
                    g = (w2[d, b, 0] * tmp[a, s0]
                         + w2[d, b, 1] * tmp[a, s0 + 1]
                         + w2[d, b, 2] * tmp[a, s0 + 2]
                         + w2[d, b, 3] * tmp[a, s0 + 3])
                    X = base + b
                    out[d, n, X] = g * M0[n, X] * fx[d, X] * fvd


@njit(parallel=True, fastmath=True, cache=True)
def gain_contract_2d(PhiF, PhiG, kappa, keep_p, keep_q, out):  # pragma: no cover
    """Rotated-frame gain contraction (D = 2).

    PhiF[d, P, q, X] and PhiG[d, p, Q, X] are the shifted field-times-
    reference products; kappa[dp, dq] carries kernel, angular weight and
    v* quadrature weight.  out[p, q, X] = sum_{P,Q} PhiF[p-P] PhiG[q-Q] kappa.
    """
    nd, Nr, _, NX = PhiF.shape
    nc = (nd - 1) // 2
    for p in prange(Nr):
        for q in range(Nr):
            acc = np.zeros(NX)
            for P in range(Nr):
                di = p - P + nc
                if not keep_p[di]:
                    continue
                for Q in range(Nr):
                    dj = q - Q + nc
                    if not keep_q[dj]:
                        continue
                    kap = kappa[di, dj]
                    if kap == 0.0:
                        continue
                    for X in range(NX):
                        acc[X] += kap * PhiF[di, P, q, X] * PhiG[dj, p, Q, X]
            for X in range(NX):
                out[p, q, X] = acc[X]


@njit(parallel=True, fastmath=True, cache=True)
def gain_contract_3d(PhiF, PhiG, kappa, keep_p, keep_q, out):  # pragma: no cover
    """Rotated-frame gain contraction (D = 3).

    PhiF[d, P, q2, q3, X]; PhiG[d2, d3, p, Q2, Q3, X] with the two
    perpendicular shift indices materialized; kappa[dp, dq2, dq3].
    """
    nd, Nr, _, _, NX = PhiF.shape
    nc = (nd - 1) // 2
    for p in prange(Nr):
        for q2 in range(Nr):
            for q3 in range(Nr):
                acc = np.zeros(NX)
                for P in range(Nr):
                    di = p - P + nc
                    if not keep_p[di]:
                        continue
                    for Q2 in range(Nr):
                        dj2 = q2 - Q2 + nc
                        if not keep_q[dj2]:
                            continue
                        for Q3 in range(Nr):
                            dj3 = q3 - Q3 + nc
                            if not keep_q[dj3]:
                                continue
                            kap = kappa[di, dj2, dj3]
                            if kap == 0.0:
                                continue
                            for X in range(NX):
                                acc[X] += (kap * PhiF[di, P, q2, q3, X]
                                           * PhiG[dj2, dj3, p, Q2, Q3, X])
                for X in range(NX):
                    out[p, q2, q3, X] = acc[X]


@njit(parallel=True, fastmath=True, cache=True)
def gain_contract_2d_noshift(PF, PG, kappa, out):  # pragma: no cover
    """s = 0 contraction: S[p,q,X] = sum_{P,Q} PF[P,q,X] PG[p,Q,X] kap[p-P,q-Q]."""
    Nr, _, NX = PF.shape
    nc = (kappa.shape[0] - 1) // 2
    for p in prange(Nr):
        for q in range(Nr):
            acc = np.zeros(NX)
            for P in range(Nr):
                for Q in range(Nr):
                    kap = kappa[p - P + nc, q - Q + nc]
                    if kap == 0.0:
                        continue
                    for X in range(NX):
                        acc[X] += kap * PF[P, q, X] * PG[p, Q, X]
            for X in range(NX):
                out[p, q, X] = acc[X]


@njit(parallel=True, fastmath=True, cache=True)
def gain_contract_3d_noshift(PF, PG, kappa, out):  # pragma: no cover
    """s = 0 contraction, D = 3; PF/PG have shape (Nr, Nr, Nr, NX)."""
    Nr = PF.shape[0]
    NX = PF.shape[3]
    nc = (kappa.shape[0] - 1) // 2
    for p in prange(Nr):
        for q2 in range(Nr):
            for q3 in range(Nr):
                acc = np.zeros(NX)
                for P in range(Nr):
                    for Q2 in range(Nr):
                        for Q3 in range(Nr):
                            kap = kappa[p - P + nc, q2 - Q2 + nc, q3 - Q3 + nc]
                            if kap == 0.0:
                                continue
                            for X in range(NX):
                                acc[X] += (kap * PF[P, q2, q3, X]
                                           * PG[p, Q2, Q3, X])
                for X in range(NX):
                    out[p, q2, q3, X] = acc[X]


@njit(parallel=True, fastmath=True, cache=True)
def loss_accumulate_2d(H1, M0, fx1, fx2, fv1, fv2, wv1, wv2,
                       st2, w2, keep1, keep2, kappa0, out):  # pragma: no cover
    """Loss-rate accumulation over the velocity difference lattice (D = 2).

    H1[d1, i1, i2, a, b] holds h shifted along the first space axis by
    s * d1 * dv; the second-axis shift (index tables st2/w2 per d2) is
    folded into the gather.  Output: A~(v, x) (loss rate divided by bbar)
    accumulated at v = v* + (d1, d2) with trapezoid weights wv.
    """
    nd = kappa0.shape[0]
    nc = (nd - 1) // 2
    Nv1, Nv2, X1, X2 = M0.shape
    for j1 in prange(Nv1):
        for j2 in range(Nv2):
            acc = np.zeros((X1, X2))
            for d1 in range(nd):
                if not keep1[d1]:
                    continue
                i1 = j1 - (d1 - nc)
                if i1 < 0 or i1 >= Nv1:
                    continue
                for d2 in range(nd):
                    if not keep2[d2]:
                        continue
                    i2 = j2 - (d2 - nc)
                    if i2 < 0 or i2 >= Nv2:
                        continue
                    kap = kappa0[d1, d2]
                    if kap == 0.0:
                        continue
                    coef = (kap * fv1[d1, i1, i2] * fv2[d2, i1, i2]
                            * wv1[i1] * wv2[i2])
                    for a in range(X1):
                        ca = coef * fx1[d1, a]
                        for b in range(X2):
                            s0 = st2[d2, b]
                            g = (w2[d2, b, 0] * H1[d1, i1, i2, a, s0]
                                 + w2[d2, b, 1] * H1[d1, i1, i2, a, s0 + 1]
                                 + w2[d2, b, 2] * H1[d1, i1, i2, a, s0 + 2]
                                 + w2[d2, b, 3] * H1[d1, i1, i2, a, s0 + 3])
                            acc[a, b] += ca * fx2[d2, b] * g * M0[i1, i2, a, b]
            for a in range(X1):
                for b in range(X2):
                    out[j1, j2, a, b] = acc[a, b]
