"""Dispersion constants and contraction certificates.

Two constants control the collision influence of a reference Maxwellian:

- ``mu``: the time integral of the sup norm of the loss rate A(M); finite
  for beta <= 0 and used in Gronwall-type stability bounds.
- ``nu``: the sup over phase space of the loss rate integrated along
  free-streaming characteristics; finite for beta in (1 - D, 1] and the
  small-mass condition nu < 1/4 powers every fixed-point argument.

Each constant is provided as a closed-form upper bound (used for all
certificates) and a sampled numerical value (a lower estimate used only
for bound-consistency checks).  The fixed-point radius algebra
eps(nu, r) = (1 - 4 nu (1 + r/2)) r and its inverse live here too, as
does the admissible-mass solver and the time-window truncation bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma
from scipy.stats import qmc

from .kernels import KernelSpec, a_beta, a_beta_zero, sphere_area
from .maxwellian import GlobalMaxwellianParams, hydro_fields, require_valid

__all__ = [
    "BoundsReport",
    "theta_power_time_integral",
    "mu_of_M",
    "nu_of_M",
    "admissible_mass",
    "eps_of_r",
    "r_of_eps",
    "eps_max",
    "positivity_threshold",
    "time_truncation",
    "tail_bound",
    "bounds_report",
]


@dataclass(frozen=True)
class BoundsReport:
    """Certificate bundle for one (Maxwellian, kernel) pair."""

    mu_bound: float
    mu_numeric: float
    mu_onesided: float
    nu_bound: float
    nu_numeric: float
    contraction_ok: bool
    r_max: float
    eps_max: float

    def to_json_obj(self) -> dict:
        return {
            "mu_bound": self.mu_bound,
            "mu_numeric": self.mu_numeric,
            "mu_onesided": self.mu_onesided,
            "nu_bound": self.nu_bound,
            "nu_numeric": self.nu_numeric,
            "contraction_ok": self.contraction_ok,
            "r_max": self.r_max,
            "eps_max": self.eps_max,
        }


def theta_power_time_integral(p: GlobalMaxwellianParams, power: float,
                              t_lo: float = None, t_hi: float = None) -> float:
    """Integral of theta(t)^power over (t_lo, t_hi) (defaults: all of R).

    Closed form over R for power > 1/2:

        sqrt(pi / a) * q0^{1/2 - power} * Gamma(power - 1/2) / Gamma(power),

    with q0 = (a c - b^2)/a.  Finite ranges are evaluated with the
    arctangent substitution t = b/a + sqrt(q0/a) tan(phi), under which the
    integrand becomes a smooth power of cos(phi).
    """
    a, b, c = p.a, p.b, p.c
    q0 = (a * c - b**2) / a
    if t_lo is None and t_hi is None:
        if not power > 0.5:
            raise ValueError("time integral diverges for power <= 1/2")
        return (np.sqrt(np.pi / a) * q0 ** (0.5 - power)
                * gamma(power - 0.5) / gamma(power))
    t_lo = -np.inf if t_lo is None else t_lo
    t_hi = np.inf if t_hi is None else t_hi
    s_map = np.sqrt(q0 / a)
    tc = b / a
    phi_lo = np.arctan((t_lo - tc) / s_map) if np.isfinite(t_lo) else -np.pi / 2
    phi_hi = np.arctan((t_hi - tc) / s_map) if np.isfinite(t_hi) else np.pi / 2
    nodes, wts = np.polynomial.legendre.leggauss(200)
    phi = 0.5 * (phi_hi - phi_lo) * nodes + 0.5 * (phi_hi + phi_lo)
    w = 0.5 * (phi_hi - phi_lo) * wts
    # theta(t(phi)) = cos^2(phi)/q0 and dt = s_map / cos^2(phi) dphi
    integrand = (np.cos(phi) ** 2 / q0) ** power * s_map / np.cos(phi) ** 2
    return float(np.sum(w * integrand))


def _sup_prefactor(p: GlobalMaxwellianParams, k: KernelSpec) -> float:
    """m bbar sqrt(det(Q / 2 pi)) a_beta(0)."""
    return (p.m * k.bbar * np.sqrt(p.det_Q / (2.0 * np.pi) ** p.D)
            * a_beta_zero(k.beta, p.D))


def mu_of_M(p: GlobalMaxwellianParams, k: KernelSpec,
            n_sample: int = 2048, seed: int = 0):
    """Time integral of the sup norm of A(M): (bound, numeric, one_sided).

    bound: m bbar sqrt(det(Q/2pi)) a_beta(0) int_R theta^{(D+beta)/2} dt,
    exact for beta <= 0 because the sup of A(M)(t) is attained at the
    density peak with the relative velocity at zero.  numeric: the same
    time integral of the max of the closed-form A(M) over a sampled (v, x)
    set (a lower estimate).  one_sided: max of the two half-line integrals
    of the bound integrand (the sharper constant usable in the Gronwall
    bound; reported, never used in certificates).
    """
    require_valid(p)
    if not (1 - p.D < k.beta <= 0):
        raise ValueError(
            "mu requires beta in (1 - D, 0]; sup-norm control fails for "
            "hard potentials (use the nu-based bounds instead)")
    power = (p.D + k.beta) / 2.0
    pref = _sup_prefactor(p, k)
    bound = pref * theta_power_time_integral(p, power)
    one_sided = pref * max(theta_power_time_integral(p, power, t_lo=0.0),
                           theta_power_time_integral(p, power, t_hi=0.0))

    # sampled sup of A(M)(t) on a fixed (v, x) cloud, integrated in t
    rng = qmc.Sobol(d=2 * p.D, scramble=True, seed=seed)
    pts = rng.random(n_sample)
    Qinv = np.linalg.inv(p.Q)
    sv = 5.0 * np.sqrt(np.max(np.diag(p.a * Qinv)))
    sx = 5.0 * np.sqrt(np.max(np.diag(p.c * Qinv)))
    v = (2.0 * pts[:, :p.D] - 1.0) * sv + p.v0
    x = (2.0 * pts[:, p.D:] - 1.0) * sx + p.x0
    q0 = (p.a * p.c - p.b**2) / p.a
    s_map = np.sqrt(q0 / p.a)
    tc = p.b / p.a
    nodes, wts = np.polynomial.legendre.leggauss(200)
    phi = 0.5 * np.pi * nodes
    wphi = 0.5 * np.pi * wts
    ts = tc + s_map * np.tan(phi)
    sups = np.array([float(np.max(_loss_rate_closed(p, k, v, x, t)))
                     for t in ts])
    numeric = float(np.sum(wphi * sups * s_map / np.cos(phi) ** 2))
    return bound, numeric, one_sided


def _loss_rate_closed(p, k, v, x, t):
    hf = hydro_fields(p, x, float(t))
    th = hf.theta
    wrel = (v - hf.u) / np.sqrt(th)
    return k.bbar * hf.rho * th ** (k.beta / 2.0) * a_beta(wrel, k.beta, p.D)


def nu_of_M(p: GlobalMaxwellianParams, k: KernelSpec,
            n_sample: int = 4096, seed: int = 0):
    """Characteristic-line constant nu(M): (bound, numeric).

    bound: m bbar / ((2 pi)^{D - 1/2} sqrt(a)) *
           ((2 pi a)^{D/2} + |S^{D-1}| sqrt(det Q) / (beta + D - 1)).
    numeric: max over a low-discrepancy (v, x, t) sample of the time
    integral of A(M)(v, x - t v + s v, s), evaluated by the arctangent
    quadrature; a lower estimate used only for consistency checks.
    """
    require_valid(p)
    if not (1 - p.D < k.beta <= 1):
        raise ValueError("nu requires beta in (1 - D, 1]")
    bound = (p.m * k.bbar / ((2.0 * np.pi) ** (p.D - 0.5) * np.sqrt(p.a))
             * ((2.0 * np.pi * p.a) ** (p.D / 2.0)
                + sphere_area(p.D) * np.sqrt(p.det_Q) / (k.beta + p.D - 1.0)))

    rng = qmc.Sobol(d=2 * p.D + 1, scramble=True, seed=seed)
    pts = rng.random(n_sample)
    Qinv = np.linalg.inv(p.Q)
    sv = 5.0 * np.sqrt(np.max(np.diag(p.a * Qinv)))
    sx = 5.0 * np.sqrt(np.max(np.diag(p.c * Qinv)))
    v = (2.0 * pts[:, :p.D] - 1.0) * sv + p.v0
    x = (2.0 * pts[:, p.D:2 * p.D] - 1.0) * sx + p.x0
    t = np.tan(0.5 * np.pi * (2.0 * pts[:, -1] - 1.0) * 0.98)

    q0 = (p.a * p.c - p.b**2) / p.a
    s_map = np.sqrt(q0 / p.a)
    tc = p.b / p.a
    nodes, wts = np.polynomial.legendre.leggauss(128)
    phi = 0.5 * np.pi * nodes
    wphi = 0.5 * np.pi * wts
    svals = tc + s_map * np.tan(phi)
    jac = s_map / np.cos(phi) ** 2
    acc = np.zeros(n_sample)
    for sv_, wj in zip(svals, wphi * jac):
        y = x + (sv_ - t)[:, None] * v
        acc += wj * _loss_rate_closed(p, k, v, y, sv_)
    numeric = float(np.max(acc))
    return bound, numeric


def admissible_mass(p_unit: GlobalMaxwellianParams, k: KernelSpec,
                    margin: float) -> float:
    """Mass m* such that the scaled Maxwellian has nu bound = margin / 4.

    nu is linear in m, so m* = margin (1/4) / nu_bound(m = 1).  The strict
    smallness nu < 1/4 needed by the solvers requires margin < 1; margin =
    1 marks the admissibility edge itself.
    """
    if not 0.0 < margin <= 1.0:
        raise ValueError("margin must lie in (0, 1]")
    base = p_unit if p_unit.m == 1.0 else p_unit.scaled(1.0 / p_unit.m)
    nb, _ = nu_of_M(base, k, n_sample=2)
    return margin * 0.25 / nb


def eps_of_r(nu: float, r: float) -> float:
    """Data radius consumed by a solution ball of radius r."""
    return (1.0 - 4.0 * nu * (1.0 + 0.5 * r)) * r


def eps_max(nu: float) -> float:
    """Supremum of admissible data radii: (1 - 4 nu)^2 / (8 nu)."""
    if not 0.0 < 4.0 * nu < 1.0:
        raise ValueError("requires 0 < 4 nu < 1")
    return (1.0 - 4.0 * nu) ** 2 / (8.0 * nu)


def r_of_eps(nu: float, eps: float) -> float:
    """Solution-ball radius for data radius eps (smaller root).

        r = (1/(4 nu) - 1) (1 - sqrt(1 - 8 nu eps / (1 - 4 nu)^2)),

    increasing in eps, with r < 1/(4 nu) - 1 and eps_of_r(r_of_eps(e)) = e.
    """
    if not 0.0 < 4.0 * nu < 1.0:
        raise ValueError("requires 0 < 4 nu < 1")
    if eps < 0.0 or eps > eps_max(nu) * (1.0 + 1e-12):
        raise ValueError(
            f"eps = {eps:.6g} outside [0, (1 - 4 nu)^2 / (8 nu) = "
            f"{eps_max(nu):.6g})")
    disc = max(0.0, 1.0 - 8.0 * nu * eps / (1.0 - 4.0 * nu) ** 2)
    return (1.0 / (4.0 * nu) - 1.0) * (1.0 - np.sqrt(disc))


def positivity_threshold(nu: float) -> float:
    """Data radius guaranteeing r <= 1 (hence a nonnegative solution).

    For 0 < 4 nu < 1/2 the threshold is 1 - 6 nu (equal to eps_of_r(nu, 1));
    for 1/2 <= 4 nu < 1 the radius satisfies r <= 1 unconditionally and the
    full admissible range eps_max is returned.
    """
    if not 0.0 < 4.0 * nu < 1.0:
        raise ValueError("requires 0 < 4 nu < 1")
    if 4.0 * nu < 0.5:
        return 1.0 - 6.0 * nu
    return eps_max(nu)


def time_truncation(p: GlobalMaxwellianParams, k: KernelSpec,
                    tol: float) -> float:
    """Window half-width T with the omitted collision tail below tol.

    The tail bound is the sup-norm integrand of mu restricted to |t| > T:
    m bbar sqrt(det(Q/2pi)) a_beta(0) int_{|t|>T} theta^{(D+beta)/2} dt,
    decaying like T^{1 - (D + beta)}.  For hard potentials (beta > 0) the
    same Gaussian-envelope integrand is used as the truncation recipe.
    """
    require_valid(p)
    if not p.D + k.beta > 1:
        raise ValueError("tail integrability requires D + beta > 1")
    if tol == np.inf:
        return 0.0
    pref = _sup_prefactor(p, k)
    if tol <= 0:
        raise ValueError("tol must be positive")
    total = pref * theta_power_time_integral(p, (p.D + k.beta) / 2.0)
    if tol >= total:
        return 0.0

    def tail(T):
        return tail_bound(p, k, T)

    lo, hi = 0.0, 4.0
    while tail(hi) > tol:
        hi *= 4.0
        if hi > 1e15:
            raise ValueError("tol too small for float range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if tail(mid) > tol:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * max(1.0, hi):
            break
    return hi


def tail_bound(p: GlobalMaxwellianParams, k: KernelSpec, T: float) -> float:
    """Sup-norm bound on the collision influence outside [-T, T]."""
    pref = _sup_prefactor(p, k)
    power = (p.D + k.beta) / 2.0
    return pref * (theta_power_time_integral(p, power, t_hi=-T)
                   + theta_power_time_integral(p, power, t_lo=T))


def bounds_report(p: GlobalMaxwellianParams, k: KernelSpec,
                  n_sample: int = 4096, seed: int = 0) -> BoundsReport:
    """Assemble the full certificate bundle for (p, k)."""
    nb, nn = nu_of_M(p, k, n_sample=n_sample, seed=seed)
    if k.beta <= 0:
        mb, mn, mo = mu_of_M(p, k, n_sample=max(2, n_sample // 2), seed=seed)
    else:
        mb = mn = mo = float("nan")
    ok = nb < 0.25
    return BoundsReport(
        mu_bound=mb, mu_numeric=mn, mu_onesided=mo,
        nu_bound=nb, nu_numeric=nn,
        contraction_ok=bool(ok),
        r_max=(1.0 / (4.0 * nb) - 1.0) if ok else float("nan"),
        eps_max=eps_max(nb) if ok else float("nan"),
    )
