"""Asymptotic states, wave operators and the scattering operator.

In the comoving frame the solution f(t) = e^{tA} F(t) converges to plain
limits F^{+inf} and F^{-inf} as t -> +/- inf; the trajectory endpoints of a
certified window [-T, T] approximate them with the analytic tail bound
from ``bounds`` as an error bar.

The forward map T^{+/-} sends Cauchy data to the asymptote; its right
inverse is the fixed point of  f = F^{+inf} - int_t^T r(f)  (resp.
f = F^{-inf} + int_{-T}^t r(f)), a contraction with the same rate
4 nu (1 + r) as the Cauchy map.  The scattering operator S chains the
backward inverse with forward extraction: S F^{-inf} = F^{+inf}; it fixes
the reference Maxwellian, conserves the seven t = 0 invariants, and
decreases the H functional.
"""

from __future__ import annotations

import numpy as np

from .bounds import eps_max, tail_bound
from .grids import (
    DistributionField,
    Trajectory,
    h_functional,
    moments,
    weighted_sup_norm,
)
from .kernels import KernelSpec
from .maxwellian import (
    GlobalMaxwellianParams,
    invariant_moments,
    moment_labels,
    validate_params,
)
from .solver import (
    SolverConfig,
    build_time_mesh,
    certified_nu,
    picard_solve,
    solve_cauchy,
)

__all__ = [
    "extract_asymptote",
    "wave_forward",
    "wave_inverse",
    "scatter",
    "scatter_inverse",
    "check_scatter_conservation",
    "check_H_decrease",
    "fit_global_maxwellian",
    "injectivity_bound",
    "lipschitz_report",
]


def extract_asymptote(traj: Trajectory, direction: int,
                      k: KernelSpec = None):
    """Comoving endpoint of the trajectory plus the analytic tail bound.

    direction +1 returns the forward asymptote (last node), -1 the
    backward one (first node).  The error bar bounds the omitted
    |t| > T collision influence by 2 (1 + sup_dev)^2 times the
    sup-norm tail integral.
    """
    if direction not in (+1, -1):
        raise ValueError("direction must be +1 or -1")
    f_end = traj.fields[-1 if direction > 0 else 0]
    out = DistributionField(grid=traj.grid, t=0.0, frame="comoving",
                            h=f_end.h.copy(), ref=traj.ref)
    bar = float("nan")
    if k is not None:
        sup_dev = float(np.max(np.abs(f_end.h - 1.0)))
        T = float(traj.times[-1])
        bar = 2.0 * (1.0 + sup_dev) ** 2 * tail_bound(traj.ref, k, T)
    return out, bar


def wave_forward(f_in: DistributionField, direction: int, k: KernelSpec,
                 cfg: SolverConfig = None):
    """T^{+/-}: solve the Cauchy problem and extract the asymptote."""
    cfg = cfg or SolverConfig()
    traj = solve_cauchy(f_in, k, cfg)
    f_inf, bar = extract_asymptote(traj, direction, k)
    return f_inf, traj, bar


def _require_in_ball(f: DistributionField, nb: float, what: str) -> float:
    eps = float(np.max(np.abs(f.h - 1.0)))
    emax = eps_max(nb)
    if not eps < emax:
        raise ValueError(
            f"{what} deviation {eps:.4g} outside the admissible ball "
            f"(< {emax:.4g} required at nu = {nb:.4g})")
    return eps


def wave_inverse(f_inf: DistributionField, direction: int, k: KernelSpec,
                 cfg: SolverConfig = None):
    """Right inverse of the wave map: data whose asymptote is f_inf.

    Fixed point of f = F^{+inf} - int_t^T r(f) (direction +1) or
    f = F^{-inf} + int_{-T}^t r(f) (direction -1).  Returns
    (f_in at t = 0, trajectory, info).
    """
    if direction not in (+1, -1):
        raise ValueError("direction must be +1 or -1")
    cfg = cfg or SolverConfig()
    p = f_inf.ref
    nb = certified_nu(p, k, cfg)
    if not nb < 0.25:
        raise ValueError(f"certified nu bound {nb:.4f} >= 1/4")
    _require_in_ball(f_inf, nb, "asymptote")
    mesh = build_time_mesh(p, k, cfg)
    mode = "wave+" if direction > 0 else "wave-"
    H, info = picard_solve(f_inf.h, mode, f_inf.grid, p, k, cfg, mesh)
    cfg.record.update(info, nu_bar=nb, T=mesh.T)
    j0 = int(np.argmin(np.abs(mesh.times)))
    w = mesh.interp_weights(0.0)
    h0 = np.einsum("l,lvx->vx", w, H, optimize=False) \
        if abs(mesh.times[j0]) > 0 else H[j0]
    f_in = DistributionField(grid=f_inf.grid, t=0.0, frame="comoving",
                             h=h0, ref=p)
    fields = tuple(DistributionField(grid=f_inf.grid, t=float(t),
                                     frame="comoving", h=H[j], ref=p)
                   for j, t in enumerate(mesh.times))
    traj = Trajectory(times=mesh.times.copy(), fields=fields)
    return f_in, traj, info


def scatter(f_minus: DistributionField, k: KernelSpec,
            cfg: SolverConfig = None):
    """S: backward asymptote to forward asymptote.

    Builds the eternal solution whose t -> -inf comoving limit is
    f_minus (the wave- fixed point) and extracts the forward endpoint.
    Returns (f_plus, trajectory, tail_bar).
    """
    cfg = cfg or SolverConfig()
    _, traj, _ = wave_inverse(f_minus, -1, k, cfg)
    f_plus, bar = extract_asymptote(traj, +1, k)
    return f_plus, traj, bar


def scatter_inverse(f_plus: DistributionField, k: KernelSpec,
                    cfg: SolverConfig = None):
    """Right inverse of S via the forward wave fixed point."""
    cfg = cfg or SolverConfig()
    _, traj, _ = wave_inverse(f_plus, +1, k, cfg)
    f_minus, bar = extract_asymptote(traj, -1, k)
    return f_minus, traj, bar


def check_scatter_conservation(f_minus: DistributionField,
                               f_plus: DistributionField) -> dict:
    """Componentwise residuals of the seven t = 0 invariants under S."""
    if f_minus.grid != f_plus.grid:
        raise ValueError("fields must share a grid")
    m_minus = moments(f_minus)
    m_plus = moments(f_plus)
    resid = m_plus - m_minus
    scale = np.maximum(np.abs(m_minus), abs(m_minus[0]))
    return {
        "labels": moment_labels(f_minus.grid.D),
        "moments_minus": m_minus,
        "moments_plus": m_plus,
        "residual": resid,
        "residual_rel": resid / scale,
        "max_rel": float(np.max(np.abs(resid / scale))),
    }


def check_H_decrease(f_minus: DistributionField, f_plus: DistributionField,
                     slack: float = 1e-6) -> dict:
    """H values across scattering; H[F^{-inf}] >= H[S F^{-inf}] - slack.

    Near-equality (within slack) flags a Maxwellian-like state: equality
    holds iff the backward asymptote is the t = 0 slice of some global
    Maxwellian.
    """
    if np.any(f_minus.h < 0) or np.any(f_plus.h < 0):
        raise ValueError("H comparison requires nonnegative states")
    h_minus = h_functional(f_minus)
    h_plus = h_functional(f_plus)
    return {
        "H_minus": h_minus,
        "H_plus": h_plus,
        "decrease": h_minus - h_plus,
        "ok": bool(h_plus <= h_minus + slack),
        "maxwellian_like": bool(abs(h_minus - h_plus) <= slack),
    }


# ---------------------------------------------------------------------------
# moment-matched global Maxwellian (Newton fit)


def _pack_params(p: GlobalMaxwellianParams) -> np.ndarray:
    D = p.D
    upper = [p.B[i, j] for i in range(D) for j in range(i + 1, D)]
    return np.concatenate([[p.m], p.v0, p.x0, [p.a, p.b, p.c], upper])


def _unpack_params(theta: np.ndarray, D: int) -> GlobalMaxwellianParams:
    m = theta[0]
    v0 = theta[1:1 + D]
    x0 = theta[1 + D:1 + 2 * D]
    a, b, c = theta[1 + 2 * D:4 + 2 * D]
    B = np.zeros((D, D))
    idx = 4 + 2 * D
    for i in range(D):
        for j in range(i + 1, D):
            B[i, j] = theta[idx]
            B[j, i] = -theta[idx]
            idx += 1
    return GlobalMaxwellianParams(m=m, a=a, b=b, c=c, B=B, x0=x0, v0=v0)


def _model_moments(theta: np.ndarray, D: int) -> np.ndarray:
    p = _unpack_params(theta, D)
    if not (p.m > 0 and p.a > 0 and p.c > 0):
        return None
    if np.linalg.eigvalsh(p.Q)[0] <= 1e-12:
        return None
    return invariant_moments(p)


def fit_global_maxwellian(target: np.ndarray, D: int,
                          tol: float = 1e-10, max_iters: int = 80) -> dict:
    """Newton fit of the global Maxwellian matching a moment vector.

    The parameter count equals the invariant count (9 at D = 2, 13 at
    D = 3).  Initial guess from Gaussian moment closure with b = B = 0;
    steps are damped by halving until the residual decreases; convergence
    at max |model - target| <= tol * max(1, |target|).

    Returns {"params", "residual", "residual_norm", "iterations"}.
    """
    target = np.asarray(target, dtype=float)
    n_expect = 2 * D + 4 + D * (D - 1) // 2
    if target.size != n_expect:
        raise ValueError(f"expected {n_expect} moments for D = {D}")
    m = target[0]
    if not m > 0:
        raise ValueError("unrealizable moments: mass must be positive")
    v0 = target[1:1 + D] / m
    energy = target[1 + D]
    x0 = target[2 + D:2 + 2 * D] / m
    x2 = target[2 + 2 * D]
    Ev = 2.0 * energy / m - float(v0 @ v0)
    Ex = 2.0 * x2 / m - float(x0 @ x0)
    if Ev <= 0 or Ex <= 0:
        raise ValueError("unrealizable moments: nonpositive central spread")
    theta = np.concatenate([[m], v0, x0, [D / Ex, 0.0, D / Ev],
                            np.zeros(D * (D - 1) // 2)])
    scale = max(1.0, float(np.max(np.abs(target))))

    def resid(th):
        mm = _model_moments(th, D)
        if mm is None:
            return None
        return mm - target

    r = resid(theta)
    if r is None:
        raise ValueError("unrealizable moments: invalid closure guess")
    for it in range(max_iters):
        rnorm = float(np.max(np.abs(r)))
        if rnorm <= tol * scale:
            return {"params": _unpack_params(theta, D), "residual": r,
                    "residual_norm": rnorm / scale, "iterations": it}
        n = theta.size
        J = np.empty((n, n))
        for j in range(n):
            h = 1e-6 * max(1.0, abs(theta[j]))
            tp, tm_ = theta.copy(), theta.copy()
            tp[j] += h
            tm_[j] -= h
            rp, rm = resid(tp), resid(tm_)
            if rp is None or rm is None:
                h = 1e-8 * max(1.0, abs(theta[j]))
                tp, tm_ = theta.copy(), theta.copy()
                tp[j] += h
                tm_[j] -= h
                rp, rm = resid(tp), resid(tm_)
                if rp is None or rm is None:
                    raise ValueError("Newton fit left the valid domain "
                                     f"(residual {rnorm / scale:.3e})")
            J[:, j] = (rp - rm) / (2.0 * h)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise ValueError(
                f"Newton fit: singular Jacobian (residual {rnorm/scale:.3e})")
        lam = 1.0
        for _ in range(40):
            cand = theta + lam * step
            rc = resid(cand)
            if rc is not None and np.max(np.abs(rc)) < rnorm:
                theta, r = cand, rc
                break
            lam *= 0.5
        else:
            raise ValueError(
                f"Newton fit stalled (residual {rnorm / scale:.3e})")
    raise ValueError(
        f"Newton fit did not converge in {max_iters} iterations "
        f"(residual {float(np.max(np.abs(r))) / scale:.3e})")


def fit_from_field(f: DistributionField, tol: float = 1e-10) -> dict:
    """Fit the moment-matched global Maxwellian to a field's moments."""
    out = fit_global_maxwellian(moments(f), f.grid.D, tol=tol)
    rep = validate_params(out["params"])
    if not rep.ok:
        raise ValueError(f"fit produced invalid parameters: {rep.failures}")
    return out


# ---------------------------------------------------------------------------
# inequality reports


def injectivity_bound(traj1: Trajectory, traj2: Trajectory,
                      f1_inf: DistributionField, f2_inf: DistributionField,
                      mu_bar: float, beta: float, tol: float = 1e-6) -> dict:
    """Node-wise check of |F1(t) - F2(t)| <= |dF^inf| e^{4 mu}.

    Soft potentials only (beta <= 0); equal asymptotes force coinciding
    trajectories within tolerance.
    """
    if beta > 0:
        raise ValueError("injectivity bound requires beta <= 0 "
                         "(open for hard potentials)")
    d_inf = weighted_sup_norm(f1_inf, f2_inf)
    bound = d_inf * float(np.exp(4.0 * mu_bar))
    dists = np.array([weighted_sup_norm(a, b)
                      for a, b in zip(traj1.fields, traj2.fields)])
    ok = bool(np.all(dists <= bound + tol))
    return {"node_distances": dists, "bound": bound, "d_inf": float(d_inf),
            "ok": ok, "worst": float(np.max(dists))}


def lipschitz_report(d_in: float, d_out: float, nu_bar: float, eps: float,
                     tol: float = 1e-6) -> dict:
    """Check d_out <= d_in / sqrt((1 - 4 nu)^2 - 8 nu eps) + tol."""
    denom2 = (1.0 - 4.0 * nu_bar) ** 2 - 8.0 * nu_bar * eps
    if denom2 <= 0:
        raise ValueError("eps too large for the Lipschitz constant")
    bound = d_in / np.sqrt(denom2)
    return {"d_in": float(d_in), "d_out": float(d_out),
            "bound": float(bound), "ok": bool(d_out <= bound + tol)}
