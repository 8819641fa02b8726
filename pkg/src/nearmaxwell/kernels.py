"""Cutoff collision kernels in separated form b(z, w) = |z|^beta bhat(w.n).

Provides the kernel specification (exponent, angular weight, total angular
weight), the elastic post-collision velocity map, and the loss-rate profile
``a_beta`` (the |.|^beta moment of a centered unit Gaussian), together with
the quadrature helpers shared by the grid collision operators: unit-sphere
node sets and the cell-averaged value of |z|^beta used to regularize the
difference-lattice entry at z = 0 when beta < 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma, hyp1f1

__all__ = [
    "KernelSpec",
    "post_collision",
    "a_beta_zero",
    "a_beta",
    "a_beta_mc",
    "sphere_area",
    "sphere_quadrature",
    "cell_average_abs_power",
    "kernel_to_json",
    "kernel_from_json",
]


def sphere_area(D: int) -> float:
    """Surface measure of the unit sphere S^{D-1}."""
    return 2.0 * np.pi ** (D / 2.0) / gamma(D / 2.0)


def _compute_bbar(bhat, D: int, n_quad: int = 256) -> float:
    """Total angular weight: integral of bhat(w.n) over S^{D-1}.

    Reduced to the polar angle: |S^{D-2}| * int_0^pi bhat(cos h) sin^{D-2}h dh
    (for D = 2 the prefactor is 2 and the sine power vanishes).
    """
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    th = 0.5 * np.pi * (nodes + 1.0)
    w = 0.5 * np.pi * weights
    vals = bhat(np.cos(th)) * np.sin(th) ** (D - 2)
    pref = 2.0 if D == 2 else sphere_area(D - 1)
    return float(pref * np.sum(vals * w))


@dataclass(frozen=True)
class KernelSpec:
    """Separated cutoff kernel: exponent beta and angular weight bhat.

    ``bhat`` is either a positive constant or a tabulated nonnegative
    function of the cosine; ``bbar`` is its total weight over the sphere,
    precomputed at construction.  Range checks on beta are enforced by the
    consumers (solver, bounds, sup-norm diagnostics), each on its own
    admissible interval.
    """

    beta: float
    D: int
    bhat_const: float = 1.0
    bhat_cosines: tuple = ()
    bhat_weights: tuple = ()

    def __post_init__(self):
        if not self.beta > 1.0 - self.D:
            raise ValueError(f"beta must exceed 1 - D = {1 - self.D}")
        if self.beta > 2.0:
            raise ValueError("beta must be <= 2")
        if self.is_constant:
            if not self.bhat_const >= 0:
                raise ValueError("bhat must be nonnegative")
        else:
            w = np.asarray(self.bhat_weights, dtype=float)
            if np.any(w < 0):
                raise ValueError("bhat must be nonnegative")

    @property
    def is_constant(self) -> bool:
        return len(self.bhat_cosines) == 0

    def bhat(self, cos_angle):
        """Angular weight evaluated at cosine(s)."""
        c = np.asarray(cos_angle, dtype=float)
        if self.is_constant:
            return np.full_like(c, self.bhat_const)
        return np.interp(c, np.asarray(self.bhat_cosines),
                         np.asarray(self.bhat_weights))

    @property
    def bbar(self) -> float:
        if self.is_constant:
            return self.bhat_const * sphere_area(self.D)
        return _compute_bbar(self.bhat, self.D)

    @property
    def bhat_mean(self) -> float:
        """Spherical average of bhat; equals bbar / |S^{D-1}|."""
        return self.bbar / sphere_area(self.D)


def post_collision(v, v_star, omega, tol: float = 1e-12):
    """Elastic collision map: exchange of the omega-component of v - v*.

        v'  = v  - ((v - v*) . w) w,      v'* = v* + ((v - v*) . w) w.

    Conserves momentum and kinetic energy identically; applying the map
    twice with the same omega returns the original pair.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    omega = np.asarray(omega, dtype=float)
    norms = np.sqrt(np.sum(omega * omega, axis=-1))
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError("omega must be a unit vector (|1 - |omega|| <= 1e-12)")
    proj = np.sum((v - v_star) * omega, axis=-1)[..., None] * omega
    return v - proj, v_star + proj


def a_beta_zero(beta: float, D: int) -> float:
    """Closed form a_beta(0) = 2^{beta/2} Gamma((D+beta)/2) / Gamma(D/2)."""
    if not beta > -D:
        raise ValueError("beta must exceed -D")
    return 2.0 ** (beta / 2.0) * gamma((D + beta) / 2.0) / gamma(D / 2.0)


def a_beta(w, beta: float, D: int):
    """Convolution of |.|^beta with the unit Gaussian M[1,0,1] at w.

    Radially symmetric; equals the noncentral Gaussian absolute moment

        a_beta(w) = a_beta(0) * 1F1(-beta/2; D/2; -|w|^2/2),

    evaluated through the confluent hypergeometric function.  ``w`` may be
    a vector, an array of vectors, or an array of radii.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim and w.shape[-1] == D:
        r2 = np.sum(w * w, axis=-1)
    else:
        r2 = w * w
    return a_beta_zero(beta, D) * hyp1f1(-beta / 2.0, D / 2.0, -0.5 * r2)


def a_beta_quadrature(r: float, beta: float, D: int) -> float:
    """Independent 1D radial quadrature of the a_beta convolution.

    Uses the reduction to the radial speed s with the exact angular
    average of |w - s sigma|^beta over the sphere; serves as the oracle
    route for the closed forms above.
    """
    r = float(r)

    if D == 2:
        def angular(s):
            # int_0^{2pi} (r^2 + s^2 - 2 r s cos phi)^{beta/2} dphi
            val, _ = quad(
                lambda phi: (r * r + s * s - 2 * r * s * np.cos(phi)) ** (beta / 2.0),
                0.0, np.pi, limit=200)
            return 2.0 * val
    elif D == 3:
        def angular(s):
            if r == 0.0 or s == 0.0:
                return sphere_area(3) * max(r, s) ** beta
            e = beta + 2.0
            return (2.0 * np.pi * ((r + s) ** e - abs(r - s) ** e)
                    / (e * r * s))
    else:
        raise ValueError("quadrature oracle implemented for D in {2, 3}")

    def radial(s):
        return (s ** (D - 1) * np.exp(-0.5 * s * s)
                / (2.0 * np.pi) ** (D / 2.0) * angular(s))

    pts = sorted({r, 1.0, 2.0, 4.0}) if r > 0 else None
    val, _ = quad(radial, 0.0, 14.0, limit=400, points=pts)
    return float(val)


def a_beta_mc(w, beta: float, D: int, n: int = 200_000, seed: int = 0):
    """Monte-Carlo estimate of a_beta(w) with standard error.

    Samples w* ~ N(0, I_D) and averages |w - w*|^beta; used only as a
    statistical oracle in tests and verification reports.
    """
    rng = np.random.default_rng(seed)
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.size == 1 and D > 1:
        w = np.concatenate([w, np.zeros(D - 1)])
    samples = rng.standard_normal((n, D))
    vals = np.sum((samples - w) ** 2, axis=1) ** (beta / 2.0)
    mean = float(np.mean(vals))
    sem = float(np.std(vals, ddof=1) / np.sqrt(n))
    return mean, sem


def sphere_quadrature(D: int, n_omega: int, n_polar: int = 0):
    """Unit-sphere nodes and weights for the angular collision integral.

    D = 2: ``n_omega`` equispaced angles on [0, 2pi) (trapezoid rule,
    spectrally accurate for periodic integrands).  D = 3: Gauss-Legendre
    in the polar cosine (``n_polar`` nodes, default n_omega // 4) times
    equispaced azimuth.  Returns (omegas, weights) with sum(weights) =
    |S^{D-1}|.
    """
    if D == 2:
        phi = 2.0 * np.pi * np.arange(n_omega) / n_omega
        omegas = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        weights = np.full(n_omega, 2.0 * np.pi / n_omega)
        return omegas, weights
    if D == 3:
        n_polar = n_polar or max(2, n_omega // 4)
        n_azim = max(2, n_omega // n_polar)
        mu, wmu = np.polynomial.legendre.leggauss(n_polar)
        phi = 2.0 * np.pi * np.arange(n_azim) / n_azim
        wphi = 2.0 * np.pi / n_azim
        sin_th = np.sqrt(1.0 - mu**2)
        om = np.empty((n_polar, n_azim, 3))
        om[..., 0] = sin_th[:, None] * np.cos(phi)[None, :]
        om[..., 1] = sin_th[:, None] * np.sin(phi)[None, :]
        om[..., 2] = mu[:, None]
        w = (wmu[:, None] * wphi) * np.ones_like(phi)[None, :]
        return om.reshape(-1, 3), w.ravel()
    raise ValueError("sphere quadrature implemented for D in {2, 3}")


def cell_average_abs_power(beta: float, D: int, h: float) -> float:
    """Average of |z|^beta over the grid cell [-h/2, h/2]^D.

    Finite for beta > -D; used for the z = 0 entry of the velocity
    difference lattice.  Computed from the exact reduction to the cell
    boundary: for the unit cell the average equals

        2 D 2^{-(beta+D)} / (beta+D) * int_{[-1,1]^{D-1}} (1+|y|^2)^{beta/2} dy,

    and scales like h^beta.
    """
    if not beta > -D:
        raise ValueError("cell average requires beta > -D")
    if beta == 0.0:
        return 1.0
    nodes, wts = np.polynomial.legendre.leggauss(64)
    if D == 2:
        inner = float(np.sum(wts * (1.0 + nodes**2) ** (beta / 2.0)))
    elif D == 3:
        yy = 1.0 + nodes[:, None] ** 2 + nodes[None, :] ** 2
        inner = float(wts @ (yy ** (beta / 2.0)) @ wts)
    else:
        raise ValueError("cell average implemented for D in {2, 3}")
    unit = 2.0 * D * 2.0 ** (-(beta + D)) / (beta + D) * inner
    return unit * h**beta


def cell_average_abs_power_offset(beta: float, D: int, h: float,
                                  offset) -> float:
    """Average of |z|^beta over the cell centered at offset * h.

    The centered cell reduces to ``cell_average_abs_power``; neighbor
    cells are evaluated by tensor Gauss quadrature (the integrand is
    smooth away from the origin).  Used to regularize the kernel lattice
    over the whole 3^D neighborhood of the |z|^beta kink.
    """
    offset = np.asarray(offset, dtype=int)
    if np.all(offset == 0):
        return cell_average_abs_power(beta, D, h)
    nodes, wts = np.polynomial.legendre.leggauss(24)
    axes = [h * offset[d] + 0.5 * h * nodes for d in range(D)]
    mesh = np.meshgrid(*axes, indexing="ij")
    rr2 = sum(m**2 for m in mesh)
    vals = rr2 ** (beta / 2.0)
    w = wts * 0.5  # scaled to the unit cell measure
    for d in range(D - 1):
        vals = vals @ w
    return float(vals @ w)


def kernel_to_json(k: KernelSpec) -> str:
    """Serialize to {beta, bhat, D, bbar}; bbar is re-checked on load."""
    if k.is_constant:
        bhat = f"constant:{k.bhat_const!r}"
    else:
        bhat = {"cosines": list(k.bhat_cosines), "weights": list(k.bhat_weights)}
    return json.dumps({"beta": k.beta, "bhat": bhat, "D": k.D, "bbar": k.bbar},
                      sort_keys=True)


def kernel_from_json(text) -> KernelSpec:
    obj = json.loads(text) if isinstance(text, (str, bytes)) else dict(text)
    bhat = obj.get("bhat", "constant:1.0")
    if isinstance(bhat, str):
        if not bhat.startswith("constant:"):
            raise ValueError(f"unrecognized bhat spec: {bhat!r}")
        k = KernelSpec(beta=float(obj["beta"]), D=int(obj["D"]),
                       bhat_const=float(bhat.split(":", 1)[1]))
    else:
        k = KernelSpec(beta=float(obj["beta"]), D=int(obj["D"]),
                       bhat_cosines=tuple(bhat["cosines"]),
                       bhat_weights=tuple(bhat["weights"]))
    if "bbar" in obj:
        stored = float(obj["bbar"])
        if abs(stored - k.bbar) > 1e-8 * max(1.0, abs(stored)):
            raise ValueError(
                f"stored bbar {stored} inconsistent with recomputed {k.bbar}")
    return k
