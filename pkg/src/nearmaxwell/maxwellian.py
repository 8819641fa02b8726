"""Finite-mass global Maxwellian family: evaluation, validation, moments.

A global Maxwellian is a phase-space Gaussian that is annihilated both by
free transport and by the collision integral.  The finite-mass family is
parameterized by a mass scale ``m``, centers ``x0, v0``, three scalars
``a, b, c`` and a skew-symmetric matrix ``B``, subject to ``a, c > 0`` and
positive definiteness of ``Q = (a c - b^2) I + B^2``.

The phase-space exponent used throughout is the block quadratic form

    q(v, x, t) = 1/2 * (w, z)^T [[c I, b I - B], [b I + B, a I]] (w, z)
               = 1/2 * (c|w|^2 + a|z|^2 + 2 b z.w - 2 w.Bz),

with ``w = v - v0`` and ``z = x - x0 - t v``.  With the ``sqrt(det Q)``
normalization this form integrates to exactly ``m`` over phase space
(``det`` of the block matrix equals ``det Q``), reproduces the stated
density profile, and keeps all derived constants consistent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GlobalMaxwellianParams",
    "HydroFields",
    "ValidationReport",
    "validate_params",
    "theta_of_t",
    "eval_maxwellian",
    "hydro_fields",
    "maxwellian_vxt",
    "total_mass",
    "invariant_moments",
    "moment_labels",
    "h_of_maxwellian",
    "params_to_json",
    "params_from_json",
]

#: smallest admissible eigenvalue of Q; near-singular families are rejected
#: to keep quadrature well conditioned.
Q_EIG_TOL = 1e-12


def _as_matrix(B, D: int) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.shape != (D, D):
        raise ValueError(f"B must be {D}x{D}, got {B.shape}")
    return B


@dataclass(frozen=True)
class GlobalMaxwellianParams:
    """Parameter tuple (m, x0, v0, a, b, c, B) with derived matrix Q.

    ``Q = (a c - b^2) I + B^2`` is computed at construction and cached;
    it must be symmetric positive definite for the family member to have
    finite mass.
    """

    m: float
    a: float
    b: float
    c: float
    B: np.ndarray
    x0: np.ndarray
    v0: np.ndarray
    Q: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        v0 = np.atleast_1d(np.asarray(self.v0, dtype=float))
        if x0.shape != v0.shape:
            raise ValueError("x0 and v0 must have the same length")
        D = x0.size
        B = _as_matrix(self.B, D)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "B", B)
        Q = (self.a * self.c - self.b**2) * np.eye(D) + B @ B
        object.__setattr__(self, "Q", Q)

    @property
    def D(self) -> int:
        return self.x0.size

    @property
    def det_Q(self) -> float:
        return float(np.linalg.det(self.Q))

    def scaled(self, factor: float) -> "GlobalMaxwellianParams":
        """Same family member with mass multiplied by ``factor``."""
        return GlobalMaxwellianParams(
            m=self.m * factor, a=self.a, b=self.b, c=self.c,
            B=self.B.copy(), x0=self.x0.copy(), v0=self.v0.copy())


@dataclass(frozen=True)
class HydroFields:
    """Local hydrodynamic fields (rho, u, theta) at one (x, t)."""

    rho: np.ndarray
    u: np.ndarray
    theta: float


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of membership test for the finite-mass family."""

    ok: bool
    failures: tuple
    q_min_eig: float
    ac_minus_b2: float

    def __bool__(self) -> bool:
        return self.ok


def validate_params(p: GlobalMaxwellianParams) -> ValidationReport:
    """Check membership in the admissible parameter set.

    Accepts iff all entries are finite, ``a > 0``, ``c > 0``, ``B`` is
    exactly skew-symmetric and ``Q`` is symmetric positive definite (all
    eigenvalues above ``Q_EIG_TOL``).  ``a c - b^2 > 0`` is verified as
    well; for skew ``B`` the spectrum of ``B^2`` is nonpositive, so
    ``Q > 0`` already forces it, and a separate failure entry is emitted
    if the two checks ever disagree.
    """
    failures = []
    entries = np.concatenate(
        [[p.m, p.a, p.b, p.c], p.B.ravel(), p.x0, p.v0])
    if not np.all(np.isfinite(entries)):
        return ValidationReport(False, ("non-finite entries",), np.nan, np.nan)
    if not p.m > 0:
        failures.append("m <= 0")
    if not p.a > 0:
        failures.append("a <= 0")
    if not p.c > 0:
        failures.append("c <= 0")
    if not np.array_equal(p.B + p.B.T, np.zeros_like(p.B)):
        failures.append("B not skew-symmetric")

    ac_b2 = p.a * p.c - p.b**2
    Q = p.Q
    sym_err = float(np.max(np.abs(Q - Q.T)))
    if sym_err > 0.0:
        failures.append("Q not symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    q_min = float(eigs[0])
    if not q_min > Q_EIG_TOL:
        failures.append("Q not positive definite")
    Q_re = ac_b2 * np.eye(p.D) + p.B @ p.B
    if np.max(np.abs(Q_re - Q)) > 1e-14 * max(1.0, float(np.max(np.abs(Q)))):
        failures.append("stored Q inconsistent with (a,b,c,B)")
    if q_min > Q_EIG_TOL and not ac_b2 > 0:
        # unreachable for real skew B; kept as an explicit guard
        failures.append("Q > 0 but a*c - b^2 <= 0")
    return ValidationReport(not failures, tuple(failures), q_min, float(ac_b2))


def require_valid(p: GlobalMaxwellianParams) -> None:
    rep = validate_params(p)
    if not rep.ok:
        raise ValueError(
            f"invalid global-Maxwellian parameters: {', '.join(rep.failures)} "
            f"(min eig Q = {rep.q_min_eig:.3e})")


def theta_of_t(p: GlobalMaxwellianParams, t):
    """Temperature profile 1/(a t^2 - 2 b t + c); positive for all real t."""
    t = np.asarray(t, dtype=float)
    return 1.0 / (p.a * t**2 - 2.0 * p.b * t + p.c)


def _norm_const(p: GlobalMaxwellianParams) -> float:
    return p.m / (2.0 * np.pi) ** p.D * np.sqrt(p.det_Q)


def quadratic_form(p: GlobalMaxwellianParams, v, x, t):
    """Exponent q evaluated with centers applied by argument translation.

    ``v`` and ``x`` broadcast against each other along leading axes; the
    final axis is the space dimension.
    """
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    w = v - p.v0
    z = x - p.x0 - t * v
    Bz = z @ p.B.T  # (B z)_i = B_ij z_j -> row-vector convention
    return 0.5 * (
        p.c * np.sum(w * w, axis=-1)
        + p.a * np.sum(z * z, axis=-1)
        + 2.0 * p.b * np.sum(z * w, axis=-1)
        - 2.0 * np.sum(w * Bz, axis=-1)
    )


def eval_maxwellian(p: GlobalMaxwellianParams, v, x, t):
    """Pointwise density of the global Maxwellian at (v, x, t)."""
    return _norm_const(p) * np.exp(-quadratic_form(p, v, x, t))


def log_eval_maxwellian(p: GlobalMaxwellianParams, v, x, t):
    """log M(v, x, t); finite even where the density underflows."""
    return np.log(_norm_const(p)) - quadratic_form(p, v, x, t)


def hydro_fields(p: GlobalMaxwellianParams, x, t) -> HydroFields:
    """Local Maxwellian representation M(v,x,t) = M[rho, u, theta](v).

    Obtained by completing the square of the exponent in v:

        rho(x,t)  = m theta^{D/2} sqrt(det(Q/2pi)) exp(-theta xt^T Q xt / 2),
        u(x,t)    = v0 + theta(t) ((a t - b) xt + B xt),
        theta(t)  = 1/(a t^2 - 2 b t + c),

    with ``xt = x - x0 - t v0``.  The cross-evaluation identity
    ``M(v,x,t) == M[rho,u,theta](v)`` is exact and is the authoritative
    definition of u; see the module tests.
    """
    x = np.asarray(x, dtype=float)
    th = float(theta_of_t(p, t))
    xt = x - p.x0 - float(t) * p.v0
    Qxt = xt @ p.Q.T
    rho = (p.m * th ** (p.D / 2.0)
           * np.sqrt(p.det_Q / (2.0 * np.pi) ** p.D)
           * np.exp(-0.5 * th * np.sum(xt * Qxt, axis=-1)))
    u = p.v0 + th * ((p.a * float(t) - p.b) * xt + xt @ p.B.T)
    return HydroFields(rho=rho, u=u, theta=th)


def maxwellian_vxt(rho, u, theta, v):
    """Local Maxwellian M[rho,u,theta](v) (velocity Gaussian)."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    D = v.shape[-1]
    dv = v - u
    return (rho / (2.0 * np.pi * theta) ** (D / 2.0)
            * np.exp(-np.sum(dv * dv, axis=-1) / (2.0 * theta)))


def total_mass(p: GlobalMaxwellianParams) -> float:
    """Total phase-space mass; equals m exactly for the block form."""
    require_valid(p)
    return p.m


def moment_labels(D: int) -> list:
    """Component labels of the conserved-moment vector, in order."""
    labels = ["mass"]
    labels += [f"momentum_{i}" for i in range(D)]
    labels += ["energy"]
    labels += [f"xmoment_{i}" for i in range(D)]
    labels += ["xsquared_half", "x_dot_v"]
    labels += [f"x_wedge_v_{i}{j}" for i in range(D) for j in range(i + 1, D)]
    return labels


def wedge_index_pairs(D: int) -> list:
    return [(i, j) for i in range(D) for j in range(i + 1, D)]


def invariant_moments(p: GlobalMaxwellianParams) -> np.ndarray:
    """Closed-form conserved-moment vector of the global Maxwellian.

    Components (t-independent; evaluated from the t = 0 Gaussian):
    mass, momentum (D), energy |v|^2/2, position moment (D), |x|^2/2
    moment, x.v moment, and the D(D-1)/2 independent wedge entries
    x_i v_j - x_j v_i.

    The t = 0 distribution is Gaussian in (w, z) = (v - v0, x - x0) with
    precision matrix [[cI, bI - B], [bI + B, aI]]; the covariance blocks
    are a Q^{-1} (vv), c Q^{-1} (xx) and -(b I + B) Q^{-1} (xv).
    """
    require_valid(p)
    D = p.D
    Qinv = np.linalg.inv(p.Q)
    trQinv = float(np.trace(Qinv))
    cov_xv = -(p.b * np.eye(D) + p.B) @ Qinv

    out = [p.m]
    out += list(p.m * p.v0)
    out += [0.5 * p.m * (float(p.v0 @ p.v0) + p.a * trQinv)]
    out += list(p.m * p.x0)
    out += [0.5 * p.m * (float(p.x0 @ p.x0) + p.c * trQinv)]
    out += [p.m * (float(p.x0 @ p.v0) - p.b * trQinv)]
    wedge = np.outer(p.x0, p.v0) - np.outer(p.v0, p.x0) - 2.0 * p.B @ Qinv
    for i, j in wedge_index_pairs(D):
        out.append(p.m * wedge[i, j])
    return np.array(out)


def h_of_maxwellian(p: GlobalMaxwellianParams) -> float:
    """Closed-form H value: integral of M log M over phase space.

    For a Gaussian with peak value K = m sqrt(det Q)/(2 pi)^D and total
    mass m, the quadratic form averages to D per unit mass, giving
    ``m (log K - D) = m (log(m sqrt(det Q)/(2 pi)^D) - D)``.
    """
    require_valid(p)
    K = _norm_const(p)
    return p.m * (np.log(K) - p.D)


def params_to_json(p: GlobalMaxwellianParams) -> str:
    """Serialize parameters to the documented JSON object."""
    obj = {
        "m": p.m, "a": p.a, "b": p.b, "c": p.c,
        "B": p.B.tolist(), "x0": p.x0.tolist(), "v0": p.v0.tolist(),
        "D": p.D,
    }
    return json.dumps(obj, sort_keys=True)


def params_from_json(text, validate: bool = True) -> GlobalMaxwellianParams:
    """Load parameters from JSON (dict or string); re-validated by default."""
    obj = json.loads(text) if isinstance(text, (str, bytes)) else dict(text)
    D = int(obj["D"])
    p = GlobalMaxwellianParams(
        m=float(obj["m"]), a=float(obj["a"]), b=float(obj["b"]),
        c=float(obj["c"]), B=np.asarray(obj["B"], dtype=float),
        x0=np.asarray(obj.get("x0", np.zeros(D)), dtype=float),
        v0=np.asarray(obj.get("v0", np.zeros(D)), dtype=float))
    if p.D != D:
        raise ValueError("D field inconsistent with x0/v0 length")
    if validate:
        require_valid(p)
    return p
