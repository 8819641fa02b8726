"""Phase-space discretization and the relative-density field representation.

Fields are stored as the ratio h = F / M_ref sampled on a uniform tensor
grid in (v, x).  The reference global Maxwellian streams exactly, so h is
the natural state variable: weighted sup norms are plain sup differences
of h, the reference solution is exactly representable (h = 1), and h stays
bounded for states inside the contraction ball.

Frames: a ``lab`` field at time t stores F(v, x, t) / M_ref(v, x, t); a
``comoving`` field stores (e^{tA} F)(v, x) / M_ref(v, x, 0), which equals
the lab h evaluated at the shifted position x + t v.  Free streaming and
frame changes are therefore pure per-velocity shifts in x, applied as
separable cubic interpolation along each space axis.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .maxwellian import (
    GlobalMaxwellianParams,
    eval_maxwellian,
    moment_labels,
    params_from_json,
    params_to_json,
    require_valid,
    wedge_index_pairs,
)

__all__ = [
    "PhaseGrid",
    "DistributionField",
    "Trajectory",
    "suggest_grid",
    "reference_field",
    "free_stream",
    "to_comoving",
    "to_lab",
    "weighted_sup_norm",
    "moments",
    "h_functional",
    "save_field",
    "load_field",
]

GRID_TAIL_TOL = 1e-6


def lagrange_stencil(coords, axis_min: float, dx: float, n: int):
    """Cubic-interpolation stencil for scattered 1D coordinates.

    Coordinates are clamped to the grid range (constant extension beyond
    the box), the 4-point stencil is shifted inward near the edges
    (one-sided cubic), and the returned weights are the Lagrange weights
    on the shifted stencil.  Returns (start_index, weights[..., 4]).
    """
    xi = (np.asarray(coords, dtype=float) - axis_min) / dx
    xi = np.clip(xi, 0.0, n - 1.0)
    if n < 4:
        # degenerate small grids: linear interpolation
        i0 = np.clip(np.floor(xi).astype(np.int64), 0, n - 2)
        s = xi - i0
        w = np.zeros(xi.shape + (4,))
        w[..., 0] = 1.0 - s
        w[..., 1] = s
        return i0, w
    start = np.clip(np.floor(xi).astype(np.int64) - 1, 0, n - 4)
    s = xi - start
    w = np.empty(xi.shape + (4,))
    w[..., 0] = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0
    w[..., 1] = s * (s - 2.0) * (s - 3.0) / 2.0
    w[..., 2] = -s * (s - 1.0) * (s - 3.0) / 2.0
    w[..., 3] = s * (s - 1.0) * (s - 2.0) / 6.0
    return start, w


def shift_matrix_1d(n: int, dx: float, shift: float) -> np.ndarray:
    """Dense matrix S with (S f)(x_i) = f(x_i + shift) under cubic interp."""
    start, w = lagrange_stencil(np.arange(n) * dx + shift, 0.0, dx, n)
    S = np.zeros((n, n))
    for k in range(4):
        S[np.arange(n), np.minimum(start + k, n - 1)] += w[:, k]
    return S


def _axis_weights(npts: int, h: float) -> np.ndarray:
    w = np.full(npts, h)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform tensor grid on [-Vmax, Vmax]^D x [-Xmax, Xmax]^D."""

    D: int
    Nv: int
    Vmax: float
    Nx: int
    Xmax: float

    def __post_init__(self):
        if self.Nv < 4 or self.Nx < 4:
            raise ValueError("Nv and Nx must be at least 4")
        if not (self.Vmax > 0 and self.Xmax > 0):
            raise ValueError("Vmax and Xmax must be positive")

    @property
    def dv(self) -> float:
        return 2.0 * self.Vmax / (self.Nv - 1)

    @property
    def dx(self) -> float:
        return 2.0 * self.Xmax / (self.Nx - 1)

    @property
    def v_axis(self) -> np.ndarray:
        return np.linspace(-self.Vmax, self.Vmax, self.Nv)

    @property
    def x_axis(self) -> np.ndarray:
        return np.linspace(-self.Xmax, self.Xmax, self.Nx)

    @property
    def shape(self) -> tuple:
        return (self.Nv,) * self.D + (self.Nx,) * self.D

    @property
    def n_vnodes(self) -> int:
        return self.Nv**self.D

    @property
    def n_xnodes(self) -> int:
        return self.Nx**self.D

    def v_nodes(self) -> np.ndarray:
        """All velocity nodes, shape (Nv^D, D), C order."""
        axes = np.meshgrid(*([self.v_axis] * self.D), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def x_nodes(self) -> np.ndarray:
        axes = np.meshgrid(*([self.x_axis] * self.D), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def v_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights over velocity nodes (flat)."""
        w = _axis_weights(self.Nv, self.dv)
        out = w
        for _ in range(self.D - 1):
            out = np.multiply.outer(out, w)
        return out.ravel()

    def x_weights(self) -> np.ndarray:
        w = _axis_weights(self.Nx, self.dx)
        out = w
        for _ in range(self.D - 1):
            out = np.multiply.outer(out, w)
        return out.ravel()

    def to_json_obj(self) -> dict:
        return {"D": self.D, "Nv": self.Nv, "Vmax": self.Vmax,
                "Nx": self.Nx, "Xmax": self.Xmax}

    def check_tail(self, ref: GlobalMaxwellianParams, tol: float = GRID_TAIL_TOL):
        """Verify the reference mass outside the box is below tol * m.

        The inside mass is measured by trapezoid quadrature at t = 0 (the
        frame in which comoving fields are stored).
        """
        inside = float(np.sum(self.v_weights()[:, None] * self.x_weights()[None, :]
                              * _Mref_vx(ref, self, 0.0)))
        defect = abs(ref.m - inside) / ref.m
        if defect > tol:
            raise ValueError(
                f"grid too small for reference Maxwellian: tail fraction "
                f"{defect:.2e} exceeds {tol:.0e}")
        return defect


def _Mref_vx(p: GlobalMaxwellianParams, grid: PhaseGrid, t: float) -> np.ndarray:
    """Reference Maxwellian on the grid, shape (n_vnodes, n_xnodes)."""
    v = grid.v_nodes()[:, None, :]
    x = grid.x_nodes()[None, :, :]
    return eval_maxwellian(p, v, x, np.full((1, 1), float(t)))


def suggest_grid(p: GlobalMaxwellianParams, Nv: int = 16, Nx: int = 16,
                 nsigma: float = 6.0) -> PhaseGrid:
    """Grid sized to nsigma marginal standard deviations of the reference.

    The t = 0 covariance blocks are a Q^{-1} (velocity) and c Q^{-1}
    (space); the box half-widths are nsigma times the largest marginal
    standard deviation, shifted bounds are not supported (centers should
    be inside the box).
    """
    require_valid(p)
    Qinv = np.linalg.inv(p.Q)
    sv = np.sqrt(np.max(np.diag(p.a * Qinv)))
    sx = np.sqrt(np.max(np.diag(p.c * Qinv)))
    vmax = nsigma * sv + float(np.max(np.abs(p.v0)))
    xmax = nsigma * sx + float(np.max(np.abs(p.x0)))
    grid = PhaseGrid(D=p.D, Nv=Nv, Vmax=vmax, Nx=Nx, Xmax=xmax)
    grid.check_tail(p)
    return grid


@dataclass(frozen=True)
class DistributionField:
    """Relative density h = F / M_ref on a grid at one time, with frame tag.

    ``h`` has shape (Nv^D, Nx^D): velocity node index first (C order over
    velocity axes), space node index second (C order over space axes).
    """

    grid: PhaseGrid
    t: float
    frame: str
    h: np.ndarray
    ref: GlobalMaxwellianParams

    def __post_init__(self):
        if self.frame not in ("lab", "comoving"):
            raise ValueError("frame must be 'lab' or 'comoving'")
        h = np.asarray(self.h, dtype=float)
        if h.shape != (self.grid.n_vnodes, self.grid.n_xnodes):
            raise ValueError(
                f"h must have shape {(self.grid.n_vnodes, self.grid.n_xnodes)}")
        if not np.all(np.isfinite(h)):
            raise ValueError("h must be finite")
        object.__setattr__(self, "h", h)

    def F_values(self) -> np.ndarray:
        """Recover F = h * M_ref pointwise (lab frame: at time t;
        comoving: the transported values at t = 0)."""
        t_eval = self.t if self.frame == "lab" else 0.0
        return self.h * _Mref_vx(self.ref, self.grid, t_eval)


def reference_field(grid: PhaseGrid, ref: GlobalMaxwellianParams,
                    t: float = 0.0, frame: str = "comoving",
                    scale: float = 1.0) -> DistributionField:
    """Field with h identically equal to ``scale`` (the reference itself)."""
    h = np.full((grid.n_vnodes, grid.n_xnodes), float(scale))
    return DistributionField(grid=grid, t=t, frame=frame, h=h, ref=ref)


def _shift_h_along_velocity(h: np.ndarray, grid: PhaseGrid, s: float) -> np.ndarray:
    """Return g(v, x) = h(v, x + s v) via separable cubic interpolation.

    The shift along each space axis depends only on the matching velocity
    component, so the work factorizes into dense (Nx x Nx) shift matrices
    applied per velocity-axis value.
    """
    if s == 0.0:
        return h.copy()
    D, Nv, Nx = grid.D, grid.Nv, grid.Nx
    out = h.reshape((Nv,) * D + (Nx,) * D).copy()
    v_axis = grid.v_axis
    for axis in range(D):
        mats = [shift_matrix_1d(Nx, grid.dx, s * v) for v in v_axis]
        moved = np.moveaxis(out, [axis, D + axis], [0, 1])
        for iv in range(Nv):
            # contract the space axis with the shift matrix for this v value
            moved[iv] = np.einsum("ab,b...->a...", mats[iv], moved[iv])
        out = np.moveaxis(moved, [0, 1], [axis, D + axis])
    return out.reshape(grid.n_vnodes, grid.n_xnodes)


def free_stream(f: DistributionField, delta: float) -> DistributionField:
    """Free transport by time delta: F(v, x) -> F(v, x - delta v).

    In the h representation the reference streams exactly, so only h is
    shifted.  Comoving fields are invariant under streaming combined with
    the time-stamp update; lab fields are shifted in place.
    """
    if f.frame == "comoving":
        return replace(f, t=f.t + delta, h=f.h.copy())
    h_new = _shift_h_along_velocity(f.h, f.grid, -delta)
    return replace(f, t=f.t + delta, h=h_new)


def to_comoving(f: DistributionField) -> DistributionField:
    if f.frame == "comoving":
        return f
    h_new = _shift_h_along_velocity(f.h, f.grid, f.t)
    return replace(f, frame="comoving", h=h_new)


def to_lab(f: DistributionField) -> DistributionField:
    if f.frame == "lab":
        return f
    h_new = _shift_h_along_velocity(f.h, f.grid, -f.t)
    return replace(f, frame="lab", h=h_new)


def weighted_sup_norm(f1: DistributionField, f2: DistributionField) -> float:
    """Sup over nodes of |h1 - h2| (the reference-weighted distance)."""
    if f1.grid != f2.grid:
        raise ValueError("fields live on different grids")
    if f1.frame != f2.frame:
        raise ValueError("fields are in different frames")
    return float(np.max(np.abs(f1.h - f2.h)))


def _moment_weights(grid: PhaseGrid, t: float) -> np.ndarray:
    """Invariant weight functions on the grid, shape (n_moments, nv, nx).

    The entries are (1, v, |v|^2/2, x - tv, |x - tv|^2/2, (x - tv).v,
    x ^ v); at t = 0 they reduce to plain phase-space monomials.  Note
    (x - tv) ^ v = x ^ v, so the wedge entry needs no shift.
    """
    v = grid.v_nodes()[:, None, :]
    x = grid.x_nodes()[None, :, :]
    xs = x - t * v
    rows = [np.ones((grid.n_vnodes, grid.n_xnodes))]
    rows += [v[..., i] * np.ones_like(x[..., 0]) for i in range(grid.D)]
    rows += [0.5 * np.sum(v * v, axis=-1) * np.ones_like(x[..., 0])]
    rows += [xs[..., i] for i in range(grid.D)]
    rows += [0.5 * np.sum(xs * xs, axis=-1)]
    rows += [np.sum(xs * v, axis=-1)]
    for i, j in wedge_index_pairs(grid.D):
        rows.append(x[..., i] * v[..., j] - x[..., j] * v[..., i])
    return np.stack([np.broadcast_to(r, (grid.n_vnodes, grid.n_xnodes))
                     for r in rows])


def moments(f: DistributionField, warn_tail: bool = True) -> np.ndarray:
    """Conserved-moment vector of the field by grid quadrature.

    Comoving fields use the t = 0 weights (the invariant combination);
    lab fields use the time-shifted weights, so the two frames agree up
    to interpolation error.  Ordering follows ``maxwellian.moment_labels``.
    """
    t_eval = f.t if f.frame == "lab" else 0.0
    F = f.F_values()
    w = f.grid.v_weights()[:, None] * f.grid.x_weights()[None, :]
    psi = _moment_weights(f.grid, t_eval)
    return np.einsum("mvx,vx->m", psi, w * F, optimize=True)


def h_functional(f: DistributionField) -> float:
    """Boltzmann H value of the field: quadrature of F log F.

    Uses the convention 0 log 0 = 0; raises if h has negative entries.
    Frame invariant up to interpolation error (H[F(t)] = H[e^{tA} F(t)]).
    """
    if np.any(f.h < 0):
        raise ValueError("h must be nonnegative to evaluate F log F")
    F = f.F_values()
    w = f.grid.v_weights()[:, None] * f.grid.x_weights()[None, :]
    out = np.zeros_like(F)
    pos = F > 0
    out[pos] = F[pos] * np.log(F[pos])
    return float(np.sum(w * out))


def field_labels(D: int) -> list:
    return moment_labels(D)


def save_field(f: DistributionField, path_prefix: str) -> dict:
    """Dump h as little-endian float64 (row-major) plus a JSON manifest.

    Writes ``<prefix>.f64`` and ``<prefix>.json``; returns the manifest.
    """
    raw = np.ascontiguousarray(f.h, dtype="<f8").tobytes()
    checksum = hashlib.sha256(raw).hexdigest()
    manifest = {
        "grid": f.grid.to_json_obj(),
        "t": f.t,
        "frame": f.frame,
        "ref": json.loads(params_to_json(f.ref)),
        "checksum": f"sha256:{checksum}",
        "dtype": "<f8",
        "order": "v-major",
    }
    with open(path_prefix + ".f64", "wb") as fh:
        fh.write(raw)
    with open(path_prefix + ".json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def load_field(path_prefix: str) -> DistributionField:
    with open(path_prefix + ".json") as fh:
        manifest = json.load(fh)
    g = manifest["grid"]
    grid = PhaseGrid(D=int(g["D"]), Nv=int(g["Nv"]), Vmax=float(g["Vmax"]),
                     Nx=int(g["Nx"]), Xmax=float(g["Xmax"]))
    ref = params_from_json(json.dumps(manifest["ref"]))
    raw = open(path_prefix + ".f64", "rb").read()
    digest = hashlib.sha256(raw).hexdigest()
    if manifest["checksum"] != f"sha256:{digest}":
        raise ValueError("field dump checksum mismatch")
    h = np.frombuffer(raw, dtype="<f8").astype(float).reshape(
        grid.n_vnodes, grid.n_xnodes)
    return DistributionField(grid=grid, t=float(manifest["t"]),
                             frame=manifest["frame"], h=h, ref=ref)


@dataclass(frozen=True)
class Trajectory:
    """Comoving fields at strictly increasing time nodes on [-T, T]."""

    times: np.ndarray
    fields: tuple
    grid: PhaseGrid = field(init=False, repr=False)
    ref: GlobalMaxwellianParams = field(init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ValueError("time nodes must be strictly increasing")
        if len(self.fields) != times.size:
            raise ValueError("one field per time node required")
        f0 = self.fields[0]
        for f in self.fields:
            if f.frame != "comoving":
                raise ValueError("trajectory fields must be comoving")
            if f.grid != f0.grid:
                raise ValueError("trajectory fields must share the grid")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "grid", f0.grid)
        object.__setattr__(self, "ref", f0.ref)

    @property
    def n_nodes(self) -> int:
        return self.times.size

    def h_stack(self) -> np.ndarray:
        return np.stack([f.h for f in self.fields])

    def node_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no node at t = {t}")
        return j

    def sup_distance(self, other: "Trajectory") -> float:
        """max over nodes of the weighted sup distance."""
        if other.n_nodes != self.n_nodes:
            raise ValueError("trajectories have different node counts")
        return max(weighted_sup_norm(a, b)
                   for a, b in zip(self.fields, other.fields))
