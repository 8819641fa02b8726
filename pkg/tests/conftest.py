import warnings

import numpy as np
import pytest

from nearmaxwell.grids import PhaseGrid, reference_field
from nearmaxwell.kernels import KernelSpec
from nearmaxwell.maxwellian import GlobalMaxwellianParams

warnings.filterwarnings("ignore", message=".*TBB.*")


def make_params(m=0.5, a=1.0, b=0.0, c=1.0, B=None, x0=None, v0=None, D=2):
    B = np.zeros((D, D)) if B is None else np.asarray(B, dtype=float)
    x0 = np.zeros(D) if x0 is None else np.asarray(x0, dtype=float)
    v0 = np.zeros(D) if v0 is None else np.asarray(v0, dtype=float)
    return GlobalMaxwellianParams(m=m, a=a, b=b, c=c, B=B, x0=x0, v0=v0)


def rotation_matrix(beta_val, D=2):
    B = np.zeros((D, D))
    B[0, 1] = beta_val
    B[1, 0] = -beta_val
    return B


@pytest.fixture(scope="session")
def p_unit():
    return make_params(m=1.0)


@pytest.fixture(scope="session")
def p_small():
    """Reference with admissible mass for the default Maxwell kernel."""
    from nearmaxwell.bounds import admissible_mass

    k = KernelSpec(beta=0.0, D=2)
    m = admissible_mass(make_params(m=1.0), k, margin=0.5)
    return make_params(m=m)


@pytest.fixture(scope="session")
def k_maxwell():
    return KernelSpec(beta=0.0, D=2)


@pytest.fixture(scope="session")
def grid_small():
    return PhaseGrid(D=2, Nv=10, Vmax=5.0, Nx=8, Xmax=5.0)


@pytest.fixture(scope="session")
def grid_desk():
    return PhaseGrid(D=2, Nv=16, Vmax=6.0, Nx=16, Xmax=6.0)


def smooth_state(grid, eps, kv=(1.0, 0.5), kx=(0.7, 0.2), ref=None,
                 x_width=2.2):
    """In-ball comoving data 1 + eps * smooth localized mode.

    The deviation decays in x so boundary extension is benign under
    frame shifts (the physically relevant class for the comoving
    discretization).
    """
    from nearmaxwell.grids import DistributionField

    v = grid.v_nodes()
    x = grid.x_nodes()
    envelope = np.exp(-np.sum(x * x, axis=1) / (2.0 * x_width**2))
    h = 1.0 + eps * (np.cos(0.4 * v @ np.asarray(kv))[:, None]
                     * (np.cos(0.5 * x @ np.asarray(kx)) * envelope)[None, :])
    return DistributionField(grid=grid, t=0.0, frame="comoving", h=h,
                             ref=ref)


def bimodal_state(grid, eps, ref, sep=1.8, width=1.2):
    """Strongly non-Maxwellian in-ball data (velocity-bimodal bump)."""
    from nearmaxwell.grids import DistributionField

    v = grid.v_nodes()
    x = grid.x_nodes()
    u = np.zeros(grid.D)
    u[0] = sep
    gv = (np.exp(-np.sum((v - u) ** 2, axis=1) / width)
          + np.exp(-np.sum((v + u) ** 2, axis=1) / width))
    gx = np.exp(-np.sum(x * x, axis=1) / 2.0)
    pert = (gv[:, None] - np.mean(gv)) * gx[None, :]
    h = 1.0 + eps * pert / np.max(np.abs(pert))
    return DistributionField(grid=grid, t=0.0, frame="comoving", h=h,
                             ref=ref)
