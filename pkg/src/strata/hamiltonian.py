"""Hamiltonian functionals, gradients, and Poisson operators.

Every model is a system of conservation laws generated by a functional
H = integral of a pointwise density over x,

    u_t = B d/dx (grad H)(u),

with a constant symmetric matrix B (so B d/dx is skew-adjoint under
periodic or decaying boundary conditions).  Because no density depends on
x-derivatives of the fields, the variational derivative of H is the plain
partial gradient of the density, evaluated cell by cell.

Field orderings and operators:

* free-surface models use (eta_1..eta_n, mu_1..mu_n) with mu_i = rho_i u_i
  and B = -[[0, I], [I, 0]];
* the rigid-lid three-layer model uses (zeta1, zeta2, sigma1, sigma2) with
  the same B = -[[0, I], [I, 0]] (canonical coordinates);
* in the flat chart (xi, tau) the operator is the density-dependent
  constant matrix returned by ``flat_poisson_matrix``; the constant
  Jacobian of the flat -> canonical map conjugates one into the other;
* the Boussinesq and symmetric reductions keep the canonical operator.

The rigid-lid kinetic density in canonical coordinates is

    T = ( a sigma1^2 + 2 b sigma1 sigma2 + c sigma2^2 ) / (2 Psi),
    a = (h - zeta1)(rho3 zeta1 + (rho2 - rho3) zeta2),
    b = (h - zeta1) rho2 zeta2,
    c = (rho1 - rho2) zeta1 zeta2 + rho2 h zeta2 - rho1 zeta2^2,

with Psi from :func:`strata.core.psi`; the potential density is
(g/2) [(rho2-rho1) zeta1^2 + (rho3-rho2) zeta2^2].
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .core import (CanonicalState, ConfigError, DomainError, LayerConfig,
                   SingularMapError, flat_jacobian, psi)
from .quasilinear import symmetric_gap

MODEL_VARIANTS = ("free-surface-2", "free-surface-3", "free-surface-n",
                  "rigid-lid-3", "boussinesq-3", "symmetric")


def _antidiag_blocks(k: int) -> np.ndarray:
    J = np.zeros((2 * k, 2 * k))
    J[:k, k:] = np.eye(k)
    J[k:, :k] = np.eye(k)
    return J


@dataclass(frozen=True)
class PoissonOperator:
    """Constant-coefficient Hamiltonian operator u -> B d/dx u."""

    dim: int
    B: np.ndarray

    def apply(self, grad_fields, deriv):
        """B dx applied to stacked gradient fields (dim, m)."""
        dgrad = np.array([deriv(gf) for gf in grad_fields])
        return self.B @ dgrad


def poisson_operator(variant: str, config: LayerConfig | None = None) -> PoissonOperator:
    if variant in ("rigid-lid-3", "boussinesq-3", "free-surface-2"):
        return PoissonOperator(4, -_antidiag_blocks(2))
    if variant == "free-surface-3":
        return PoissonOperator(6, -_antidiag_blocks(3))
    if variant == "free-surface-n":
        if config is None:
            raise ConfigError("free-surface-n operator needs the config for n")
        return PoissonOperator(2 * config.n, -_antidiag_blocks(config.n))
    if variant == "symmetric":
        return PoissonOperator(2, -_antidiag_blocks(1))
    if variant == "flat":
        if config is None:
            raise ConfigError("flat operator needs the config for the densities")
        return PoissonOperator(4, flat_poisson_matrix(config))
    raise ConfigError(f"unknown variant {variant!r}")


def flat_poisson_matrix(config: LayerConfig) -> np.ndarray:
    """Operator matrix in the flat chart (xi1, xi2, tau1, tau2)."""
    if config.n != 3:
        raise ConfigError("flat chart is defined for 3 layers")
    r1, r2, r3 = config.rho
    r13, r23 = r1 - r3, r2 - r3
    return np.array([
        [0.0, 0.0, r13, r23],
        [0.0, 0.0, 0.0, 0.5 * r23],
        [r13, 0.0, 0.0, 0.0],
        [r23, 0.5 * r23, 0.0, 0.0]])


# ---------------------------------------------------------------------------
# densities and analytic gradients
# ---------------------------------------------------------------------------

def kinetic_coefficients_rigid(config: LayerConfig, zeta1, zeta2):
    h = config.require_rigid_lid()
    r1, r2, r3 = config.rho
    a = (h - zeta1) * (r3 * zeta1 + (r2 - r3) * zeta2)
    b = (h - zeta1) * r2 * zeta2
    c = (r1 - r2) * zeta2 * zeta1 + r2 * zeta2 * h - r1 * zeta2**2
    return a, b, c


def kinetic_density_rigid(config: LayerConfig, zeta1, zeta2, sigma1, sigma2):
    P = psi(config, zeta1, zeta2)
    if np.any(P == 0.0):
        raise SingularMapError("singular kinetic form: Psi = 0")
    a, b, c = kinetic_coefficients_rigid(config, zeta1, zeta2)
    return (a * sigma1**2 + 2 * b * sigma1 * sigma2 + c * sigma2**2) / (2 * P)


def kinetic_density_boussinesq(config: LayerConfig, zeta1, zeta2, sigma1, sigma2):
    h = config.require_rigid_lid()
    rb = config.rho_bar
    return (zeta1 * (h - zeta1) * sigma1**2
            + 2 * zeta2 * (h - zeta1) * sigma1 * sigma2
            + zeta2 * (h - zeta2) * sigma2**2) / (2 * h * rb)


def potential_density_rigid(config: LayerConfig, zeta1, zeta2):
    g21, g32 = config.gaps()
    return 0.5 * config.g * (g21 * zeta1**2 + g32 * zeta2**2)


def _grad_rigid(config: LayerConfig, U):
    h = config.h
    r1, r2, r3 = config.rho
    g = config.g
    z1, z2, s1, s2 = U
    P = psi(config, z1, z2)
    if np.any(P == 0.0):
        raise SingularMapError("singular kinetic form: Psi = 0")
    T = kinetic_density_rigid(config, z1, z2, s1, s2)
    dz1 = ((h * r3 - 2 * z1 * r3 + z2 * (r3 - r2)) * s1**2
           - 2 * z2 * r2 * s1 * s2 - z2 * (r2 - r1) * s2**2) / (2 * P) \
        - r3 * (r1 - r2) * T / P + g * (r2 - r1) * z1
    dz2 = ((h - z1) * (r2 - r3) * s1**2 + 2 * (h - z1) * r2 * s1 * s2
           + (r2 * h + z1 * r1 - z1 * r2 - 2 * z2 * r1) * s2**2) / (2 * P) \
        - r1 * (r2 - r3) * T / P + g * (r3 - r2) * z2
    ds1 = ((z1 * r3 + z2 * r2 - z2 * r3) * (h - z1) * s1
           + r2 * z2 * (h - z1) * s2) / P
    ds2 = (r2 * z2 * (h - z1) * s1
           + z2 * (h * r2 + z1 * (r1 - r2) - z2 * r1) * s2) / P
    return np.array([dz1, dz2, ds1, ds2])


def _grad_boussinesq(config: LayerConfig, U):
    h = config.h
    rb = config.rho_bar
    g21, g32 = config.gaps()
    g = config.g
    z1, z2, s1, s2 = U
    dz1 = ((h - 2 * z1) * s1**2 - 2 * z2 * s1 * s2) / (2 * h * rb) + g * g21 * z1
    dz2 = (2 * (h - z1) * s1 * s2 + (h - 2 * z2) * s2**2) / (2 * h * rb) + g * g32 * z2
    ds1 = (z1 * (h - z1) * s1 + z2 * (h - z1) * s2) / (h * rb)
    ds2 = (z2 * (h - z1) * s1 + z2 * (h - z2) * s2) / (h * rb)
    return np.array([dz1, dz2, ds1, ds2])


def _grad_symmetric(config: LayerConfig, U):
    h = config.h
    rb = config.rho_bar
    rd = symmetric_gap(config)
    z, s = U
    dz = (h - 4 * z) * s**2 / (2 * rb * h) + config.g * rd * (z - h / 2)
    ds = z * (h - 2 * z) * s / (rb * h)
    return np.array([dz, ds])


def _grad_free_surface(config: LayerConfig, U):
    n = config.n
    rho = np.asarray(config.rho)
    eta, mu = U[:n], U[n:]
    Vhess = config.g * np.minimum.outer(rho, rho)
    deta = mu**2 / (2 * rho[:, None]) + np.einsum('ij,jx->ix', Vhess, eta)
    dmu = eta * mu / rho[:, None]
    return np.concatenate([deta, dmu])


@dataclass(frozen=True)
class HamiltonianModel:
    """A variant's energy density, analytic gradient, and operator."""

    variant: str
    config: LayerConfig
    field_names: tuple

    @property
    def nfields(self) -> int:
        return len(self.field_names)

    def density(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        cfg = self.config
        if self.variant == "rigid-lid-3":
            return kinetic_density_rigid(cfg, *U) + potential_density_rigid(cfg, U[0], U[1])
        if self.variant == "boussinesq-3":
            return kinetic_density_boussinesq(cfg, *U) + potential_density_rigid(cfg, U[0], U[1])
        if self.variant == "symmetric":
            h = cfg.h
            rd = symmetric_gap(cfg)
            z, s = U
            return z * (h - 2 * z) * s**2 / (2 * cfg.rho_bar * h) \
                + 0.5 * cfg.g * rd * (z - h / 2)**2
        # free-surface family
        n = cfg.n
        rho = np.asarray(cfg.rho)
        eta, mu = U[:n], U[n:]
        kin = 0.5 * np.sum(eta * mu**2 / rho[:, None], axis=0)
        Vc = cfg.g * np.minimum.outer(rho, rho)
        pot = 0.5 * np.einsum('ix,ij,jx->x', eta, Vc, eta)
        return kin + pot

    def gradient(self, U) -> np.ndarray:
        """Analytic variational derivative, one field row per component."""
        U = np.asarray(U, dtype=float)
        cfg = self.config
        if self.variant == "rigid-lid-3":
            return _grad_rigid(cfg, U)
        if self.variant == "boussinesq-3":
            return _grad_boussinesq(cfg, U)
        if self.variant == "symmetric":
            return _grad_symmetric(cfg, U)
        return _grad_free_surface(cfg, U)

    def poisson(self) -> PoissonOperator:
        key = self.variant if self.variant != "free-surface-n" else "free-surface-n"
        return poisson_operator(key, self.config)


def make_model(config: LayerConfig, variant: str) -> HamiltonianModel:
    if variant == "rigid-lid-3":
        if config.n != 3:
            raise ConfigError("rigid-lid-3 needs 3 layers")
        config.require_rigid_lid()
        names = ("zeta1", "zeta2", "sigma1", "sigma2")
    elif variant == "boussinesq-3":
        if config.n != 3:
            raise ConfigError("boussinesq-3 needs 3 layers")
        config.require_rigid_lid()
        names = ("zeta1", "zeta2", "sigma1", "sigma2")
    elif variant == "symmetric":
        config.require_rigid_lid()
        symmetric_gap(config)
        names = ("zeta", "sigma")
    elif variant in ("free-surface-2", "free-surface-3", "free-surface-n"):
        config.require_free_surface()
        if variant == "free-surface-2" and config.n != 2:
            raise ConfigError("free-surface-2 needs 2 layers")
        if variant == "free-surface-3" and config.n != 3:
            raise ConfigError("free-surface-3 needs 3 layers")
        names = tuple(f"eta{i+1}" for i in range(config.n)) \
            + tuple(f"mu{i+1}" for i in range(config.n))
    else:
        raise ConfigError(f"unknown variant {variant!r}; choose from {MODEL_VARIANTS}")
    return HamiltonianModel(variant, config, names)


# ---------------------------------------------------------------------------
# evaluation and finite-difference oracle
# ---------------------------------------------------------------------------

def evaluate_hamiltonian(model: HamiltonianModel, U, grid, far_field=None) -> float:
    """Midpoint-rule value of H; ``far_field`` (one value per field)
    renormalizes by subtracting the far-field density cell-wise, which keeps
    H finite and grid-convergent for non-decaying interface levels."""
    U = np.asarray(U, dtype=float)
    dens = model.density(U)
    if far_field is not None:
        ff = np.asarray(far_field, dtype=float).reshape(model.nfields, 1)
        dens = dens - model.density(np.broadcast_to(ff, (model.nfields, 1)))
    return grid.integrate(dens)


def gradient_fd(model: HamiltonianModel, U, delta: float = 1e-5,
                richardson: bool = False) -> np.ndarray:
    """Central-difference gradient of the density, cell by cell.

    The step is delta * (1 + |field|).  With ``richardson=True`` the
    half-step estimate is combined to fourth order; the plain estimate is
    second order in delta.
    """
    U = np.asarray(U, dtype=float)

    def central(step_scale):
        out = np.empty_like(U)
        for f in range(U.shape[0]):
            step = step_scale * (1.0 + np.abs(U[f]))
            Up = U.copy()
            Um = U.copy()
            Up[f] = U[f] + step
            Um[f] = U[f] - step
            out[f] = (model.density(Up) - model.density(Um)) / (2.0 * step)
        return out

    if not richardson:
        return central(delta)
    coarse = central(delta)
    fine = central(delta / 2.0)
    return (4.0 * fine - coarse) / 3.0


# ---------------------------------------------------------------------------
# Boussinesq limit and the symmetry involution
# ---------------------------------------------------------------------------

def boussinesq_limit_check(config: LayerConfig, U, eps: float) -> float:
    """Relative deviation of the full kinetic density from its Boussinesq
    limit along the double-scaling family

        rho_i(eps) = rho_bar + eps (rho_i - rho_bar),   g(eps) = g / eps,

    which keeps every g * (rho_i - rho_j) fixed.  The deviation decreases
    linearly in eps."""
    if not 0.0 < eps <= 1.0:
        raise DomainError("eps must lie in (0, 1]")
    rb = config.rho_bar
    rho_eps = tuple(rb + eps * (r - rb) for r in config.rho)
    cfg_eps = LayerConfig(rho_eps, g=config.g / eps, h=config.h)
    U = np.asarray(U, dtype=float)
    t_full = kinetic_density_rigid(cfg_eps, *U)
    t_bou = kinetic_density_boussinesq(cfg_eps, *U)
    return float(np.linalg.norm(t_full - t_bou) / np.linalg.norm(t_bou))


def involution_jacobian() -> np.ndarray:
    J = np.zeros((4, 4))
    J[0, 1] = J[1, 0] = J[2, 3] = J[3, 2] = -1.0
    return J


def involution(config: LayerConfig, state):
    """The canonical involution (zeta1, zeta2, sigma1, sigma2) ->
    (h - zeta2, h - zeta1, -sigma2, -sigma1); accepts a CanonicalState or a
    stacked (4, m) array and returns the same kind."""
    h = config.require_rigid_lid()
    if isinstance(state, CanonicalState):
        return CanonicalState(state.grid, h - state.zeta2, h - state.zeta1,
                              -state.sigma2, -state.sigma1)
    U = np.asarray(state, dtype=float)
    return np.array([h - U[1], h - U[0], -U[3], -U[2]])


def symmetric_fixed_point_residual(config: LayerConfig, U) -> float:
    """Sup-norm distance of a canonical state from the involution's
    fixed-point set, |zeta2 - (h - zeta1)| + |sigma2 + sigma1|."""
    h = config.require_rigid_lid()
    U = np.asarray(U, dtype=float)
    return float(np.max(np.abs(U[1] - (h - U[0]))) + np.max(np.abs(U[3] + U[2])))


def restrict_to_symmetric(config: LayerConfig, U) -> np.ndarray:
    """Project a fixed-point state to the two-field chart (zeta, sigma) =
    (zeta2, sigma2)."""
    U = np.asarray(U, dtype=float)
    return np.array([U[1], U[3]])


def embed_symmetric(config: LayerConfig, W) -> np.ndarray:
    """Embed a two-field symmetric state into the canonical chart."""
    h = config.require_rigid_lid()
    z, s = np.asarray(W, dtype=float)
    return np.array([h - z, z, -s, s])
