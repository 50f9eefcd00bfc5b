"""Domain types and coordinate maps for layered stratified fluids.

Conventions used throughout the package:

* Layers are indexed top to bottom: layer 1 is the uppermost (lightest)
  layer, layer n sits on the flat bottom at z = 0.  Stable stratification
  means rho_1 < rho_2 < ... < rho_n.
* eta_i(x) is the thickness of layer i, u_i(x) its layer-mean horizontal
  velocity.
* zeta_i(x), i = 1..n-1, is the elevation of the interface *below* layer i,
  so zeta_i = eta_{i+1} + ... + eta_n and zeta_n = 0 (the bottom).
* A rigid lid at height h imposes the geometric constraint
  sum_i eta_i = h and, for flows at rest at infinity, the dynamical
  constraint sum_i eta_i u_i = 0.

For the rigid-lid three-layer model two extra coordinate charts are used:

* canonical coordinates (zeta1, zeta2, sigma1, sigma2) with the momentum
  shears sigma1 = rho2*u2 - rho1*u1 and sigma2 = rho3*u3 - rho2*u2;
* flat coordinates (xi1, xi2, tau1, tau2), a constant linear transform of
  the canonical chart in which the Poisson operator is constant.

All state objects are immutable after construction (arrays are marked
read-only), so they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np


class ModelError(ValueError):
    """Base class for modelling errors."""


class ConfigError(ModelError):
    """Inconsistent physical configuration (densities, gravity, lid)."""


class GridMismatchError(ModelError):
    """Fields defined on incompatible grids."""


class SingularMapError(ModelError):
    """A coordinate map or kinetic form is singular for the given state."""


class DomainError(ModelError):
    """Argument outside the domain of validity of a formula."""


def _readonly(a) -> np.ndarray:
    out = np.asarray(a, dtype=float).copy()
    out.flags.writeable = False
    return out


# ---------------------------------------------------------------------------
# configuration and grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerConfig:
    """Densities, gravity and lid type of an n-layer column.

    ``h is None`` selects a free upper surface; a float selects a rigid lid
    at height ``h`` (the total channel height).
    """

    rho: tuple
    g: float = 1.0
    h: float | None = None

    def __post_init__(self):
        rho = tuple(float(r) for r in self.rho)
        object.__setattr__(self, "rho", rho)
        if len(rho) < 2:
            raise ConfigError("need at least two layers")
        if any(b <= a for a, b in zip(rho, rho[1:])):
            raise ConfigError(f"densities must increase downward, got {rho}")
        if self.g <= 0:
            raise ConfigError("gravity must be positive")
        if self.h is not None and self.h <= 0:
            raise ConfigError("channel height must be positive")

    @property
    def n(self) -> int:
        return len(self.rho)

    @property
    def rigid_lid(self) -> bool:
        return self.h is not None

    @property
    def rho_bar(self) -> float:
        """Mean density (the inertial density of the Boussinesq model)."""
        return sum(self.rho) / self.n

    def gaps(self) -> np.ndarray:
        """Density jumps rho_{i+1} - rho_i across the n-1 interfaces."""
        r = np.asarray(self.rho)
        return r[1:] - r[:-1]

    def require_rigid_lid(self):
        if not self.rigid_lid:
            raise ConfigError("operation requires a rigid-lid configuration")
        return self.h

    def require_free_surface(self):
        if self.rigid_lid:
            raise ConfigError("operation requires a free-surface configuration")


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid on [x0, x1] with m cells."""

    x0: float
    x1: float
    m: int

    def __post_init__(self):
        if self.m < 8:
            raise ConfigError("grid needs at least 8 cells")
        if self.x1 <= self.x0:
            raise ConfigError("empty domain")

    @property
    def dx(self) -> float:
        return (self.x1 - self.x0) / self.m

    def centers(self) -> np.ndarray:
        return self.x0 + (np.arange(self.m) + 0.5) * self.dx

    @property
    def length(self) -> float:
        return self.x1 - self.x0

    def integrate(self, f) -> float:
        """Midpoint-rule integral of a cell-centered field."""
        return float(np.sum(f) * self.dx)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrimitiveState:
    """Layer thicknesses eta_i(x) and layer-mean velocities u_i(x)."""

    grid: Grid1D
    eta: np.ndarray  # (n, m), top to bottom
    u: np.ndarray    # (n, m)

    def __post_init__(self):
        eta = _readonly(np.atleast_2d(self.eta))
        u = _readonly(np.atleast_2d(self.u))
        if eta.shape != u.shape or eta.shape[1] != self.grid.m:
            raise GridMismatchError(
                f"eta {eta.shape} and u {u.shape} must both be (n, {self.grid.m})")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.eta.shape[0]

    def zeta(self) -> np.ndarray:
        """Interface elevations zeta_1 > ... > zeta_{n-1} (bottom excluded)."""
        # zeta_i = eta_{i+1} + ... + eta_n
        return np.cumsum(self.eta[::-1], axis=0)[::-1][1:]

    def total_depth(self) -> np.ndarray:
        return self.eta.sum(axis=0)

    def flux(self) -> np.ndarray:
        """Total horizontal volume flux sum_i eta_i u_i."""
        return np.sum(self.eta * self.u, axis=0)


@dataclass(frozen=True)
class CanonicalState:
    """Rigid-lid 3-layer state in interface/shear coordinates."""

    grid: Grid1D
    zeta1: np.ndarray
    zeta2: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        for name in ("zeta1", "zeta2", "sigma1", "sigma2"):
            a = _readonly(np.atleast_1d(getattr(self, name)))
            if a.shape != (self.grid.m,):
                raise GridMismatchError(f"{name} must have shape ({self.grid.m},)")
            object.__setattr__(self, name, a)

    def stack(self) -> np.ndarray:
        return np.array([self.zeta1, self.zeta2, self.sigma1, self.sigma2])

    @classmethod
    def from_stack(cls, grid: Grid1D, U) -> "CanonicalState":
        return cls(grid, U[0], U[1], U[2], U[3])


@dataclass(frozen=True)
class FlatState:
    """Rigid-lid 3-layer state in the flat (density-weighted) chart."""

    grid: Grid1D
    xi1: np.ndarray
    xi2: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray

    def __post_init__(self):
        for name in ("xi1", "xi2", "tau1", "tau2"):
            a = _readonly(np.atleast_1d(getattr(self, name)))
            if a.shape != (self.grid.m,):
                raise GridMismatchError(f"{name} must have shape ({self.grid.m},)")
            object.__setattr__(self, name, a)

    def stack(self) -> np.ndarray:
        return np.array([self.xi1, self.xi2, self.tau1, self.tau2])


@dataclass(frozen=True)
class ConstraintViolation:
    kind: str        # "positivity" | "geometric" | "dynamical"
    where: int       # index of the worst cell
    magnitude: float
    message: str = ""


# ---------------------------------------------------------------------------
# constraints
# ---------------------------------------------------------------------------

POSITIVITY_EPS = 1e-10   # relative to h (rigid lid) or max thickness


def validate(config: LayerConfig, state: PrimitiveState,
             tol: float | None = None) -> list[ConstraintViolation]:
    """Check positivity, the rigid-lid geometric constraint and the
    dynamical (zero total flux) constraint.

    Returns an empty list iff the state is admissible.  ``tol`` overrides
    the default tolerances (1e-10 * h for the geometric constraint,
    1e-10 * max|eta*u| for the dynamical one).
    """
    if state.eta.shape[0] != config.n:
        raise GridMismatchError(
            f"state has {state.eta.shape[0]} layers, config has {config.n}")
    out = []
    scale = config.h if config.rigid_lid else float(np.max(state.eta))
    eps = POSITIVITY_EPS * scale
    thin = np.min(state.eta, axis=0)
    i = int(np.argmin(thin))
    if thin[i] <= eps:
        out.append(ConstraintViolation(
            "positivity", i, float(thin[i]),
            f"layer thickness {thin[i]:.3e} <= {eps:.3e} at cell {i}"))
    if config.rigid_lid:
        h = config.h
        tol_geom = tol if tol is not None else 1e-10 * h
        depth_err = np.abs(state.total_depth() - h)
        i = int(np.argmax(depth_err))
        if depth_err[i] > tol_geom:
            out.append(ConstraintViolation(
                "geometric", i, float(depth_err[i]),
                f"|sum eta - h| = {depth_err[i]:.3e} at cell {i}"))
        fscale = max(float(np.max(np.abs(state.eta * state.u))), 1e-300)
        tol_dyn = tol if tol is not None else 1e-10 * fscale
        flux = np.abs(state.flux())
        i = int(np.argmax(flux))
        if flux[i] > tol_dyn:
            out.append(ConstraintViolation(
                "dynamical", i, float(flux[i]),
                f"|sum eta*u| = {flux[i]:.3e} at cell {i}"))
    return out


def close_velocity_top(zeta1, zeta2, u2, u3, h):
    """Top-layer velocity that closes the zero-flux constraint,

        u1 = ((zeta1 - zeta2) u2 + zeta2 u3) / (zeta1 - h).

    Raises SingularMapError where the top layer vanishes (zeta1 = h).
    """
    zeta1 = np.asarray(zeta1, dtype=float)
    denom = zeta1 - h
    if np.any(denom == 0.0):
        raise SingularMapError("vanishing top layer: zeta1 = h")
    return ((zeta1 - zeta2) * np.asarray(u2) + np.asarray(zeta2) * np.asarray(u3)) / denom


# ---------------------------------------------------------------------------
# canonical chart (rigid-lid, n = 3)
# ---------------------------------------------------------------------------

def psi(config: LayerConfig, zeta1, zeta2):
    """Kinetic-form denominator Psi = h r2 r3 - r3 (r2-r1) zeta1 - r1 (r3-r2) zeta2."""
    h = config.require_rigid_lid()
    r1, r2, r3 = config.rho
    return h * r2 * r3 - r3 * (r2 - r1) * np.asarray(zeta1) \
        - r1 * (r3 - r2) * np.asarray(zeta2)


def velocities_from_shear(config: LayerConfig, zeta1, zeta2, sigma1, sigma2):
    """Layer-mean velocities (u1, u2, u3) of a canonical rigid-lid state.

    Inverts the shear definitions together with the zero-flux constraint.
    Raises SingularMapError where Psi vanishes.
    """
    h = config.require_rigid_lid()
    r1, r2, r3 = config.rho
    P = psi(config, zeta1, zeta2)
    if np.any(P == 0.0):
        raise SingularMapError("singular kinetic form: Psi = 0")
    zeta1 = np.asarray(zeta1, dtype=float)
    zeta2 = np.asarray(zeta2, dtype=float)
    u2 = (r3 * (h - zeta1) * sigma1 - zeta2 * r1 * sigma2) / P
    u3 = (r2 * (h - zeta1) * sigma1
          + (h * r2 + (r1 - r2) * zeta1 - zeta2 * r1) * sigma2) / P
    u1 = close_velocity_top(zeta1, zeta2, u2, u3, h)
    return u1, u2, u3


def primitive_to_canonical(config: LayerConfig, state: PrimitiveState) -> CanonicalState:
    if config.n != 3:
        raise ConfigError("canonical chart is defined for 3 layers")
    config.require_rigid_lid()
    r1, r2, r3 = config.rho
    z = state.zeta()
    sigma1 = r2 * state.u[1] - r1 * state.u[0]
    sigma2 = r3 * state.u[2] - r2 * state.u[1]
    return CanonicalState(state.grid, z[0], z[1], sigma1, sigma2)


def canonical_to_primitive(config: LayerConfig, state: CanonicalState) -> PrimitiveState:
    h = config.require_rigid_lid()
    z1, z2 = state.zeta1, state.zeta2
    u1, u2, u3 = velocities_from_shear(config, z1, z2, state.sigma1, state.sigma2)
    eta = np.array([h - z1, z1 - z2, z2])
    return PrimitiveState(state.grid, eta, np.array([u1, u2, u3]))


# ---------------------------------------------------------------------------
# flat chart (rigid-lid, n = 3)
# ---------------------------------------------------------------------------

def flat_jacobian(config: LayerConfig) -> np.ndarray:
    """Constant Jacobian M of the (xi, tau) -> (zeta, sigma) map."""
    if config.n != 3:
        raise ConfigError("flat chart is defined for 3 layers")
    r1, r2, r3 = config.rho
    r13 = r1 - r3
    r23 = r2 - r3
    if r13 == 0.0 or r23 == 0.0:
        raise SingularMapError("degenerate densities make the flat chart singular")
    M = np.zeros((4, 4))
    M[0, 0] = -1.0 / r13
    M[0, 1] = 2.0 / r13
    M[1, 0] = -1.0 / r13
    M[1, 1] = -2.0 * (r1 - r2) / (r23 * r13)
    M[2, 2] = 1.0
    M[2, 3] = -1.0
    M[3, 3] = 1.0
    return M


def canonical_to_flat(config: LayerConfig, state: CanonicalState) -> FlatState:
    h = config.require_rigid_lid()
    r1, r2, r3 = config.rho
    xi1 = (h - state.zeta2) * (r2 - r3) + (h - state.zeta1) * (r1 - r2)
    xi2 = 0.5 * (r2 - r3) * (state.zeta1 - state.zeta2)
    tau1 = state.sigma1 + state.sigma2
    tau2 = state.sigma2
    return FlatState(state.grid, xi1, xi2, tau1, tau2)


def flat_to_canonical(config: LayerConfig, state: FlatState) -> CanonicalState:
    h = config.require_rigid_lid()
    M = flat_jacobian(config)
    U = M @ np.vstack([state.xi1, state.xi2, state.tau1, state.tau2])
    # the affine offset: zeta rows carry +h
    return CanonicalState(state.grid, U[0] + h, U[1] + h, U[2], U[3])
