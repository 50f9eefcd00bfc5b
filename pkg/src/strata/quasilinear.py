"""Characteristic matrices, hyperbolicity, and the Haantjes obstruction.

Every model in this package can be written as a quasilinear system

    u_t + A(u) u_x = 0,

whose eigenvalues are the characteristic propagation speeds.  The sign
convention is fixed so that a right-moving simple wave has a positive
eigenvalue.

A hyperbolic system of more than two equations admits Riemann invariants
iff the Haantjes tensor of A vanishes.  With the Nijenhuis torsion

    N^i_jk = A^l_j d_l A^i_k - A^l_k d_l A^i_j - A^i_l (d_j A^l_k - d_k A^l_j)

(d_l = derivative with respect to the l-th state component), the Haantjes
tensor is

    H^i_jk = A^i_p A^p_q N^q_jk + N^i_pq A^p_j A^q_k
             - A^i_p (N^p_qk A^q_j + N^p_jq A^q_k).

Both are antisymmetric in (j, k).  The layered models implemented here
have non-vanishing Haantjes tensors (no Riemann invariants); the module
computes the components numerically so the structural zero/non-zero
pattern can be inspected and tested.

Variants of ``build_system``:

* ``free-surface-2``   (eta1, eta2, u1, u2), closed-form A and dA
* ``free-surface-n``   (eta_1..eta_n, u_1..u_n), closed-form A, FD dA
* ``rigid-lid-3``      (eta2, eta3, u2, u3), A assembled exactly from the
                       quasilinear right-hand side, FD dA
* ``boussinesq-3``     (zeta1, zeta2, sigma1, sigma2), closed-form A and dA
* ``symmetric``        (zeta, sigma), closed-form A and dA

A and dA accept a batch of states: shape (..., dim) maps to (..., dim, dim)
and (..., dim, dim, dim); the trailing derivative index of dA is the state
component.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .core import ConfigError, DomainError, LayerConfig

VARIANTS = ("free-surface-2", "free-surface-n", "rigid-lid-3",
            "boussinesq-3", "symmetric")


@dataclass(frozen=True)
class QuasilinearSystem:
    dim: int
    A: callable          # (..., dim) -> (..., dim, dim)
    dA: callable         # (..., dim) -> (..., dim, dim, dim)
    variant: str
    config: LayerConfig
    analytic_dA: bool


@dataclass(frozen=True)
class Classification:
    kind: str            # "hyperbolic" | "elliptic" | "degenerate"
    speeds: np.ndarray   # sorted real parts of the eigenvalues
    max_imag: float


@dataclass(frozen=True)
class HaantjesResult:
    components: np.ndarray        # (dim, dim, dim), H^i_jk
    threshold: float
    nonvanishing: list            # [(i, j, k)] 1-based, j < k, above threshold
    max_abs: float


# ---------------------------------------------------------------------------
# tensor algebra
# ---------------------------------------------------------------------------

def nijenhuis_tensor(A, dA):
    """Nijenhuis torsion of a matrix field from A and dA at one or more states."""
    t1 = np.einsum('...lj,...ikl->...ijk', A, dA)
    t2 = np.einsum('...lk,...ijl->...ijk', A, dA)
    t3 = np.einsum('...il,...lkj->...ijk', A, dA)
    t4 = np.einsum('...il,...ljk->...ijk', A, dA)
    return t1 - t2 - t3 + t4


def haantjes_tensor(A, dA):
    """Haantjes tensor built from the Nijenhuis torsion of A."""
    N = nijenhuis_tensor(A, dA)
    t1 = np.einsum('...ip,...pq,...qjk->...ijk', A, A, N)
    t2 = np.einsum('...ipq,...pj,...qk->...ijk', N, A, A)
    t3 = np.einsum('...ip,...pqk,...qj->...ijk', A, N, A)
    t4 = np.einsum('...ip,...pjq,...qk->...ijk', A, N, A)
    return t1 + t2 - t3 - t4


def fd_matrix_derivative(Afun, delta=1e-6):
    """Central finite-difference dA for a batched matrix function."""
    def dA(u):
        u = np.asarray(u, dtype=float)
        dim = u.shape[-1]
        out = np.empty(u.shape[:-1] + (dim, dim, dim))
        for l in range(dim):
            step = delta * (1.0 + np.abs(u[..., l]))
            up = u.copy()
            um = u.copy()
            up[..., l] += step
            um[..., l] -= step
            out[..., l] = (Afun(up) - Afun(um)) / (2.0 * step)[..., None, None]
        return out
    return dA


# ---------------------------------------------------------------------------
# characteristic matrices
# ---------------------------------------------------------------------------

def _A_free_surface_n(config: LayerConfig):
    n = config.n
    rho = np.asarray(config.rho)
    g = config.g
    # velocity-row coefficients c_ij = g * rho_min(i,j) / rho_i
    C = g * np.minimum.outer(rho, rho) / rho[:, None]

    def A(u):
        u = np.asarray(u, dtype=float)
        eta, vel = u[..., :n], u[..., n:]
        out = np.zeros(u.shape[:-1] + (2 * n, 2 * n))
        idx = np.arange(n)
        out[..., idx, idx] = vel
        out[..., idx, n + idx] = eta
        out[..., n + idx, n + idx] = vel
        out[..., n:, :n] = C
        return out
    return A


def _dA_free_surface_2():
    base = np.zeros((4, 4, 4))
    base[0, 0, 2] = 1.0
    base[0, 2, 0] = 1.0
    base[1, 1, 3] = 1.0
    base[1, 3, 1] = 1.0
    base[2, 2, 2] = 1.0
    base[3, 3, 3] = 1.0

    def dA(u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(base, u.shape[:-1] + (4, 4, 4)).copy()
    return dA


def _A_boussinesq_3(config: LayerConfig):
    h = config.require_rigid_lid()
    rb = config.rho_bar
    g = config.g
    r21, r32 = config.gaps()
    gt = g * h * rb

    def A(u):
        u = np.asarray(u, dtype=float)
        z1, z2, s1, s2 = (u[..., i] for i in range(4))
        out = np.empty(u.shape[:-1] + (4, 4))
        out[..., 0, 0] = (h - 2 * z1) * s1 - s2 * z2
        out[..., 0, 1] = (h - z1) * s2
        out[..., 0, 2] = z1 * (h - z1)
        out[..., 0, 3] = z2 * (h - z1)
        out[..., 1, 0] = -z2 * s1
        out[..., 1, 1] = (h - z1) * s1 + (h - 2 * z2) * s2
        out[..., 1, 2] = z2 * (h - z1)
        out[..., 1, 3] = z2 * (h - z2)
        out[..., 2, 0] = -s1**2 + gt * r21
        out[..., 2, 1] = -s1 * s2
        out[..., 2, 2] = (h - 2 * z1) * s1 - s2 * z2
        out[..., 2, 3] = -z2 * s1
        out[..., 3, 0] = -s1 * s2
        out[..., 3, 1] = -s2**2 + gt * r32
        out[..., 3, 2] = (h - z1) * s2
        out[..., 3, 3] = (h - z1) * s1 + (h - 2 * z2) * s2
        return out / (h * rb)
    return A


def _dA_boussinesq_3(config: LayerConfig):
    h = config.require_rigid_lid()
    rb = config.rho_bar

    def dA(u):
        u = np.asarray(u, dtype=float)
        z1, z2, s1, s2 = (u[..., i] for i in range(4))
        out = np.zeros(u.shape[:-1] + (4, 4, 4))
        # index order (i, k, l): dA[i, k, l] = d A[i, k] / d u[l]
        out[..., 0, 0, 0] = -2 * s1
        out[..., 0, 0, 1] = -s2
        out[..., 0, 0, 2] = h - 2 * z1
        out[..., 0, 0, 3] = -z2
        out[..., 0, 1, 0] = -s2
        out[..., 0, 1, 3] = h - z1
        out[..., 0, 2, 0] = h - 2 * z1
        out[..., 0, 3, 0] = -z2
        out[..., 0, 3, 1] = h - z1
        out[..., 1, 0, 1] = -s1
        out[..., 1, 0, 2] = -z2
        out[..., 1, 1, 0] = -s1
        out[..., 1, 1, 1] = -2 * s2
        out[..., 1, 1, 2] = h - z1
        out[..., 1, 1, 3] = h - 2 * z2
        out[..., 1, 2, 0] = -z2
        out[..., 1, 2, 1] = h - z1
        out[..., 1, 3, 1] = h - 2 * z2
        out[..., 2, 0, 2] = -2 * s1
        out[..., 2, 1, 2] = -s2
        out[..., 2, 1, 3] = -s1
        out[..., 2, 2, 0] = -2 * s1
        out[..., 2, 2, 1] = -s2
        out[..., 2, 2, 2] = h - 2 * z1
        out[..., 2, 2, 3] = -z2
        out[..., 2, 3, 1] = -s1
        out[..., 2, 3, 2] = -z2
        out[..., 3, 0, 2] = -s2
        out[..., 3, 0, 3] = -s1
        out[..., 3, 1, 3] = -2 * s2
        out[..., 3, 2, 0] = -s2
        out[..., 3, 2, 3] = h - z1
        out[..., 3, 3, 0] = -s1
        out[..., 3, 3, 1] = -2 * s2
        out[..., 3, 3, 2] = h - z1
        out[..., 3, 3, 3] = h - 2 * z2
        return out / (h * rb)
    return dA


def _A_symmetric(config: LayerConfig):
    h = config.require_rigid_lid()
    rb = config.rho_bar
    rd = symmetric_gap(config)
    g = config.g

    def A(u):
        u = np.asarray(u, dtype=float)
        z, s = u[..., 0], u[..., 1]
        out = np.empty(u.shape[:-1] + (2, 2))
        out[..., 0, 0] = (h - 4 * z) * s
        out[..., 0, 1] = z * (h - 2 * z)
        out[..., 1, 0] = g * h * rb * rd - 2 * s**2
        out[..., 1, 1] = (h - 4 * z) * s
        return out / (rb * h)
    return A


def _dA_symmetric(config: LayerConfig):
    h = config.require_rigid_lid()
    rb = config.rho_bar

    def dA(u):
        u = np.asarray(u, dtype=float)
        z, s = u[..., 0], u[..., 1]
        out = np.zeros(u.shape[:-1] + (2, 2, 2))
        out[..., 0, 0, 0] = -4 * s
        out[..., 0, 0, 1] = h - 4 * z
        out[..., 0, 1, 0] = h - 4 * z
        out[..., 1, 0, 1] = -4 * s
        out[..., 1, 1, 0] = -4 * s
        out[..., 1, 1, 1] = h - 4 * z
        return out / (rb * h)
    return dA


def _A_rigid_lid_3(config: LayerConfig):
    """Exact characteristic matrix of the (eta2, eta3, u2, u3) system.

    The quasilinear right-hand side is linear in the x-derivatives, so the
    column A[:, l] is the right-hand side evaluated with unit derivative in
    component l; no finite differencing is involved.
    """
    from .hydrostatics import bottom_pressure_gradient_pointwise
    h = config.require_rigid_lid()
    r1, r2, r3 = config.rho

    def A(u):
        u = np.asarray(u, dtype=float)
        shape = u.shape[:-1]
        flat = u.reshape(-1, 4)
        e2, e3, v2, v3 = flat.T
        m = flat.shape[0]
        e1 = h - e2 - e3
        u1 = -(e2 * v2 + e3 * v3) / e1
        out = np.empty((m, 4, 4))
        zero = np.zeros(m)
        one = np.ones(m)
        for l in range(4):
            ex2 = one if l == 0 else zero
            ex3 = one if l == 1 else zero
            vx2 = one if l == 2 else zero
            vx3 = one if l == 3 else zero
            ex1 = -(ex2 + ex3)
            sx = v2 * ex2 + e2 * vx2 + v3 * ex3 + e3 * vx3
            ux1 = -(sx * e1 - (e2 * v2 + e3 * v3) * ex1) / e1**2
            eta = np.array([e1, e2, e3])
            vel = np.array([u1, v2, v3])
            eta_x = np.array([ex1, ex2, ex3])
            vel_x = np.array([ux1, vx2, vx3])
            p0x = bottom_pressure_gradient_pointwise(config, eta, vel, eta_x, vel_x)
            out[:, 0, l] = v2 * ex2 + e2 * vx2
            out[:, 1, l] = v3 * ex3 + e3 * vx3
            out[:, 2, l] = v2 * vx2 + (p0x - config.g * (r3 - r2) * ex3) / r2
            out[:, 3, l] = v3 * vx3 + p0x / r3
        return out.reshape(shape + (4, 4))
    return A


def build_system(config: LayerConfig, variant: str) -> QuasilinearSystem:
    """Assemble the characteristic matrix (and its state derivative) of a model."""
    if variant == "free-surface-2":
        if config.n != 2:
            raise ConfigError("free-surface-2 needs a 2-layer config")
        config.require_free_surface()
        return QuasilinearSystem(4, _A_free_surface_n(config),
                                 _dA_free_surface_2(), variant, config, True)
    if variant == "free-surface-n":
        config.require_free_surface()
        A = _A_free_surface_n(config)
        return QuasilinearSystem(2 * config.n, A, fd_matrix_derivative(A),
                                 variant, config, False)
    if variant == "rigid-lid-3":
        if config.n != 3:
            raise ConfigError("rigid-lid-3 needs a 3-layer config")
        A = _A_rigid_lid_3(config)
        return QuasilinearSystem(4, A, fd_matrix_derivative(A),
                                 variant, config, False)
    if variant == "boussinesq-3":
        if config.n != 3:
            raise ConfigError("boussinesq-3 needs a 3-layer config")
        return QuasilinearSystem(4, _A_boussinesq_3(config),
                                 _dA_boussinesq_3(config), variant, config, True)
    if variant == "symmetric":
        return QuasilinearSystem(2, _A_symmetric(config),
                                 _dA_symmetric(config), variant, config, True)
    raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}")


# ---------------------------------------------------------------------------
# eigenstructure
# ---------------------------------------------------------------------------

REALITY_TOL = 1e-9


def classify_hyperbolicity(system: QuasilinearSystem, u,
                           tol: float = REALITY_TOL) -> Classification:
    """Classify A(u): hyperbolic (real, diagonalizable), elliptic (complex
    pair), or degenerate (real but defective within tolerance)."""
    A = system.A(np.asarray(u, dtype=float))
    if not np.all(np.isfinite(A)):
        raise DomainError("characteristic matrix has non-finite entries")
    lam, V = np.linalg.eig(A)
    scale = 1.0 + np.abs(lam)
    if np.any(np.abs(lam.imag) > tol * scale):
        return Classification("elliptic", np.sort(lam.real), float(np.max(np.abs(lam.imag))))
    # real spectrum: check diagonalizability via eigenvector conditioning
    cond = np.linalg.cond(V)
    kind = "hyperbolic" if cond < 1e8 else "degenerate"
    return Classification(kind, np.sort(lam.real), float(np.max(np.abs(lam.imag))))


def classify_grid(system: QuasilinearSystem, U, tol: float = REALITY_TOL):
    """Vectorized classification over a batch of states (m, dim).

    Returns (kinds, speeds) with kinds an array of strings and speeds
    (m, dim) sorted real parts.
    """
    U = np.asarray(U, dtype=float)
    A = system.A(U)
    lam = np.linalg.eigvals(A)
    imag_bad = np.abs(lam.imag) > tol * (1.0 + np.abs(lam))
    elliptic = np.any(imag_bad, axis=-1)
    kinds = np.where(elliptic, "elliptic", "hyperbolic").astype(object)
    # degenerate detection needs eigenvectors; only refine the real points
    real_idx = np.nonzero(~elliptic)[0]
    if real_idx.size:
        _, V = np.linalg.eig(A[real_idx])
        conds = np.linalg.cond(V)
        kinds[real_idx[conds >= 1e8]] = "degenerate"
    return kinds, np.sort(lam.real, axis=-1)


def max_speed(system: QuasilinearSystem, U) -> float:
    """Largest |eigenvalue| of A over a batch of states (spectral CFL bound)."""
    lam = np.linalg.eigvals(system.A(np.asarray(U, dtype=float)))
    return float(np.max(np.abs(lam)))


def symmetric_gap(config: LayerConfig) -> float:
    if config.n != 3:
        raise ConfigError("symmetric reduction needs a 3-layer config")
    g21, g32 = config.gaps()
    if abs(g32 - g21) > 1e-9 * max(g21, g32):
        raise ConfigError(
            "symmetric reduction requires equal density gaps "
            f"(rho2-rho1 = {g21}, rho3-rho2 = {g32})")
    return g32


def symmetric_char_speeds(config: LayerConfig, zeta, sigma):
    """Characteristic speeds of the symmetric two-field reduction,

        lambda_pm = ( sigma (h - 4 zeta)
                      +- sqrt( zeta (h - 2 zeta) (g h rbar rd - 2 sigma^2) ) )
                    / (rbar h),

    returned as a complex pair when the radicand is negative.  Requires
    0 < zeta < h/2.
    """
    h = config.require_rigid_lid()
    zeta = np.asarray(zeta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(zeta <= 0) or np.any(zeta >= h / 2):
        raise DomainError("symmetric reduction needs 0 < zeta < h/2")
    rb = config.rho_bar
    rd = symmetric_gap(config)
    radicand = zeta * (h - 2 * zeta) * (config.g * h * rb * rd - 2 * sigma**2)
    root = np.sqrt(radicand.astype(complex))
    lam_m = (sigma * (h - 4 * zeta) - root) / (rb * h)
    lam_p = (sigma * (h - 4 * zeta) + root) / (rb * h)
    if np.all(np.abs(lam_m.imag) == 0) and np.all(np.abs(lam_p.imag) == 0):
        return lam_m.real, lam_p.real
    return lam_m, lam_p


def hyperbolic_shear_bound(config: LayerConfig) -> float:
    """Sonic shear of the symmetric reduction: hyperbolic iff
    sigma^2 < g h rbar rd / 2 (and 0 < zeta < h/2)."""
    h = config.require_rigid_lid()
    return float(np.sqrt(config.g * h * config.rho_bar * symmetric_gap(config) / 2.0))


# ---------------------------------------------------------------------------
# Haantjes analysis
# ---------------------------------------------------------------------------

def haantjes(system: QuasilinearSystem, u, rel_threshold: float = 1e-8,
             scale: float | None = None) -> HaantjesResult:
    """Haantjes tensor of A at one state, with a non-vanishing report.

    ``scale`` is the characteristic magnitude of a structural component
    (defaults to g^2 h_ref max-gap); the threshold separating structural
    zeros from rounding is rel_threshold * max(1, |A|^3 / scale) * scale.
    """
    u = np.asarray(u, dtype=float)
    A = system.A(u)
    H = haantjes_tensor(A, system.dA(u))
    if not np.all(np.isfinite(H)):
        raise DomainError("non-finite Haantjes components")
    cfg = system.config
    if scale is None:
        h_ref = cfg.h if cfg.rigid_lid else 1.0
        scale = cfg.g**2 * h_ref * float(np.max(cfg.gaps()))
    normA = np.linalg.norm(A)
    threshold = rel_threshold * max(1.0, normA**3 / scale) * scale
    dim = system.dim
    nonvan = [(i + 1, j + 1, k + 1)
              for i in range(dim) for j in range(dim) for k in range(j + 1, dim)
              if abs(H[i, j, k]) > threshold]
    return HaantjesResult(H, threshold, nonvan, float(np.max(np.abs(H))))


def haantjes_free_surface_2(config: LayerConfig, u):
    """Closed-form non-vanishing components of the free-surface two-layer
    Haantjes tensor: {(1;1,2), (3;2,3), (4;1,3)}."""
    r1, r2 = config.rho
    g = config.g
    eta1 = np.asarray(u, dtype=float)[..., 0]
    c = eta1 * g**2 * (r1 - r2) / r2
    return {(1, 1, 2): c, (3, 2, 3): c, (4, 1, 3): -c * r1 / r2}


def haantjes_boussinesq_3(config: LayerConfig, u):
    """Closed-form non-vanishing components (12 of 24) of the Boussinesq
    three-layer Haantjes tensor."""
    h = config.require_rigid_lid()
    g = config.g
    rb = config.rho_bar
    r21, r32 = config.gaps()
    z1, z2, s1, s2 = (np.asarray(u, dtype=float)[..., i] for i in range(4))
    c1 = (-g * r32 * z2 * (h - z1) * s1**2 / (rb**3 * h**2)
          + g * r21 * (z1 - 2 * z2) * (h - z1) * s2**2 / (rb**3 * h**2)
          + g**2 * r21 * r32 * z2 * (h - z1) / (rb**2 * h))
    c2 = (-g * r32 * z2 * (z2 + h - 2 * z1) * s1**2 / (rb**3 * h**2)
          - g * r21 * z2 * (h - z1) * s2**2 / (rb**3 * h**2)
          + g**2 * r21 * r32 * z2 * (h - z1) / (rb**2 * h))
    c3 = 2 * g * r21 * z2 * s2 * (z1 - z2) * (h - z1) / (rb**3 * h**2)
    c4 = -2 * g * r32 * z2 * s1 * (z1 - z2) * (h - z1) / (rb**3 * h**2)
    return {
        (1, 1, 2): c1, (3, 2, 3): c1, (4, 1, 3): -c1,
        (2, 1, 2): c2, (3, 2, 4): c2, (4, 1, 4): -c2,
        (1, 1, 4): c3, (2, 1, 3): -c3, (3, 3, 4): -c3,
        (1, 2, 4): c4, (2, 2, 3): -c4, (4, 3, 4): -c4,
    }
