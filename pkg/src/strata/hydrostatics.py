"""Hydrostatic pressure closures for layered columns.

In the long-wave (hydrostatic) limit the pressure inside layer i is linear
in z and determined by the weight of the fluid above, up to a reference
bottom pressure P0(x):

    p_i(x, z) = P0 - g * sum_{k>i} rho_k eta_k  -  rho_i g (z - zeta_i),
    p_n(x, z) = P0 - rho_n g z.

For a free surface, requiring p = 0 at the top fixes

    P0 = g * sum_k rho_k eta_k.

Under a rigid lid P0 is not available pointwise; only its horizontal
gradient is determined, by summing the layer momentum equations and using
the zero-flux constraint:

    P0_x = ( -sum_i (eta_i u_i^2)_x
             + g sum_i sum_{k>i} (rho_k - rho_i)/rho_i * eta_k_x * eta_i )
           / sum_i (eta_i / rho_i).

The right-hand side is *not* a total x-derivative, so its integral over
the line, the far-field pressure imbalance

    P_Delta = integral P0_x dx,

need not vanish even for localized interface deflections.  P_Delta is the
source of the horizontal-momentum non-conservation of rigid-lid columns.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .core import (ConfigError, DomainError, GridMismatchError, LayerConfig,
                   PrimitiveState)


# ---------------------------------------------------------------------------
# pointwise pressures
# ---------------------------------------------------------------------------

def free_surface_bottom_pressure(config: LayerConfig, state: PrimitiveState):
    """Bottom pressure P0(x) = g * sum_k rho_k eta_k of a free-surface column."""
    config.require_free_surface()
    rho = np.asarray(config.rho)
    return config.g * np.einsum("i,ix->x", rho, state.eta)


def layer_pressure(config: LayerConfig, state: PrimitiveState, layer: int, z,
                   p0=None):
    """Hydrostatic pressure p_layer(x, z) inside the given layer (1-based).

    ``z`` may be a scalar or an array broadcastable against x.  ``p0`` is
    the bottom pressure; for a free surface it defaults to the closure
    value, under a rigid lid it must be supplied (only P0_x is physical
    there, but a reference P0 makes the field well defined).
    """
    n = config.n
    if not 1 <= layer <= n:
        raise DomainError(f"layer must be in 1..{n}")
    if p0 is None:
        if config.rigid_lid:
            raise ConfigError("rigid lid: supply a reference bottom pressure p0")
        p0 = free_surface_bottom_pressure(config, state)
    z = np.asarray(z, dtype=float)
    zeta = state.zeta()  # (n-1, m), zeta_1 .. zeta_{n-1}
    z_below = zeta[layer - 1] if layer <= n - 1 else np.zeros(state.grid.m)
    if layer == 1:
        z_above = state.total_depth() if not config.rigid_lid \
            else np.full(state.grid.m, config.h)
    else:
        z_above = zeta[layer - 2]
    if np.any(z < z_below - 1e-12) or np.any(z > z_above + 1e-12):
        raise DomainError(f"z outside layer {layer}")
    rho = np.asarray(config.rho)
    g = config.g
    # P0 is referenced at the bottom: subtract the full weight of the layers
    # below the requested one, then the partial column inside it
    weight_below = np.zeros(state.grid.m)
    for k in range(layer, n):
        weight_below += rho[k] * state.eta[k]
    return p0 - g * weight_below - rho[layer - 1] * g * (z - z_below)


# ---------------------------------------------------------------------------
# rigid-lid bottom pressure gradient
# ---------------------------------------------------------------------------

def bottom_pressure_gradient_pointwise(config: LayerConfig, eta, u, eta_x, u_x):
    """P0_x from pointwise field values and their exact x-derivatives.

    This is the algebraic closure for general n; no discretization is
    involved, so identities that hold in the continuum (e.g. the momentum
    sum) hold here to rounding.  All inputs have shape (n, m).
    """
    config.require_rigid_lid()
    rho = np.asarray(config.rho)
    eta = np.asarray(eta, dtype=float)
    u = np.asarray(u, dtype=float)
    eta_x = np.asarray(eta_x, dtype=float)
    u_x = np.asarray(u_x, dtype=float)
    n = config.n
    # -(sum eta_i u_i^2)_x expanded by the product rule
    adv = -np.sum(eta_x * u**2 + 2.0 * eta * u * u_x, axis=0)
    grav = np.zeros(eta.shape[1])
    for i in range(n):
        for k in range(i + 1, n):  # layers below layer i (0-based)
            grav += (rho[k] - rho[i]) / rho[i] * eta_x[k] * eta[i]
    den = np.sum(eta / rho[:, None], axis=0)
    return (adv + config.g * grav) / den


def momentum_sum_residual(config: LayerConfig, eta, u, eta_x, u_x):
    """Residual of the summed layer momentum equations with the P0_x closure.

    By construction of P0_x the sum equals d/dt of the total flux, which
    vanishes under the dynamical constraint; the residual is a rounding-level
    check of the closure algebra (inputs as in
    ``bottom_pressure_gradient_pointwise``).
    """
    rho = np.asarray(config.rho)
    n = config.n
    p0x = bottom_pressure_gradient_pointwise(config, eta, u, eta_x, u_x)
    eta = np.asarray(eta, dtype=float)
    u = np.asarray(u, dtype=float)
    eta_x = np.asarray(eta_x, dtype=float)
    u_x = np.asarray(u_x, dtype=float)
    total = np.zeros(eta.shape[1])
    for i in range(n):
        grav = np.zeros(eta.shape[1])
        for k in range(i + 1, n):
            grav += (rho[k] - rho[i]) / rho[i] * eta_x[k]
        # (eta_i u_i)_t = -(eta_i u_i^2)_x - eta_i/rho_i P0_x + g eta_i * grav
        total += (-(eta_x[i] * u[i]**2 + 2 * eta[i] * u[i] * u_x[i])
                  - eta[i] / rho[i] * p0x + config.g * eta[i] * grav)
    return total


def bottom_pressure_gradient_discrete(config: LayerConfig, eta, u, deriv):
    """P0_x on the grid from (n, m) arrays, with a discrete derivative for
    the eta_x and (eta u^2)_x terms."""
    config.require_rigid_lid()
    rho = np.asarray(config.rho)
    eta = np.asarray(eta, dtype=float)
    u = np.asarray(u, dtype=float)
    adv = -deriv(np.sum(eta * u**2, axis=0))
    grav = np.zeros(eta.shape[1])
    eta_x = np.array([deriv(eta[k]) for k in range(config.n)])
    for i in range(config.n):
        for k in range(i + 1, config.n):
            grav += (rho[k] - rho[i]) / rho[i] * eta_x[k] * eta[i]
    den = np.sum(eta / rho[:, None], axis=0)
    return (adv + config.g * grav) / den


def rigid_lid_bottom_pressure_gradient(config: LayerConfig, state: PrimitiveState,
                                       deriv=None):
    """P0_x(x) on the grid, using a discrete derivative for the eta_x and
    (eta u^2)_x terms.

    ``deriv`` maps a field to its x-derivative; defaults to second-order
    central differences with far-field-clamped ghost cells.
    """
    if deriv is None:
        deriv = clamped_central_derivative(state.grid.dx)
    return bottom_pressure_gradient_discrete(config, state.eta, state.u, deriv)


def clamped_central_derivative(dx: float):
    """Second-order central difference; ghost cells copy the edge values."""
    def deriv(f):
        fp = np.concatenate(([f[0]], f, [f[-1]]))
        return (fp[2:] - fp[:-2]) / (2.0 * dx)
    return deriv


# ---------------------------------------------------------------------------
# pressure imbalance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImbalanceResult:
    p_delta: float
    far_fields_flat: bool
    warning: str = ""


def pressure_imbalance(config: LayerConfig, state: PrimitiveState,
                       deriv=None, flat_tol: float = 1e-9) -> ImbalanceResult:
    """Far-field pressure imbalance P_Delta = integral of P0_x.

    Midpoint quadrature on the cell centers, consistent with the derivative
    stencil so that total-derivative parts of P0_x telescope exactly.  A
    warning flag is attached when the far fields are not flat (the integral
    then depends on the truncation of the domain).
    """
    p0x = rigid_lid_bottom_pressure_gradient(config, state, deriv)
    p_delta = state.grid.integrate(p0x)
    edge = max(np.max(np.abs(state.eta[:, 0] - state.eta[:, 1])),
               np.max(np.abs(state.eta[:, -1] - state.eta[:, -2])),
               np.max(np.abs(state.u[:, 0] - state.u[:, 1])),
               np.max(np.abs(state.u[:, -1] - state.u[:, -2])))
    scale = config.h if config.rigid_lid else float(np.max(state.eta))
    flat = bool(edge <= flat_tol * scale)
    warning = "" if flat else "far fields are not flat; P_Delta depends on the domain truncation"
    return ImbalanceResult(p_delta, flat, warning)
