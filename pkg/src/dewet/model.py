"""Pointwise physics: potentials, mobility, convex splitting, energies.

The double well is B(u) = 18 u^2 (1-u)^2, the degenerate mobility
M(u) = 2 B(u), and the enhancing weight g(u) = 30 u^2 (1-u)^2.  The
splitting B = B_c - B_e uses B_c = B + alpha (u - 1/2)^2 and
B_e = alpha (u - 1/2)^2, convex for alpha >= 9.  Substrate wetting adds
a B(v)-weighted cubic to B_c with a per-node alpha bound, and weak
anisotropy enters through user-supplied gamma(nu) closures.

All functions evaluate the polynomial formulas on the whole real line
without clamping; the time-stepping Jacobians rely on that smoothness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from dewet import grid as gridmod
from dewet.grid import Grid

#: Regularization added to |grad u|^2 when normalizing interface normals.
NORMAL_REG = 1e-8

#: Floor added to g(u) in linear operators so the algebraic mu-equation
#: stays solvable where g vanishes in the bulk phases.  The flux M(u) is
#: zero there, so the regularized mu values never move mass.
G_FLOOR = 1e-8


@dataclass
class WettingParams:
    """Substrate energy densities and smearing width.

    gamma = 1 for the film-vapor interface, so Young's law reads
    cos(theta) = gamma_vs - gamma_fs.  The substrate height function
    returns the height z above the substrate; the default is a flat
    substrate along the lower domain edge, z = y.
    """

    gamma_vs: float = 0.0
    gamma_fs: float = 0.0
    xi: Optional[float] = None  # defaults to epsilon
    substrate_height_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def validate(self):
        if self.xi is not None and self.xi <= 0:
            raise ValueError("xi must be positive")
        if abs(self.gamma_vs - self.gamma_fs) > 1.0:
            raise ValueError(
                "|gamma_vs - gamma_fs| must be <= 1 for a valid contact angle"
            )

    @property
    def gamma_diff(self) -> float:
        return self.gamma_vs - self.gamma_fs

    def height(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        if self.substrate_height_fn is None:
            return Y
        return self.substrate_height_fn(X, Y)


@dataclass
class AnisotropyParams:
    """Weak-anisotropy closures.

    gamma_of_normal maps the unit normal components (nux, nuy) to the
    surface-energy weight gamma(nu) > 0; dgamma_of_gradient maps the raw
    gradient components (px, py) to the two components of the gradient
    of gamma(nu) with respect to the field gradient.
    """

    gamma_of_normal: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dgamma_of_gradient: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def fourfold_anisotropy(delta: float) -> AnisotropyParams:
    """Demo weak anisotropy gamma(nu) = 1 + delta (nux^4 + nuy^4 - 3/4).

    A generic four-fold form for exercising the anisotropic terms; keep
    delta small (weak regime).
    """

    def gamma_of_normal(nux, nuy):
        return 1.0 + delta * (nux**4 + nuy**4 - 0.75)

    def dgamma_of_gradient(px, py):
        norm = np.sqrt(px**2 + py**2 + NORMAL_REG**2)
        nux, nuy = px / norm, py / norm
        s4 = nux**4 + nuy**4
        gx = 4.0 * delta * (nux**3 - nux * s4) / norm
        gy = 4.0 * delta * (nuy**3 - nuy * s4) / norm
        return gx, gy

    return AnisotropyParams(gamma_of_normal, dgamma_of_gradient)


@dataclass
class ModelParams:
    """Interface width, splitting constant, and model switches."""

    epsilon: float = 0.1
    alpha: float = 9.0
    alpha0: float = 9.0
    use_g: bool = True
    wetting: Optional[WettingParams] = None
    anisotropy: Optional[AnisotropyParams] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        # alpha = 0 disables the splitting (reference runs with a direct
        # solver); anything else below 9 would make B_c non-convex.
        if self.alpha != 0.0 and self.alpha < 9.0:
            raise ValueError(f"alpha must be >= 9 (or 0 to disable splitting), got {self.alpha}")
        if self.wetting is not None:
            self.wetting.validate()
            if self.alpha != 0.0 and self.alpha0 < 9.0:
                raise ValueError("alpha0 must be >= 9 when wetting is active")

    @property
    def xi(self) -> float:
        if self.wetting is not None and self.wetting.xi is not None:
            return self.wetting.xi
        return self.epsilon


# ---------------------------------------------------------------------------
# Potentials and switches
# ---------------------------------------------------------------------------

def double_well(u):
    """B(u) = 18 u^2 (1-u)^2."""
    return 18.0 * u**2 * (1.0 - u) ** 2


def dwell_prime(u):
    """B'(u) = 36 u (1-u) (1-2u)."""
    return 36.0 * u * (1.0 - u) * (1.0 - 2.0 * u)


def dwell_second(u):
    """B''(u) = 36 (1 - 6u + 6u^2)."""
    return 36.0 * (1.0 - 6.0 * u + 6.0 * u**2)


def mobility(u):
    """M(u) = 2 B(u), degenerate in both bulk phases."""
    return 2.0 * double_well(u)


def mobility_prime(u):
    return 2.0 * dwell_prime(u)


def enhancing(u, use_g: bool = True):
    """g(u) = 30 u^2 (1-u)^2, or 1 when the switch is off."""
    if not use_g:
        return np.ones_like(np.asarray(u, dtype=float))
    return 30.0 * u**2 * (1.0 - u) ** 2


def enhancing_prime(u, use_g: bool = True):
    if not use_g:
        return np.zeros_like(np.asarray(u, dtype=float))
    return 30.0 * (2.0 * u - 6.0 * u**2 + 4.0 * u**3)


# ---------------------------------------------------------------------------
# Substrate wetting
# ---------------------------------------------------------------------------

# The smeared substrate indicator v(z) concentrates the well density
# (1/xi) B(v(z)) near z = 0, but that density integrates to 1/4 over
# z >= 0: the bump is symmetric about the substrate plane and the domain
# boundary cuts it in half, and even the full-line integral is 1/2, not
# 1.  The substrate surface densities therefore need a factor of 4 to
# carry unit weight per unit substrate length -- the same normalization
# the interface energy gives gamma = 1.  Without it the equilibrium
# contact angle satisfies cos(theta) = (gamma_vs - gamma_fs)/4 instead
# of Young's law.
SUBSTRATE_DELTA_NORM = 4.0


def substrate_profile(z, xi: float):
    """Smeared substrate indicator v(z) = (1 - tanh(3z/xi)) / 2."""
    if xi <= 0:
        raise ValueError("xi must be positive")
    return 0.5 * (1.0 - np.tanh(3.0 * z / xi))


def substrate_field(grid: Grid, params: ModelParams) -> Optional[np.ndarray]:
    """Nodal v = substrate_profile(z) for the configured substrate, or None."""
    if params.wetting is None:
        return None
    X, Y = grid.meshgrid()
    z = params.wetting.height(X, Y)
    return substrate_profile(z, params.xi)


def substrate_potential_term(grid: Grid, u: np.ndarray, params: ModelParams,
                             v: Optional[np.ndarray] = None) -> np.ndarray:
    """Wetting contribution (1/xi) B(v) 6u(u-1) (gamma_vs - gamma_fs) to the mu-equation."""
    if params.wetting is None:
        raise ValueError("wetting parameters not configured")
    if v is None:
        v = substrate_field(grid, params)
    gd = params.wetting.gamma_diff
    return (SUBSTRATE_DELTA_NORM / params.xi) * double_well(v) * 6.0 * u * (u - 1.0) * gd


def substrate_energy(grid: Grid, u: np.ndarray, params: ModelParams,
                     v: Optional[np.ndarray] = None) -> float:
    """Substrate energy with the cubic interpolation between gamma_vs and gamma_fs."""
    if params.wetting is None:
        raise ValueError("wetting parameters not configured")
    if v is None:
        v = substrate_field(grid, params)
    w = params.wetting
    cubic = (-4.0 * u**3 + 6.0 * u**2 - 1.0) / 2.0
    density = (SUBSTRATE_DELTA_NORM / params.xi) * double_well(v) * (
        0.5 * (w.gamma_vs + w.gamma_fs) - cubic * w.gamma_diff
    )
    return gridmod.integrate(grid, density)


def alpha_field(params: ModelParams, v: Optional[np.ndarray] = None):
    """Splitting constant, per node when wetting is active.

    The wetting term added to B_c has curvature B(v)(12u - 6) gd, so the
    stated bound alpha0 + B(v)^2 gd / (12 eps) is augmented with
    (B(v) gd)^2 / 12, the smallest increment that keeps B_c convex for
    either sign of gd.
    """
    if params.wetting is None or v is None:
        return params.alpha
    if params.alpha == 0.0:
        return 0.0
    gd = params.wetting.gamma_diff
    bv = SUBSTRATE_DELTA_NORM * double_well(v)
    bound = bv**2 * gd / (12.0 * params.epsilon)
    convexity = (bv * gd) ** 2 / 12.0
    return params.alpha0 + np.maximum(np.maximum(bound, convexity), 0.0)


def _wetting_coeff(params: ModelParams, v: Optional[np.ndarray]):
    """Coefficient c = B(v) (gamma_vs - gamma_fs) of the cubic wetting term in B_c."""
    if params.wetting is None or v is None:
        return None
    return SUBSTRATE_DELTA_NORM * double_well(v) * params.wetting.gamma_diff


def split_convex(u, params: ModelParams, v: Optional[np.ndarray] = None):
    """B_c(u) = B(u) + alpha (u - 1/2)^2 (+ B(v)(2u^3 - 3u^2) gd with wetting)."""
    a = alpha_field(params, v)
    out = double_well(u) + a * (u - 0.5) ** 2
    c = _wetting_coeff(params, v)
    if c is not None:
        out = out + c * (2.0 * u**3 - 3.0 * u**2)
    return out


def split_convex_prime(u, params: ModelParams, v: Optional[np.ndarray] = None):
    a = alpha_field(params, v)
    out = dwell_prime(u) + 2.0 * a * (u - 0.5)
    c = _wetting_coeff(params, v)
    if c is not None:
        out = out + c * 6.0 * u * (u - 1.0)
    return out


def split_convex_second(u, params: ModelParams, v: Optional[np.ndarray] = None):
    a = alpha_field(params, v)
    out = dwell_second(u) + 2.0 * a
    c = _wetting_coeff(params, v)
    if c is not None:
        out = out + c * (12.0 * u - 6.0)
    return out


def split_expansive(u, params: ModelParams, v: Optional[np.ndarray] = None):
    """B_e(u) = alpha (u - 1/2)^2 (same alpha as B_c, so B_c - B_e = B + wetting)."""
    a = alpha_field(params, v)
    return a * (u - 0.5) ** 2


def split_expansive_prime(u, params: ModelParams, v: Optional[np.ndarray] = None):
    a = alpha_field(params, v)
    return 2.0 * a * (u - 0.5)


def split_convex_secant(u_new, u_old, params: ModelParams,
                        v: Optional[np.ndarray] = None):
    """Divided difference (B_c(u_new) - B_c(u_old)) / (u_new - u_old).

    B_c is polynomial, so the quotient is evaluated in closed form with
    no removable singularity at u_new = u_old.
    """
    a = alpha_field(params, v)
    u, w = u_new, u_old
    dd4 = u**3 + u**2 * w + u * w**2 + w**3
    dd3 = u**2 + u * w + w**2
    dd2 = u + w
    s = 18.0 * dd4 - 36.0 * dd3 + 18.0 * dd2 + a * (dd2 - 1.0)
    c = _wetting_coeff(params, v)
    if c is not None:
        s = s + c * (2.0 * dd3 - 3.0 * dd2)
    return s


def split_convex_secant_prime(u_new, u_old, params: ModelParams,
                              v: Optional[np.ndarray] = None):
    """Derivative of the secant quotient with respect to u_new."""
    a = alpha_field(params, v)
    u, w = u_new, u_old
    s = 18.0 * (3.0 * u**2 + 2.0 * u * w + w**2) - 36.0 * (2.0 * u + w) + 18.0 + a
    c = _wetting_coeff(params, v)
    if c is not None:
        s = s + c * (2.0 * (2.0 * u + w) - 3.0)
    return s


# ---------------------------------------------------------------------------
# Energies and the mu-equation right side
# ---------------------------------------------------------------------------

def _normals(gx, gy):
    norm = np.sqrt(gx**2 + gy**2 + NORMAL_REG**2)
    return gx / norm, gy / norm


def energy(grid: Grid, u: np.ndarray, params: ModelParams,
           v: Optional[np.ndarray] = None) -> float:
    """Total energy: interface energy plus substrate energy when wetting.

    The isotropic gradient term uses face differences, the
    discretization compatible with the Laplacian stencil; the
    anisotropic weight (when configured) is applied nodewise with the
    centered gradient.
    """
    eps = params.epsilon
    if params.anisotropy is None:
        e = 0.5 * eps * gridmod.gradient_energy_density_integral(grid, u)
        e += gridmod.integrate(grid, double_well(u)) / eps
    else:
        gx, gy = gridmod.gradient(grid, u)
        gam = params.anisotropy.gamma_of_normal(*_normals(gx, gy))
        density = gam * (0.5 * eps * (gx**2 + gy**2) + double_well(u) / eps)
        e = gridmod.integrate(grid, density)
    if params.wetting is not None:
        e += substrate_energy(grid, u, params, v=v)
    return e


def chemical_potential_rhs(grid: Grid, u: np.ndarray, params: ModelParams,
                           v: Optional[np.ndarray] = None) -> np.ndarray:
    """Right side of the mu-equation (everything except g(u) mu).

    Isotropic: (1/eps) B'(u) - eps lap(u) (+ wetting term).  With weak
    anisotropy the Laplacian is replaced by the gamma(nu)-weighted
    divergence terms and B' picks up the gamma(nu) weight.
    """
    eps = params.epsilon
    if params.anisotropy is None:
        out = dwell_prime(u) / eps - eps * gridmod.laplacian(grid, u)
    else:
        gx, gy = gridmod.gradient(grid, u)
        gam = params.anisotropy.gamma_of_normal(*_normals(gx, gy))
        out = gam * dwell_prime(u) / eps
        out -= eps * gridmod.div_m_grad(grid, gam, u)
        dgx, dgy = params.anisotropy.dgamma_of_gradient(gx, gy)
        mag2 = gx**2 + gy**2
        wx, wy = mag2 * dgx, mag2 * dgy
        divw = gridmod.gradient(grid, wx)[0] + gridmod.gradient(grid, wy)[1]
        out -= eps * divw
    if params.wetting is not None:
        if v is None:
            v = substrate_field(grid, params)
        out = out + substrate_potential_term(grid, u, params, v=v)
    return out


def initial_chemical_potential(grid: Grid, u: np.ndarray, params: ModelParams,
                               v: Optional[np.ndarray] = None) -> np.ndarray:
    """Consistent mu for a given u: rhs / g, with g floored in the bulk.

    Where g vanishes the flux M(u) grad mu vanishes too, so the floored
    values are dynamically inert.
    """
    g = enhancing(u, params.use_g)
    if params.use_g:
        g = g + G_FLOOR
    return chemical_potential_rhs(grid, u, params, v=v) / g
