"""Strain-limiting material kernel.

The scalar response function

    psi1(r) = 1 / (2*mu * (1 + (beta*r)**alpha)**(1/alpha))

maps the stress norm r = ||T|| to the secant compliance, so the strain
norm r*psi1(r) grows monotonically toward the finite bound 1/(2*mu*beta).
``beta = 0`` recovers linear elasticity.  All evaluations are overflow
safe for any finite argument: for beta*r > 1 the growth factor is
rewritten as beta*r * (1 + (beta*r)**-alpha)**(1/alpha).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Shear modulus, nonlinearity exponent and strain-limiting parameter.

    ``eps_reg`` guards the Newton kernel against 0/0 at flat-gradient
    points: below it the rank-one term is zeroed, which is the analytic
    limit for every alpha > 0.
    """

    mu: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    eps_reg: float = 1e-12

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.eps_reg <= 0:
            raise ValueError("eps_reg must be positive")


class FluxCoefficients(NamedTuple):
    c0: float  # psi1(r)
    c1: float  # psi1'(r) / r, zeroed below eps_reg
    r: float


class StressStrain(NamedTuple):
    t13: float
    t23: float
    eps13: float
    eps23: float
    energy: float


def _growth(br: np.ndarray, alpha: float) -> np.ndarray:
    """(1 + br**alpha)**(1/alpha), stable for arbitrarily large br."""
    out = np.empty_like(br)
    lo = br <= 1.0
    out[lo] = (1.0 + br[lo] ** alpha) ** (1.0 / alpha)
    hi = ~lo
    out[hi] = br[hi] * (1.0 + br[hi] ** (-alpha)) ** (1.0 / alpha)
    return out


def _saturation(br: np.ndarray, alpha: float) -> np.ndarray:
    """s / (1 + s) with s = br**alpha, stable for arbitrarily large br."""
    out = np.empty_like(br)
    lo = br <= 1.0
    s = br[lo] ** alpha
    out[lo] = s / (1.0 + s)
    u = br[~lo] ** (-alpha)
    out[~lo] = 1.0 / (1.0 + u)
    return out


def psi1(r, params: ModelParams):
    """Secant compliance at stress norm r; accepts scalars or arrays."""
    arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = 1.0 / (2.0 * params.mu * _growth(params.beta * arr, params.alpha))
    return float(out[0]) if np.ndim(r) == 0 else out


def dpsi1(r, params: ModelParams):
    """Derivative of psi1; non-positive, divergent at r = 0 for alpha < 1."""
    arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(arr)
    pos = arr > 0.0
    ps = np.atleast_1d(psi1(arr[pos], params))
    out[pos] = -ps * _saturation(params.beta * arr[pos], params.alpha) / arr[pos]
    if (~pos).any():
        if params.beta == 0.0 or params.alpha > 1.0:
            at0 = 0.0
        elif params.alpha == 1.0:
            at0 = -params.beta / (2.0 * params.mu)
        else:
            at0 = -math.inf
        out[~pos] = at0
    return float(out[0]) if np.ndim(r) == 0 else out


def flux_coeffs(grad, params: ModelParams) -> FluxCoefficients:
    """Kernel coefficients of the linearized operator at one gradient."""
    gx, gy = float(grad[0]), float(grad[1])
    r = math.hypot(gx, gy)
    c0 = psi1(r, params)
    if r < params.eps_reg or params.beta == 0.0:
        return FluxCoefficients(c0, 0.0, r)
    sat = float(_saturation(np.asarray([params.beta * r]), params.alpha)[0])
    return FluxCoefficients(c0, -c0 * sat / (r * r), r)


def flux_coeff_arrays(grads: np.ndarray, params: ModelParams):
    """Vectorized flux coefficients for assembly; grads has shape (m, 2)."""
    r = np.hypot(grads[:, 0], grads[:, 1])
    c0 = psi1(r, params)
    c1 = np.zeros_like(r)
    if params.beta > 0.0:
        live = r >= params.eps_reg
        rl = r[live]
        # divide twice so r near 1e300 cannot overflow in r*r
        c1[live] = -(c0[live] * _saturation(params.beta * rl, params.alpha) / rl) / rl
    return c0, c1, r


def stress_strain(grad_phi, params: ModelParams, pair_factor: float = 2.0) -> StressStrain:
    """Stress, strain and strain-energy density from the potential gradient.

    The stress is the curl of the potential (t13 = dPhi/dy,
    t23 = -dPhi/dx) and the strain follows the secant law
    eps = psi1(||T||) T.  ``pair_factor`` is the convention for counting
    the symmetric off-diagonal pairs in the energy contraction.
    """
    gx, gy = float(grad_phi[0]), float(grad_phi[1])
    t13, t23 = gy, -gx
    r = math.hypot(t13, t23)
    c = psi1(r, params)
    eps13, eps23 = c * t13, c * t23
    energy = pair_factor * (t13 * eps13 + t23 * eps23)
    return StressStrain(t13, t23, eps13, eps23, energy)


def strain_bound(params: ModelParams) -> float:
    """Supremum of the strain norm: 1/(2*mu*beta), infinite for beta = 0."""
    if params.beta == 0.0:
        return math.inf
    return 1.0 / (2.0 * params.mu * params.beta)
