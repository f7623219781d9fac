"""The Sobolev quotient, its constraint manifold, and exact variations.

For a spec (A, B, q) the quotient is

    Q(u) = (A ||grad u||^2 + B ||u||^2) / ||u||_q^2,

minimized over the constraint set {u >= 0, ||u||_q = 1}.  On the tangent
space at u the first and second variations have closed forms; both are
implemented here together with the L^2 tangent projection

    pi_u(phi) = phi - (int u^{q-1} phi dVol) u.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .discretization import (
    DiscreteFunction,
    Discretization,
    gradient_norm_sq,
    inner,
    lp_norm,
)

POWER_FLOOR = 1e-300
SMALL_VALUE_FLAG = 1e-8
NORMALIZATION_TOL = 1e-8


class MixedSignWarning(UserWarning):
    """A nominally nonnegative input changes sign; the quotient is still defined."""


class ConditioningWarning(UserWarning):
    """The power u^{q-2} is evaluated where u nearly vanishes."""


def sobolev_conjugate(d: int) -> float:
    """Critical exponent 2d/(d-2) for the W^{1,2} embedding."""
    return 2.0 * d / (d - 2.0)


@dataclass(frozen=True)
class QuotientSpec:
    A: float
    B: float
    q: float
    disc: Discretization

    def __post_init__(self):
        if not (self.A > 0 and np.isfinite(self.A)):
            raise ValueError(f"A must be finite positive, got {self.A}")
        if not (self.B > 0 and np.isfinite(self.B)):
            raise ValueError(f"B must be finite positive, got {self.B}")
        qmax = sobolev_conjugate(self.disc.model.dim)
        if not 2.0 < self.q <= qmax + 1e-12:
            raise ValueError(f"q must lie in (2, {qmax}], got {self.q}")


def _nonzero(u: DiscreteFunction) -> None:
    if not np.any(u.values):
        raise ValueError("function is identically zero")


def quotient(spec: QuotientSpec, u: DiscreteFunction) -> float:
    _nonzero(u)
    disc = spec.disc
    num = spec.A * gradient_norm_sq(disc, u) + spec.B * inner(disc, u, u)
    return num / lp_norm(disc, u, spec.q) ** 2


def deficit(spec: QuotientSpec, u: DiscreteFunction) -> float:
    """Q(u) - 1 with a single subtraction, stable near extremals."""
    _nonzero(u)
    disc = spec.disc
    num = spec.A * gradient_norm_sq(disc, u) + spec.B * inner(disc, u, u)
    denom = lp_norm(disc, u, spec.q) ** 2
    return (num - denom) / denom


def normalize(u: DiscreteFunction, q: float) -> DiscreteFunction:
    """Rescale to unit L^q norm; wholly nonpositive inputs are sign-flipped."""
    _nonzero(u)
    v = u.values
    if np.all(v <= 0):
        v = -v
    elif np.any(v < 0) and np.any(v > 0):
        warnings.warn(
            "normalizing a mixed-sign function; it lies outside the nonnegative cone",
            MixedSignWarning,
            stacklevel=2,
        )
    s = lp_norm(u.disc, u, q)
    return DiscreteFunction(u.disc, v / s)


def check_normalized(spec: QuotientSpec, u: DiscreteFunction) -> None:
    s = lp_norm(spec.disc, u, spec.q)
    if abs(s - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"function is not L^q-normalized: ||u||_q = {s}")


def power_qm1(u: np.ndarray, q: float) -> np.ndarray:
    """Signed power |u|^{q-2} u used by the projection and Euler-Lagrange field."""
    return np.abs(u) ** (q - 2.0) * u


def power_qm2(u: np.ndarray, q: float) -> np.ndarray:
    """|u|^{q-2} with a floor; flags near-vanishing arguments for q < 3."""
    au = np.abs(u)
    if q < 3.0 and au.min() < SMALL_VALUE_FLAG:
        warnings.warn(
            f"u^(q-2) evaluated where min|u| = {au.min():.3e} < {SMALL_VALUE_FLAG}",
            ConditioningWarning,
            stacklevel=2,
        )
    return np.maximum(au, POWER_FLOOR) ** (q - 2.0)


def project_tangent(
    spec: QuotientSpec, u: DiscreteFunction, phi: DiscreteFunction
) -> DiscreteFunction:
    """L^2-project phi onto the tangent space {v : int u^{q-1} v dVol = 0}."""
    check_normalized(spec, u)
    uq1 = power_qm1(u.values, spec.q)
    coef = float(np.sum(spec.disc.quad_weights * uq1 * phi.values))
    return DiscreteFunction(spec.disc, phi.values - coef * u.values)


def _adjoint_project(spec: QuotientSpec, u: DiscreteFunction, psi: np.ndarray) -> np.ndarray:
    # adjoint of the tangent projection: psi - <u, psi> u^{q-1}
    uq1 = power_qm1(u.values, spec.q)
    coef = float(np.sum(spec.disc.quad_weights * u.values * psi))
    return psi - coef * uq1


def euler_lagrange_field(spec: QuotientSpec, u: DiscreteFunction) -> np.ndarray:
    """Unprojected L^2 field 2A(-Delta u) + 2B u."""
    return 2.0 * spec.A * (spec.disc.laplace_matrix @ u.values) + 2.0 * spec.B * u.values


def gradient(spec: QuotientSpec, u: DiscreteFunction) -> DiscreteFunction:
    """L^2-Riesz representative of the constrained first variation at u."""
    check_normalized(spec, u)
    g = _adjoint_project(spec, u, euler_lagrange_field(spec, u))
    return DiscreteFunction(spec.disc, g)


def hessian_form(
    spec: QuotientSpec,
    u: DiscreteFunction,
    phi: DiscreteFunction,
    eta: DiscreteFunction,
) -> float:
    """Constrained second variation, arguments tangent-projected first."""
    check_normalized(spec, u)
    p = project_tangent(spec, u, phi).values
    e = project_tangent(spec, u, eta).values
    disc = spec.disc
    qw = disc.quad_weights
    qv = quotient(spec, u)
    stiff = float(np.sum(qw * (disc.laplace_matrix @ p) * e))
    mass = float(np.sum(qw * p * e))
    lower = float(np.sum(qw * power_qm2(u.values, spec.q) * p * e))
    return 2.0 * spec.A * stiff + 2.0 * spec.B * mass - 2.0 * (spec.q - 1.0) * qv * lower


def hessian_matrix(spec: QuotientSpec, u: DiscreteFunction) -> np.ndarray:
    """Second-variation matrix in the quadrature-orthonormal frame.

    The direction u is deflated by the (non-orthogonal) tangent projection,
    so the returned symmetric matrix carries one artificial zero mode along
    u; spectrum extraction compresses onto the tangent space explicitly.
    """
    check_normalized(spec, u)
    disc = spec.disc
    qw = disc.quad_weights
    W = np.diag(qw)
    qv = quotient(spec, u)
    S = (
        2.0 * spec.A * (qw[:, None] * disc.laplace_matrix)
        + 2.0 * spec.B * W
        - 2.0 * (spec.q - 1.0) * qv * np.diag(qw * power_qm2(u.values, spec.q))
    )
    uq1 = power_qm1(u.values, spec.q)
    P = np.eye(disc.n) - np.outer(u.values, qw * uq1)
    H = P.T @ (0.5 * (S + S.T)) @ P
    sw = np.sqrt(qw)
    H = H / sw[:, None] / sw[None, :]
    return 0.5 * (H + H.T)


def tangent_frame(spec: QuotientSpec, u: DiscreteFunction) -> np.ndarray:
    """Orthonormal (in the quadrature-orthonormal frame) basis of T_u B.

    Columns z of the returned n x (n-1) matrix satisfy z . W^{1/2} u^{q-1} = 0,
    i.e. the corresponding functions phi = W^{-1/2} z are tangent at u.
    """
    qw = spec.disc.quad_weights
    z = np.sqrt(qw) * power_qm1(u.values, spec.q)
    z = z / np.linalg.norm(z)
    # Householder reflector sending e_0 to -sign(z_0) z; its trailing
    # columns form an orthonormal basis of the complement of z.
    v = z.copy()
    v[0] += math.copysign(1.0, z[0] if z[0] != 0 else 1.0)
    H = np.eye(spec.disc.n) - (2.0 / (v @ v)) * np.outer(v, v)
    return H[:, 1:]
