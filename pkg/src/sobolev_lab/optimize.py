"""Constrained minimization of the Sobolev quotient and critical-point tools.

Minimization runs preconditioned projected-gradient descent on the unit
L^q sphere (iterates reflected into the nonnegative cone by absolute
value, which never increases the quotient), followed by a Newton polish
of the bordered stationarity system

    2A(-Delta u) + 2B u - theta |u|^{q-2} u = 0,     int |u|^q dVol = 1.

Critical points are certified through the weak criticality identity and
equipped with the spectrum of the constrained Hessian on the tangent
space, including a kernel basis for the Lyapunov-Schmidt reduction.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import functionals as fn
from .discretization import DiscreteFunction, SpectralData
from .functionals import QuotientSpec

KERNEL_THRESHOLD = 1e-6


class ThresholdAmbiguityWarning(UserWarning):
    """A Hessian eigenvalue sits near the kernel threshold."""


@dataclass
class MinimizeOptions:
    max_iter: int = 400
    grad_tol: float = 1e-8
    switch_tol: float = 1e-4  # gradient residual at which Newton polish starts
    newton_max: int = 40
    spectrum_size: int = 8
    kernel_threshold: float = KERNEL_THRESHOLD


@dataclass
class CriticalPoint:
    u: DiscreteFunction
    value: float
    grad_residual: float
    hessian_spectrum: SpectralData
    kernel_dim: int
    kernel_basis: list
    converged: bool
    iterations: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": 1,
                "value": self.value,
                "grad_residual": self.grad_residual,
                "hessian_eigenvalues": self.hessian_spectrum.eigenvalues.tolist(),
                "kernel_dim": self.kernel_dim,
                "converged": self.converged,
                "iterations": self.iterations,
            }
        )


@dataclass
class ReducedFunctionalSample:
    coords: np.ndarray
    value: float
    minimizer_perp: DiscreteFunction
    inner_converged: bool


def certify(spec: QuotientSpec, u: DiscreteFunction, tol: float = 1e-8) -> float:
    """Max-norm residual of the criticality identity; <= tol means certified."""
    fn.check_normalized(spec, u)
    qv = fn.quotient(spec, u)
    rho = (
        spec.A * (spec.disc.laplace_matrix @ u.values)
        + spec.B * u.values
        - qv * fn.power_qm1(u.values, spec.q)
    )
    return float(np.max(np.abs(rho)))


def _l2_norm(spec: QuotientSpec, values: np.ndarray) -> float:
    return math.sqrt(float(np.sum(spec.disc.quad_weights * values * values)))


def hessian_spectrum_at(spec: QuotientSpec, u: DiscreteFunction, k: int) -> SpectralData:
    """Bottom-k eigenpairs of the constrained Hessian on the tangent space."""
    disc = spec.disc
    if not 1 <= k <= disc.n - 1:
        raise ValueError(f"k must be in [1, {disc.n - 1}], got {k}")
    H = fn.hessian_matrix(spec, u)
    Z = fn.tangent_frame(spec, u)
    Hc = Z.T @ H @ Z
    Hc = 0.5 * (Hc + Hc.T)
    evals, vecs = np.linalg.eigh(Hc)
    sw = np.sqrt(disc.quad_weights)
    funcs = []
    residuals = np.empty(k)
    for i in range(k):
        c = Z @ vecs[:, i]
        phi = c / sw
        if phi[np.argmax(np.abs(phi))] < 0:
            phi = -phi
        funcs.append(DiscreteFunction(disc, phi))
        r = Hc @ vecs[:, i] - evals[i] * vecs[:, i]
        residuals[i] = float(np.linalg.norm(r))
    return SpectralData(np.asarray(evals[:k]), funcs, residuals)


def kernel_basis_at(
    spec: QuotientSpec,
    u: DiscreteFunction,
    threshold: float = KERNEL_THRESHOLD,
    spectrum: SpectralData | None = None,
) -> list:
    """Tangent eigenfunctions with |eigenvalue| below threshold * spectral scale."""
    if spectrum is None:
        spectrum = hessian_spectrum_at(spec, u, min(spec.disc.n - 1, 12))
    H = fn.hessian_matrix(spec, u)
    scale = max(1.0, float(np.linalg.norm(H, 2)))
    cut = threshold * scale
    lams = np.abs(spectrum.eigenvalues)
    if np.any((lams > cut / 10.0) & (lams < cut * 10.0)):
        warnings.warn(
            f"Hessian eigenvalue within 10x of kernel threshold {cut:.3e}",
            ThresholdAmbiguityWarning,
            stacklevel=2,
        )
    return [f for lam, f in zip(spectrum.eigenvalues, spectrum.eigenfunctions) if abs(lam) < cut]


def _newton_polish(spec: QuotientSpec, values: np.ndarray, max_iter: int):
    """Bordered Newton on stationarity + normalization; returns best iterate."""
    disc = spec.disc
    qw = disc.quad_weights
    A, B, q = spec.A, spec.B, spec.q
    L = disc.laplace_matrix
    n = disc.n

    def residual(u, theta):
        r1 = 2.0 * A * (L @ u) + 2.0 * B * u - theta * fn.power_qm1(u, q)
        r2 = float(np.sum(qw * np.abs(u) ** q)) - 1.0
        return r1, r2

    u = values.copy()
    uf = DiscreteFunction(disc, u)
    theta = 2.0 * fn.quotient(spec, uf)
    r1, r2 = residual(u, theta)
    best = (u.copy(), math.hypot(_l2_norm(spec, r1), abs(r2)))
    for _ in range(max_iter):
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = 2.0 * A * L + 2.0 * B * np.eye(n) - theta * (q - 1.0) * np.diag(
            np.abs(u) ** (q - 2.0)
        )
        J[:n, n] = -fn.power_qm1(u, q)
        J[n, :n] = q * qw * fn.power_qm1(u, q)
        rhs = np.concatenate([r1, [r2]])
        try:
            step = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, rhs, rcond=None)
        u = u - step[:n]
        theta = theta - step[n]
        r1, r2 = residual(u, theta)
        norm = math.hypot(_l2_norm(spec, r1), abs(r2))
        if not math.isfinite(norm) or norm > 10.0 * best[1]:
            break
        if norm < best[1]:
            best = (u.copy(), norm)
        if norm < 1e-12:
            break
    return best[0]


def _flat_direction_polish(spec: QuotientSpec, u: DiscreteFunction, opts: MinimizeOptions):
    """Drive the gradient to zero along near-kernel Hessian directions."""
    from scipy.optimize import brentq

    disc = spec.disc

    def residual_of(values: np.ndarray) -> tuple[DiscreteFunction, float]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", fn.MixedSignWarning)
            w = fn.normalize(DiscreteFunction(disc, np.abs(values)), spec.q)
        return w, _l2_norm(spec, fn.gradient(spec, w).values)

    spectrum = hessian_spectrum_at(spec, u, min(4, disc.n - 1))
    scale = max(1.0, float(np.max(np.abs(spectrum.eigenvalues))))
    best_u, best_res = u, _l2_norm(spec, fn.gradient(spec, u).values)
    for lam, phi in zip(spectrum.eigenvalues, spectrum.eigenfunctions):
        if abs(lam) > 1e-2 * scale:
            continue

        def g1(s):
            w, _ = residual_of(best_u.values + s * phi.values)
            return float(np.sum(disc.quad_weights * fn.gradient(spec, w).values * phi.values))

        bracket = 1e-3
        root = None
        g0 = g1(0.0)
        for _ in range(10):
            if g1(bracket) * g0 < 0:
                root = brentq(g1, 0.0, bracket, xtol=1e-14)
                break
            if g1(-bracket) * g0 < 0:
                root = brentq(g1, -bracket, 0.0, xtol=1e-14)
                break
            bracket *= 2.0
            if bracket > 0.5:
                break
        if root is not None:
            cand, res = residual_of(best_u.values + root * phi.values)
            if res < best_res:
                best_u, best_res = cand, res
    polished = _newton_polish(spec, best_u.values, opts.newton_max)
    cand, res = residual_of(polished)
    if res < best_res:
        best_u, best_res = cand, res
    return best_u, best_res


def minimize(
    spec: QuotientSpec,
    init: DiscreteFunction,
    opts: MinimizeOptions | None = None,
) -> CriticalPoint:
    """Minimize the quotient over the unit L^q sphere from a given start."""
    opts = opts or MinimizeOptions()
    disc = spec.disc
    if not np.any(init.values):
        raise ValueError("initial guess is identically zero")
    u = fn.normalize(DiscreteFunction(disc, np.abs(init.values)), spec.q)
    # W^{1,2}-type preconditioner for the L^2 gradient
    M = 2.0 * spec.A * disc.laplace_matrix + 2.0 * spec.B * np.eye(disc.n)
    M_fact = lu_factor(M)
    qval = fn.quotient(spec, u)
    step = 1.0
    iterations = 0
    while iterations < opts.max_iter:
        g = fn.gradient(spec, u).values
        res = _l2_norm(spec, g)
        if res < opts.switch_tol:
            break
        iterations += 1
        p = lu_solve(M_fact, g)
        accepted = False
        for _ in range(40):
            trial = np.abs(u.values - step * p)
            if not np.any(trial):
                step *= 0.5
                continue
            trial_u = fn.normalize(DiscreteFunction(disc, trial), spec.q)
            trial_q = fn.quotient(spec, trial_u)
            if trial_q <= qval + 1e-14:
                u, qval = trial_u, trial_q
                accepted = True
                step = min(step * 1.5, 4.0)
                break
            step *= 0.5
        if not accepted:
            break
    polished = _newton_polish(spec, u.values, opts.newton_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", fn.MixedSignWarning)
        u = fn.normalize(DiscreteFunction(disc, polished), spec.q)
    g = fn.gradient(spec, u).values
    grad_residual = _l2_norm(spec, g)
    if grad_residual > opts.grad_tol:
        # Newton stalls along nearly-flat Hessian directions (quartic
        # valleys); root-find the projected gradient along each of them
        # and re-polish.
        for _ in range(3):
            u, grad_residual = _flat_direction_polish(spec, u, opts)
            if grad_residual < opts.grad_tol:
                break
    qval = fn.quotient(spec, u)
    converged = grad_residual < opts.grad_tol
    k = min(opts.spectrum_size, disc.n - 1)
    spectrum = hessian_spectrum_at(spec, u, k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThresholdAmbiguityWarning)
        kernel = kernel_basis_at(spec, u, opts.kernel_threshold, spectrum)
    return CriticalPoint(
        u=u,
        value=qval,
        grad_residual=grad_residual,
        hessian_spectrum=spectrum,
        kernel_dim=len(kernel),
        kernel_basis=kernel,
        converged=converged,
        iterations=iterations,
    )


def multistart_minimize(
    spec: QuotientSpec, seed: int = 0, opts: MinimizeOptions | None = None, extra_starts: int = 2
) -> CriticalPoint:
    """Run minimize from the documented start family and keep the best result.

    Starts: constants, +/- first-eigenfunction perturbations, bubbles on the
    sphere, and seeded random smooth fields.  Best certified value wins, ties
    broken by lower gradient residual.
    """
    from .discretization import laplace_eigenpairs
    from .geometry import ModelKind

    disc = spec.disc
    const = np.ones(disc.n)
    spec_data = laplace_eigenpairs(disc, min(6, disc.n))
    phi1 = spec_data.eigenfunctions[1].values
    starts = [const, const + 0.3 * phi1, const - 0.3 * phi1]
    if disc.model.kind is ModelKind.SPHERE_RADIAL:
        from .stability import bubble

        for b in (0.3, 0.6, 0.9):
            starts.append(bubble(disc, 1.0, b).values)
    rng = np.random.Generator(np.random.Philox(seed))
    phis = np.column_stack([f.values for f in spec_data.eigenfunctions])
    for _ in range(extra_starts):
        coeffs = rng.standard_normal(phis.shape[1]) * 0.5 ** np.arange(phis.shape[1])
        starts.append(const + phis @ coeffs)
    best = None
    for s in starts:
        cp = minimize(spec, DiscreteFunction(disc, s), opts)
        if best is None or (cp.value, cp.grad_residual) < (best.value, best.grad_residual):
            best = cp
    return best


def reduced_functional(
    spec: QuotientSpec,
    v: CriticalPoint,
    coords,
    newton_max: int = 60,
    tol: float = 1e-11,
) -> ReducedFunctionalSample:
    """Evaluate the Lyapunov-Schmidt reduced functional at kernel coordinates.

    Fixes the kernel component of u - v to `coords` and solves the bordered
    stationarity system for the orthogonal completion by Newton iteration,
    so the gradient of the quotient at the returned point lies in the kernel.
    """
    coords = np.atleast_1d(np.asarray(coords, dtype=float))
    l = len(v.kernel_basis)
    if l == 0:
        raise ValueError("critical point has trivial kernel; reduction is degenerate-free")
    if coords.shape != (l,):
        raise ValueError(f"expected {l} kernel coordinates, got {coords.shape}")
    disc = spec.disc
    qw = disc.quad_weights
    A, B, q = spec.A, spec.B, spec.q
    L = disc.laplace_matrix
    n = disc.n
    K = np.column_stack([f.values for f in v.kernel_basis])  # n x l

    u = v.u.values + K @ coords
    theta = 2.0 * v.value
    mu = np.zeros(l)

    def residual(u, theta, mu):
        r1 = 2.0 * A * (L @ u) + 2.0 * B * u - theta * fn.power_qm1(u, q) - K @ mu
        r2 = K.T @ (qw * (u - v.u.values)) - coords
        r3 = float(np.sum(qw * np.abs(u) ** q)) - 1.0
        return r1, r2, r3

    converged = False
    r1, r2, r3 = residual(u, theta, mu)
    norm0 = math.hypot(_l2_norm(spec, r1), math.hypot(np.linalg.norm(r2), abs(r3)))
    best_norm = norm0
    for _ in range(newton_max):
        norm = math.hypot(_l2_norm(spec, r1), math.hypot(np.linalg.norm(r2), abs(r3)))
        if norm < tol:
            converged = True
            break
        if not math.isfinite(norm) or norm > 100.0 * max(best_norm, 1.0):
            break
        best_norm = min(best_norm, norm)
        J = np.zeros((n + 1 + l, n + 1 + l))
        J[:n, :n] = 2.0 * A * L + 2.0 * B * np.eye(n) - theta * (q - 1.0) * np.diag(
            np.abs(u) ** (q - 2.0)
        )
        J[:n, n] = -fn.power_qm1(u, q)
        J[:n, n + 1 :] = -K
        J[n, :n] = q * qw * fn.power_qm1(u, q)
        J[n + 1 :, :n] = K.T * qw[None, :]
        rhs = np.concatenate([r1, [r3], r2])
        try:
            step = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, rhs, rcond=None)
        u = u - step[:n]
        theta = theta - step[n]
        mu = mu - step[n + 1 :]
        r1, r2, r3 = residual(u, theta, mu)
    uf = DiscreteFunction(disc, u)
    value = fn.quotient(spec, uf) if converged else math.nan
    return ReducedFunctionalSample(
        coords=coords,
        value=value,
        minimizer_perp=uf,
        inner_converged=converged,
    )
