"""Quadrature, differentiation and weighted Laplacians on a ManifoldModel.

The sphere-radial problem is mapped by x = cos t onto (-1, 1), where the
volume density becomes the Gegenbauer weight (1-x^2)^{(d-2)/2}.  Nodes and
weights come from the Gauss-Jacobi rule for that weight, so the vanishing
boundary density is handled analytically.  In the x variable the radial
Laplacian reads

    -Delta f = d*x*f_x - (1 - x^2)*f_xx,

with polynomial eigenfunctions (Gegenbauer) and eigenvalues k*(k+d-1).
The circle factor of the product model uses uniform nodes and Fourier
differentiation; there -Delta f = -f''.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from .geometry import ManifoldModel, ModelKind, unit_sphere_volume

MIN_NODES = 16


class DiscretizationMismatchError(ValueError):
    """Raised when functions built on different discretizations are mixed."""


def _barycentric_diff_matrix(x: np.ndarray) -> np.ndarray:
    """First-derivative collocation matrix on arbitrary distinct nodes.

    Barycentric weights are accumulated in log scale; only their ratios
    enter the matrix, so the overall normalization is irrelevant.
    """
    n = len(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    logw = -np.sum(np.log(np.abs(diff)), axis=1)
    sgn = np.prod(np.sign(diff), axis=1)
    logw -= logw.max()
    w = sgn * np.exp(logw)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def _fourier_matrices(n: int, length: float) -> tuple[np.ndarray, np.ndarray]:
    """Fourier differentiation matrices D and D2 for period `length`, n even."""
    h = 2.0 * math.pi / n
    k = np.arange(1, n)
    col_d = np.zeros(n)
    col_d[1:] = 0.5 * (-1.0) ** k / np.tan(k * h / 2.0)
    col_d2 = np.zeros(n)
    col_d2[0] = -math.pi**2 / (3.0 * h**2) - 1.0 / 6.0
    col_d2[1:] = -((-1.0) ** k) / (2.0 * np.sin(k * h / 2.0) ** 2)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    D = col_d[idx]
    D2 = col_d2[idx]
    scale = 2.0 * math.pi / length
    return scale * D, scale**2 * D2


@dataclass(frozen=True)
class Discretization:
    model: ManifoldModel
    n: int
    nodes: np.ndarray  # collocation points in [0, L]
    quad_weights: np.ndarray  # include the volume density
    diff_matrix: np.ndarray  # d/dt collocation operator
    laplace_matrix: np.ndarray  # -Delta on the reduced class

    def integrate(self, values: np.ndarray) -> float:
        return float(self.quad_weights @ values)


@dataclass
class DiscreteFunction:
    disc: Discretization
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.disc.n,):
            raise ValueError(
                f"expected {self.disc.n} values, got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite function values")

    @staticmethod
    def from_callable(disc: Discretization, f) -> "DiscreteFunction":
        return DiscreteFunction(disc, np.asarray(f(disc.nodes), dtype=float))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["node", "value"])
        for t, v in zip(self.nodes_repr(), self.values):
            writer.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    def nodes_repr(self):
        return self.disc.nodes

    def to_json(self) -> str:
        return json.dumps({"nodes": self.disc.nodes.tolist(), "values": self.values.tolist()})

    @staticmethod
    def from_csv(disc: Discretization, text: str) -> "DiscreteFunction":
        rows = list(csv.reader(io.StringIO(text)))
        values = np.array([float(r[1]) for r in rows[1:]])
        return DiscreteFunction(disc, values)


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    eigenfunctions: list
    residuals: np.ndarray = field(default_factory=lambda: np.array([]))

    def to_json(self) -> str:
        return json.dumps(
            {"eigenvalues": self.eigenvalues.tolist(), "residuals": self.residuals.tolist()}
        )


def build(model: ManifoldModel, n: int) -> Discretization:
    if n < MIN_NODES:
        raise ValueError(f"need at least {MIN_NODES} nodes, got {n}")
    d = model.dim
    if model.kind is ModelKind.SPHERE_RADIAL:
        a = (d - 2) / 2.0
        x, wq = roots_jacobi(n, a, a)
        # ascending t = arccos(x) means descending x
        x = x[::-1].copy()
        wq = wq[::-1].copy()
        t = np.arccos(x)
        qw = unit_sphere_volume(d - 1) * wq
        Dx = _barycentric_diff_matrix(x)
        Dt = -np.sin(t)[:, None] * Dx
        L = (d * x)[:, None] * Dx - (1.0 - x**2)[:, None] * (Dx @ Dx)
        # push the row sums to zero so constants are annihilated to rounding
        ones = np.ones(n)
        for _ in range(2):
            L[np.arange(n), np.arange(n)] -= L @ ones
        return Discretization(model, n, t, qw, Dt, L)
    if n % 2 != 0:
        raise ValueError("periodic discretization requires even n")
    t = model.length * np.arange(n) / n
    qw = np.full(n, unit_sphere_volume(d - 1) * model.length / n)
    D, D2 = _fourier_matrices(n, model.length)
    return Discretization(model, n, t, qw, D, -D2)


def _check_same(disc: Discretization, *funcs: DiscreteFunction) -> None:
    for f in funcs:
        if f.disc is not disc:
            raise DiscretizationMismatchError("function built on a different discretization")


def inner(disc: Discretization, f: DiscreteFunction, g: DiscreteFunction) -> float:
    """L^2 pairing against the manifold volume."""
    _check_same(disc, f, g)
    return float(np.sum(disc.quad_weights * f.values * g.values))


def lp_norm(disc: Discretization, f: DiscreteFunction, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    _check_same(disc, f)
    return float(np.sum(disc.quad_weights * np.abs(f.values) ** p) ** (1.0 / p))


def gradient_norm_sq(disc: Discretization, f: DiscreteFunction) -> float:
    _check_same(disc, f)
    df = disc.diff_matrix @ f.values
    return float(np.sum(disc.quad_weights * df * df))


def laplace_eigenpairs(disc: Discretization, k: int) -> SpectralData:
    """k smallest eigenpairs of -Delta, quadrature-orthonormal eigenfunctions."""
    if not 1 <= k <= disc.n:
        raise ValueError(f"k must be in [1, {disc.n}], got {k}")
    sw = np.sqrt(disc.quad_weights)
    S = (sw[:, None] * disc.laplace_matrix) / sw[None, :]
    S = 0.5 * (S + S.T)
    evals, vecs = np.linalg.eigh(S)
    evals = evals[:k]
    funcs = []
    residuals = np.empty(k)
    for i in range(k):
        phi = vecs[:, i] / sw
        if phi[np.argmax(np.abs(phi))] < 0:
            phi = -phi
        funcs.append(DiscreteFunction(disc, phi))
        r = disc.laplace_matrix @ phi - evals[i] * phi
        residuals[i] = math.sqrt(float(np.sum(disc.quad_weights * r * r)))
    scale = max(1.0, abs(evals[-1]))
    if np.any(residuals > 1e-6 * scale):
        raise RuntimeError(
            f"eigen-solve residuals too large: {residuals.max():.3e} (scale {scale:.3e})"
        )
    return SpectralData(np.asarray(evals), funcs, residuals)
