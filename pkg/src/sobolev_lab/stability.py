"""Deficit/distance experiments along rays from extremal functions.

The central objects are one-parameter rays u_eps = base + eps * direction
leaving a normalized extremal, the Sobolev deficit Q(u) - 1, and the
normalized W^{1,2} distance to a family of extremals.  A log-log fit of
deficit against distance estimates the stability exponent: 2 for
non-degenerate specs, 4 in the degenerate cases (sphere sub-critical,
product critical).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .discretization import (
    DiscreteFunction,
    Discretization,
    gradient_norm_sq,
    inner,
    laplace_eigenpairs,
    lp_norm,
)
from .functionals import QuotientSpec
from .geometry import ModelKind
from .optimize import CriticalPoint, reduced_functional

EXTREMAL_FAMILIES = ("constants", "constants_and_scalings", "bubbles_and_constants")
NOISE_FLOOR_FACTOR = 100.0
CLASSIFY_MARGIN = 0.5


def bubble(disc: Discretization, a: float, b: float) -> DiscreteFunction:
    """Spherical extremal a*(1 - b*cos t)^{(2-d)/2}, pole frozen at t = 0."""
    if disc.model.kind is not ModelKind.SPHERE_RADIAL:
        raise ValueError("bubbles are defined on the sphere-radial model only")
    if a == 0:
        raise ValueError("amplitude a must be nonzero")
    if not 0.0 < b < 1.0:
        raise ValueError(f"b must lie in (0, 1), got {b}")
    d = disc.model.dim
    vals = a * (1.0 - b * np.cos(disc.nodes)) ** ((2.0 - d) / 2.0)
    return DiscreteFunction(disc, vals)


def deficit(spec: QuotientSpec, u: DiscreteFunction) -> float:
    """Sobolev deficit Q(u) - 1 via the cancellation-stable formula."""
    return fn.deficit(spec, u)


def w12_norm_sq(disc: Discretization, u: DiscreteFunction) -> float:
    return gradient_norm_sq(disc, u) + inner(disc, u, u)


def _distance_to_constants(disc: Discretization, u: DiscreteFunction) -> float:
    # closed-form projection: the optimal constant is the volume average
    vol = disc.model.total_volume
    c = disc.integrate(u.values) / vol
    diff = DiscreteFunction(disc, u.values - c)
    return math.sqrt(w12_norm_sq(disc, diff) / w12_norm_sq(disc, u))


def _distance_to_bubbles(disc: Discretization, u: DiscreteFunction) -> float:
    # W^{1,2} least squares: closed form in a for fixed b, golden section in b
    norm_u = math.sqrt(w12_norm_sq(disc, u))

    def dist_at(b: float) -> float:
        g = bubble(disc, 1.0, b)
        gg = w12_norm_sq(disc, g)
        ug = gradient_norm_sq_pair(disc, u, g) + inner(disc, u, g)
        a = ug / gg
        diff = DiscreteFunction(disc, u.values - a * g.values)
        return math.sqrt(max(w12_norm_sq(disc, diff), 0.0)) / norm_u

    lo, hi = 1e-6, 1.0 - 1e-6
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = dist_at(x1), dist_at(x2)
    for _ in range(80):
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = dist_at(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = dist_at(x2)
    return min(f1, f2)


def gradient_norm_sq_pair(disc: Discretization, f: DiscreteFunction, g: DiscreteFunction) -> float:
    df = disc.diff_matrix @ f.values
    dg = disc.diff_matrix @ g.values
    return float(np.sum(disc.quad_weights * df * dg))


def distance_to_extremals(u: DiscreteFunction, family: str) -> float:
    """Normalized W^{1,2} distance to the chosen extremal family."""
    if not np.any(u.values):
        raise ValueError("function is identically zero")
    if family not in EXTREMAL_FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {EXTREMAL_FAMILIES}")
    disc = u.disc
    d_const = _distance_to_constants(disc, u)
    if family in ("constants", "constants_and_scalings"):
        return d_const
    return min(d_const, _distance_to_bubbles(disc, u))


@dataclass
class Ray:
    base: DiscreteFunction  # normalized extremal
    direction: DiscreteFunction  # tangent, unit W^{1,2}
    epsilons: np.ndarray
    signed: bool = False

    def __post_init__(self):
        self.epsilons = np.asarray(self.epsilons, dtype=float)
        if np.any(self.epsilons <= 0) or np.any(np.diff(self.epsilons) <= 0):
            raise ValueError("epsilons must be positive and strictly increasing")


def default_epsilons(m: int = 25, lo: float = 1e-3, hi: float = 1e-1) -> np.ndarray:
    return np.geomspace(lo, hi, m)


def ray_from_constants(
    spec: QuotientSpec, mode_index: int = 1, epsilons: np.ndarray | None = None
) -> Ray:
    """Ray leaving the normalized constant along a Laplace eigenmode."""
    disc = spec.disc
    base = fn.normalize(DiscreteFunction(disc, np.ones(disc.n)), spec.q)
    spec_data = laplace_eigenpairs(disc, mode_index + 1)
    phi = spec_data.eigenfunctions[mode_index]
    phi = fn.project_tangent(spec, base, phi)
    scale = math.sqrt(w12_norm_sq(disc, phi))
    direction = DiscreteFunction(disc, phi.values / scale)
    if epsilons is None:
        epsilons = default_epsilons()
    return Ray(base=base, direction=direction, epsilons=epsilons)


def fit_loglog(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log y against log x, with its standard error."""
    lx, ly = np.log(x), np.log(y)
    m = len(lx)
    if m < 2:
        return math.nan, math.nan
    coeffs, residuals, *_ = np.polyfit(lx, ly, 1, full=True)
    slope = float(coeffs[0])
    if m > 2 and len(residuals):
        var = float(residuals[0]) / (m - 2)
        stderr = math.sqrt(var / float(np.sum((lx - lx.mean()) ** 2)))
    else:
        stderr = 0.0
    return slope, stderr


@dataclass
class ExperimentReport:
    rows: list  # per-epsilon dicts: epsilon, deficit, distance, q_value, in_fit_window
    fitted_slope: float
    slope_stderr: float
    fit_window: tuple
    classification: str  # degenerate | nondegenerate | inconclusive
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": 1,
                "rows": self.rows,
                "fitted_slope": self.fitted_slope,
                "slope_stderr": self.slope_stderr,
                "fit_window": list(self.fit_window),
                "classification": self.classification,
                "metadata": self.metadata,
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["epsilon", "deficit", "distance", "q_value", "in_fit_window"])
        for r in self.rows:
            writer.writerow(
                [repr(r["epsilon"]), repr(r["deficit"]), repr(r["distance"]),
                 repr(r["q_value"]), int(r["in_fit_window"])]
            )
        return buf.getvalue()

    def plot_data(self) -> str:
        lines = [
            f"{math.log(r['distance'])!r} {math.log(r['deficit'])!r}"
            for r in self.rows
            if r["in_fit_window"] and r["deficit"] > 0
        ]
        return "\n".join(lines) + "\n"


def _classify_slope(slope: float) -> str:
    if math.isnan(slope):
        return "inconclusive"
    if abs(slope - 2.0) <= CLASSIFY_MARGIN:
        return "nondegenerate"
    if slope > 2.0 + CLASSIFY_MARGIN:
        return "degenerate"
    return "inconclusive"


def ray_scan(spec: QuotientSpec, ray: Ray, family: str = "constants") -> ExperimentReport:
    """Scan deficit and distance along a ray, fitting the stability exponent.

    The fit window excludes points whose deficit sits below 100x the
    estimated quadrature noise floor (the deficit of the base extremal).
    """
    disc = spec.disc
    tangency = abs(
        float(np.sum(disc.quad_weights * fn.power_qm1(ray.base.values, spec.q) * ray.direction.values))
    )
    if tangency > 1e-10:
        raise ValueError(f"ray direction is not tangent at base (pairing {tangency:.3e})")
    d0 = abs(deficit(spec, ray.base))
    floor = NOISE_FLOOR_FACTOR * max(d0, 1e-15)
    rows = []
    for eps in ray.epsilons:
        u = DiscreteFunction(disc, ray.base.values + eps * ray.direction.values)
        dfc = deficit(spec, u)
        dst = distance_to_extremals(u, family)
        rows.append(
            {
                "epsilon": float(eps),
                "deficit": float(dfc),
                "distance": float(dst),
                "q_value": float(dfc + 1.0),
                "in_fit_window": bool(dfc > floor and dst > 0),
            }
        )
    window = [r for r in rows if r["in_fit_window"]]
    if len(window) < 5:
        for r in rows:
            r["in_fit_window"] = False
        return ExperimentReport(
            rows=rows,
            fitted_slope=math.nan,
            slope_stderr=math.nan,
            fit_window=(math.nan, math.nan),
            classification="inconclusive",
            metadata=_scan_metadata(spec, family, floor),
        )
    x = np.array([r["distance"] for r in window])
    y = np.array([r["deficit"] for r in window])
    slope, stderr = fit_loglog(x, y)
    return ExperimentReport(
        rows=rows,
        fitted_slope=slope,
        slope_stderr=stderr,
        fit_window=(window[0]["epsilon"], window[-1]["epsilon"]),
        classification=_classify_slope(slope),
        metadata=_scan_metadata(spec, family, floor),
    )


def _scan_metadata(spec: QuotientSpec, family: str, floor: float) -> dict:
    model = spec.disc.model
    return {
        "model": model.kind.value,
        "d": model.dim,
        "q": spec.q,
        "A": spec.A,
        "B": spec.B,
        "n": spec.disc.n,
        "family": family,
        "noise_floor": floor,
    }


def lojasiewicz_estimate(
    spec: QuotientSpec,
    v: CriticalPoint,
    sampling: np.ndarray | None = None,
    direction: int = 0,
) -> float:
    """Empirical Lojasiewicz exponent 2 + gamma through the reduced functional.

    Samples the reduced functional at +/-t along one kernel direction and
    fits log(q(t) - q(0)) against log t.  Returns NaN when fewer than five
    samples converge.
    """
    if v.kernel_dim < 1:
        raise ValueError("critical point has no kernel; Lojasiewicz reduction not applicable")
    if not 0 <= direction < v.kernel_dim:
        raise ValueError(f"direction must be in [0, {v.kernel_dim}), got {direction}")
    if sampling is None:
        sampling = np.geomspace(0.02, 0.2, 10)
    ts, gaps = [], []
    for t in np.asarray(sampling, dtype=float):
        for sign in (+1.0, -1.0):
            coords = np.zeros(v.kernel_dim)
            coords[direction] = sign * t
            sample = reduced_functional(spec, v, coords)
            if not sample.inner_converged:
                continue
            gap = sample.value - v.value
            if gap > 0:
                ts.append(t)
                gaps.append(gap)
    if len(ts) < 5:
        return math.nan
    slope, _ = fit_loglog(np.array(ts), np.array(gaps))
    return slope


def classify(spec: QuotientSpec, model, reports) -> str:
    """Aggregate fitted exponents into a degeneracy verdict.

    `reports` may mix ExperimentReport objects and raw exponent floats.
    """
    exponents = []
    for r in reports:
        if isinstance(r, ExperimentReport):
            exponents.append(r.fitted_slope)
        else:
            exponents.append(float(r))
    exponents = [e for e in exponents if not math.isnan(e)]
    if not exponents:
        return "inconclusive"
    verdicts = {_classify_slope(e) for e in exponents}
    if verdicts == {"degenerate"}:
        return "degenerate"
    if verdicts == {"nondegenerate"}:
        return "nondegenerate"
    return "inconclusive"
