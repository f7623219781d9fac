import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from sobolev_lab import functionals as fn
from sobolev_lab.discretization import DiscreteFunction, laplace_eigenpairs
from sobolev_lab.functionals import (
    MixedSignWarning,
    QuotientSpec,
    sobolev_conjugate,
)


def test_sobolev_conjugate_values():
    assert sobolev_conjugate(3) == pytest.approx(6.0)
    assert sobolev_conjugate(4) == pytest.approx(4.0)
    assert sobolev_conjugate(6) == pytest.approx(3.0)


def test_spec_validation(sphere3_disc):
    with pytest.raises(ValueError):
        QuotientSpec(A=-1.0, B=1.0, q=4.0, disc=sphere3_disc)
    with pytest.raises(ValueError):
        QuotientSpec(A=1.0, B=0.0, q=4.0, disc=sphere3_disc)
    with pytest.raises(ValueError):
        QuotientSpec(A=1.0, B=1.0, q=2.0, disc=sphere3_disc)
    with pytest.raises(ValueError):
        QuotientSpec(A=1.0, B=1.0, q=6.5, disc=sphere3_disc)  # above 2* = 6


def test_quotient_of_constant_is_one(subcritical_spec):
    # with A = A_opt and B = Vol^{2/q-1} the normalized constant has Q = 1
    disc = subcritical_spec.disc
    c = fn.normalize(DiscreteFunction(disc, np.ones(disc.n)), subcritical_spec.q)
    assert fn.quotient(subcritical_spec, c) == pytest.approx(1.0, abs=1e-13)
    assert abs(fn.deficit(subcritical_spec, c)) < 1e-13


def test_deficit_matches_quotient_minus_one(subcritical_spec, rng):
    disc = subcritical_spec.disc
    u = DiscreteFunction(disc, 1.0 + 0.1 * np.cos(disc.nodes))
    assert fn.deficit(subcritical_spec, u) == pytest.approx(
        fn.quotient(subcritical_spec, u) - 1.0, rel=1e-10
    )


@settings(max_examples=20, deadline=None)
@given(scale=hst.floats(min_value=1e-6, max_value=1e6))
def test_quotient_zero_homogeneity(subcritical_spec, scale):
    disc = subcritical_spec.disc
    base = 1.0 + 0.3 * np.cos(disc.nodes)
    q1 = fn.quotient(subcritical_spec, DiscreteFunction(disc, base))
    q2 = fn.quotient(subcritical_spec, DiscreteFunction(disc, scale * base))
    assert q2 == pytest.approx(q1, rel=1e-12)


def test_zero_function_rejected(subcritical_spec):
    z = DiscreteFunction(subcritical_spec.disc, np.zeros(subcritical_spec.disc.n))
    with pytest.raises(ValueError):
        fn.quotient(subcritical_spec, z)
    with pytest.raises(ValueError):
        fn.normalize(z, 4.0)


def test_normalize_unit_norm_and_idempotence(subcritical_spec, rng):
    disc = subcritical_spec.disc
    u = DiscreteFunction(disc, 1.0 + 0.5 * rng.standard_normal(disc.n) ** 2)
    v = fn.normalize(u, 4.0)
    from sobolev_lab.discretization import lp_norm

    assert lp_norm(disc, v, 4.0) == pytest.approx(1.0, rel=1e-14)
    w = fn.normalize(v, 4.0)
    assert np.allclose(v.values, w.values, rtol=1e-14)


def test_normalize_flips_nonpositive(sphere3_disc):
    u = DiscreteFunction(sphere3_disc, -np.ones(sphere3_disc.n))
    v = fn.normalize(u, 4.0)
    assert np.all(v.values > 0)


def test_normalize_warns_on_mixed_sign(sphere3_disc):
    u = DiscreteFunction(sphere3_disc, np.cos(sphere3_disc.nodes))
    with pytest.warns(MixedSignWarning):
        fn.normalize(u, 4.0)


def test_check_normalized(subcritical_spec):
    disc = subcritical_spec.disc
    u = DiscreteFunction(disc, np.ones(disc.n))
    with pytest.raises(ValueError):
        fn.check_normalized(subcritical_spec, u)


def _normalized_sample(spec, rng, amplitude=0.3):
    disc = spec.disc
    sd = laplace_eigenpairs(disc, 6)
    phis = np.column_stack([f.values for f in sd.eigenfunctions])
    coeffs = rng.standard_normal(6) * amplitude * 0.5 ** np.arange(6)
    return fn.normalize(DiscreteFunction(disc, np.abs(1.0 + phis @ coeffs)), spec.q)


def test_projection_annihilates_and_is_idempotent(subcritical_spec, rng):
    spec = subcritical_spec
    disc = spec.disc
    u = _normalized_sample(spec, rng)
    phi = DiscreteFunction(disc, rng.standard_normal(disc.n))
    p = fn.project_tangent(spec, u, phi)
    uq1 = fn.power_qm1(u.values, spec.q)
    pairing = float(np.sum(disc.quad_weights * uq1 * p.values))
    assert abs(pairing) < 1e-12
    p2 = fn.project_tangent(spec, u, p)
    assert np.allclose(p.values, p2.values, atol=1e-12)


def test_gradient_vanishes_at_constant(subcritical_spec):
    disc = subcritical_spec.disc
    c = fn.normalize(DiscreteFunction(disc, np.ones(disc.n)), subcritical_spec.q)
    g = fn.gradient(subcritical_spec, c)
    assert np.max(np.abs(g.values)) < 1e-10


def test_gradient_matches_finite_difference(subcritical_spec, rng):
    spec = subcritical_spec
    disc = spec.disc
    u = _normalized_sample(spec, rng)
    g = fn.gradient(spec, u)
    phi = np.cos(disc.nodes)
    pairing = float(np.sum(disc.quad_weights * g.values * phi))

    def q_at(eps):
        return fn.quotient(spec, DiscreteFunction(disc, u.values + eps * phi))

    fd = (q_at(5e-5) - q_at(-5e-5)) / 1e-4
    assert pairing == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_hessian_form_symmetric(subcritical_spec, rng):
    spec = subcritical_spec
    disc = spec.disc
    u = _normalized_sample(spec, rng)
    phi = DiscreteFunction(disc, rng.standard_normal(disc.n))
    eta = DiscreteFunction(disc, rng.standard_normal(disc.n))
    h1 = fn.hessian_form(spec, u, phi, eta)
    h2 = fn.hessian_form(spec, u, eta, phi)
    assert h1 == pytest.approx(h2, rel=1e-11)


def test_hessian_at_constant_closed_form(subcritical_spec):
    # at the normalized constant the tangent Hessian along the k-th mode is
    # 2 (q - 2) B (lambda_k / lambda_1 - 1) for A = (q-2)/lambda_1 * Vol^{2/q-1}
    spec = subcritical_spec
    disc = spec.disc
    c = fn.normalize(DiscreteFunction(disc, np.ones(disc.n)), spec.q)
    sd = laplace_eigenpairs(disc, 4)
    lam1 = sd.eigenvalues[1]
    for k in (1, 2, 3):
        phi = sd.eigenfunctions[k]
        got = fn.hessian_form(spec, c, phi, phi)
        # normalize by int phi^2 = 1
        want = 2.0 * (spec.q - 2.0) * spec.B * (sd.eigenvalues[k] / lam1 - 1.0)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-11)


def test_hessian_matrix_matches_form(subcritical_spec, rng):
    spec = subcritical_spec
    disc = spec.disc
    u = _normalized_sample(spec, rng)
    H = fn.hessian_matrix(spec, u)
    sw = np.sqrt(disc.quad_weights)
    phi = rng.standard_normal(disc.n)
    eta = rng.standard_normal(disc.n)
    quad = float((sw * phi) @ H @ (sw * eta))
    form = fn.hessian_form(
        spec, u, DiscreteFunction(disc, phi), DiscreteFunction(disc, eta)
    )
    assert quad == pytest.approx(form, rel=1e-9, abs=1e-11)


def test_tangent_frame_orthonormal_and_tangent(subcritical_spec, rng):
    spec = subcritical_spec
    u = _normalized_sample(spec, rng)
    Z = fn.tangent_frame(spec, u)
    n = spec.disc.n
    assert Z.shape == (n, n - 1)
    assert np.max(np.abs(Z.T @ Z - np.eye(n - 1))) < 1e-12
    z = np.sqrt(spec.disc.quad_weights) * fn.power_qm1(u.values, spec.q)
    assert np.max(np.abs(Z.T @ z)) < 1e-12 * np.linalg.norm(z)


def test_power_helpers():
    u = np.array([-2.0, 0.5, 3.0])
    assert np.allclose(fn.power_qm1(u, 4.0), np.abs(u) ** 2 * u)
    assert np.allclose(fn.power_qm2(u, 4.0), np.abs(u) ** 2)


def test_power_qm2_warns_near_zero():
    u = np.array([1.0, 1e-12, 1.0])
    with pytest.warns(fn.ConditioningWarning):
        fn.power_qm2(u, 2.5)
