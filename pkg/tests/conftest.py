import numpy as np
import pytest

from sobolev_lab import constants as cst
from sobolev_lab.discretization import build
from sobolev_lab.functionals import QuotientSpec
from sobolev_lab.geometry import make_product, make_sphere


@pytest.fixture(scope="session")
def sphere3():
    return make_sphere(3)


@pytest.fixture(scope="session")
def product4():
    return make_product(4)


@pytest.fixture(scope="session")
def sphere3_disc(sphere3):
    return build(sphere3, 64)


@pytest.fixture(scope="session")
def product4_disc(product4):
    return build(product4, 64)


@pytest.fixture(scope="session")
def subcritical_spec(sphere3_disc):
    """Sphere spec (A_opt, beta-compatible B) at q = 4 < 2* = 6; degenerate."""
    model = sphere3_disc.model
    q = 4.0
    return QuotientSpec(
        A=cst.a_opt_sphere_closed_form(3, q),
        B=model.total_volume ** (2.0 / q - 1.0),
        q=q,
        disc=sphere3_disc,
    )


@pytest.fixture(scope="session")
def critical_sphere_spec(sphere3_disc):
    """Sphere spec at the critical exponent with the Euclidean constant."""
    return QuotientSpec(
        A=cst.euclidean_sobolev_constant(3) ** 2,
        B=cst.beta_constant(sphere3_disc.model),
        q=6.0,
        disc=sphere3_disc,
    )


@pytest.fixture(scope="session")
def critical_product_spec(product4_disc):
    return QuotientSpec(
        A=cst.a_opt_product_critical(4),
        B=cst.beta_constant(product4_disc.model),
        q=4.0,
        disc=product4_disc,
    )


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.Philox(12345))
