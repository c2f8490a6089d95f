import numpy as np
import pytest

from heatchain import model as mdl


@pytest.fixture
def harmonic_n2():
    return mdl.validate_model(
        n=2, d=1,
        u1=mdl.PotentialSpec.from_coeffs(a2=1.0),
        u2=mdl.PotentialSpec.from_coeffs(a2=1.0),
        lam=1.0, gamma=1.0, t1=2.0, tn=1.0,
    )


@pytest.fixture
def harmonic_n1():
    return mdl.validate_model(
        n=1, d=1,
        u1=mdl.PotentialSpec.from_coeffs(a2=1.0),
        u2=None, lam=1.0, gamma=1.0, t1=2.0, tn=1.0,
    )


@pytest.fixture
def quartic_n1():
    return mdl.validate_model(
        n=1, d=1,
        u1=mdl.PotentialSpec.from_coeffs(a2=1.0, a4=1.0),
        u2=None, lam=1.0, gamma=1.0, t1=2.0, tn=1.0,
    )


@pytest.fixture
def anharmonic_n3():
    return mdl.validate_model(
        n=3, d=2,
        u1=mdl.PotentialSpec.from_coeffs(a2=0.5),
        u2=mdl.PotentialSpec.from_coeffs(a2=1.0, a4=0.3),
        lam=0.8, gamma=1.2, t1=2.0, tn=1.0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
