import logging
import math
import os

import pytest
from hypothesis import HealthCheck, settings
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from src.core.database import create_all_tables, seed_presets
from src.core.units import UnitSystem
from src.models.hamiltonian import SystemParams
from src.models.hilbert import Truncation
from src.models.preset import ParameterPreset  # noqa: F401  (registers the table)

settings.register_profile("fast", max_examples=25, deadline=None)
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))

G = 2 * math.pi * 100e6


@pytest.fixture(autouse=True)
def propagate_package_logs():
    """Lets caplog see package records even after the CLI installed its own handler."""
    yield
    package = logging.getLogger("src")
    package.propagate = True
    package.setLevel(logging.NOTSET)


@pytest.fixture
def units():
    """Default unit system: t/t_R with g/2pi = 100 MHz."""
    return UnitSystem()


@pytest.fixture
def preset_session():
    """A private, freshly seeded preset library, so custom presets do not leak between tests."""
    engine = create_engine("sqlite:///:memory:", connect_args={"check_same_thread": False}, poolclass=StaticPool)
    create_all_tables(engine)
    db = sessionmaker(autocommit=False, autoflush=False, bind=engine)()
    seed_presets(db)
    yield db
    db.close()


@pytest.fixture
def small_trunc():
    """A small truncation for exact-diagonalization style checks."""
    return Truncation(8)


@pytest.fixture
def cqed2_params():
    """Circuit QED (2) rates at n̄ = 10, resonant, rotating frame."""
    return SystemParams.from_ratios(G, g_over_kappa=840, g_over_gamma1=106, g_over_gamma_phi=215, nbar=10)
