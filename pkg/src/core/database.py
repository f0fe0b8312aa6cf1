"""
This module defines the SQLAlchemy configuration and session management for
the parameter preset library.

The library lives in an in-memory SQLite database. It is created and seeded
from ``src/data/presets.csv`` the first time a session is requested, so every
process starts from the published parameter table and custom presets added
during a run never leak into the next one.
"""
import csv
import math
from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker
from sqlalchemy.pool import StaticPool

PRESET_DATABASE_URL = "sqlite:///:memory:"
PRESET_CSV = Path(__file__).resolve().parent.parent / "data" / "presets.csv"

# A single shared connection keeps the in-memory database alive for the
# lifetime of the engine; `check_same_thread=False` lets it be used from any thread.
preset_engine = create_engine(
    PRESET_DATABASE_URL,
    connect_args={"check_same_thread": False},
    poolclass=StaticPool,
)

PresetSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=preset_engine)

Base = declarative_base()

_seeded = False


def create_all_tables(engine):
    """
    Creates all database tables defined by the models that inherit from `Base`.

    Args:
        engine: The SQLAlchemy engine to which the tables should be bound.
    """
    Base.metadata.create_all(bind=engine)


def _parse_ratio(text: str) -> float:
    value = float(text)
    if not (value > 0 or math.isinf(value)):
        raise ValueError(f"preset ratios must be positive or inf, got {text!r}")
    return value


def seed_presets(db, csv_path: Path = PRESET_CSV) -> int:
    """
    Reads the preset CSV file and adds one row per preset.

    Args:
        db: An open session.
        csv_path (Path): The CSV file with columns name, label, g_over_kappa,
                         g_over_gamma1, g_over_gamma_phi and reference.

    Returns:
        int: Number of presets added.
    """
    from ..models.preset import ParameterPreset

    added = 0
    with open(csv_path, newline="") as f:
        for row in csv.DictReader(f):
            db.add(ParameterPreset(
                name=row["name"],
                label=row["label"],
                g_over_kappa=_parse_ratio(row["g_over_kappa"]),
                g_over_gamma1=_parse_ratio(row["g_over_gamma1"]),
                g_over_gamma_phi=_parse_ratio(row["g_over_gamma_phi"]),
                reference=row["reference"],
            ))
            added += 1
    db.commit()
    return added


def init_preset_db():
    """Creates the preset table and seeds it, once per process."""
    global _seeded
    if _seeded:
        return
    create_all_tables(preset_engine)
    db = PresetSessionLocal()
    try:
        seed_presets(db)
    finally:
        db.close()
    _seeded = True


def get_preset_db():
    """
    A generator function that yields a new SQLAlchemy Session for the preset library.

    The `yield` provides the session to the caller, and the `finally` block
    ensures that the session is always closed, even if errors occur.
    """
    init_preset_db()
    db = PresetSessionLocal()
    try:
        yield db
    finally:
        db.close()
