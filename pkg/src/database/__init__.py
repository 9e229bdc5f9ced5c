"""
Database package untuk experiment store
Menyediakan models dan operations untuk PostgreSQL/SQLite

"""

from .base import Base, engine, SessionLocal, init_db, make_session_factory
from .models import PowerStudy, PowerRun, UnitLogRecord
from .operations import ExperimentStore

__all__ = [
    'Base',
    'engine',
    'SessionLocal',
    'init_db',
    'make_session_factory',
    'PowerStudy',
    'PowerRun',
    'UnitLogRecord',
    'ExperimentStore'
]
