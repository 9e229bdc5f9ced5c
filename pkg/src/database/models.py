"""
SQLAlchemy Models untuk experiment store
Power studies, satu row per data set, dan ringkasan log per unit
SQLite fallback: uses JSON instead of JSONB

"""

from sqlalchemy import Boolean, Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy import JSON
from sqlalchemy.dialects.postgresql import JSONB
from sqlalchemy.orm import relationship
from sqlalchemy.sql import func

from .base import Base, engine

# Use JSONB for PostgreSQL, JSON for SQLite
if engine.dialect.name == 'postgresql':
    JSONType = JSONB
else:
    JSONType = JSON  # SQLite fallback


class PowerStudy(Base):
    __tablename__ = "power_studies"

    study_id = Column(Integer, primary_key=True, autoincrement=True)
    label = Column(String(100))
    created_at = Column(DateTime, default=func.now())
    config = Column(JSONType, default=dict)  # ExperimentConfig + tracker spec
    statistics = Column(JSONType, default=list)  # column order of the matrix
    alpha = Column(Float, default=0.05)

    runs = relationship("PowerRun", back_populates="study", cascade="all, delete-orphan", order_by="PowerRun.data_set")
    unit_logs = relationship("UnitLogRecord", back_populates="study", cascade="all, delete-orphan")

    def __repr__(self):
        return f"<PowerStudy(study_id={self.study_id}, label={self.label})>"


class PowerRun(Base):
    __tablename__ = "power_runs"

    run_id = Column(Integer, primary_key=True, autoincrement=True)
    study_id = Column(Integer, ForeignKey("power_studies.study_id", ondelete="CASCADE"), nullable=False)
    data_set = Column(Integer, nullable=False)  # 1-based row of the matrix
    seed = Column(String(40))  # derived seeds exceed 64-bit signed range
    status = Column(String(20), default="ok")
    p_values = Column(JSONType, default=dict)  # statistic -> p (None when missing)
    error = Column(Text)

    study = relationship("PowerStudy", back_populates="runs")

    def __repr__(self):
        return f"<PowerRun(study_id={self.study_id}, data_set={self.data_set}, status={self.status})>"


class UnitLogRecord(Base):
    __tablename__ = "unit_logs"

    log_id = Column(Integer, primary_key=True, autoincrement=True)
    study_id = Column(Integer, ForeignKey("power_studies.study_id", ondelete="CASCADE"), nullable=False)
    data_set = Column(Integer, nullable=False)
    unit_id = Column(String(50), nullable=False)
    assignment_index = Column(Integer, nullable=False)
    treatment = Column(String(50))
    ad_count = Column(Integer, default=0)
    reload_count = Column(Integer, default=0)
    ticks = Column(Integer, default=0)
    failed = Column(Boolean, default=False)

    study = relationship("PowerStudy", back_populates="unit_logs")

    def __repr__(self):
        return f"<UnitLogRecord(unit_id={self.unit_id}, index={self.assignment_index}, ads={self.ad_count})>"
