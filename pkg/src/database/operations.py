"""
Experiment Store Operations
Simpan dan baca power study (p-value matrix + unit logs)

"""

import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
from sqlalchemy import desc
from sqlalchemy.orm import Session

from src.core.errors import InvalidInputError
from .models import PowerRun, PowerStudy, UnitLogRecord

logger = logging.getLogger(__name__)


def _clean(value: Any) -> Optional[float]:
    """NaN tidak valid di JSON, simpan sebagai None"""
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


class ExperimentStore:

    def __init__(self, db: Session):
        self.db = db

    def save_power_report(self, report, label: str = "", config: Optional[Dict[str, Any]] = None) -> int:
        """
        Persist PowerReport: satu study, satu PowerRun per data set, unit logs per run

        Args:
            report: simulator.experiment.PowerReport
            label: Free-form study label
            config: Experiment/tracker settings as JSON-ready dict

        Returns:
            study_id
        """
        study = PowerStudy(
            label=label,
            config=config or {},
            statistics=list(report.matrix.columns),
            alpha=report.alpha,
        )
        self.db.add(study)
        self.db.flush()

        for data_set, (index, row) in enumerate(report.matrix.iterrows(), start=1):
            run = report.runs[data_set - 1] if data_set - 1 < len(report.runs) else None
            self.db.add(PowerRun(
                study_id=study.study_id,
                data_set=data_set,
                seed=str(run.seed) if run else None,
                status=run.status if run else "ok",
                p_values={name: _clean(row[name]) for name in report.matrix.columns},
                error=run.error if run else None,
            ))
            if run is not None:
                self.save_unit_logs(study.study_id, data_set, run, commit=False)

        self.db.commit()
        self.db.refresh(study)
        logger.info(f"Saved power study {study.study_id} ({len(report.matrix)} data sets)")
        return study.study_id

    def save_unit_logs(self, study_id: int, data_set: int, run, commit: bool = True) -> int:
        """Ringkasan UnitLog per unit; returns jumlah row"""
        frame = run.logs_frame()
        for record in frame.to_dict("records"):
            self.db.add(UnitLogRecord(
                study_id=study_id,
                data_set=data_set,
                unit_id=record["unit"],
                assignment_index=int(record["assignment_index"]),
                treatment=record["treatment"],
                ad_count=int(record["ads"]),
                reload_count=int(record["reloads"]),
                ticks=int(record["ticks"]),
                failed=bool(record["failed"]),
            ))
        if commit:
            self.db.commit()
        return len(frame)

    def get_study(self, study_id: int) -> PowerStudy:
        study = self.db.query(PowerStudy).filter(PowerStudy.study_id == study_id).first()
        if study is None:
            raise InvalidInputError(f"Unknown study id {study_id}")
        return study

    def load_power_matrix(self, study_id: int) -> Tuple[pd.DataFrame, float]:
        """
        Returns:
            (matrix with one row per data set, alpha)
        """
        study = self.get_study(study_id)
        rows = [
            {name: (run.p_values or {}).get(name) for name in study.statistics}
            for run in study.runs
        ]
        index = [f"data set {run.data_set}" for run in study.runs]
        matrix = pd.DataFrame(rows, index=index, columns=list(study.statistics), dtype=float)
        return matrix, study.alpha

    def load_unit_logs(self, study_id: int) -> pd.DataFrame:
        records = (
            self.db.query(UnitLogRecord)
            .filter(UnitLogRecord.study_id == study_id)
            .order_by(UnitLogRecord.data_set, UnitLogRecord.assignment_index)
            .all()
        )
        return pd.DataFrame([
            {
                "data_set": r.data_set,
                "unit": r.unit_id,
                "assignment_index": r.assignment_index,
                "treatment": r.treatment,
                "ads": r.ad_count,
                "reloads": r.reload_count,
                "ticks": r.ticks,
                "failed": r.failed,
            }
            for r in records
        ])

    def list_studies(self) -> List[Dict[str, Any]]:
        """
        Semua study, terbaru dulu
        """
        studies = self.db.query(PowerStudy).order_by(desc(PowerStudy.study_id)).all()
        return [
            {
                "study_id": s.study_id,
                "label": s.label,
                "created_at": s.created_at.isoformat() if s.created_at else None,
                "statistics": list(s.statistics or []),
                "data_sets": len(s.runs),
                "alpha": s.alpha,
            }
            for s in studies
        ]
