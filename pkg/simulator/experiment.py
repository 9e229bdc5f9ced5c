"""
Experiment Runner
Random assignment, lockstep training/collection terhadap TrackerModel,
power evaluation (tabel p-value per data set) dan cross-unit probe

"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from simulator.tracker import TrackerModel, load_simulator_config
from src import config
from src.core.ad_statistics import UnitResponse, chi2_keyword_test, stat_kw, stat_prc, stat_sim
from src.core.errors import ContractError, InfoFlowError, InvalidInputError, TrackerFault
from src.core.file_formats import ExperimentConfig
from src.core.stats import ResponseVector, TestStatistic, bh_fdr, permutation_test

logger = logging.getLogger(__name__)

SUMMARY_ROW = "Number < 5%"
PROBE_COLUMNS = ["round", "condition", "unique_ads", "status"]


def load_experiment_config(config_path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    return load_simulator_config(config_path).experiment


def derive_seed(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1)[0])


# ============================================================================
# Assignment
# ============================================================================

@dataclass
class Assignment:
    """Unit -> assignment index i_k; indices < n are experimental"""
    units: List[str]
    index: Dict[str, int]
    treatment: Dict[str, str]
    n: int
    m: int

    def ordered_units(self) -> List[str]:
        return sorted(self.units, key=self.index.get)

    def experimental_units(self) -> List[str]:
        return [u for u in self.ordered_units() if self.index[u] < self.n]


def unit_ids(sample_size: int) -> List[str]:
    return [f"unit-{k}" for k in range(sample_size)]


def assign_treatments(cfg: ExperimentConfig, rng: np.random.Generator) -> Assignment:
    """
    Uniform random bijection units -> treatment slots

    Args:
        cfg: ExperimentConfig
        rng: Seeded generator

    Returns:
        Assignment
    """
    n, m = cfg.group_sizes
    units = unit_ids(cfg.sample_size)
    slots = rng.permutation(cfg.sample_size) if units else np.array([], dtype=int)
    index = {unit: int(slot) for unit, slot in zip(units, slots)}
    labels = cfg.treatments
    treatment = {
        unit: labels.experimental.label if index[unit] < n else labels.control.label
        for unit in units
    }
    return Assignment(units, index, treatment, n, m)


# ============================================================================
# Logs
# ============================================================================

@dataclass
class UnitEvent:
    tick: int
    kind: str  # train / idle / collect / timeout / failed
    ads: int = 0


@dataclass
class UnitLog:
    unit_id: str
    assignment_index: int
    treatment: str
    events: List[UnitEvent] = field(default_factory=list)
    ads: list = field(default_factory=list)
    failed: bool = False

    def record(self, tick: int, kind: str, ads: int = 0):
        if self.events and tick < self.events[-1].tick:
            raise InvalidInputError(f"{self.unit_id}: tick {tick} after {self.events[-1].tick}")
        self.events.append(UnitEvent(tick, kind, ads))

    @property
    def reloads(self) -> int:
        return sum(1 for e in self.events if e.kind == "collect")

    @property
    def ticks(self) -> int:
        return len({e.tick for e in self.events})


@dataclass
class ExperimentRun:
    status: str  # ok / failed
    seed: int
    assignment: Assignment
    logs: Dict[str, UnitLog]
    responses: Optional[ResponseVector] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def logs_frame(self) -> pd.DataFrame:
        rows = [
            {
                "unit": log.unit_id,
                "assignment_index": log.assignment_index,
                "treatment": log.treatment,
                "ads": len(log.ads),
                "reloads": log.reloads,
                "ticks": log.ticks,
                "failed": log.failed,
            }
            for log in sorted(self.logs.values(), key=lambda l: l.assignment_index)
        ]
        return pd.DataFrame(rows, columns=["unit", "assignment_index", "treatment", "ads", "reloads", "ticks", "failed"])


# ============================================================================
# Run
# ============================================================================

def run_experiment(cfg: ExperimentConfig, tracker: TrackerModel, seed: Optional[int] = None) -> ExperimentRun:
    """
    Satu eksperimen lockstep

    All units share one logical clock. Training ticks: experimental units
    train their interest, controls idle. Collection ticks: every unit reloads
    once per tick. Within a tick units act in a seeded random order.

    Args:
        cfg: ExperimentConfig
        tracker: TrackerModel (reset with a seed derived from the run seed)
        seed: Run seed (default cfg.seed)

    Returns:
        ExperimentRun; responses ordered by assignment index. A tracker fault
        marks the run failed and keeps the partial logs.
    """
    seed = cfg.seed if seed is None else seed
    assign_seq, order_seq, tracker_seq, fault_seq = np.random.SeedSequence(seed).spawn(4)
    assignment = assign_treatments(cfg, np.random.default_rng(assign_seq))
    order_rng = np.random.default_rng(order_seq)
    fault_rng = np.random.default_rng(fault_seq)
    tracker.reset(derive_seed(tracker_seq))

    treatments = cfg.treatments
    logs: Dict[str, UnitLog] = {}
    for unit in assignment.ordered_units():
        tracker.register(unit)
        logs[unit] = UnitLog(unit, assignment.index[unit], assignment.treatment[unit])
    logger.info(f"Run seed={seed}: assigned {assignment.n} experimental, {assignment.m} control units")

    failed_units = {u for u in assignment.units if fault_rng.random() < cfg.unit_failure_prob}
    for unit in failed_units:
        logs[unit].failed = True
        logger.warning(f"{unit} failed, it will report no ads")

    per_session = cfg.reloads_per_session or max(cfg.reloads_per_unit, 1)
    sessions = max(1, math.ceil(cfg.reloads_per_unit / per_session))
    units = assignment.ordered_units()
    tick = 0
    try:
        for _ in range(cfg.training_ticks):
            tracker.begin_tick(tick)
            for k in order_rng.permutation(len(units)):
                unit = units[k]
                if assignment.index[unit] < assignment.n and treatments.experimental.interest:
                    for _ in range(cfg.actions_per_tick):
                        tracker.train(unit, treatments.experimental.interest)
                    logs[unit].record(tick, "train")
                elif assignment.index[unit] >= assignment.n and treatments.control.interest:
                    for _ in range(cfg.actions_per_tick):
                        tracker.train(unit, treatments.control.interest)
                    logs[unit].record(tick, "train")
                else:
                    tracker.idle(unit)
                    logs[unit].record(tick, "idle")
            tick += 1
        logger.info(f"Run seed={seed}: training done after {cfg.training_ticks} ticks")

        for reload in range(cfg.reloads_per_unit):
            tracker.begin_tick(tick)
            for k in order_rng.permutation(len(units)):
                unit = units[k]
                if unit in failed_units:
                    logs[unit].record(tick, "failed")
                    continue
                if fault_rng.random() < cfg.reload_timeout_prob:
                    logs[unit].record(tick, "timeout")
                    continue
                ads = tracker.serve(
                    unit, cfg.ads_per_reload, context=cfg.collection_context,
                    reload=reload, session=reload // per_session,
                )
                logs[unit].ads.extend(ads)
                logs[unit].record(tick, "collect", len(ads))
            tick += 1
    except TrackerFault as e:
        logger.warning(f"Run seed={seed} failed at tick {tick}: {e}")
        return ExperimentRun("failed", seed, assignment, logs, error=str(e))

    responses = ResponseVector(
        [UnitResponse(ads=list(logs[u].ads), sessions=sessions) for u in units],
        assignment.n,
        assignment.m,
        (treatments.experimental.label, treatments.control.label),
        {"units": units, "seed": seed, "log_transform": "ln(1+c)"},
    )
    logger.info(f"Run seed={seed}: collected {sum(len(l.ads) for l in logs.values())} ads over {cfg.reloads_per_unit} reloads")
    return ExperimentRun("ok", seed, assignment, logs, responses)


# ============================================================================
# Power
# ============================================================================

def default_statistics(cfg: ExperimentConfig) -> Dict[str, TestStatistic]:
    """sim, kw dan prc untuk treatment eksperimen"""
    n, m = cfg.group_sizes
    experimental = cfg.treatments.experimental
    stats = {"sim": stat_sim(n, m)}
    if experimental.keywords:
        stats["kw"] = stat_kw(experimental.keywords)
        stats["prc"] = stat_prc({experimental.label: experimental.keywords}, experimental.label)
    return stats


@dataclass
class PowerReport:
    """Tabel p-value: satu row per data set, satu kolom per statistic"""
    matrix: pd.DataFrame
    runs: List[ExperimentRun] = field(repr=False, default_factory=list)
    alpha: float = 0.05

    @property
    def statistics(self) -> List[str]:
        return list(self.matrix.columns)

    def significant_counts(self) -> pd.Series:
        return (self.matrix < self.alpha).sum().astype(int)

    def table(self) -> pd.DataFrame:
        """Matrix plus the summary row"""
        summary = pd.DataFrame([self.significant_counts()], index=[SUMMARY_ROW])
        return pd.concat([self.matrix, summary])

    def fdr_flags(self, q: float = 0.05) -> pd.DataFrame:
        return fdr_flags(self.matrix, q)

    def failed_runs(self) -> List[ExperimentRun]:
        return [r for r in self.runs if not r.ok]


def fdr_flags(matrix: pd.DataFrame, q: float = 0.05) -> pd.DataFrame:
    """BH step-up per statistic column; missing p-values are never flagged"""
    flags = pd.DataFrame(False, index=matrix.index, columns=matrix.columns)
    for column in matrix.columns:
        present = matrix[column].dropna()
        if present.empty:
            continue
        flags.loc[present.index, column] = bh_fdr(present.tolist(), q)
    return flags


def power_eval(
    cfg: ExperimentConfig,
    tracker: TrackerModel,
    stats: Optional[Mapping[str, TestStatistic]] = None,
    runs: Optional[int] = None,
    method: str = "auto",
    chi2_keywords: Optional[Sequence[str]] = None,
    alpha: Optional[float] = None,
) -> PowerReport:
    """
    Ulangi run_experiment dengan seed turunan, uji setiap statistic

    Args:
        cfg: ExperimentConfig
        tracker: TrackerModel
        stats: name -> TestStatistic (default sim/kw/prc)
        runs: Number of data sets (>= 2, default cfg.runs)
        method: Permutation method passed to permutation_test
        chi2_keywords: Add a chi2 column on pooled ads with these keywords
        alpha: Significance cutoff for the summary row

    Returns:
        PowerReport
    """
    runs = cfg.runs if runs is None else runs
    if runs < 2:
        raise ContractError(f"Power evaluation needs at least 2 runs, got {runs}")
    stats = dict(stats or default_statistics(cfg))
    alpha = config.ALPHA if alpha is None else alpha
    children = np.random.SeedSequence(cfg.seed).spawn(runs)

    rows, executed = [], []
    for i, child in enumerate(children, start=1):
        run_seed = derive_seed(child)
        run = run_experiment(cfg, tracker, seed=run_seed)
        executed.append(run)
        row = {}
        if not run.ok:
            logger.warning(f"Data set {i} failed: {run.error}")
            row = {name: np.nan for name in stats}
            if chi2_keywords:
                row["chi2"] = np.nan
        else:
            for name, stat in stats.items():
                try:
                    row[name] = permutation_test(stat, run.responses, tail="leq", method=method, seed=run_seed).p_value
                except InfoFlowError as e:
                    logger.warning(f"Data set {i}, {name}: {e}")
                    row[name] = np.nan
            if chi2_keywords:
                try:
                    row["chi2"] = chi2_keyword_test(run.responses, chi2_keywords)[1]
                except ContractError as e:
                    logger.warning(f"Data set {i}, chi2: {e}")
                    row["chi2"] = np.nan
        rows.append(row)

    matrix = pd.DataFrame(rows, index=[f"data set {i}" for i in range(1, runs + 1)])
    report = PowerReport(matrix, executed, alpha)
    logger.info(f"Power evaluation done: {report.significant_counts().to_dict()} significant of {runs}")
    return report


# ============================================================================
# Cross-unit probe
# ============================================================================

@dataclass
class ProbeReport:
    rounds: pd.DataFrame

    def summary(self) -> pd.DataFrame:
        """rounds, unique-in-isolation, unique-in-parallel (medians over completed rounds)"""
        done = self.rounds[self.rounds["status"] == "ok"]
        isolated = done[done["condition"] == "isolated"]["unique_ads"]
        parallel = done[done["condition"] == "parallel"]["unique_ads"]
        return pd.DataFrame([{
            "rounds": int(len(done)),
            "unique_in_isolation": float(isolated.median()) if len(isolated) else np.nan,
            "unique_in_parallel": float(parallel.median()) if len(parallel) else np.nan,
        }])


def cross_unit_probe(
    cfg: ExperimentConfig,
    tracker: TrackerModel,
    rounds: Optional[int] = None,
    companions: Optional[int] = None,
    trained_companions: Optional[int] = None,
    seed: Optional[int] = None,
) -> ProbeReport:
    """
    Primary unit isolated vs running alongside companion units

    Rounds are split at random into two halves. Isolated rounds run the
    primary alone; parallel rounds add companions, some trained on the
    experimental interest and the rest idle. Only the primary's ads count.

    Returns:
        ProbeReport, one row per round (round, condition, unique_ads, status).
        A tracker fault marks the round failed; it has no unique_ads.
    """
    rounds = cfg.probe.rounds if rounds is None else rounds
    companions = cfg.probe.companions if companions is None else companions
    trained_companions = cfg.probe.trained_companions if trained_companions is None else trained_companions
    if rounds < 2:
        raise ContractError("Probe needs at least 2 rounds")
    seed = cfg.seed if seed is None else seed
    if tracker.spec.coupling == 0:
        logger.warning("Cross-unit probe with coupling = 0: no cross-unit mechanism is active")

    split_seq, *round_seqs = np.random.SeedSequence(seed).spawn(rounds + 1)
    parallel_rounds = set(np.random.default_rng(split_seq).permutation(rounds)[: rounds // 2].tolist())
    interest = cfg.treatments.experimental.interest

    rows = []
    for r, round_seq in enumerate(round_seqs):
        condition = "parallel" if r in parallel_rounds else "isolated"
        tracker_seq, order_seq = round_seq.spawn(2)
        tracker.reset(derive_seed(tracker_seq))
        order_rng = np.random.default_rng(order_seq)
        units = ["primary"]
        if condition == "parallel":
            units += [f"companion-{c}" for c in range(companions)]
        for unit in units:
            tracker.register(unit)
        trained = {f"companion-{c}" for c in range(min(trained_companions, companions))} if condition == "parallel" else set()

        tick = 0
        for _ in range(cfg.training_ticks):
            tracker.begin_tick(tick)
            for k in order_rng.permutation(len(units)):
                unit = units[k]
                if unit in trained and interest:
                    tracker.train(unit, interest)
                else:
                    tracker.idle(unit)
            tick += 1

        seen = set()
        try:
            for reload in range(cfg.reloads_per_unit):
                tracker.begin_tick(tick)
                for k in order_rng.permutation(len(units)):
                    unit = units[k]
                    ads = tracker.serve(unit, cfg.ads_per_reload, context=cfg.collection_context, reload=reload)
                    if unit == "primary":
                        seen.update(ad.url for ad in ads)
                tick += 1
        except TrackerFault as e:
            logger.warning(f"Probe round {r + 1} ({condition}) failed at tick {tick}: {e}")
            rows.append({"round": r + 1, "condition": condition, "unique_ads": np.nan, "status": "failed"})
            continue
        rows.append({"round": r + 1, "condition": condition, "unique_ads": len(seen), "status": "ok"})

    report = ProbeReport(pd.DataFrame(rows, columns=PROBE_COLUMNS))
    logger.info(f"Cross-unit probe: {report.summary().to_dict('records')[0]}")
    return report
