"""
Infoflow Lab CLI
Entry point: python -m src.cli <verb> ...

Exit codes: 0 success / negative verdict, 2 positive finding, 1 error

"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from src import config
from src.core.ad_statistics import chi2_keyword_test, dump_responses, load_responses, stat_kw, stat_prc, stat_sim
from src.core.adversary import (
    ChannelAlphabets,
    build_mimic_interfering,
    build_mimic_noninterfering,
    load_trace,
    most_likely_trace,
    trace_to_spec,
)
from src.core.errors import InfoFlowError, InvalidInputError
from src.core.machine import check_noninterference, load_machine, machine_to_spec
from src.core.sem import check_theorem3, has_effect, load_sem, sweep_summary, theorem3_sweep
from src.core.stats import METHODS, TAILS, permutation_test, stat_nonce
from src.utils.log_manager import LogManager

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FOUND = 2


def _json_default(value):
    # numpy scalars dari pandas
    if hasattr(value, "item"):
        return value.item()
    return str(value)


def _emit(data, as_json: bool, text: Optional[str] = None):
    if as_json:
        print(json.dumps(data, indent=2, default=_json_default))
    else:
        print(text if text is not None else data)


def _parse_assignments(raw: Optional[str]) -> Dict[str, str]:
    """'A=1,B=0' -> {'A': '1', 'B': '0'}"""
    result = {}
    if not raw:
        return result
    for item in raw.split(","):
        if "=" not in item:
            raise InvalidInputError(f"Expected NAME=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        result[name.strip()] = value.strip()
    return result


def _split_names(raw: str) -> List[str]:
    names = [n.strip() for n in raw.split(",") if n.strip()]
    if not names:
        raise InvalidInputError("Empty variable list")
    return names


def read_keywords(path: Optional[str], inline: Optional[str]) -> object:
    """
    Keyword file: JSON object (treatment -> keywords), JSON list, or one keyword per line
    """
    if inline:
        return [k.strip() for k in inline.split(",") if k.strip()]
    if not path:
        return []
    file_path = Path(path)
    if not file_path.exists():
        raise InvalidInputError(f"File not found: {file_path}")
    text = file_path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if isinstance(data, (list, dict)):
        return data
    raise InvalidInputError(f"{file_path}: keywords must be a list or an object")


# ============================================================================
# Verbs
# ============================================================================

def cmd_check_ni(args) -> int:
    machine = load_machine(args.machine)
    report = check_noninterference(machine, args.horizon, probabilistic=not args.possibilistic, budget=args.budget)
    data = report.to_dict()
    if report.noninterfering:
        _emit(data, args.json, f"noninterfering up to horizon {report.horizon} ({report.visited} input sequences)")
        return EXIT_OK

    alphabets = ChannelAlphabets.from_machine(machine)
    traces = [trace_to_spec(most_likely_trace(machine, seq), alphabets).model_dump() for seq in report.witness]
    data["witness_traces"] = traces
    if args.witness_out:
        out = Path(args.witness_out)
        out.parent.mkdir(parents=True, exist_ok=True)
        for i, trace in enumerate(traces, start=1):
            path = out.with_name(f"{out.stem}-{i}{out.suffix or '.json'}")
            path.write_text(json.dumps(trace, indent=2), encoding="utf-8")
            logger.info(f"Witness trace written to {path}")
    _emit(data, args.json, "interference witness\n" + json.dumps(traces, indent=2))
    return EXIT_FOUND


def cmd_mimic(args) -> int:
    trace, alphabets = load_trace(args.trace)
    build = build_mimic_noninterfering if args.kind == "ni" else build_mimic_interfering
    machine = build(trace, alphabets)
    spec = machine_to_spec(machine).model_dump(exclude_none=True)
    text = json.dumps(spec, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        logger.info(f"Mimic machine ({args.kind}) written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_sem_effect(args) -> int:
    sem = load_sem(args.sem)
    report = has_effect(
        sem,
        _split_names(args.factors),
        _split_names(args.response),
        _parse_assignments(args.fixed),
        budget=args.budget,
    )
    data = report.to_dict()
    text = report.verdict
    if report.effect:
        text += f": {report.factors} = {report.witness[0]} vs {report.witness[1]}"
    _emit(data, args.json, text)
    return EXIT_FOUND if report.effect else EXIT_OK


def cmd_theorem3_sweep(args) -> int:
    if args.machine:
        report = check_theorem3(load_machine(args.machine), args.horizon, budget=args.budget)
        _emit(report.to_dict(), args.json, pd.Series(report.to_dict()).to_string())
        return EXIT_OK if report.agree else EXIT_ERROR

    frame = theorem3_sweep(args.horizon, args.states, budget=args.budget)
    summary = sweep_summary(frame)
    _emit(summary, args.json, pd.Series(summary).to_string())
    if summary["agreement"] < 1.0:
        print(f"Error: verdicts disagree on {int((~frame['agree']).sum())} machines", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def _statistic_for(args, label: str, keywords, n: int, m: int):
    if args.stat == "sim":
        return stat_sim(n, m)
    if args.stat == "nonce":
        if not args.nonce:
            raise InvalidInputError("--nonce is required for --stat nonce")
        return stat_nonce(args.nonce)
    if args.stat == "kw":
        words = keywords.get(label, []) if isinstance(keywords, dict) else keywords
        return stat_kw(words)
    if args.stat == "prc":
        by_treatment = keywords if isinstance(keywords, dict) else {label: keywords}
        return stat_prc(by_treatment, label)
    raise InvalidInputError(f"Unknown statistic {args.stat!r}")


def cmd_ptest(args) -> int:
    vectors = load_responses(args.data, args.experimental_label)
    if args.run is not None:
        if args.run not in vectors:
            raise InvalidInputError(f"Run {args.run!r} not in {args.data}")
        vectors = {args.run: vectors[args.run]}
    keywords = read_keywords(args.keywords_file, args.keywords)

    rows = []
    for run, y in vectors.items():
        label = y.labels[0]
        if args.stat == "chi2":
            words = keywords.get(label, []) if isinstance(keywords, dict) else keywords
            value, p, _ = chi2_keyword_test(y, words, correction=args.yates)
            rows.append({"run": run, "stat": "chi2", "chi2": value, "p_value": p, "method": "chi2", "comparisons": None})
            continue
        stat = _statistic_for(args, label, keywords, y.n, y.m)
        result = permutation_test(stat, y, tail=args.tail, method=args.method, seed=args.seed, samples=args.samples)
        rows.append({"run": run, "stat": stat.name, **result.to_dict()})

    frame = pd.DataFrame(rows)
    _emit(rows, args.json, frame.to_string(index=False))
    return EXIT_OK


def _experiment_setup(args):
    from simulator.tracker import TrackerModel, load_simulator_config

    sim_config = load_simulator_config(args.config)
    experiment = sim_config.experiment
    if args.seed is not None:
        experiment = experiment.model_copy(update={"seed": args.seed})
    if getattr(args, "runs", None) is not None:
        experiment = experiment.model_copy(update={"runs": args.runs})
    overrides = {}
    if args.targeting is not None:
        overrides["targeting_enabled"] = args.targeting == "on"
    if args.coupling is not None:
        overrides["coupling"] = args.coupling
    tracker = TrackerModel.with_overrides(sim_config.tracker, **overrides) if overrides else TrackerModel(sim_config.tracker)
    return experiment, tracker


def cmd_simulate(args) -> int:
    from simulator.experiment import run_experiment

    experiment, tracker = _experiment_setup(args)
    run = run_experiment(experiment, tracker)
    logs = run.logs_frame()
    data = {"status": run.status, "seed": run.seed, "error": run.error, "units": logs.to_dict("records")}
    if args.logs_out:
        Path(args.logs_out).parent.mkdir(parents=True, exist_ok=True)
        logs.to_csv(args.logs_out, index=False)
    if run.ok and args.out:
        dump_responses({str(run.seed): run.responses}, args.out)
    _emit(data, args.json, f"status: {run.status} (seed {run.seed})\n" + logs.to_string(index=False))
    return EXIT_OK if run.ok else EXIT_ERROR


def _render_matrix(table: pd.DataFrame, flags: Optional[pd.DataFrame]) -> str:
    shown = table.copy().astype(object)
    if flags is not None:
        for column in flags.columns:
            for index in flags.index:
                if flags.loc[index, column]:
                    shown.loc[index, column] = f"{table.loc[index, column]:.6g}*"
    return shown.to_string()


def cmd_power(args) -> int:
    from simulator.experiment import power_eval

    experiment, tracker = _experiment_setup(args)
    chi2_words = experiment.treatments.experimental.keywords if args.chi2 else None
    report = power_eval(experiment, tracker, runs=experiment.runs, method=args.method, chi2_keywords=chi2_words)
    table = report.table()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        report.matrix.to_csv(args.out, index_label="data_set")
    if args.store:
        from src.database import ExperimentStore, make_session_factory

        session = make_session_factory(args.database)()
        try:
            study_id = ExperimentStore(session).save_power_report(
                report,
                label=args.label or "",
                config={"experiment": experiment.model_dump(), "tracker": tracker.spec.model_dump()},
            )
        finally:
            session.close()
        print(f"stored as study {study_id}", file=sys.stderr)
    flags = report.fdr_flags(args.fdr) if args.fdr else None
    data = {"matrix": report.matrix.to_dict(), "summary": report.significant_counts().to_dict()}
    _emit(data, args.json, _render_matrix(table, None if flags is None else flags.reindex(table.index, fill_value=False)))
    return EXIT_OK


def cmd_report(args) -> int:
    from simulator.experiment import PowerReport

    if args.study_id is not None:
        from src.database import ExperimentStore, make_session_factory

        session = make_session_factory(args.database)()
        try:
            matrix, alpha = ExperimentStore(session).load_power_matrix(args.study_id)
        finally:
            session.close()
    elif args.matrix:
        path = Path(args.matrix)
        if not path.exists():
            raise InvalidInputError(f"File not found: {path}")
        try:
            matrix = pd.read_csv(path, index_col=0)
        except pd.errors.EmptyDataError as e:
            raise InvalidInputError(f"{path}: empty matrix") from e
        alpha = config.ALPHA
    else:
        raise InvalidInputError("report needs --study-id or --matrix")
    if matrix.empty or matrix.columns.empty:
        raise InvalidInputError("Empty p-value matrix")

    report = PowerReport(matrix.astype(float), alpha=alpha)
    table = report.table()
    flags = report.fdr_flags(args.fdr).reindex(table.index, fill_value=False)
    data = {
        "matrix": report.matrix.to_dict(),
        "summary": report.significant_counts().to_dict(),
        "fdr_flags": report.fdr_flags(args.fdr).to_dict(),
        "fdr_q": args.fdr,
    }
    _emit(data, args.json, _render_matrix(table, flags) + f"\n(* significant after BH-FDR at q={args.fdr})")
    return EXIT_OK


# ============================================================================
# Parser
# ============================================================================

class InfoFlowArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_ERROR, status 2 is reserved for findings"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = InfoFlowArgumentParser(prog="infoflow", description="Black-box information flow experiments")
    parser.add_argument("--log-level", default=None, help="Override INFOFLOW_LOG_LEVEL")
    parser.add_argument("--no-log-file", action="store_true", help="Log to stderr only")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("check-ni", help="Bounded noninterference check of a machine file")
    p.add_argument("machine")
    p.add_argument("--horizon", type=int, default=2)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--probabilistic", action="store_true", default=True, help="Compare low distributions exactly (default)")
    mode.add_argument("--possibilistic", action="store_true", help="Compare only the supports")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--witness-out", default=None, help="Write witness traces to <stem>-1/-2 files")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_check_ni)

    p = sub.add_parser("mimic", help="Build a mimic machine from a trace file")
    p.add_argument("trace")
    p.add_argument("--kind", choices=["ni", "int"], default="ni")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_mimic)

    p = sub.add_parser("sem-effect", help="Effect of factors on a response in a SEM file")
    p.add_argument("sem")
    p.add_argument("--factors", required=True, help="Comma separated variables")
    p.add_argument("--response", required=True, help="Comma separated variables")
    p.add_argument("--fixed", default=None, help="NAME=VALUE,... applied with do()")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_sem_effect)

    p = sub.add_parser("theorem3-sweep", help="Interference vs SEM effect agreement")
    p.add_argument("--horizon", type=int, default=2)
    p.add_argument("--states", type=int, default=2)
    p.add_argument("--machine", default=None, help="Check one machine file instead of sweeping")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_theorem3_sweep)

    p = sub.add_parser("ptest", help="Permutation test on a response file")
    p.add_argument("data")
    p.add_argument("--stat", choices=["sim", "kw", "prc", "nonce", "chi2"], required=True)
    p.add_argument("--method", choices=list(METHODS), default="auto")
    p.add_argument("--tail", choices=list(TAILS), default="leq")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--samples", type=int, default=None, help="Monte-Carlo comparisons")
    p.add_argument("--keywords-file", default=None)
    p.add_argument("--keywords", default=None, help="Comma separated keywords")
    p.add_argument("--nonce", default=None)
    p.add_argument("--run", default=None, help="Only this run id")
    p.add_argument("--experimental-label", default=None)
    p.add_argument("--yates", action="store_true", help="Continuity correction for chi2")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_ptest)

    for verb, handler, helptext in (
        ("simulate", cmd_simulate, "Run one simulated experiment"),
        ("power", cmd_power, "Repeat experiments and tabulate p-values"),
    ):
        p = sub.add_parser(verb, help=helptext)
        p.add_argument("--config", default=None, help="Simulator config (default INFOFLOW_SIMULATOR_CONFIG)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--targeting", choices=["on", "off"], default=None)
        p.add_argument("--coupling", type=float, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--json", action="store_true")
        p.set_defaults(handler=handler)
        if verb == "simulate":
            p.add_argument("--logs-out", default=None)
        else:
            p.add_argument("--runs", type=int, default=None)
            p.add_argument("--method", choices=list(METHODS), default="auto")
            p.add_argument("--chi2", action="store_true", help="Add chi2 on pooled ads")
            p.add_argument("--fdr", type=float, default=None, help="Mark BH-FDR significant cells at q")
            p.add_argument("--store", action="store_true", help="Persist the study to the database")
            p.add_argument("--label", default=None)
            p.add_argument("--database", default=None, help="Override DATABASE_URL")

    p = sub.add_parser("report", help="Render a stored or saved p-value matrix")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--study-id", type=int, default=None)
    source.add_argument("--matrix", default=None)
    p.add_argument("--fdr", type=float, default=0.05)
    p.add_argument("--database", default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    LogManager().setup("infoflow-cli", level=args.log_level, to_file=not args.no_log_file)
    try:
        return args.handler(args)
    except (InfoFlowError, ValidationError, OSError, json.JSONDecodeError) as e:
        # stderr gets exactly one line; details go to the log
        logger.debug(f"{args.verb} failed: {e}", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
