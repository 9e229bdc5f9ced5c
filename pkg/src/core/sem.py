"""
Structural Equation Models
Discrete recursive SEM dengan CPT exact, do-intervention, effect check,
dan compiler Moore machine -> SEM

"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd

from src import config
from src.core.distribution import Distribution, Number
from src.core.errors import BudgetExceededError, InvalidInputError, UnsupportedOperationError
from src.core.file_formats import SemSpec, read_spec
from src.core.machine import (
    InputPair,
    MooreMachine,
    NoninterferenceReport,
    check_noninterference,
    deterministic_machine,
)

logger = logging.getLogger(__name__)

Value = Hashable
Assignment = Mapping[str, Value]


class _Undefined:
    """Conditional probability given a zero-probability event"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False

    def __mul__(self, other):
        # undefined * 0 = 0
        if other == 0:
            return other
        return self

    __rmul__ = __mul__


UNDEFINED = _Undefined()


@dataclass(frozen=True)
class Variable:
    """
    One SEM variable

    Exogenous variables carry a marginal; endogenous ones carry a CPT
    mapping each parent valuation (tuple, parent order) to a Distribution.
    """
    name: str
    values: Tuple[Value, ...]
    parents: Tuple[str, ...] = ()
    exogenous: bool = False
    marginal: Optional[Distribution] = None
    cpt: Optional[Dict[Tuple[Value, ...], Distribution]] = field(default=None, repr=False)

    def conditional(self, parent_values: Tuple[Value, ...]) -> Distribution:
        if self.exogenous:
            return self.marginal
        try:
            return self.cpt[parent_values]
        except KeyError:
            raise InvalidInputError(f"{self.name}: no CPT row for parents {parent_values!r}") from None


@dataclass(frozen=True)
class Intervention:
    assignments: Dict[str, Value]

    def __iter__(self):
        return iter(self.assignments.items())


class Sem:
    """
    Recursive SEM over finite ranges

    Args:
        variables: Variables in declaration order; parents must be declared
            somewhere in the list and the parent graph must be acyclic
    """

    def __init__(self, variables: Iterable[Variable], validate: bool = True):
        self.variables: Dict[str, Variable] = {}
        for var in variables:
            if var.name in self.variables:
                raise InvalidInputError(f"Duplicate variable {var.name!r}")
            self.variables[var.name] = var

        self.graph = nx.DiGraph()
        self.graph.add_nodes_from(self.variables)
        for var in self.variables.values():
            for parent in var.parents:
                if parent not in self.variables:
                    raise InvalidInputError(f"{var.name}: unknown parent {parent!r}")
                self.graph.add_edge(parent, var.name)
        if not nx.is_directed_acyclic_graph(self.graph):
            raise InvalidInputError(f"Parent graph has a cycle: {nx.find_cycle(self.graph)}")

        position = {name: idx for idx, name in enumerate(self.variables)}
        self.order: List[str] = list(nx.lexicographical_topological_sort(self.graph, key=position.get))
        if validate:
            for var in self.variables.values():
                self._validate(var)

    def _validate(self, var: Variable):
        if len(set(var.values)) != len(var.values) or not var.values:
            raise InvalidInputError(f"{var.name}: range must be non-empty with unique values")
        allowed = set(var.values)
        if var.exogenous:
            if var.parents:
                raise InvalidInputError(f"{var.name}: exogenous variables have no parents")
            if var.marginal is None:
                raise InvalidInputError(f"{var.name}: exogenous variable needs a marginal")
            tables = [var.marginal]
        else:
            if var.cpt is None:
                raise InvalidInputError(f"{var.name}: endogenous variable needs a CPT")
            ranges = [self.variables[p].values for p in var.parents]
            for key in itertools.product(*ranges):
                if key not in var.cpt:
                    raise InvalidInputError(f"{var.name}: missing CPT row for parents {key!r}")
            tables = list(var.cpt.values())
        for dist in tables:
            outside = dist.support_set() - allowed
            if outside:
                raise InvalidInputError(f"{var.name}: probability mass on values outside range {sorted(map(str, outside))}")

    def __getitem__(self, name: str) -> Variable:
        try:
            return self.variables[name]
        except KeyError:
            raise InvalidInputError(f"Unknown variable {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.variables

    @property
    def endogenous(self) -> List[str]:
        return [n for n, v in self.variables.items() if not v.exogenous]

    @property
    def exogenous(self) -> List[str]:
        return [n for n, v in self.variables.items() if v.exogenous]

    def ancestors(self, names: Iterable[str]) -> set:
        result = set()
        for name in names:
            self[name]
            result.add(name)
            result |= nx.ancestors(self.graph, name)
        return result

    def check_value(self, name: str, value: Value):
        if value not in self[name].values:
            raise InvalidInputError(f"{name}: value {value!r} not in range {self[name].values}")

    def __repr__(self):
        return f"<Sem({', '.join(self.order)})>"


# ============================================================================
# Inference
# ============================================================================

def joint_prob(sem: Sem, assignment: Assignment) -> Number:
    """
    Product over the topological order of P(V = v | parents)

    Args:
        sem: Model
        assignment: Value for every variable

    Returns:
        Exact probability
    """
    missing = [n for n in sem.order if n not in assignment]
    if missing:
        raise InvalidInputError(f"Incomplete assignment, missing {missing}")
    for name, value in assignment.items():
        sem.check_value(name, value)
    prob: Number = Fraction(1)
    for name in sem.order:
        var = sem[name]
        parent_values = tuple(assignment[p] for p in var.parents)
        prob *= var.conditional(parent_values).prob(assignment[name])
        if prob == 0:
            break
    return prob


def distribution(sem: Sem, names: Sequence[str]) -> Distribution:
    """
    Exact joint distribution of a tuple of variables

    Forward enumeration over the ancestors of names in topological order.
    Zero-mass branches are pruned and variables are summed out as soon as
    nothing later depends on them.
    """
    names = list(names)
    needed = sem.ancestors(names)
    order = [n for n in sem.order if n in needed]

    last_use = {n: -1 for n in order}
    for idx, name in enumerate(order):
        for parent in sem[name].parents:
            last_use[parent] = max(last_use[parent], idx)
    targets = set(names)

    live: List[str] = []
    states: Dict[Tuple[Value, ...], Number] = {(): Fraction(1)}
    for idx, name in enumerate(order):
        var = sem[name]
        parent_pos = [live.index(p) for p in var.parents]
        grown: Dict[Tuple[Value, ...], Number] = {}
        for key, p in states.items():
            cond = var.conditional(tuple(key[i] for i in parent_pos))
            for value, q in cond.items():
                new_key = key + (value,)
                grown[new_key] = grown.get(new_key, 0) + p * q
        live = live + [name]

        keep = [i for i, n in enumerate(live) if n in targets or last_use[n] > idx]
        if len(keep) < len(live):
            states = {}
            for key, p in grown.items():
                short = tuple(key[i] for i in keep)
                states[short] = states.get(short, 0) + p
            live = [live[i] for i in keep]
        else:
            states = grown

    positions = [live.index(n) for n in names]
    table: Dict[Tuple[Value, ...], Number] = {}
    for key, p in states.items():
        out = tuple(key[i] for i in positions)
        table[out] = table.get(out, 0) + p
    return Distribution(table)


def marginal_prob(sem: Sem, assignment: Assignment) -> Number:
    """P(W = w), summing the joint over every completion"""
    if not assignment:
        return Fraction(1)
    names = list(assignment)
    for name in names:
        sem.check_value(name, assignment[name])
    return distribution(sem, names).prob(tuple(assignment[n] for n in names))


def conditional_prob(sem: Sem, event: Assignment, given: Assignment):
    """
    P(event | given), atau UNDEFINED kalau P(given) = 0
    """
    denominator = marginal_prob(sem, given)
    if denominator == 0:
        return UNDEFINED
    merged = dict(given)
    for name, value in event.items():
        if name in merged and merged[name] != value:
            return Fraction(0)
        merged[name] = value
    return marginal_prob(sem, merged) / denominator


def do(sem: Sem, intervention: Union[Intervention, Assignment]) -> Sem:
    """
    Sub-model M[X:=x]: each intervened equation becomes the constant x and
    loses its parents
    """
    assignments = dict(intervention)
    replaced = dict(sem.variables)
    for name, value in assignments.items():
        var = sem[name]
        if var.exogenous:
            raise UnsupportedOperationError(f"Cannot intervene on exogenous variable {name!r}")
        sem.check_value(name, value)
        replaced[name] = replace(var, parents=(), cpt={(): Distribution.point(value)})
    # untouched variables were validated with the parent model
    return Sem(replaced.values(), validate=False)


def forward_sample(sem: Sem, rng: np.random.Generator, n_samples: int) -> pd.DataFrame:
    """
    Ancestral sampling, satu kolom per variable
    """
    rows = []
    for _ in range(n_samples):
        sample: Dict[str, Value] = {}
        for name in sem.order:
            var = sem[name]
            dist = var.conditional(tuple(sample[p] for p in var.parents))
            values = [v for v in var.values if dist.prob(v) > 0]
            weights = np.array([float(dist.prob(v)) for v in values])
            sample[name] = values[int(rng.choice(len(values), p=weights / weights.sum()))]
        rows.append(sample)
    return pd.DataFrame(rows, columns=list(sem.order))


# ============================================================================
# Effect
# ============================================================================

@dataclass
class EffectReport:
    effect: bool
    factors: Tuple[str, ...]
    response: Tuple[str, ...]
    fixed: Dict[str, Value]
    visited: int
    witness: Optional[Tuple[Tuple[Value, ...], Tuple[Value, ...]]] = None
    response_dists: Optional[Tuple[Distribution, Distribution]] = field(default=None, repr=False)

    @property
    def verdict(self) -> str:
        return "effect" if self.effect else "no-effect"

    def to_dict(self) -> dict:
        data = {
            "verdict": self.verdict,
            "factors": list(self.factors),
            "response": list(self.response),
            "fixed": dict(self.fixed),
            "visited": self.visited,
        }
        if self.witness is not None:
            data["witness"] = [list(self.witness[0]), list(self.witness[1])]
        return data


def has_effect(
    sem: Sem,
    factors: Sequence[str],
    response: Sequence[str],
    fixed: Optional[Assignment] = None,
    budget: Optional[int] = None,
) -> EffectReport:
    """
    Cari x1, x2 dengan P(Y | do(X:=x1), do(Z:=z)) != P(Y | do(X:=x2), do(Z:=z))

    Args:
        sem: Model
        factors: X, endogenous
        response: Y, endogenous
        fixed: Z := z applied to every sub-model
        budget: Max factor valuations (default INFOFLOW_NI_BUDGET)

    Returns:
        EffectReport, witness is the lexicographically first pair
    """
    factors = tuple(factors)
    response = tuple(response)
    fixed = dict(fixed or {})
    for name in factors + response:
        if sem[name].exogenous:
            raise InvalidInputError(f"{name}: factors and response must be endogenous")
    budget = config.NI_BUDGET if budget is None else budget
    size = 1
    for name in factors:
        size *= len(sem[name].values)
    if size > budget:
        raise BudgetExceededError("has_effect", size, budget)

    base = do(sem, Intervention(fixed)) if fixed else sem
    valuations = list(itertools.product(*(sem[n].values for n in factors)))
    dists = [distribution(do(base, Intervention(dict(zip(factors, x)))), response) for x in valuations]

    for i, x1 in enumerate(valuations):
        for j in range(i + 1, len(valuations)):
            if not dists[i].equals(dists[j]):
                logger.debug(f"Effect of {factors} on {response}: {x1} vs {valuations[j]}")
                return EffectReport(True, factors, response, fixed, len(valuations), (x1, valuations[j]), (dists[i], dists[j]))
    return EffectReport(False, factors, response, fixed, len(valuations))


# ============================================================================
# Moore machine -> SEM
# ============================================================================

@dataclass
class MachineSemBinding:
    """Variable names per family, indexed by time step"""
    horizon: int
    states: List[str]
    hi_in: List[str]
    lo_in: List[str]
    hi_out: List[str]
    lo_out: List[str]
    high_user: List[str]
    low_user: List[str]

    def high_inputs(self, t: int) -> List[str]:
        return self.hi_in[:t]

    def low_inputs(self, t: int) -> List[str]:
        return self.lo_in[:t]

    def low_outputs(self, t: int) -> List[str]:
        return self.lo_out[: t + 1]

    def input_intervention(self, inputs: Sequence[InputPair]) -> Dict[str, Value]:
        if len(inputs) > self.horizon:
            raise InvalidInputError(f"{len(inputs)} inputs exceed compiled horizon {self.horizon}")
        assignment = {}
        for j, (hi, lo) in enumerate(inputs):
            assignment[self.hi_in[j]] = hi
            assignment[self.lo_in[j]] = lo
        return assignment


def _pass_through(name: str, own: str, parents: Tuple[str, ...], sem_vars: Dict[str, Variable]) -> Variable:
    """Environment variable that copies its user input and ignores output history"""
    ranges = [sem_vars[p].values for p in parents]
    own_pos = parents.index(own)
    cpt = {key: Distribution.point(key[own_pos]) for key in itertools.product(*ranges)}
    return Variable(name, sem_vars[own].values, parents, cpt=cpt)


def compile_machine(
    machine: MooreMachine,
    horizon: int,
    high_user: Optional[Distribution] = None,
    low_user: Optional[Distribution] = None,
) -> Tuple[Sem, MachineSemBinding]:
    """
    Build M_Q for steps 0..horizon

    S_0 is the initial state, S_j depends on (S_{j-1}, HI_j, LI_j) through tau,
    HO_j and LO_j read sigma(S_j). HI_j and LI_j depend on the exogenous users
    HU_j, LU_j and on the earlier outputs; by default they copy the user input.

    Args:
        machine: Exact MooreMachine
        horizon: t >= 1
        high_user: Marginal of each HU_j (default uniform over hi_in)
        low_user: Marginal of each LU_j (default uniform over lo_in)

    Returns:
        (Sem, MachineSemBinding)
    """
    if horizon < 1:
        raise InvalidInputError(f"Horizon must be >= 1, got {horizon}")
    high_user = high_user or Distribution.uniform(machine.hi_in)
    low_user = low_user or Distribution.uniform(machine.lo_in)

    binding = MachineSemBinding(
        horizon=horizon,
        states=[f"S_{j}" for j in range(horizon + 1)],
        hi_in=[f"HI_{j}" for j in range(1, horizon + 1)],
        lo_in=[f"LI_{j}" for j in range(1, horizon + 1)],
        hi_out=[f"HO_{j}" for j in range(horizon + 1)],
        lo_out=[f"LO_{j}" for j in range(horizon + 1)],
        high_user=[f"HU_{j}" for j in range(1, horizon + 1)],
        low_user=[f"LU_{j}" for j in range(1, horizon + 1)],
    )
    states = tuple(machine.states)
    sem_vars: Dict[str, Variable] = {}

    def add_outputs(j: int):
        state_var = binding.states[j]
        sem_vars[binding.hi_out[j]] = Variable(
            binding.hi_out[j], tuple(machine.hi_out), (state_var,),
            cpt={(s,): Distribution.point(machine.output[s][0]) for s in states},
        )
        sem_vars[binding.lo_out[j]] = Variable(
            binding.lo_out[j], tuple(machine.lo_out), (state_var,),
            cpt={(s,): Distribution.point(machine.output[s][1]) for s in states},
        )

    sem_vars[binding.states[0]] = Variable(binding.states[0], states, (), cpt={(): Distribution.point(machine.initial)})
    add_outputs(0)
    for j in range(1, horizon + 1):
        hu, lu = binding.high_user[j - 1], binding.low_user[j - 1]
        sem_vars[hu] = Variable(hu, tuple(machine.hi_in), exogenous=True, marginal=high_user)
        sem_vars[lu] = Variable(lu, tuple(machine.lo_in), exogenous=True, marginal=low_user)
        history = tuple(binding.hi_out[:j]) + tuple(binding.lo_out[:j])
        hi_name, lo_name = binding.hi_in[j - 1], binding.lo_in[j - 1]
        sem_vars[hi_name] = _pass_through(hi_name, hu, (hu, lu) + history, sem_vars)
        sem_vars[lo_name] = _pass_through(lo_name, lu, (hu, lu) + history, sem_vars)

        prev = binding.states[j - 1]
        cpt = {
            (s, hi, lo): machine.transition[(s, (hi, lo))]
            for s in states for hi in machine.hi_in for lo in machine.lo_in
        }
        sem_vars[binding.states[j]] = Variable(binding.states[j], states, (prev, hi_name, lo_name), cpt=cpt)
        add_outputs(j)

    sem = Sem(sem_vars.values())
    logger.debug(f"Compiled machine to SEM with {len(sem.order)} variables, horizon {horizon}")
    return sem, binding


def interventional_trace(sem: Sem, binding: MachineSemBinding, inputs: Sequence[InputPair]) -> Distribution:
    """
    Distribution of (outputs, states) under do(HI, LI := inputs), keyed like
    machine.run so the two can be compared directly
    """
    k = len(inputs)
    sub = do(sem, binding.input_intervention(inputs))
    names = binding.hi_out[: k + 1] + binding.lo_out[: k + 1] + binding.states[: k + 1]
    joint = distribution(sub, names)

    def as_trace(values):
        his, los, sts = values[: k + 1], values[k + 1: 2 * k + 2], values[2 * k + 2:]
        return (tuple(zip(his, los)), tuple(sts))

    return joint.map(as_trace)


def interventional_low_outputs(sem: Sem, binding: MachineSemBinding, inputs: Sequence[InputPair]) -> Distribution:
    """P(LO_0..k | do(inputs)) keyed by low output sequences"""
    sub = do(sem, binding.input_intervention(inputs))
    return distribution(sub, binding.low_outputs(len(inputs)))


# ============================================================================
# Interference <=> effect
# ============================================================================

@dataclass
class Theorem3Report:
    """Agreement between the machine-level and SEM-level verdicts"""
    horizon: int
    interference: bool
    effect: bool
    noninterference: NoninterferenceReport = field(repr=False)
    effect_step: Optional[int] = None
    effect_low_inputs: Optional[Tuple[Value, ...]] = None
    effect_witness: Optional[Tuple[Tuple[Value, ...], Tuple[Value, ...]]] = None

    @property
    def agree(self) -> bool:
        return self.interference == self.effect

    def to_dict(self) -> dict:
        data = {
            "horizon": self.horizon,
            "interference": self.interference,
            "effect": self.effect,
            "agree": self.agree,
        }
        if self.effect_witness is not None:
            data["effect_step"] = self.effect_step
            data["effect_low_inputs"] = list(self.effect_low_inputs)
            data["effect_witness"] = [list(self.effect_witness[0]), list(self.effect_witness[1])]
        return data


def check_theorem3(machine: MooreMachine, horizon: int, budget: Optional[int] = None) -> Theorem3Report:
    """
    Interference (brute force on the machine) vs existence of low inputs l
    such that HI_1..t has an effect on LO_0..t under do(LI_1..t := l)

    Args:
        machine: Exact MooreMachine
        horizon: Maximum t
        budget: Enumeration guard shared by both sides

    Returns:
        Theorem3Report; agree must be True
    """
    ni = check_noninterference(machine, horizon, probabilistic=True, budget=budget)
    sem, binding = compile_machine(machine, horizon)

    report = Theorem3Report(horizon=horizon, interference=not ni.noninterfering, effect=False, noninterference=ni)
    for t in range(1, horizon + 1):
        for low in itertools.product(machine.lo_in, repeat=t):
            fixed = dict(zip(binding.low_inputs(t), low))
            result = has_effect(sem, binding.high_inputs(t), binding.low_outputs(t), fixed, budget=budget)
            if result.effect:
                report.effect = True
                report.effect_step = t
                report.effect_low_inputs = low
                report.effect_witness = result.witness
                break
        if report.effect:
            break

    if not report.agree:
        logger.error(f"Interference/effect disagreement at horizon {horizon}: {report.to_dict()}")
    return report


def enumerate_deterministic_machines(n_states: int = 2, symbols: Sequence[str] = ("0", "1")):
    """
    Every deterministic machine over the given state count with the same
    alphabet on all four channels, initial state s0
    """
    states = [f"s{i}" for i in range(n_states)]
    pairs = [(h, l) for h in symbols for l in symbols]
    keys = [(s, p) for s in states for p in pairs]
    outputs = [(h, l) for h in symbols for l in symbols]
    for targets in itertools.product(states, repeat=len(keys)):
        step = dict(zip(keys, targets))
        for outs in itertools.product(outputs, repeat=n_states):
            yield deterministic_machine(states, states[0], symbols, symbols, symbols, symbols, step, dict(zip(states, outs)))


def theorem3_sweep(horizon: int = 2, n_states: int = 2, budget: Optional[int] = None) -> pd.DataFrame:
    """
    Exhaustive agreement sweep over deterministic machines with binary channels

    Returns:
        DataFrame, satu row per machine (machine, interference, effect, agree)
    """
    budget = config.NI_BUDGET if budget is None else budget
    n_pairs = 4
    count = (n_states ** (n_states * n_pairs)) * (n_pairs ** n_states)
    if count > budget:
        raise BudgetExceededError("theorem3_sweep", count, budget)
    logger.info(f"Theorem 3 sweep: {count} machines, {n_states} states, horizon {horizon}")

    rows = []
    for idx, machine in enumerate(enumerate_deterministic_machines(n_states)):
        report = check_theorem3(machine, horizon, budget=budget)
        rows.append({
            "machine": idx,
            "interference": report.interference,
            "effect": report.effect,
            "agree": report.agree,
        })
    frame = pd.DataFrame(rows)
    logger.info(f"Sweep done: agreement {frame['agree'].mean():.2%}, {int(frame['interference'].sum())} interfering machines")
    return frame


def sweep_summary(frame: pd.DataFrame) -> Dict[str, object]:
    return {
        "machines": int(len(frame)),
        "interfering": int(frame["interference"].sum()),
        "effect": int(frame["effect"].sum()),
        "agreement": float(frame["agree"].mean()) if len(frame) else 1.0,
    }


# ============================================================================
# SEM spec file
# ============================================================================

def _dist_from_rows(rows, where: str) -> Distribution:
    table = {}
    try:
        for value, num, den in rows:
            table[value] = table.get(value, Fraction(0)) + Fraction(num, den)
    except ZeroDivisionError as e:
        raise InvalidInputError(f"{where}: zero denominator") from e
    try:
        return Distribution(table)
    except InvalidInputError as e:
        raise InvalidInputError(f"{where}: {e}") from e


def sem_from_spec(spec: SemSpec) -> Sem:
    declared = {v.name: v for v in spec.variables}
    variables = []
    for v in spec.variables:
        if v.exogenous:
            if v.marginal is None or v.cpt is not None:
                raise InvalidInputError(f"{v.name}: exogenous variables declare 'marginal' only")
            variables.append(Variable(v.name, tuple(v.range), exogenous=True, marginal=_dist_from_rows(v.marginal, v.name)))
            continue
        if v.cpt is None or v.marginal is not None:
            raise InvalidInputError(f"{v.name}: endogenous variables declare 'cpt' only")
        for parent in v.parents:
            if parent not in declared:
                raise InvalidInputError(f"{v.name}: unknown parent {parent!r}")
        cpt = {}
        for row in v.cpt:
            if len(row.given) != len(v.parents):
                raise InvalidInputError(f"{v.name}: CPT row {row.given} does not match parents {v.parents}")
            key = tuple(row.given)
            if key in cpt:
                raise InvalidInputError(f"{v.name}: duplicate CPT row {row.given}")
            cpt[key] = _dist_from_rows(row.dist, f"{v.name}{row.given}")
        variables.append(Variable(v.name, tuple(v.range), tuple(v.parents), cpt=cpt))
    return Sem(variables)


def load_sem(path: Union[str, Path]) -> Sem:
    sem = sem_from_spec(read_spec(SemSpec, path))
    logger.info(f"Loaded SEM from {path}: {len(sem.order)} variables")
    return sem
