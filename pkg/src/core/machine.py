"""
Probabilistic Moore Machines
Trace distribution, output distribution, L/H projection dan bounded noninterference check

Inputs are (hi, lo) pairs, outputs are (hi, lo) pairs. A run over k inputs
produces k+1 outputs and k+1 states.

"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src import config
from src.core.distribution import Distribution, Number, to_probability
from src.core.errors import BudgetExceededError, InvalidInputError
from src.core.file_formats import AlphabetSpec, MachineSpec, TransitionRow, read_spec, write_spec

logger = logging.getLogger(__name__)

State = str
InputPair = Tuple[str, str]
OutputPair = Tuple[str, str]
InputSeq = Tuple[InputPair, ...]
OutputSeq = Tuple[OutputPair, ...]


@dataclass(frozen=True)
class Alphabet:
    """
    Ordered set of opaque tokens
    The null token ("no new message") is an ordinary member when declared
    """
    symbols: Tuple[str, ...]
    null: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if not self.symbols:
            raise InvalidInputError("Alphabet must not be empty")
        if len(set(self.symbols)) != len(self.symbols):
            raise InvalidInputError(f"Alphabet tokens must be unique: {self.symbols}")
        if self.null is not None and self.null not in self.symbols:
            raise InvalidInputError(f"Null token {self.null!r} is not in alphabet {self.symbols}")

    @classmethod
    def of(cls, value: Union["Alphabet", Iterable[str], AlphabetSpec]) -> "Alphabet":
        if isinstance(value, Alphabet):
            return value
        if isinstance(value, AlphabetSpec):
            return cls(tuple(value.symbols), value.null)
        return cls(tuple(value))

    def __contains__(self, token) -> bool:
        return token in self.symbols

    def __iter__(self):
        return iter(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, token: str) -> int:
        return self.symbols.index(token)


@dataclass(frozen=True, eq=False)
class MooreMachine:
    """
    Q = (S, s0, I, O, tau, sigma) with I = hi_in x lo_in and O = hi_out x lo_out

    transition maps (state, (hi, lo)) to a Distribution over states,
    output maps state to (hi, lo).
    """
    states: Tuple[State, ...]
    initial: State
    hi_in: Alphabet
    lo_in: Alphabet
    hi_out: Alphabet
    lo_out: Alphabet
    transition: Dict[Tuple[State, InputPair], Distribution]
    output: Dict[State, OutputPair]
    exact: bool = True

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        for name in ("hi_in", "lo_in", "hi_out", "lo_out"):
            object.__setattr__(self, name, Alphabet.of(getattr(self, name)))
        if len(set(self.states)) != len(self.states):
            raise InvalidInputError(f"Duplicate states: {self.states}")
        if self.initial not in self.states:
            raise InvalidInputError(f"Initial state {self.initial!r} is not a state")

        state_set = set(self.states)
        for s in self.states:
            if s not in self.output:
                raise InvalidInputError(f"Output undefined for state {s!r}")
            hi, lo = self.output[s]
            if hi not in self.hi_out or lo not in self.lo_out:
                raise InvalidInputError(f"Output {self.output[s]!r} of state {s!r} not in output alphabets")
            for pair in self.input_pairs():
                dist = self.transition.get((s, pair))
                if dist is None:
                    raise InvalidInputError(f"Transition undefined for state {s!r} on input {pair!r}")
                unknown = dist.support_set() - state_set
                if unknown:
                    raise InvalidInputError(f"Transition ({s!r}, {pair!r}) reaches unknown states {sorted(unknown)}")
        extra = set(self.output) - state_set
        if extra:
            raise InvalidInputError(f"Output defined for unknown states {sorted(extra)}")

    def input_pairs(self) -> List[InputPair]:
        """(hi, lo) pairs, hi-major in declaration order"""
        return [(h, l) for h in self.hi_in for l in self.lo_in]

    def output_pairs(self) -> List[OutputPair]:
        return [(h, l) for h in self.hi_out for l in self.lo_out]

    @property
    def deterministic(self) -> bool:
        return all(d.is_point() for d in self.transition.values())

    def tau(self, state: State, pair: InputPair) -> Distribution:
        self.check_state(state)
        self.check_input(pair)
        return self.transition[(state, tuple(pair))]

    def sigma(self, state: State) -> OutputPair:
        self.check_state(state)
        return self.output[state]

    def check_state(self, state: State):
        if state not in self.output:
            raise InvalidInputError(f"Unknown state {state!r}")

    def check_input(self, pair) -> InputPair:
        if len(pair) != 2:
            raise InvalidInputError(f"Input must be a (hi, lo) pair, got {pair!r}")
        hi, lo = pair
        if hi not in self.hi_in:
            raise InvalidInputError(f"Unknown high input symbol {hi!r}")
        if lo not in self.lo_in:
            raise InvalidInputError(f"Unknown low input symbol {lo!r}")
        return (hi, lo)

    def check_output(self, pair) -> OutputPair:
        if len(pair) != 2 or pair[0] not in self.hi_out or pair[1] not in self.lo_out:
            raise InvalidInputError(f"Unknown output pair {pair!r}")
        return (pair[0], pair[1])


@dataclass(frozen=True)
class IoSequence:
    """Input sequence plus the outputs it produced (|outputs| = |inputs| + 1)"""
    inputs: InputSeq
    outputs: OutputSeq

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(tuple(i) for i in self.inputs))
        object.__setattr__(self, "outputs", tuple(tuple(o) for o in self.outputs))
        if len(self.outputs) != len(self.inputs) + 1:
            raise InvalidInputError(
                f"Expected {len(self.inputs) + 1} outputs for {len(self.inputs)} inputs, got {len(self.outputs)}"
            )

    @property
    def low_inputs(self) -> Tuple[str, ...]:
        return tuple(i[1] for i in self.inputs)

    @property
    def low_outputs(self) -> Tuple[str, ...]:
        return tuple(o[1] for o in self.outputs)

    @property
    def high_outputs(self) -> Tuple[str, ...]:
        return tuple(o[0] for o in self.outputs)


class TraceDistribution(Distribution):
    """Distribution over (output-sequence, state-sequence) pairs"""

    __slots__ = ()

    def prob_of(self, outputs: Sequence[OutputPair], states: Sequence[State]) -> Number:
        return self.prob((tuple(tuple(o) for o in outputs), tuple(states)))

    def outputs(self) -> Distribution:
        return self.map(lambda trace: trace[0])


def _check_inputs(machine: MooreMachine, inputs: Iterable) -> InputSeq:
    return tuple(machine.check_input(i) for i in inputs)


def run(machine: MooreMachine, start: State, inputs: Sequence[InputPair]) -> TraceDistribution:
    """
    Q(start, inputs) sebagai distribusi atas (outputs, states)

    Follows the recursion: empty input gives ([sigma(s)], [s]) with probability 1,
    otherwise prepend (sigma(s), s) to every continuation from s' weighted by tau(s, i)(s').
    """
    machine.check_state(start)
    seq = _check_inputs(machine, inputs)
    zero = Fraction(0) if machine.exact else 0.0
    memo: Dict[Tuple[State, int], Dict[tuple, Number]] = {}

    def expand(state: State, depth: int) -> Dict[tuple, Number]:
        key = (state, depth)
        if key in memo:
            return memo[key]
        head_out = machine.output[state]
        if depth == len(seq):
            table = {((head_out,), (state,)): to_probability(1, machine.exact)}
        else:
            table = {}
            for nxt, p in machine.transition[(state, seq[depth])].items():
                for (outs, states), q in expand(nxt, depth + 1).items():
                    trace = ((head_out,) + outs, (state,) + states)
                    table[trace] = table.get(trace, zero) + p * q
        memo[key] = table
        return table

    return TraceDistribution(expand(start, 0), exact=machine.exact)


def trace_prob_closed(
    machine: MooreMachine,
    start: State,
    inputs: Sequence[InputPair],
    outputs: Sequence[OutputPair],
    states: Sequence[State],
) -> Number:
    """
    Closed-form product for Q(start, inputs)(outputs, states)

    Args:
        inputs: k input pairs
        outputs: k+1 output pairs
        states: k+1 states

    Returns:
        Probability (Fraction in exact mode)
    """
    machine.check_state(start)
    seq = _check_inputs(machine, inputs)
    k = len(seq)
    if len(outputs) != k + 1 or len(states) != k + 1:
        raise InvalidInputError(
            f"Length mismatch: {k} inputs need {k + 1} outputs and states, "
            f"got {len(outputs)} outputs and {len(states)} states"
        )
    for s in states:
        machine.check_state(s)
    outs = [machine.check_output(o) for o in outputs]

    one = to_probability(1, machine.exact)
    zero = one - one
    if states[0] != start or machine.output[states[0]] != outs[0]:
        return zero
    prob = one
    for kappa in range(k):
        prob *= machine.transition[(states[kappa], seq[kappa])].prob(states[kappa + 1])
        if machine.output[states[kappa + 1]] != outs[kappa + 1]:
            return zero
        if prob == 0:
            return zero
    return prob


def output_dist(machine: MooreMachine, inputs: Sequence[InputPair]) -> Distribution:
    """Q(inputs): state sequences marginalized out of run from the initial state"""
    return run(machine, machine.initial, inputs).outputs()


def _project(component: int):
    def project(outputs):
        return tuple(o[component] if isinstance(o, tuple) else o for o in outputs)
    return project


def project_low(dist: Distribution) -> Distribution:
    """Pushforward through the L projection; already-low sequences pass through"""
    return dist.map(_project(1))


def project_high(dist: Distribution) -> Distribution:
    return dist.map(_project(0))


def sample_run(machine: MooreMachine, inputs: Sequence[InputPair], rng: np.random.Generator) -> Tuple[IoSequence, Tuple[State, ...]]:
    """
    Draw satu trace dari machine (float sampling, state order mengikuti deklarasi)

    Returns:
        (IoSequence, visited states)
    """
    seq = _check_inputs(machine, inputs)
    state = machine.initial
    states = [state]
    outputs = [machine.output[state]]
    for pair in seq:
        dist = machine.transition[(state, pair)]
        candidates = [s for s in machine.states if dist.prob(s) > 0]
        weights = np.array([float(dist.prob(s)) for s in candidates])
        state = candidates[int(rng.choice(len(candidates), p=weights / weights.sum()))]
        states.append(state)
        outputs.append(machine.output[state])
    return IoSequence(seq, tuple(outputs)), tuple(states)


# ============================================================================
# Noninterference
# ============================================================================

@dataclass
class NoninterferenceReport:
    noninterfering: bool
    horizon: int
    probabilistic: bool
    visited: int
    witness: Optional[Tuple[InputSeq, InputSeq]] = None
    low_dists: Optional[Tuple[Distribution, Distribution]] = field(default=None, repr=False)

    @property
    def verdict(self) -> str:
        return "noninterfering-up-to-horizon" if self.noninterfering else "witness"

    def to_dict(self) -> dict:
        data = {
            "verdict": self.verdict,
            "horizon": self.horizon,
            "probabilistic": self.probabilistic,
            "visited": self.visited,
        }
        if self.witness is not None:
            data["witness"] = [[list(p) for p in seq] for seq in self.witness]
        return data


def enumeration_size(n_inputs: int, horizon: int) -> int:
    """Number of input sequences of length 1..horizon"""
    return sum(n_inputs ** k for k in range(1, horizon + 1))


def _low_equal(a: Distribution, b: Distribution, probabilistic: bool) -> bool:
    if probabilistic:
        return a.equals(b)
    # possibilistic reading: same set of reachable low outputs
    return a.same_support(b)


def check_noninterference(
    machine: MooreMachine,
    horizon: int,
    probabilistic: bool = True,
    budget: Optional[int] = None,
) -> NoninterferenceReport:
    """
    Brute-force H -> L noninterference up to a bounded horizon

    Witness order: shorter sequences first, then the lexicographically smallest
    first sequence, then the smallest second sequence after it with the same
    low inputs. Symbols compare by declaration order.

    Args:
        machine: MooreMachine to check
        horizon: Maximum input sequence length (>= 1)
        probabilistic: Compare low output distributions exactly; when False
            only their supports are compared
        budget: Max input sequences visited (default INFOFLOW_NI_BUDGET)

    Returns:
        NoninterferenceReport
    """
    if horizon < 1:
        raise InvalidInputError(f"Horizon must be a positive integer, got {horizon}")
    budget = config.NI_BUDGET if budget is None else budget
    pairs = machine.input_pairs()
    size = enumeration_size(len(pairs), horizon)
    if size > budget:
        raise BudgetExceededError("check_noninterference", size, budget)
    logger.info(f"Checking noninterference: {len(machine.states)} states, horizon {horizon}, {size} input sequences")

    visited = 0
    for length in range(1, horizon + 1):
        sequences = list(itertools.product(pairs, repeat=length))
        lows = [project_low(output_dist(machine, seq)) for seq in sequences]
        visited += len(sequences)

        classes: Dict[Tuple[str, ...], List[int]] = {}
        for idx, seq in enumerate(sequences):
            classes.setdefault(tuple(p[1] for p in seq), []).append(idx)

        for idx, seq in enumerate(sequences):
            members = classes[tuple(p[1] for p in seq)]
            for other in members:
                if other <= idx:
                    continue
                if not _low_equal(lows[idx], lows[other], probabilistic):
                    logger.info(f"Interference witness at length {length}: {seq} vs {sequences[other]}")
                    return NoninterferenceReport(
                        noninterfering=False,
                        horizon=horizon,
                        probabilistic=probabilistic,
                        visited=visited,
                        witness=(seq, sequences[other]),
                        low_dists=(lows[idx], lows[other]),
                    )

    logger.info(f"Noninterfering up to horizon {horizon}")
    return NoninterferenceReport(noninterfering=True, horizon=horizon, probabilistic=probabilistic, visited=visited)


# ============================================================================
# Machine spec file
# ============================================================================

def machine_from_spec(spec: MachineSpec) -> MooreMachine:
    transition = {}
    for row in spec.transitions:
        key = (row.state, (row.hi, row.lo))
        if key in transition:
            raise InvalidInputError(f"Duplicate transition row for {key!r}")
        try:
            support = {}
            for target, num, den in row.next:
                support[target] = support.get(target, Fraction(0)) + Fraction(num, den)
        except ZeroDivisionError as e:
            raise InvalidInputError(f"Zero denominator in transition row {key!r}") from e
        transition[key] = Distribution(support)
    return MooreMachine(
        states=tuple(spec.states),
        initial=spec.initial,
        hi_in=Alphabet.of(spec.hi_in),
        lo_in=Alphabet.of(spec.lo_in),
        hi_out=Alphabet.of(spec.hi_out),
        lo_out=Alphabet.of(spec.lo_out),
        transition=transition,
        output={s: tuple(o) for s, o in spec.outputs.items()},
    )


def alphabet_spec(alphabet: Alphabet):
    if alphabet.null is None:
        return list(alphabet.symbols)
    return AlphabetSpec(symbols=list(alphabet.symbols), null=alphabet.null)


def machine_to_spec(machine: MooreMachine) -> MachineSpec:
    if not machine.exact:
        raise InvalidInputError("Only exact (rational) machines can be written to a spec file")
    rows = []
    for s in machine.states:
        for pair in machine.input_pairs():
            dist = machine.transition[(s, pair)]
            nxt = [(t, dist.prob(t).numerator, dist.prob(t).denominator) for t in machine.states if dist.prob(t) > 0]
            rows.append(TransitionRow(state=s, hi=pair[0], lo=pair[1], next=nxt))
    return MachineSpec(
        states=list(machine.states),
        initial=machine.initial,
        hi_in=alphabet_spec(machine.hi_in),
        lo_in=alphabet_spec(machine.lo_in),
        hi_out=alphabet_spec(machine.hi_out),
        lo_out=alphabet_spec(machine.lo_out),
        transitions=rows,
        outputs={s: machine.output[s] for s in machine.states},
    )


def load_machine(path: Union[str, Path]) -> MooreMachine:
    machine = machine_from_spec(read_spec(MachineSpec, path))
    logger.info(f"Loaded machine from {path}: {len(machine.states)} states, {len(machine.input_pairs())} inputs")
    return machine


def dump_machine(machine: MooreMachine, path: Union[str, Path]) -> Path:
    return write_spec(machine_to_spec(machine), path)


def deterministic_machine(
    states: Sequence[State],
    initial: State,
    hi_in: Iterable[str],
    lo_in: Iterable[str],
    hi_out: Iterable[str],
    lo_out: Iterable[str],
    step: Dict[Tuple[State, InputPair], State],
    output: Dict[State, OutputPair],
) -> MooreMachine:
    """Shortcut: transition given as a plain next-state map"""
    return MooreMachine(
        states=tuple(states),
        initial=initial,
        hi_in=Alphabet.of(hi_in),
        lo_in=Alphabet.of(lo_in),
        hi_out=Alphabet.of(hi_out),
        lo_out=Alphabet.of(lo_out),
        transition={key: Distribution.point(target) for key, target in step.items()},
        output=dict(output),
    )
