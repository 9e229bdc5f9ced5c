"""
Mimic Machines
Dari satu observed trace, bangun dua machine yang sama-sama mereproduksi trace itu:
q_N (noninterfering) dan q_I (interfering)

"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from src.core.distribution import Distribution
from src.core.errors import AlphabetTooSmallError, InvalidInputError
from src.core.file_formats import TraceSpec, read_spec, write_spec
from src.core.machine import (
    Alphabet,
    InputPair,
    MooreMachine,
    OutputPair,
    alphabet_spec,
    output_dist,
    sample_run,
)

logger = logging.getLogger(__name__)

INTERFERING_HYPOTHESIS = "requires H to have two inputs and L to have two outputs"


@dataclass(frozen=True)
class ChannelAlphabets:
    hi_in: Alphabet
    lo_in: Alphabet
    hi_out: Alphabet
    lo_out: Alphabet

    @classmethod
    def of(cls, hi_in, lo_in, hi_out, lo_out) -> "ChannelAlphabets":
        return cls(Alphabet.of(hi_in), Alphabet.of(lo_in), Alphabet.of(hi_out), Alphabet.of(lo_out))

    @classmethod
    def from_machine(cls, machine: MooreMachine) -> "ChannelAlphabets":
        return cls(machine.hi_in, machine.lo_in, machine.hi_out, machine.lo_out)

    def input_pairs(self) -> List[InputPair]:
        return [(h, l) for h in self.hi_in for l in self.lo_in]


@dataclass(frozen=True)
class ObservedTrace:
    """k inputs and the k+1 outputs seen while feeding them"""
    inputs: Tuple[InputPair, ...]
    outputs: Tuple[OutputPair, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(tuple(i) for i in self.inputs))
        object.__setattr__(self, "outputs", tuple(tuple(o) for o in self.outputs))
        if not self.outputs:
            raise InvalidInputError("Trace needs at least one output")
        if len(self.outputs) != len(self.inputs) + 1:
            raise InvalidInputError(
                f"Trace with {len(self.inputs)} inputs must have {len(self.inputs) + 1} outputs, got {len(self.outputs)}"
            )

    @property
    def k(self) -> int:
        return len(self.inputs)

    def validate(self, alphabets: ChannelAlphabets):
        for hi, lo in self.inputs:
            if hi not in alphabets.hi_in or lo not in alphabets.lo_in:
                raise InvalidInputError(f"Trace input {(hi, lo)!r} not in the input alphabets")
        for hi, lo in self.outputs:
            if hi not in alphabets.hi_out or lo not in alphabets.lo_out:
                raise InvalidInputError(f"Trace output {(hi, lo)!r} not in the output alphabets")


def _chain(trace: ObservedTrace, alphabets: ChannelAlphabets) -> Tuple[List[str], dict, dict]:
    states = [f"c{j}" for j in range(1, trace.k + 2)]
    transition = {}
    for j, state in enumerate(states):
        target = states[min(j + 1, trace.k)]
        for pair in alphabets.input_pairs():
            transition[(state, pair)] = Distribution.point(target)
    output = {state: trace.outputs[j] for j, state in enumerate(states)}
    return states, transition, output


def build_mimic_noninterfering(trace: ObservedTrace, alphabets: ChannelAlphabets) -> MooreMachine:
    """
    q_N: chain c1..c_{k+1}, output at step j is outputs[j] whatever the input,
    the last state absorbs
    """
    trace.validate(alphabets)
    states, transition, output = _chain(trace, alphabets)
    logger.info(f"Built noninterfering mimic with {len(states)} states")
    return MooreMachine(
        states=tuple(states),
        initial=states[0],
        hi_in=alphabets.hi_in,
        lo_in=alphabets.lo_in,
        hi_out=alphabets.hi_out,
        lo_out=alphabets.lo_out,
        transition=transition,
        output=output,
    )


def build_mimic_interfering(trace: ObservedTrace, alphabets: ChannelAlphabets) -> MooreMachine:
    """
    q_I: q_N chain plus s00 (initial) and s01 (absorbing, deviant low output)

    s00 emits outputs[0] and follows the chain on the observed first input;
    every other input goes to s01. s01 keeps the high part of the second
    output but shows the smallest low symbol different from its low part.
    Traces with no inputs use the smallest input pair as the reference input
    and treat the absorbing chain output as the second output.

    Args:
        trace: Observed trace
        alphabets: Channel alphabets of the observed system

    Returns:
        MooreMachine with an interference witness at step 1
    """
    if len(alphabets.hi_in) < 2 or len(alphabets.lo_out) < 2:
        raise AlphabetTooSmallError(
            f"Interfering mimic {INTERFERING_HYPOTHESIS} "
            f"(got {len(alphabets.hi_in)} high inputs, {len(alphabets.lo_out)} low outputs)"
        )
    trace.validate(alphabets)
    states, transition, output = _chain(trace, alphabets)

    reference = trace.inputs[0] if trace.k else alphabets.input_pairs()[0]
    second = trace.outputs[1] if trace.k else trace.outputs[0]
    deviant_low = next(sym for sym in alphabets.lo_out if sym != second[1])

    output["s00"] = trace.outputs[0]
    output["s01"] = (second[0], deviant_low)
    follow = transition[(states[0], reference)]
    for pair in alphabets.input_pairs():
        transition[("s00", pair)] = follow if pair == reference else Distribution.point("s01")
        transition[("s01", pair)] = Distribution.point("s01")

    logger.info(f"Built interfering mimic: reference input {reference}, deviant low output {deviant_low!r}")
    return MooreMachine(
        states=tuple(states) + ("s00", "s01"),
        initial="s00",
        hi_in=alphabets.hi_in,
        lo_in=alphabets.lo_in,
        hi_out=alphabets.hi_out,
        lo_out=alphabets.lo_out,
        transition=transition,
        output=output,
    )


def indistinguishable(first: MooreMachine, second: MooreMachine, inputs: Sequence[InputPair]) -> bool:
    """True kalau output distribution kedua machine identik pada inputs"""
    return output_dist(first, inputs).equals(output_dist(second, inputs))


def trace_from_run(machine: MooreMachine, inputs: Sequence[InputPair], rng: np.random.Generator) -> ObservedTrace:
    io, _ = sample_run(machine, inputs, rng)
    return ObservedTrace(io.inputs, io.outputs)


# ============================================================================
# Trace file
# ============================================================================

def load_trace(path: Union[str, Path]) -> Tuple[ObservedTrace, ChannelAlphabets]:
    spec = read_spec(TraceSpec, path)
    alphabets = ChannelAlphabets.of(spec.hi_in, spec.lo_in, spec.hi_out, spec.lo_out)
    trace = ObservedTrace(tuple(spec.inputs), tuple(spec.outputs))
    trace.validate(alphabets)
    return trace, alphabets


def trace_to_spec(trace: ObservedTrace, alphabets: ChannelAlphabets) -> TraceSpec:
    return TraceSpec(
        hi_in=alphabet_spec(alphabets.hi_in),
        lo_in=alphabet_spec(alphabets.lo_in),
        hi_out=alphabet_spec(alphabets.hi_out),
        lo_out=alphabet_spec(alphabets.lo_out),
        inputs=[tuple(i) for i in trace.inputs],
        outputs=[tuple(o) for o in trace.outputs],
    )


def dump_trace(trace: ObservedTrace, alphabets: ChannelAlphabets, path: Union[str, Path]) -> Path:
    return write_spec(trace_to_spec(trace, alphabets), path)


def most_likely_trace(machine: MooreMachine, inputs: Sequence[InputPair]) -> ObservedTrace:
    """Most probable output sequence for inputs; ties go to the first in output order"""
    dist = output_dist(machine, inputs)
    rank = {pair: i for i, pair in enumerate(machine.output_pairs())}
    best = max(dist.items(), key=lambda kv: (kv[1], [-rank[o] for o in kv[0]]))[0]
    return ObservedTrace(tuple(inputs), best)
