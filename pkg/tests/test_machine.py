import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.distribution import Distribution
from src.core.errors import BudgetExceededError, InvalidInputError
from src.core.machine import (
    Alphabet,
    IoSequence,
    MooreMachine,
    check_noninterference,
    deterministic_machine,
    dump_machine,
    load_machine,
    output_dist,
    project_high,
    project_low,
    run,
    sample_run,
    trace_prob_closed,
)

BITS = ("0", "1")


def skewed_machine():
    """High input changes the odds of the low output but not which outputs are possible"""
    states = ("a", "b")
    transition = {}
    for s in states:
        for h in BITS:
            for l in BITS:
                odds = {"a": Fraction(1, 2), "b": Fraction(1, 2)} if h == "0" else {"a": Fraction(1, 4), "b": Fraction(3, 4)}
                transition[(s, (h, l))] = Distribution(odds)
    return MooreMachine(states, "a", BITS, BITS, BITS, BITS, transition, {"a": ("0", "0"), "b": ("0", "1")})


@st.composite
def machines(draw):
    n_states = draw(st.integers(min_value=1, max_value=3))
    states = tuple(f"s{i}" for i in range(n_states))
    transition = {}
    for s in states:
        for h in BITS:
            for l in BITS:
                weights = draw(st.lists(st.integers(min_value=0, max_value=3), min_size=n_states, max_size=n_states))
                if sum(weights) == 0:
                    weights[0] = 1
                total = sum(weights)
                transition[(s, (h, l))] = Distribution({t: Fraction(w, total) for t, w in zip(states, weights)})
    outputs = {s: (draw(st.sampled_from(BITS)), draw(st.sampled_from(BITS))) for s in states}
    return MooreMachine(states, "s0", BITS, BITS, BITS, BITS, transition, outputs)


input_sequences = st.lists(st.tuples(st.sampled_from(BITS), st.sampled_from(BITS)), max_size=3)


@st.composite
def deterministic_machines(draw):
    n_states = draw(st.integers(min_value=1, max_value=3))
    states = [f"s{i}" for i in range(n_states)]
    step = {(s, (h, l)): draw(st.sampled_from(states)) for s in states for h in BITS for l in BITS}
    outputs = {s: (draw(st.sampled_from(BITS)), draw(st.sampled_from(BITS))) for s in states}
    return deterministic_machine(states, "s0", BITS, BITS, BITS, BITS, step, outputs)


def test_alphabet_rejects_duplicates_and_foreign_null():
    with pytest.raises(InvalidInputError):
        Alphabet(("a", "a"))
    with pytest.raises(InvalidInputError):
        Alphabet(("a", "b"), null="c")
    assert "c" in Alphabet(("a", "c"), null="c")


def test_machine_requires_total_transition(echo_machine):
    transition = dict(echo_machine.transition)
    transition.pop(("s0", ("1", "1")))
    with pytest.raises(InvalidInputError, match="Transition undefined"):
        MooreMachine(echo_machine.states, "s0", BITS, BITS, BITS, BITS, transition, echo_machine.output)


def test_empty_input_gives_initial_output(coin_machine):
    dist = run(coin_machine, coin_machine.initial, [])
    assert dist.prob_of([("0", "0")], ["heads"]) == 1


def test_coin_machine_output_distribution(coin_machine):
    dist = output_dist(coin_machine, [("1", "0"), ("0", "0")])
    assert len(dist) == 4
    assert dist[(("0", "0"), ("0", "1"), ("0", "1"))] == Fraction(1, 4)
    assert all(len(outputs) == 3 for outputs, _ in dist.items())


def test_unknown_input_symbol(echo_machine):
    with pytest.raises(InvalidInputError, match="Unknown high input"):
        output_dist(echo_machine, [("2", "0")])


@settings(max_examples=60, deadline=None)
@given(machine=machines(), inputs=input_sequences)
def test_recursive_run_matches_closed_form(machine, inputs):
    dist = run(machine, machine.initial, inputs)
    assert dist.total() == 1
    for (outputs, states), p in dist.items():
        assert trace_prob_closed(machine, machine.initial, inputs, outputs, states) == p
    # a state sequence the recursion never produced has probability zero
    other = tuple(machine.states[-1] for _ in range(len(inputs) + 1))
    outputs = tuple(machine.output[s] for s in other)
    assert trace_prob_closed(machine, machine.initial, inputs, outputs, other) == dist.prob_of(outputs, other)


def test_closed_form_length_mismatch(echo_machine):
    with pytest.raises(InvalidInputError, match="Length mismatch"):
        trace_prob_closed(echo_machine, "s0", [("0", "0")], [("0", "0")], ["s0"])


def test_project_low_is_idempotent(coin_machine):
    low = project_low(output_dist(coin_machine, [("0", "0")]))
    assert low == project_low(low)
    assert low[("0", "1")] == Fraction(1, 2)


def test_constant_machine_is_noninterfering(constant_machine):
    report = check_noninterference(constant_machine, 3)
    assert report.noninterfering
    assert report.verdict == "noninterfering-up-to-horizon"
    assert report.visited == 4 + 16 + 64


def test_coin_and_low_echo_are_noninterfering(coin_machine, low_echo_machine):
    assert check_noninterference(coin_machine, 2).noninterfering
    assert check_noninterference(low_echo_machine, 2).noninterfering


def test_echo_machine_witness_is_first_in_order(echo_machine):
    report = check_noninterference(echo_machine, 2)
    assert not report.noninterfering
    assert report.witness == ((("0", "0"),), (("1", "0"),))
    first, second = report.low_dists
    assert first[("0", "0")] == 1
    assert second[("0", "1")] == 1
    assert report.to_dict()["witness"] == [[["0", "0"]], [["1", "0"]]]


def test_possibilistic_mode_ignores_changed_odds():
    machine = skewed_machine()
    assert not check_noninterference(machine, 1, probabilistic=True).noninterfering
    assert check_noninterference(machine, 2, probabilistic=False).noninterfering


def test_budget_guard(echo_machine):
    with pytest.raises(BudgetExceededError):
        check_noninterference(echo_machine, 5, budget=100)


def test_horizon_must_be_positive(echo_machine):
    with pytest.raises(InvalidInputError):
        check_noninterference(echo_machine, 0)


def test_sampled_runs_lie_in_the_support(coin_machine):
    rng = np.random.default_rng(7)
    inputs = [("0", "1"), ("1", "1"), ("1", "0")]
    support = output_dist(coin_machine, inputs).support_set()
    for _ in range(20):
        io, states = sample_run(coin_machine, inputs, rng)
        assert io.outputs in support
        assert len(states) == 4


def test_spec_file_keeps_probabilities(tmp_path):
    machine = skewed_machine()
    path = dump_machine(machine, tmp_path / "skewed.json")
    loaded = load_machine(path)
    inputs = [("1", "0"), ("0", "1")]
    assert output_dist(loaded, inputs) == output_dist(machine, inputs)
    assert json.loads(path.read_text())["initial"] == "a"


def test_spec_file_unknown_key(tmp_path, data_dir):
    data = json.loads((data_dir / "echo_machine.json").read_text())
    data["colour"] = "blue"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(InvalidInputError, match="colour"):
        load_machine(path)


def test_project_high_keeps_the_high_component(coin_machine, echo_machine):
    high = project_high(output_dist(coin_machine, [("1", "0")]))
    assert high == Distribution.point(("0", "0"))
    echoed = project_high(output_dist(echo_machine, [("1", "0"), ("0", "1")]))
    assert echoed[("0", "1", "0")] == 1


def test_sampled_run_splits_into_channels(echo_machine):
    io, states = sample_run(echo_machine, [("1", "0"), ("0", "1")], np.random.default_rng(0))
    assert isinstance(io, IoSequence)
    assert io.low_inputs == ("0", "1")
    assert io.high_outputs == ("0", "1", "0")
    assert io.low_outputs == ("0", "1", "0")
    assert states == ("s0", "s1", "s0")
    with pytest.raises(InvalidInputError, match="Expected 2 outputs"):
        IoSequence((("0", "0"),), (("0", "0"),))


@settings(max_examples=60, deadline=None)
@given(machine=machines())
def test_witness_holds_when_recomputed(machine):
    report = check_noninterference(machine, 2)
    if report.noninterfering:
        return
    first, second = report.witness
    assert [p[1] for p in first] == [p[1] for p in second]
    assert [p[0] for p in first] != [p[0] for p in second]
    low_first = project_low(output_dist(machine, first))
    low_second = project_low(output_dist(machine, second))
    assert not low_first.equals(low_second)
    assert report.low_dists[0].equals(low_first)
    assert report.low_dists[1].equals(low_second)


@settings(max_examples=60, deadline=None)
@given(machine=deterministic_machines())
def test_possibilistic_and_probabilistic_agree_on_deterministic_machines(machine):
    probabilistic = check_noninterference(machine, 3)
    possibilistic = check_noninterference(machine, 3, probabilistic=False)
    assert probabilistic.noninterfering == possibilistic.noninterfering
    assert probabilistic.witness == possibilistic.witness
