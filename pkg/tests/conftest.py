"""
Shared fixtures: sample machines, simulator config, temporary database

"""

from pathlib import Path

import pytest

from simulator.tracker import TrackerModel, load_simulator_config
from src.core.machine import deterministic_machine, load_machine

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
BITS = ("0", "1")


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def echo_machine():
    """Low output repeats the last high input"""
    return load_machine(DATA_DIR / "echo_machine.json")


@pytest.fixture
def constant_machine():
    return load_machine(DATA_DIR / "constant_machine.json")


@pytest.fixture
def coin_machine():
    """Low output is a fair coin, independent of every input"""
    return load_machine(DATA_DIR / "coin_machine.json")


@pytest.fixture
def low_echo_machine():
    """Low output repeats the last low input, high output the last high input"""
    states = ["s00", "s01", "s10", "s11"]
    step = {(s, (h, l)): f"s{h}{l}" for s in states for h in BITS for l in BITS}
    output = {f"s{h}{l}": (h, l) for h in BITS for l in BITS}
    return deterministic_machine(states, "s00", BITS, BITS, BITS, BITS, step, output)


@pytest.fixture
def simulator_config():
    return load_simulator_config()


@pytest.fixture
def experiment_config(simulator_config):
    return simulator_config.experiment


@pytest.fixture
def tracker(simulator_config):
    return TrackerModel(simulator_config.tracker)


@pytest.fixture
def database_url(tmp_path) -> str:
    return f"sqlite:///{tmp_path / 'infoflow-test.db'}"
