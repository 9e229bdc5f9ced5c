"""
Simulated Ad Tracker
Ad server dengan pool yang berganti, churn per reload, targeting berdasarkan
interest profile, dan coupling antar unit lewat serve counter bersama

"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from src import config
from src.core.ad_statistics import AdRecord
from src.core.errors import InvalidInputError, TrackerFault
from src.core.file_formats import AdSpec, SimulatorConfig, TrackerSpec, parse_spec

logger = logging.getLogger(__name__)


@dataclass
class Profile:
    """Session state untuk satu unit"""
    unit_id: str
    start_pool: int
    interests: Counter = field(default_factory=Counter)
    visits: int = 0
    idle_ticks: int = 0


def load_simulator_config(config_path: Optional[Union[str, Path]] = None) -> SimulatorConfig:
    path = Path(config_path or config.SIMULATOR_CONFIG)
    if not path.exists():
        raise InvalidInputError(f"Simulator config not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{path}: malformed JSON ({e})") from e
    return parse_spec(SimulatorConfig, data, str(path))


def build_inventory(spec: TrackerSpec) -> List[AdSpec]:
    """Explicit ads first, then generated ads per topic in declaration order"""
    ads = list(spec.ads)
    for topic, count in spec.inventory.items():
        for i in range(count):
            ads.append(AdSpec(url=f"https://ads.example/{topic}/{i}", text=f"{topic} offer {i}", topics=[topic]))
    urls = [ad.url for ad in ads]
    if len(set(urls)) != len(urls):
        raise InvalidInputError("Ad urls must be unique across the inventory")
    if not ads:
        raise InvalidInputError("Tracker inventory is empty")
    return ads


class TrackerModel:
    """
    Stateful simulated ad server

    Weight of ad a for unit u at tick t:
        pool(u, t)[a] * churn * boost (targeting, if a's topic is one of u's
        interests) * (1 + coupling * serves of a to other units so far / other units)

    The serve counter lives for the whole run and is reset by reset(). A unit
    never counts its own serves, so a unit running alone is not coupled.

    With targeting disabled the weights never read the profile interests, so
    the ad distribution does not depend on the treatment.
    """

    def __init__(self, spec: Optional[TrackerSpec] = None, config_path: Optional[Union[str, Path]] = None):
        if spec is None:
            spec = load_simulator_config(config_path).tracker
        self.spec = spec
        self.ads = build_inventory(spec)
        self.urls = [ad.url for ad in self.ads]
        self.topics = [frozenset(ad.topics) for ad in self.ads]
        self.pool_weights = np.array([self._pool_weights(pool) for pool in spec.pools])
        if np.any(self.pool_weights.sum(axis=1) <= 0):
            raise InvalidInputError("Every pool needs positive total weight")

        self.rng = np.random.default_rng(0)
        self.profiles: Dict[str, Profile] = {}
        self.tick = -1
        self.served: Counter = Counter()
        self.served_by_unit: Dict[str, Counter] = {}
        logger.info(
            f"Tracker initialized: {len(self.ads)} ads, {len(spec.pools)} pools, "
            f"targeting={'on' if spec.targeting.enabled else 'off'}, coupling={spec.coupling}"
        )

    def _pool_weights(self, pool) -> List[float]:
        if pool.weights is not None:
            unknown = set(pool.weights) - set(self.urls)
            if unknown:
                raise InvalidInputError(f"Pool {pool.name}: unknown urls {sorted(unknown)}")
            return [float(pool.weights.get(url, 0.0)) for url in self.urls]
        ranks = np.random.default_rng(pool.shuffle_seed).permutation(len(self.urls))
        return list(1.0 / (ranks + 1.0) ** pool.skew)

    @classmethod
    def with_overrides(cls, spec: TrackerSpec, **changes) -> "TrackerModel":
        """Copy of a spec with top-level fields replaced (targeting, coupling, ...)"""
        data = spec.model_dump()
        for key, value in changes.items():
            if key == "targeting_enabled":
                data["targeting"]["enabled"] = value
            else:
                data[key] = value
        return cls(parse_spec(TrackerSpec, data, "overrides"))

    @property
    def targeting_enabled(self) -> bool:
        return self.spec.targeting.enabled

    def reset(self, seed: int):
        """Lupakan semua profile, mulai stream random baru"""
        self.rng = np.random.default_rng(seed)
        self.profiles = {}
        self.tick = -1
        self.served = Counter()
        self.served_by_unit = {}

    def register(self, unit_id: str) -> Profile:
        if unit_id in self.profiles:
            raise InvalidInputError(f"Unit {unit_id} already registered")
        profile = Profile(unit_id=unit_id, start_pool=int(self.rng.integers(len(self.spec.pools))))
        self.profiles[unit_id] = profile
        return profile

    def _profile(self, unit_id: str) -> Profile:
        try:
            return self.profiles[unit_id]
        except KeyError:
            raise InvalidInputError(f"Unknown unit {unit_id}") from None

    def begin_tick(self, tick: int):
        if tick <= self.tick:
            raise InvalidInputError(f"Ticks must increase: {tick} after {self.tick}")
        self.tick = tick

    def pool_of(self, unit_id: str, tick: int) -> int:
        profile = self._profile(unit_id)
        if self.spec.switch_interval == 0:
            return profile.start_pool
        return (profile.start_pool + tick // self.spec.switch_interval) % len(self.spec.pools)

    def train(self, unit_id: str, topic: str):
        """Unit mengunjungi halaman bertopik `topic`"""
        profile = self._profile(unit_id)
        profile.interests[topic] += 1
        profile.visits += 1

    def idle(self, unit_id: str):
        self._profile(unit_id).idle_ticks += 1

    def weights(self, unit_id: str) -> np.ndarray:
        profile = self._profile(unit_id)
        weights = self.pool_weights[self.pool_of(unit_id, self.tick)].copy()
        if self.spec.churn_sigma > 0:
            weights *= self.rng.lognormal(0.0, self.spec.churn_sigma, size=len(weights))
        if self.spec.targeting.enabled and profile.interests:
            liked = set(profile.interests)
            boost = np.array([self.spec.targeting.boost if topics & liked else 1.0 for topics in self.topics])
            weights *= boost
        others = len(self.profiles) - 1
        if self.spec.coupling > 0 and others > 0 and self.served:
            own = self.served_by_unit.get(unit_id, Counter())
            counts = np.array([self.served.get(url, 0) - own.get(url, 0) for url in self.urls], dtype=float)
            weights *= 1.0 + self.spec.coupling * counts / others
        return weights

    def serve(self, unit_id: str, count: int, context: Optional[str] = None, reload: int = 0, session: int = 0) -> List[AdRecord]:
        """
        Satu page reload: `count` distinct ads untuk unit

        Raises:
            TrackerFault: with probability fault_prob
        """
        if self.tick < 0:
            raise InvalidInputError("serve() called before begin_tick()")
        if self.spec.fault_prob > 0 and self.rng.random() < self.spec.fault_prob:
            raise TrackerFault(f"Tracker refused to serve {unit_id} at tick {self.tick}")
        weights = self.weights(unit_id)
        available = int(np.count_nonzero(weights))
        size = min(count, available)
        picked = self.rng.choice(len(self.urls), size=size, replace=False, p=weights / weights.sum())
        own = self.served_by_unit.setdefault(unit_id, Counter())
        ads = []
        for idx in picked:
            ad = self.ads[int(idx)]
            self.served[ad.url] += 1
            own[ad.url] += 1
            ads.append(AdRecord(url=ad.url, text=ad.text, context=context, reload=reload, session=session))
        return ads
