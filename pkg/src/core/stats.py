"""
Permutation Testing
Exact / partition / Monte-Carlo permutation test, nonce closed form,
chi-square 2x2, Benjamini-Hochberg FDR

"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2 as chi2_dist
from scipy.stats import chi2_contingency

from src import config
from src.core.distribution import Distribution, Number
from src.core.errors import BudgetExceededError, ContractError, InvalidInputError

logger = logging.getLogger(__name__)

TAILS = ("leq", "geq", "two-sided")
METHODS = ("auto", "exact", "partition", "monte-carlo")

TIE_TOLERANCE = 1e-12


@dataclass
class ResponseVector:
    """
    One response per unit, ordered by assignment index
    The first n are experimental, the next m control
    """
    responses: List[Any]
    n: int
    m: int
    labels: Tuple[str, str] = ("experimental", "control")
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.responses = list(self.responses)
        if self.n < 0 or self.m < 0:
            raise InvalidInputError(f"Group sizes must be non-negative, got ({self.n}, {self.m})")
        if len(self.responses) != self.n + self.m:
            raise InvalidInputError(f"{len(self.responses)} responses for group sizes ({self.n}, {self.m})")

    def __len__(self) -> int:
        return len(self.responses)

    @property
    def group_sizes(self) -> Tuple[int, int]:
        return (self.n, self.m)

    @property
    def experimental(self) -> List[Any]:
        return self.responses[: self.n]

    @property
    def control(self) -> List[Any]:
        return self.responses[self.n:]

    def reordered(self, order: Sequence[int]) -> "ResponseVector":
        return ResponseVector([self.responses[i] for i in order], self.n, self.m, self.labels, dict(self.metadata))


@dataclass(frozen=True)
class TestStatistic:
    """
    s(y) = reduce([featurize(r) for r in y], n, m)

    featurize runs once per unit; permutations only reorder the features.
    group_symmetric promises invariance under reordering within each group.
    """
    name: str
    featurize: Callable[[Any], Any]
    reduce: Callable[[List[Any], int, int], float]
    group_symmetric: bool = True

    __test__ = False

    def features(self, y: ResponseVector) -> List[Any]:
        return [self.featurize(r) for r in y.responses]

    def evaluate(self, y: ResponseVector) -> float:
        return self.reduce(self.features(y), y.n, y.m)

    __call__ = evaluate


@dataclass
class PermutationResult:
    p_value: float
    method: str
    comparisons: int
    successes: int
    observed: float
    tail: str
    mc_stderr: Optional[float] = None

    @property
    def p_fraction(self) -> Fraction:
        return Fraction(self.successes, self.comparisons)

    def to_dict(self) -> dict:
        return {
            "p_value": self.p_value,
            "method": self.method,
            "comparisons": self.comparisons,
            "observed": self.observed,
            "tail": self.tail,
            "mc_stderr": self.mc_stderr,
        }


def _at_least(observed, other) -> bool:
    """observed <= other, ties (relative 1e-12) count as <="""
    if isinstance(observed, (int, Fraction)) and isinstance(other, (int, Fraction)):
        return observed <= other
    return observed <= other or math.isclose(observed, other, rel_tol=TIE_TOLERANCE, abs_tol=TIE_TOLERANCE)


def _comparator(tail: str, observed) -> Callable[[Any], bool]:
    if tail == "leq":
        return lambda value: _at_least(observed, value)
    if tail == "geq":
        return lambda value: _at_least(value, observed)
    if tail == "two-sided":
        return lambda value: _at_least(abs(observed), abs(value))
    raise InvalidInputError(f"Unknown tail {tail!r}, expected one of {TAILS}")


def _choose_method(stat: TestStatistic, y: ResponseVector, method: str, seed: Optional[int]) -> str:
    size = len(y)
    if method not in METHODS:
        raise InvalidInputError(f"Unknown method {method!r}, expected one of {METHODS}")
    if method == "partition" and not stat.group_symmetric:
        raise ContractError(f"Partition method requires a group-symmetric statistic, {stat.name} is not")
    if method == "exact" and math.factorial(size) > config.EXACT_BUDGET:
        raise BudgetExceededError("permutation_test(exact)", math.factorial(size), config.EXACT_BUDGET)
    if method == "partition" and math.comb(size, y.n) > config.EXACT_BUDGET:
        raise BudgetExceededError("permutation_test(partition)", math.comb(size, y.n), config.EXACT_BUDGET)
    if method != "auto":
        return method

    # partition and exact give the same p for group-symmetric statistics
    if stat.group_symmetric and math.comb(size, y.n) <= config.EXACT_BUDGET:
        return "partition"
    if math.factorial(size) <= config.EXACT_BUDGET:
        return "exact"
    if seed is None:
        raise ContractError("Monte-Carlo fallback needs an explicit seed")
    logger.warning(f"Exact enumeration infeasible for |y|={size}, falling back to Monte-Carlo")
    return "monte-carlo"


def permutation_test(
    stat: TestStatistic,
    y: ResponseVector,
    tail: str = "leq",
    method: str = "auto",
    seed: Optional[int] = None,
    samples: Optional[int] = None,
) -> PermutationResult:
    """
    p = fraction of relabelings pi with s(y) <= s(pi(y)) (tail=leq)

    Args:
        stat: TestStatistic
        y: ResponseVector (|y| >= 2)
        tail: leq, geq or two-sided (absolute values)
        method: exact (all |y|! permutations), partition (all C(n+m, n)
            assignments, group-symmetric statistics only), monte-carlo
            (identity plus samples-1 uniform permutations), or auto
        seed: Required for monte-carlo
        samples: Monte-Carlo comparisons (default INFOFLOW_MC_SAMPLES)

    Returns:
        PermutationResult
    """
    if len(y) < 2:
        raise InvalidInputError(f"Permutation test needs at least 2 responses, got {len(y)}")
    chosen = _choose_method(stat, y, method, seed)
    features = stat.features(y)
    n, m = y.n, y.m
    observed = stat.reduce(features, n, m)
    succeeds = _comparator(tail, observed)
    size = len(features)

    successes = 0
    comparisons = 0
    stderr = None
    if chosen == "exact":
        for perm in itertools.permutations(range(size)):
            comparisons += 1
            if succeeds(stat.reduce([features[i] for i in perm], n, m)):
                successes += 1
    elif chosen == "partition":
        everyone = range(size)
        for chosen_idx in itertools.combinations(everyone, n):
            picked = set(chosen_idx)
            order = list(chosen_idx) + [i for i in everyone if i not in picked]
            comparisons += 1
            if succeeds(stat.reduce([features[i] for i in order], n, m)):
                successes += 1
    else:
        if seed is None:
            raise ContractError("Monte-Carlo permutation test needs an explicit seed")
        total = samples or config.MC_SAMPLES
        rng = np.random.default_rng(seed)
        comparisons = total
        successes = 1 if succeeds(observed) else 0
        for _ in range(total - 1):
            perm = rng.permutation(size)
            if succeeds(stat.reduce([features[i] for i in perm], n, m)):
                successes += 1
        p_hat = successes / total
        stderr = math.sqrt(p_hat * (1 - p_hat) / total)

    p_value = successes / comparisons
    logger.debug(f"{stat.name}: method={chosen} tail={tail} observed={observed} p={p_value} ({comparisons} comparisons)")
    return PermutationResult(p_value, chosen, comparisons, successes, observed, tail, stderr)


def attainable_values(stat: TestStatistic, y: ResponseVector) -> List[float]:
    """Distinct values of a group-symmetric statistic over all partitions"""
    if not stat.group_symmetric:
        raise ContractError(f"{stat.name} is not group-symmetric")
    features = stat.features(y)
    size = len(features)
    values = set()
    for chosen_idx in itertools.combinations(range(size), y.n):
        picked = set(chosen_idx)
        order = list(chosen_idx) + [i for i in range(size) if i not in picked]
        values.add(stat.reduce([features[i] for i in order], y.n, y.m))
    return sorted(values)


# ============================================================================
# Simple statistics
# ============================================================================

def stat_mean_diff() -> TestStatistic:
    """Mean of experimental scalars minus mean of control scalars"""

    def reduce(features, n, m):
        if n == 0 or m == 0:
            raise ContractError("Mean difference needs both groups non-empty")
        return float(np.mean(features[:n]) - np.mean(features[n:]))

    return TestStatistic("mean_diff", float, reduce, group_symmetric=True)


def contains_token(response, token: str) -> bool:
    """True kalau response (string, list token, atau list ad/session) memuat token"""
    if response is None:
        return False
    if isinstance(response, str):
        return token in response
    if hasattr(response, "contains"):
        return response.contains(token)
    if isinstance(response, (list, tuple)):
        return any(contains_token(item, token) for item in response)
    return str(response) == token


def stat_nonce(nonce: str) -> TestStatistic:
    """s_n(y) = 1 if the first response contains the nonce, else 0"""
    if not nonce:
        raise ContractError("Nonce must be a non-empty token")
    return TestStatistic(
        f"nonce[{nonce}]",
        lambda response: 1 if contains_token(response, nonce) else 0,
        lambda features, n, m: features[0],
        group_symmetric=False,
    )


def nonce_p_closed(y: ResponseVector, nonce: str) -> Fraction:
    """
    Closed form of the nonce test p-value: count(y, nonce) / |y|

    Only valid when the observed first response holds the nonce.
    """
    if len(y) < 1:
        raise InvalidInputError("Nonce test needs at least one response")
    if not contains_token(y.responses[0], nonce):
        raise ContractError("Closed form requires the nonce in the first response")
    count = sum(1 for r in y.responses if contains_token(r, nonce))
    return Fraction(count, len(y))


# ============================================================================
# Chi-square, FDR, independence
# ============================================================================

def chi2_2x2(table: Sequence[Sequence[int]], correction: bool = False) -> Tuple[float, float]:
    """
    Chi-square statistic of a 2x2 contingency table

    Args:
        table: [[a, b], [c, d]] non-negative integer counts
        correction: Apply Yates continuity correction

    Returns:
        (chi2, p) with p from the chi-square(1) survival function
    """
    cells = np.asarray(table)
    if cells.shape != (2, 2):
        raise ContractError(f"Expected a 2x2 table, got shape {cells.shape}")
    if np.any(cells < 0) or not np.all(np.equal(np.mod(cells, 1), 0)):
        raise ContractError("Contingency cells must be non-negative integers")
    (a, b), (c, d) = [[int(x) for x in row] for row in cells]
    marginals = (a + b, c + d, a + c, b + d)
    if min(marginals) == 0:
        raise ContractError(f"Zero marginal in contingency table {cells.tolist()}")

    if correction:
        value, p, _, _ = chi2_contingency(cells, correction=True)
        return float(value), float(p)

    total = a + b + c + d
    value = total * (a * d - b * c) ** 2 / (marginals[0] * marginals[1] * marginals[2] * marginals[3])
    return float(value), float(chi2_dist.sf(value, 1))


def bh_adjust(p_values: Sequence[float]) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values (q-values), original order"""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return p
    if np.any((p < 0) | (p > 1)):
        raise InvalidInputError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    ranked = np.minimum.accumulate(ranked[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(ranked, 1.0)
    return adjusted


def bh_fdr(p_values: Sequence[float], q: float = 0.05) -> List[bool]:
    """
    Benjamini-Hochberg step-up

    Returns:
        Significance flag per p-value, original order
    """
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return []
    if np.any((p < 0) | (p > 1)):
        raise InvalidInputError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    thresholds = q * np.arange(1, m + 1) / m
    below = np.nonzero(p[order] <= thresholds)[0]
    flags = np.zeros(m, dtype=bool)
    if below.size:
        flags[order[: below[-1] + 1]] = True
    return flags.tolist()


def mixture(conditionals: Sequence[Distribution], weights: Sequence[Number]) -> Distribution:
    """Marginal sum_k w_k P(. | condition k)"""
    if len(conditionals) != len(weights):
        raise InvalidInputError("One weight per conditional distribution")
    if sum(weights) != 1:
        raise InvalidInputError(f"Condition weights sum to {sum(weights)}, expected 1")
    table: Dict[Any, Number] = {}
    for dist, w in zip(conditionals, weights):
        for value, p in dist.items():
            table[value] = table.get(value, 0) + w * p
    return Distribution(table)


def conditionals_differ(conditionals: Sequence[Distribution]) -> bool:
    return any(not a.equals(b) for a, b in itertools.combinations(conditionals, 2))


def conditional_deviates(conditionals: Sequence[Distribution], weights: Sequence[Number]) -> bool:
    marginal = mixture(conditionals, weights)
    return any(not c.equals(marginal) for c in conditionals)


def independence_equals_equality(conditionals: Sequence[Distribution], weights: Sequence[Number]) -> bool:
    """
    For exclusive and exhaustive conditions: some pair of conditionals differs
    iff some conditional differs from the marginal
    """
    return conditionals_differ(conditionals) == conditional_deviates(conditionals, weights)
