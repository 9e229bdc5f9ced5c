"""
Finite probability distributions
Exact (Fraction) by default, float mode dengan toleransi 1e-12

"""

from fractions import Fraction
from typing import Callable, Dict, Hashable, Iterable, Iterator, Mapping, Tuple, Union

from src.core.errors import InvalidInputError

Number = Union[Fraction, float]

FLOAT_TOLERANCE = 1e-12


def to_probability(value, exact: bool = True) -> Number:
    """
    Coerce int/float/str/Fraction into the probability type of the mode
    Floats in exact mode go through their decimal repr, so 0.1 becomes 1/10
    """
    if exact:
        if isinstance(value, Fraction):
            return value
        if isinstance(value, float):
            return Fraction(repr(value))
        return Fraction(value)
    return float(value)


class Distribution:
    """
    Distribution over hashable values
    Zero-probability entries are dropped from the support
    """

    __slots__ = ("_support", "exact")

    def __init__(self, support: Mapping[Hashable, object], exact: bool = True, validate: bool = True):
        self.exact = exact
        table: Dict[Hashable, Number] = {}
        for value, p in support.items():
            prob = to_probability(p, exact)
            if prob < 0:
                raise InvalidInputError(f"Negative probability {prob} for {value!r}")
            if prob != 0:
                table[value] = table.get(value, 0) + prob
        self._support = table
        if validate:
            total = self.total()
            if exact and total != 1:
                raise InvalidInputError(f"Distribution sums to {total}, expected exactly 1")
            if not exact and abs(total - 1.0) > FLOAT_TOLERANCE:
                raise InvalidInputError(f"Distribution sums to {total}, expected 1 within {FLOAT_TOLERANCE}")

    @classmethod
    def point(cls, value: Hashable, exact: bool = True) -> "Distribution":
        """Degenerate distribution (delta)"""
        return cls({value: 1}, exact=exact)

    @classmethod
    def uniform(cls, values: Iterable[Hashable], exact: bool = True) -> "Distribution":
        values = list(values)
        if not values:
            raise InvalidInputError("Uniform distribution over an empty set")
        share = Fraction(1, len(values)) if exact else 1.0 / len(values)
        table: Dict[Hashable, Number] = {}
        for v in values:
            table[v] = table.get(v, 0) + share
        return cls(table, exact=exact)

    def prob(self, value: Hashable) -> Number:
        return self._support.get(value, Fraction(0) if self.exact else 0.0)

    __getitem__ = prob

    def items(self) -> Iterator[Tuple[Hashable, Number]]:
        return iter(self._support.items())

    def support_set(self) -> frozenset:
        return frozenset(self._support)

    def total(self) -> Number:
        return sum(self._support.values(), Fraction(0) if self.exact else 0.0)

    def is_point(self) -> bool:
        return len(self._support) == 1

    def map(self, fn: Callable[[Hashable], Hashable]) -> "Distribution":
        """Pushforward through fn; mass is preserved"""
        table: Dict[Hashable, Number] = {}
        for value, p in self._support.items():
            key = fn(value)
            table[key] = table.get(key, 0) + p
        return Distribution(table, exact=self.exact, validate=False)

    def equals(self, other: "Distribution") -> bool:
        if self.exact and other.exact:
            return self._support == other._support
        keys = set(self._support) | set(other._support)
        return all(abs(float(self.prob(k)) - float(other.prob(k))) <= FLOAT_TOLERANCE for k in keys)

    def same_support(self, other: "Distribution") -> bool:
        return self.support_set() == other.support_set()

    def to_float(self) -> "Distribution":
        return Distribution({v: float(p) for v, p in self._support.items()}, exact=False, validate=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.equals(other)

    __hash__ = None

    def __len__(self) -> int:
        return len(self._support)

    def __repr__(self) -> str:
        body = ", ".join(f"{v!r}: {p}" for v, p in sorted(self._support.items(), key=lambda kv: repr(kv[0])))
        return f"<Distribution({body})>"
