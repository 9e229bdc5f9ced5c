"""
Ad Test Statistics
s_sim (cosine over log reload counts), s_kw (keyword count), s_prc (session
percentage), chi-square keyword table, plus the delimited response file

"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

from src.core.errors import ContractError, InvalidInputError
from src.core.stats import ResponseVector, TestStatistic, chi2_2x2

logger = logging.getLogger(__name__)

RESPONSE_COLUMNS = [
    "run", "unit", "reload", "session", "ad_url", "ad_text", "context", "treatment", "assignment_index",
]


@dataclass(frozen=True)
class AdRecord:
    url: str
    text: str = ""
    context: Optional[str] = None
    reload: int = 0
    session: int = 0

    def __post_init__(self):
        if not self.url:
            raise InvalidInputError("Ad url must be non-empty")
        if not isinstance(self.text, str):
            object.__setattr__(self, "text", " ".join(self.text))

    @property
    def haystack(self) -> str:
        return f"{self.text} {self.url}".lower()

    def matches(self, keywords: Iterable[str]) -> bool:
        """Lowercase substring match on text + url"""
        haystack = self.haystack
        return any(k.lower() in haystack for k in keywords)

    def contains(self, token: str) -> bool:
        return token in self.text or token in self.url


@dataclass
class UnitResponse:
    """Ads collected by one unit; sessions counts sessions even without ads"""
    ads: List[AdRecord] = field(default_factory=list)
    sessions: int = 1

    def contains(self, token: str) -> bool:
        return any(ad.contains(token) for ad in self.ads)

    def reload_counts(self) -> Counter:
        """url -> number of distinct reloads it appeared in"""
        seen = {(ad.url, ad.reload) for ad in self.ads}
        return Counter(url for url, _ in seen)

    def by_session(self) -> Dict[int, List[AdRecord]]:
        sessions: Dict[int, List[AdRecord]] = {}
        for ad in self.ads:
            sessions.setdefault(ad.session, []).append(ad)
        return sessions


def _require_groups(n: int, m: int, name: str):
    if n == 0 or m == 0:
        raise ContractError(f"{name} needs both groups non-empty, got ({n}, {m})")


# ============================================================================
# s_sim
# ============================================================================

def _log_average(counters: Sequence[Counter], urls: Sequence[str]) -> List[float]:
    size = len(counters)
    return [math.log1p(Fraction(sum(c.get(u, 0) for c in counters), size)) for u in urls]


def _cosine(v: Sequence[float], w: Sequence[float]) -> float:
    norm_v = math.sqrt(sum(x * x for x in v))
    norm_w = math.sqrt(sum(x * x for x in w))
    if norm_v == 0 or norm_w == 0:
        return 0.0
    return sum(a * b for a, b in zip(v, w)) / (norm_v * norm_w)


def stat_sim(n: Optional[int] = None, m: Optional[int] = None) -> TestStatistic:
    """
    s_sim(y) = -cos(ln*(avg experimental), ln*(avg control)) with ln*(c) = ln(1 + c)

    Vectors are url -> reload counts over the union of urls in y. Group
    averages are exact fractions; the log is taken after averaging. A group
    whose averaged vector is all zero has similarity 0.
    """

    def reduce(features, n_, m_):
        if n is not None and m is not None and (n_, m_) != (n, m):
            raise ContractError(f"s_sim built for ({n}, {m}), got ({n_}, {m_})")
        _require_groups(n_, m_, "s_sim")
        urls = sorted(set().union(*features))
        left = _log_average(features[:n_], urls)
        right = _log_average(features[n_:], urls)
        return 0.0 - _cosine(left, right)

    return TestStatistic("sim", lambda response: response.reload_counts(), reduce, group_symmetric=True)


# ============================================================================
# s_kw
# ============================================================================

def stat_kw(keywords: Iterable[str]) -> TestStatistic:
    """Keyword-ad count in the experimental group minus the control group"""
    keywords = [k for k in keywords if k]
    if not keywords:
        raise ContractError("Keyword statistic needs at least one keyword")

    def featurize(response: UnitResponse) -> int:
        return sum(1 for ad in response.ads if ad.matches(keywords))

    def reduce(features, n_, m_):
        return sum(features[:n_]) - sum(features[n_:])

    return TestStatistic("kw", featurize, reduce, group_symmetric=True)


# ============================================================================
# s_prc
# ============================================================================

ContextOracle = Callable[[AdRecord, Sequence[str]], bool]


def default_context_oracle(ad: AdRecord, keywords: Sequence[str]) -> bool:
    """Contextual iff the ad's context token mentions a treatment keyword"""
    if not ad.context:
        return False
    context = ad.context.lower()
    return any(k.lower() in context for k in keywords)


def stat_prc(
    keywords_by_treatment: Mapping[str, Sequence[str]],
    treatment: str,
    context_oracle: Optional[ContextOracle] = None,
) -> TestStatistic:
    """
    prc(range) = 100 * sessions with a non-contextual keyword ad / sessions
    in that range; s_prc = prc(experimental) - prc(control)

    Args:
        keywords_by_treatment: treatment label -> keywords
        treatment: Label whose keywords count as hits
        context_oracle: (ad, keywords) -> contextual?

    Returns:
        TestStatistic
    """
    if treatment not in keywords_by_treatment or not keywords_by_treatment[treatment]:
        raise ContractError(f"No keywords for treatment {treatment!r}")
    keywords = list(keywords_by_treatment[treatment])
    oracle = context_oracle or default_context_oracle

    def featurize(response: UnitResponse) -> Tuple[int, int]:
        hits = 0
        for ads in response.by_session().values():
            if any(ad.matches(keywords) and not oracle(ad, keywords) for ad in ads):
                hits += 1
        return hits, response.sessions

    def prc(features) -> float:
        sessions = sum(s for _, s in features)
        if sessions == 0:
            raise ContractError("prc undefined for a range with zero sessions")
        return 100.0 * sum(h for h, _ in features) / sessions

    def reduce(features, n_, m_):
        return prc(features[:n_]) - prc(features[n_:])

    return TestStatistic("prc", featurize, reduce, group_symmetric=True)


# ============================================================================
# Chi-square on pooled ads
# ============================================================================

def keyword_table(y: ResponseVector, keywords: Iterable[str]) -> List[List[int]]:
    """
    Rows experimental/control, columns ads with/without a keyword
    """
    keywords = [k for k in keywords if k]
    if not keywords:
        raise ContractError("Keyword table needs at least one keyword")
    table = []
    for group in (y.experimental, y.control):
        with_kw = sum(1 for r in group for ad in r.ads if ad.matches(keywords))
        total = sum(len(r.ads) for r in group)
        table.append([with_kw, total - with_kw])
    return table


def chi2_keyword_test(y: ResponseVector, keywords: Iterable[str], correction: bool = False) -> Tuple[float, float, List[List[int]]]:
    table = keyword_table(y, keywords)
    value, p = chi2_2x2(table, correction=correction)
    return value, p, table


def stat_chi2(keywords: Iterable[str]) -> TestStatistic:
    """Chi-square value of the keyword table as a statistic"""
    keywords = [k for k in keywords if k]
    kw = stat_kw(keywords)

    def featurize(response: UnitResponse) -> Tuple[int, int]:
        hits = kw.featurize(response)
        return hits, len(response.ads) - hits

    def reduce(features, n_, m_):
        table = [
            [sum(h for h, _ in features[:n_]), sum(o for _, o in features[:n_])],
            [sum(h for h, _ in features[n_:]), sum(o for _, o in features[n_:])],
        ]
        return chi2_2x2(table)[0]

    return TestStatistic("chi2", featurize, reduce, group_symmetric=True)


# ============================================================================
# Response file
# ============================================================================

def responses_to_frame(vectors: Mapping[object, ResponseVector]) -> pd.DataFrame:
    rows = []
    for run, y in vectors.items():
        units = y.metadata.get("units") or [f"u{i}" for i in range(len(y))]
        for index, (unit, response) in enumerate(zip(units, y.responses)):
            treatment = y.labels[0] if index < y.n else y.labels[1]
            base = {"run": run, "unit": unit, "treatment": treatment, "assignment_index": index}
            if not response.ads:
                rows.append({**base, "reload": -1, "session": response.sessions - 1, "ad_url": "", "ad_text": "", "context": ""})
                continue
            for ad in response.ads:
                rows.append({
                    **base,
                    "reload": ad.reload,
                    "session": ad.session,
                    "ad_url": ad.url,
                    "ad_text": ad.text,
                    "context": ad.context or "",
                })
            if response.sessions - 1 > max(ad.session for ad in response.ads):
                rows.append({**base, "reload": -1, "session": response.sessions - 1, "ad_url": "", "ad_text": "", "context": ""})
    return pd.DataFrame(rows, columns=RESPONSE_COLUMNS)


def dump_responses(vectors: Mapping[object, ResponseVector], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    responses_to_frame(vectors).to_csv(path, index=False)
    logger.info(f"Wrote {len(vectors)} response vectors to {path}")
    return path


def frame_to_responses(frame: pd.DataFrame, experimental_label: Optional[str] = None) -> Dict[str, ResponseVector]:
    """
    Satu ResponseVector per run, unit diurutkan berdasarkan assignment_index

    Rows with an empty ad_url mark units (or trailing sessions) without ads.
    """
    missing = [c for c in RESPONSE_COLUMNS if c not in frame.columns and c != "session"]
    if missing:
        raise InvalidInputError(f"Response file missing columns {missing}")
    extra = [c for c in frame.columns if c not in RESPONSE_COLUMNS]
    if extra:
        raise InvalidInputError(f"Response file has unknown columns {extra}")
    frame = frame.copy()
    if "session" not in frame.columns:
        frame["session"] = 0
    for column in ("ad_url", "ad_text", "context", "treatment", "unit", "run"):
        frame[column] = frame[column].fillna("").astype(str)

    vectors: Dict[str, ResponseVector] = {}
    for run, rows in frame.groupby("run", sort=False):
        units = rows.sort_values("assignment_index", kind="stable").groupby("assignment_index", sort=True)
        responses, labels, unit_ids = [], [], []
        for index, unit_rows in units:
            treatments = set(unit_rows["treatment"])
            if len(treatments) != 1:
                raise InvalidInputError(f"run {run}: assignment index {index} has several treatments {treatments}")
            labels.append(treatments.pop())
            unit_ids.append(unit_rows["unit"].iloc[0])
            ads = [
                AdRecord(
                    url=r.ad_url,
                    text=r.ad_text,
                    context=r.context or None,
                    reload=int(r.reload),
                    session=int(r.session),
                )
                for r in unit_rows.itertuples(index=False)
                if r.ad_url
            ]
            responses.append(UnitResponse(ads=ads, sessions=int(unit_rows["session"].max()) + 1))

        experimental = experimental_label or labels[0]
        n = sum(1 for label in labels if label == experimental)
        if any(label != experimental for label in labels[:n]):
            raise InvalidInputError(f"run {run}: experimental units must occupy the first assignment indices")
        others = sorted(set(labels[n:]))
        if len(others) > 1:
            raise InvalidInputError(f"run {run}: more than two treatments {[experimental] + others}")
        control = others[0] if others else "control"
        vectors[str(run)] = ResponseVector(responses, n, len(labels) - n, (experimental, control), {"units": unit_ids})
    return vectors


def load_responses(path: Union[str, Path], experimental_label: Optional[str] = None) -> Dict[str, ResponseVector]:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={"ad_url": str, "ad_text": str, "context": str, "treatment": str, "unit": str, "run": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InvalidInputError(f"{path}: malformed response file ({e})") from e
    vectors = frame_to_responses(frame, experimental_label)
    logger.info(f"Loaded {len(vectors)} response vectors from {path}")
    return vectors
