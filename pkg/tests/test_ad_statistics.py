import pandas as pd
import pytest

from src.core.ad_statistics import (
    RESPONSE_COLUMNS,
    AdRecord,
    UnitResponse,
    chi2_keyword_test,
    dump_responses,
    frame_to_responses,
    keyword_table,
    load_responses,
    responses_to_frame,
    stat_chi2,
    stat_kw,
    stat_prc,
    stat_sim,
)
from src.core.errors import ContractError, InvalidInputError
from src.core.stats import ResponseVector, permutation_test


def ad(url, text="", reload=0, session=0, context=None):
    return AdRecord(url=url, text=text, context=context, reload=reload, session=session)


def unit(*ads, sessions=1):
    return UnitResponse(ads=list(ads), sessions=sessions)


def car_ads(count, start=0):
    return [ad(f"https://ads.example/cars/{i}", "Car deals", reload=i) for i in range(start, start + count)]


def other_ads(count):
    return [ad(f"https://ads.example/food/{i}", "Pizza", reload=i) for i in range(count)]


def test_keyword_count_without_hits_is_zero():
    y = ResponseVector([unit(*other_ads(3)), unit(*other_ads(2))], 1, 1)
    assert stat_kw(["car"]).evaluate(y) == 0


def test_keyword_count_difference():
    y = ResponseVector(
        [unit(*car_ads(4)), unit(*car_ads(3)), unit(*car_ads(2)), unit(*other_ads(5))],
        2, 2,
    )
    assert stat_kw(["car"]).evaluate(y) == 5


def test_keyword_match_is_case_insensitive_on_text_and_url():
    assert ad("https://x.example/AUTO", "Deals").matches(["auto"])
    assert ad("https://x.example/1", "Best CAR loans").matches(["car"])
    assert not ad("https://x.example/1", "Pizza").matches(["car"])


def test_keyword_statistic_needs_keywords():
    with pytest.raises(ContractError):
        stat_kw(["", ""])


def test_reload_counts_count_distinct_reloads():
    response = unit(ad("u1", reload=0), ad("u1", reload=0), ad("u1", reload=3), ad("u2", reload=1))
    assert response.reload_counts() == {"u1": 2, "u2": 1}


def test_similarity_of_identical_groups():
    same = [unit(ad("u1", reload=0), ad("u2", reload=1)) for _ in range(4)]
    assert stat_sim(2, 2).evaluate(ResponseVector(same, 2, 2)) == pytest.approx(-1.0)


def test_similarity_of_disjoint_groups():
    y = ResponseVector([unit(ad("u1")), unit(ad("u2"))], 1, 1)
    assert stat_sim().evaluate(y) == pytest.approx(0.0)


def test_similarity_rejects_wrong_group_sizes():
    y = ResponseVector([unit(ad("u1")), unit(ad("u2")), unit(ad("u3"))], 1, 2)
    with pytest.raises(ContractError):
        stat_sim(2, 1).evaluate(y)
    with pytest.raises(ContractError):
        stat_sim().evaluate(ResponseVector([unit(ad("u1")), unit(ad("u2"))], 2, 0))


def test_session_percentage_skips_contextual_ads():
    keywords = {"cars": ["car"], "idle": []}
    contextual = ad("https://ads.example/cars/9", "Car deals", context="car reviews")
    y = ResponseVector(
        [
            unit(ad("https://ads.example/cars/1", "Car deals", session=0), ad("u", session=1), sessions=2),
            unit(contextual, sessions=1),
            unit(ad("u", session=0), sessions=1),
        ],
        2, 1,
    )
    # experimental: 1 of 3 sessions; control: 0 of 1
    assert stat_prc(keywords, "cars").evaluate(y) == pytest.approx(100 / 3)
    assert stat_prc(keywords, "cars", context_oracle=lambda a, k: False).evaluate(y) == pytest.approx(200 / 3)


def test_session_percentage_needs_sessions_and_keywords():
    y = ResponseVector([unit(sessions=0), unit(sessions=1)], 1, 1)
    with pytest.raises(ContractError):
        stat_prc({"cars": ["car"]}, "cars").evaluate(y)
    with pytest.raises(ContractError):
        stat_prc({"cars": ["car"], "idle": []}, "idle")


def test_keyword_table_and_chi2():
    y = ResponseVector([unit(*car_ads(6), *other_ads(2)), unit(*car_ads(1), *other_ads(9))], 1, 1)
    assert keyword_table(y, ["car"]) == [[6, 2], [1, 9]]
    value, p, table = chi2_keyword_test(y, ["car"])
    assert table == [[6, 2], [1, 9]]
    assert value > 0 and 0 < p < 0.05
    assert stat_chi2(["car"]).evaluate(y) == pytest.approx(value)


def test_kw_permutation_on_separated_groups():
    y = ResponseVector([unit(*car_ads(3)) for _ in range(5)] + [unit(*other_ads(3)) for _ in range(5)], 5, 5)
    result = permutation_test(stat_kw(["car"]), y)
    assert result.method == "partition"
    assert result.comparisons == 252
    assert result.successes == 1


def make_vectors():
    experimental = [unit(ad("https://a.example/1", "Car deals", reload=0, context="news"), ad("https://a.example/2", "Auto", reload=1))]
    control = [unit(sessions=2), unit(ad("https://a.example/3", "Pizza", reload=0))]
    return {"7": ResponseVector(experimental + control, 1, 2, ("cars", "idle"), {"units": ["u-a", "u-b", "u-c"]})}


def test_response_frame_marks_units_without_ads():
    frame = responses_to_frame(make_vectors())
    assert list(frame.columns) == RESPONSE_COLUMNS
    empty = frame[frame["unit"] == "u-b"]
    assert len(empty) == 1
    assert empty["ad_url"].iloc[0] == ""
    assert empty["reload"].iloc[0] == -1


def test_response_file_keeps_statistics(tmp_path):
    vectors = make_vectors()
    path = dump_responses(vectors, tmp_path / "responses.csv")
    loaded = load_responses(path)
    y = loaded["7"]
    assert (y.n, y.m) == (1, 2)
    assert y.labels == ("cars", "idle")
    assert y.responses[1].ads == []
    assert y.responses[1].sessions == 2
    kw = stat_kw(["car", "auto"])
    assert kw.evaluate(y) == kw.evaluate(vectors["7"])


def test_response_file_errors(tmp_path):
    with pytest.raises(InvalidInputError, match="not found"):
        load_responses(tmp_path / "missing.csv")
    frame = responses_to_frame(make_vectors())
    frame["extra"] = 1
    with pytest.raises(InvalidInputError, match="unknown columns"):
        frame_to_responses(frame)
    with pytest.raises(InvalidInputError, match="missing columns"):
        frame_to_responses(pd.DataFrame({"run": ["1"]}))
