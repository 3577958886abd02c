import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distmap import (
    DecodingSpec,
    DmapInterval,
    EmptyInputError,
    EngineConfig,
    FormatError,
    ImpossibleToken,
    ParameterError,
    StepDensity,
    TextRecordStream,
    TokenDistributionSummary,
    bin_density,
    filter_by_entropy,
    interval_for,
    map_streams,
    map_text,
    sample_point,
    weighted_density,
)
from distmap.engine import position_stream
from oracles import brute_mass_above, exact_bin_integrals, grid_distributions, mc_bin_heights


def summary(p_obs, mass_above, entropy=1.0, pos=0, text_id="t", is_prompt=False):
    return TokenDistributionSummary(
        text_id=text_id, pos=pos, p_obs=p_obs, mass_above=mass_above,
        entropy=entropy, is_prompt=is_prompt,
    )


def stream_of(records, text_id="t", prompt_len=0):
    recs = [
        r._replace(pos=i, text_id=text_id, is_prompt=i < prompt_len)
        for i, r in enumerate(records)
    ]
    return TextRecordStream(text_id=text_id, prompt_len=prompt_len, records=recs)


# ---------------------------------------------------------------- intervals

def test_interval_top_token():
    iv = interval_for(summary(0.4, 0.0))
    assert (iv.a, iv.b) == (0.0, 0.4)


def test_interval_general():
    iv = interval_for(summary(0.3, 0.5))
    assert iv.a == 0.5
    assert iv.b == pytest.approx(0.8, abs=1e-15)


def test_interval_impossible_token():
    with pytest.raises(ImpossibleToken):
        interval_for(summary(0.0, 0.7))


def test_interval_clamps_to_one():
    iv = interval_for(summary(0.5, 0.5 + 5e-10))
    assert iv.b == 1.0


def test_interval_matches_bruteforce_on_grid():
    for probs in grid_distributions(max_vocab=8, resolution=6):
        for obs in range(len(probs)):
            if probs[obs] == 0.0:
                continue
            a = brute_mass_above(probs, obs)
            iv = interval_for(summary(probs[obs], a))
            assert iv.a == pytest.approx(a, abs=1e-14)
            assert iv.b == pytest.approx(min(a + probs[obs], 1.0), abs=1e-14)


def test_interval_invariant_enforced():
    with pytest.raises(FormatError):
        DmapInterval(a=0.5, b=0.4)


# ----------------------------------------------------------------- sampling

def test_sample_degenerate_interval():
    gen = position_stream(0, "t", 0)
    assert sample_point(DmapInterval(0.2, 0.2), gen) == 0.2


def test_sample_deterministic():
    a = sample_point(DmapInterval(0.0, 1.0), position_stream(42, "t", 3))
    b = sample_point(DmapInterval(0.0, 1.0), position_stream(42, "t", 3))
    assert a == b


def test_sample_uniform_moments():
    gen = position_stream(7, "moments", 0)
    draws = 0.5 + 0.3 * gen.random(1_000_000)
    assert abs(draws.mean() - 0.65) < 1e-3
    assert draws.min() >= 0.5
    assert draws.max() <= 0.8


# ----------------------------------------------------------------- map_text

def test_map_containment():
    recs = [summary(0.4, 0.1), summary(0.2, 0.7), summary(1.0, 0.0)]
    stream = stream_of(recs)
    res = map_text(stream, DecodingSpec(), EngineConfig(seed=5))
    assert len(res.samples) == 3
    for s, r in zip(res.samples, stream.records):
        assert r.mass_above <= s.x <= r.mass_above + r.p_obs


def test_map_prompt_exclusion():
    recs = [summary(0.5, 0.0)] * 5
    stream = stream_of(recs, prompt_len=2)
    res = map_text(stream, DecodingSpec(), EngineConfig(seed=1))
    assert len(res.samples) == 3
    assert [s.pos for s in res.samples] == [2, 3, 4]
    res = map_text(stream, DecodingSpec(), EngineConfig(seed=1, include_prompt=True))
    assert len(res.samples) == 5


def test_map_initial_cutoff():
    recs = [summary(0.5, 0.0)] * 6
    stream = stream_of(recs)
    res = map_text(stream, DecodingSpec(), EngineConfig(seed=1, initial_cutoff=4))
    assert [s.pos for s in res.samples] == [4, 5]


def test_map_impossible_side_channel():
    recs = [summary(0.5, 0.0), summary(0.0, 0.9), summary(0.3, 0.2)]
    stream = stream_of(recs)
    res = map_text(stream, DecodingSpec(), EngineConfig(seed=1))
    assert len(res.samples) == 2
    assert res.impossible_tokens == 1


def test_map_exclusions_do_not_shift_draws():
    # position i's x must not depend on whether earlier positions were skipped
    recs = [summary(0.5, 0.25, entropy=float(i)) for i in range(8)]
    stream = stream_of(recs, prompt_len=3)
    cfg_all = EngineConfig(seed=9, include_prompt=True)
    cfg_cut = EngineConfig(seed=9, include_prompt=False, initial_cutoff=5)
    xs_all = {s.pos: s.x for s in map_text(stream, DecodingSpec(), cfg_all).samples}
    xs_cut = {s.pos: s.x for s in map_text(stream, DecodingSpec(), cfg_cut).samples}
    for pos, x in xs_cut.items():
        assert x == xs_all[pos]


def test_map_streams_order_independent():
    streams = [
        stream_of([summary(0.5, 0.1)] * 4, text_id="b"),
        stream_of([summary(0.25, 0.5)] * 3, text_id="a"),
    ]
    cfg = EngineConfig(seed=3)
    first = map_streams(streams, DecodingSpec(), cfg)
    second = map_streams(list(reversed(streams)), DecodingSpec(), cfg)
    assert first.samples == second.samples
    assert [s.text_id for s in first.samples][:3] == ["a", "a", "a"]


def test_map_weight_clipping_modes():
    recs = [summary(0.5, 0.0, entropy=3.0), summary(0.5, 0.0, entropy=0.5)]
    stream = stream_of(recs)
    cap = map_text(stream, DecodingSpec(), EngineConfig(seed=1, lam=2.0, clip_mode="cap"))
    assert [s.weight for s in cap.samples] == [2.0, 0.5]
    floor = map_text(stream, DecodingSpec(), EngineConfig(seed=1, lam=2.0, clip_mode="floor"))
    assert [s.weight for s in floor.samples] == [3.0, 2.0]


def test_map_entropy_slice():
    recs = [summary(0.5, 0.0, entropy=h) for h in (0.1, 0.7, 3.0)]
    stream = stream_of(recs)
    cfg = EngineConfig(seed=1, entropy_range=(0.0, 0.5))
    res = map_text(stream, DecodingSpec(), cfg)
    assert [s.entropy for s in res.samples] == [0.1]


def test_map_spec_requires_full_records():
    stream = stream_of([summary(0.5, 0.0)])
    with pytest.raises(FormatError, match="full records"):
        map_text(stream, DecodingSpec.parse("topk=2"), EngineConfig(seed=1))


def test_filter_by_entropy():
    samples = map_text(
        stream_of([summary(0.5, 0.0, entropy=h) for h in (0.1, 0.7, 3.0)]),
        DecodingSpec(),
        EngineConfig(seed=1),
    ).samples
    assert len(filter_by_entropy(samples, 0.0, 0.5)) == 1
    assert len(filter_by_entropy(samples, 0.0, math.inf)) == 3
    assert [s.entropy for s in filter_by_entropy(samples, 0.5, 2.0)] == [0.7]
    with pytest.raises(ParameterError):
        filter_by_entropy(samples, 1.0, 1.0)


@st.composite
def random_streams(draw):
    n = draw(st.integers(min_value=1, max_value=30))
    recs = []
    for _ in range(n):
        p_obs = draw(st.floats(min_value=1e-6, max_value=1.0))
        mass = draw(st.floats(min_value=0.0, max_value=1.0)) * (1.0 - p_obs)
        h = draw(st.floats(min_value=0.0, max_value=6.0))
        recs.append(summary(p_obs, mass, entropy=h))
    return stream_of(recs)


@given(random_streams(), st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=150)
def test_map_containment_property(stream, seed):
    res = map_text(stream, DecodingSpec(), EngineConfig(seed=seed))
    for s in res.samples:
        rec = stream.records[s.pos]
        assert rec.mass_above <= s.x <= min(rec.mass_above + rec.p_obs, 1.0) + 1e-15


# ---------------------------------------------------------------- densities

def test_density_single_interval():
    d = weighted_density([stream_of([summary(0.5, 0.2, entropy=1.7)])], DecodingSpec(), EngineConfig())
    assert d.value_at(0.45) == pytest.approx(2.0, abs=1e-12)
    assert d.value_at(0.1) == 0.0
    assert d.value_at(0.9) == 0.0


def test_density_uniform_tiling():
    recs = [summary(0.5, 0.0, entropy=1.0), summary(0.5, 0.5, entropy=1.0)]
    d = weighted_density([stream_of(recs)], DecodingSpec(), EngineConfig())
    for x in (0.1, 0.4, 0.6, 0.99):
        assert d.value_at(x) == pytest.approx(1.0, abs=1e-12)


def test_density_weighted_overlap():
    # weights 0.5 and 1.5 via entropies below the cap
    recs = [summary(0.5, 0.0, entropy=0.5), summary(0.25, 0.0, entropy=1.5)]
    d = weighted_density([stream_of(recs)], DecodingSpec(), EngineConfig(lam=2.0, clip_mode="cap"))
    assert d.value_at(0.1) == pytest.approx(3.5, abs=1e-12)
    assert d.value_at(0.3) == pytest.approx(0.5, abs=1e-12)
    assert d.value_at(0.7) == 0.0
    assert d.integral() == pytest.approx(1.0, abs=1e-12)


def test_density_rejects_empty():
    with pytest.raises(EmptyInputError):
        weighted_density([stream_of([summary(0.0, 0.5)])], DecodingSpec(), EngineConfig())


@given(st.lists(st.tuples(
    st.floats(min_value=1e-5, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=1e-3, max_value=6.0),
), min_size=1, max_size=40))
@settings(max_examples=200)
def test_density_integral_one(items):
    recs = [summary(p, frac * (1.0 - p), entropy=h) for p, frac, h in items]
    d = weighted_density([stream_of(recs)], DecodingSpec(), EngineConfig())
    assert abs(d.integral() - 1.0) <= 1e-9
    assert np.all(d.heights >= 0.0)


def test_bin_density_uniform():
    d = StepDensity(breakpoints=np.array([0.0, 1.0]), heights=np.array([1.0]))
    np.testing.assert_allclose(bin_density(d, 40), np.ones(40), atol=1e-12)


def test_bin_density_two_bins():
    recs = [summary(0.5, 0.0, entropy=0.5), summary(0.25, 0.0, entropy=1.5)]
    d = weighted_density([stream_of(recs)], DecodingSpec(), EngineConfig())
    np.testing.assert_allclose(bin_density(d, 2), [2.0, 0.0], atol=1e-12)


def test_bin_density_single_bin():
    recs = [summary(0.3, 0.42, entropy=1.0)]
    d = weighted_density([stream_of(recs)], DecodingSpec(), EngineConfig())
    np.testing.assert_allclose(bin_density(d, 1), [1.0], atol=1e-12)


def test_bin_density_rejects_zero_bins():
    d = StepDensity(breakpoints=np.array([0.0, 1.0]), heights=np.array([1.0]))
    with pytest.raises(ParameterError):
        bin_density(d, 0)


@given(st.lists(st.tuples(
    st.floats(min_value=1e-4, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
), min_size=1, max_size=20), st.integers(min_value=1, max_value=17))
@settings(max_examples=120)
def test_bin_density_matches_exact_rational_oracle(items, k):
    recs = [summary(p, frac * (1.0 - p)) for p, frac in items]
    d = weighted_density([stream_of(recs)], DecodingSpec(), EngineConfig())
    got = bin_density(d, k)
    want = exact_bin_integrals(d.breakpoints, d.heights, k)
    np.testing.assert_allclose(got, want, atol=1e-9)
    assert math.fsum(got.tolist()) / k == pytest.approx(1.0, abs=1e-9)


def test_bin_density_matches_monte_carlo():
    rng = np.random.default_rng(2024)
    recs = [
        summary(float(p), float(frac) * (1.0 - float(p)), entropy=float(h))
        for p, frac, h in zip(rng.uniform(0.01, 1, 30), rng.random(30), rng.uniform(0.1, 4, 30))
    ]
    d = weighted_density([stream_of(recs)], DecodingSpec(), EngineConfig())
    exact = bin_density(d, 10)
    est, se = mc_bin_heights(d.breakpoints, d.heights, 10, n=1_000_000, seed=99)
    assert np.all(np.abs(exact - est) <= 3.0 * np.maximum(se, 1e-9))


# --------------------------------------------------------------- random PIT

def test_random_pit_requires_full():
    stream = stream_of([summary(0.5, 0.0)])
    with pytest.raises(FormatError):
        map_text(stream, DecodingSpec(), EngineConfig(seed=1, order_mode="random_pit"))


def test_random_pit_deterministic_and_contained():
    from distmap import FullDistributionRecord

    probs = np.array([0.5, 0.3, 0.2])
    full = [FullDistributionRecord("t", 0, 1, probs, False)]
    stream = TextRecordStream(
        text_id="t", prompt_len=0,
        records=[summary(0.3, 0.5)], full=full,
    )
    cfg = EngineConfig(seed=17, order_mode="random_pit")
    res1 = map_text(stream, DecodingSpec(), cfg)
    res2 = map_text(stream, DecodingSpec(), cfg)
    assert res1.samples == res2.samples
    (s,) = res1.samples
    # under any token order the interval has width p_obs and lies in [0, 1]
    assert 0.0 <= s.x <= 1.0


def test_config_validation():
    with pytest.raises(ParameterError):
        EngineConfig(seed=-1)
    with pytest.raises(ParameterError):
        EngineConfig(lam=0.0)
    with pytest.raises(ParameterError):
        EngineConfig(clip_mode="clamp")
    with pytest.raises(ParameterError):
        EngineConfig(order_mode="sorted")
    with pytest.raises(ParameterError):
        EngineConfig(entropy_range=(2.0, 1.0))


def test_random_pit_pure_text_still_uniform():
    from distmap import DecodingSpec, evaluate, generate, random_model, validate_generation

    model = random_model(1, 16, 1.0)
    run = generate(model, DecodingSpec(), 10_000, seed=61)
    rep = validate_generation(
        [evaluate(run, model)], DecodingSpec(),
        EngineConfig(seed=62, order_mode="random_pit"),
    )
    assert rep.p_value > 0.001


def test_density_merge_order_independent():
    a = stream_of([summary(0.5, 0.1, entropy=1.0)] * 3, text_id="a")
    b = stream_of([summary(0.25, 0.6, entropy=2.5)] * 2, text_id="b")
    d1 = weighted_density([a, b], DecodingSpec(), EngineConfig())
    d2 = weighted_density([b, a], DecodingSpec(), EngineConfig())
    np.testing.assert_array_equal(d1.breakpoints, d2.breakpoints)
    np.testing.assert_array_equal(d1.heights, d2.heights)
