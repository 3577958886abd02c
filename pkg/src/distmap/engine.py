"""Unit-interval mapping engine.

Each position's record defines a sub-interval of [0, 1]: left endpoint at
the probability mass of strictly-more-likely tokens, length equal to the
observed token's probability. A uniform point is drawn inside it, or, for
the noise-free variant, the interval's normalized indicator is accumulated
into an entropy-weighted step density.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .decoding import DecodingSpec, apply_spec
from .errors import EmptyInputError, FormatError, ImpossibleToken, ParameterError
from .records import (
    MASS_TOL,
    TextRecordStream,
    TokenDistributionSummary,
    canonical_order,
    distribution_entropy,
    mass_before_observed,
)

# tag separating the dynamic-order uniform stream from per-position
# substreams (which use the position itself as the third key component)
_UNIFORM_STREAM_TAG = 0x75_6E_69_66  # "unif"


@dataclass(frozen=True)
class DmapInterval:
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a <= self.b <= 1.0 + MASS_TOL):
            raise FormatError(f"invalid interval [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a


class DmapSample(NamedTuple):
    x: float
    weight: float
    pos: int
    entropy: float
    text_id: str = ""


@dataclass(frozen=True)
class StepDensity:
    """Normalized step function on [0, 1]: len(heights) == len(breakpoints) - 1."""

    breakpoints: np.ndarray
    heights: np.ndarray

    def integral(self) -> float:
        widths = np.diff(self.breakpoints)
        return math.fsum((widths * self.heights).tolist())

    def value_at(self, x: float) -> float:
        """Density value at x (right-continuous; x = 1 uses the last segment)."""
        idx = int(np.searchsorted(self.breakpoints, x, side="right")) - 1
        idx = min(max(idx, 0), len(self.heights) - 1)
        return float(self.heights[idx])


@dataclass(frozen=True)
class EngineConfig:
    seed: int = 0
    lam: float = 2.0
    clip_mode: str = "cap"  # cap -> min(h, lam); floor -> max(h, lam)
    include_prompt: bool = False
    initial_cutoff: int = 0
    order_mode: str = "dynamic"  # dynamic | random_pit
    entropy_range: tuple[float, float] | None = None

    def __post_init__(self):
        if not (0 <= self.seed < 2**64):
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if not (self.lam > 0.0):
            raise ParameterError("lambda must be > 0")
        if self.clip_mode not in ("cap", "floor"):
            raise ParameterError(f"unknown clip_mode {self.clip_mode!r}")
        if self.initial_cutoff < 0:
            raise ParameterError("initial_cutoff must be >= 0")
        if self.order_mode not in ("dynamic", "random_pit"):
            raise ParameterError(f"unknown order_mode {self.order_mode!r}")
        if self.entropy_range is not None:
            lo, hi = self.entropy_range
            if not (lo < hi):
                raise ParameterError("entropy_range must satisfy lo < hi")

    def clip_weight(self, h: float) -> float:
        return min(h, self.lam) if self.clip_mode == "cap" else max(h, self.lam)


@dataclass
class MapResult:
    """map_text output: the kept samples plus the impossible-token side channel."""

    samples: list[DmapSample]
    impossible_tokens: int = 0


def interval_for(rec: TokenDistributionSummary) -> DmapInterval:
    """The record's sub-interval [mass_above, mass_above + p_obs], clamped to 1."""
    if rec.p_obs <= 0.0:
        raise ImpossibleToken(
            f"{rec.text_id}@{rec.pos}: observed token has zero probability "
            "under the evaluation distribution"
        )
    return DmapInterval(a=rec.mass_above, b=min(rec.mass_above + rec.p_obs, 1.0))


def sample_point(iv: DmapInterval, stream: np.random.Generator) -> float:
    """One uniform draw on [a, b]; a == b returns a."""
    if iv.a == iv.b:
        return iv.a
    return iv.a + (iv.b - iv.a) * float(stream.random())


def _text_key(text_id: str) -> int:
    return int.from_bytes(hashlib.blake2b(text_id.encode("utf-8"), digest_size=8).digest(), "big")


def position_stream(seed: int, text_id: str, pos: int) -> np.random.Generator:
    """Random substream for one position, a pure function of (seed, text_id, pos)."""
    ss = np.random.SeedSequence([seed, _text_key(text_id), pos])
    return np.random.Generator(np.random.PCG64(ss))


def _text_uniforms(seed: int, text_id: str, n: int) -> np.ndarray:
    """Per-position uniforms u[pos]; u[pos] depends only on (seed, text_id, pos)."""
    ss = np.random.SeedSequence([seed, _text_key(text_id), _UNIFORM_STREAM_TAG])
    return np.random.Generator(np.random.PCG64(ss)).random(n)


def _in_entropy_range(h: float, rng: tuple[float, float] | None) -> bool:
    return rng is None or (rng[0] <= h < rng[1])


def _selected_positions(stream: TextRecordStream, cfg: EngineConfig):
    for rec in stream.records:
        if rec.is_prompt and not cfg.include_prompt:
            continue
        if rec.pos < cfg.initial_cutoff:
            continue
        yield rec


def _adapted_tables(probs: np.ndarray, spec: DecodingSpec, memo: dict):
    """Adapted distribution plus a per-token strictly-ahead-mass table.

    Keyed by array identity: toy-model streams share their row arrays
    across positions, so each distinct conditional row is transformed once.
    The table prefix sums use compensated (Kahan) summation.
    """
    key = id(probs)
    hit = memo.get(key)
    if hit is not None and hit[0] is probs:
        return hit[1], hit[2], hit[3], hit[4]
    q = apply_spec(probs, spec)
    order = canonical_order(q)
    mass = [0.0] * q.size
    running = 0.0
    comp = 0.0
    for idx in order:
        mass[idx] = running
        y = float(q[idx]) - comp
        t = running + y
        comp = (t - running) - y
        running = t
    h = distribution_entropy(q)
    entry = (probs, q, q.tolist(), mass, h)
    memo[key] = entry
    return q, entry[2], mass, h


def _evaluation_summary(
    stream: TextRecordStream,
    rec: TokenDistributionSummary,
    spec: DecodingSpec,
    cfg: EngineConfig,
    memo: dict,
) -> TokenDistributionSummary:
    """The record under the evaluation distribution and token order.

    Pure spec + dynamic order returns the record unchanged. Decoding
    adaptation and the random-order baseline both need the full vector.
    """
    needs_full = (not spec.is_pure) or cfg.order_mode == "random_pit"
    if not needs_full:
        return rec
    if stream.full is None:
        raise FormatError(
            f"{stream.text_id}: decoding-adapted or random-order evaluation "
            "requires full records (or records pre-adapted upstream)"
        )
    full = stream.full[rec.pos]
    q, q_list, mass_table, h = _adapted_tables(full.probs, spec, memo)
    if cfg.order_mode == "random_pit":
        perm = position_stream(cfg.seed, stream.text_id, rec.pos).permutation(q.size)
        mass_above = mass_before_observed(q, full.obs_index, order=perm)
    else:
        mass_above = mass_table[full.obs_index]
    return TokenDistributionSummary(
        text_id=rec.text_id,
        pos=rec.pos,
        p_obs=q_list[full.obs_index],
        mass_above=min(mass_above, 1.0),
        entropy=h,
        is_prompt=rec.is_prompt,
    )


def map_text(stream: TextRecordStream, spec: DecodingSpec, cfg: EngineConfig) -> MapResult:
    """Map one text's records to unit-interval samples.

    Prompt positions and positions below the initial cutoff are skipped;
    positions whose token is impossible under the evaluation distribution
    are excluded from the samples and counted. The uniform for position i
    is draw #i of a stream keyed by (seed, text_id), so results do not
    depend on processing order or on which other positions were excluded.
    """
    uniforms = _text_uniforms(cfg.seed, stream.text_id, len(stream.records))
    samples: list[DmapSample] = []
    impossible = 0
    passthrough = spec.is_pure and cfg.order_mode == "dynamic"
    capped = cfg.clip_mode == "cap"
    lam = cfg.lam
    erange = cfg.entropy_range
    tid = stream.text_id
    memo: dict = {}
    for rec in _selected_positions(stream, cfg):
        erec = rec if passthrough else _evaluation_summary(stream, rec, spec, cfg, memo)
        h = erec.entropy
        if erange is not None and not (erange[0] <= h < erange[1]):
            continue
        # inline interval_for: [mass_above, min(mass_above + p_obs, 1)]
        p_obs = erec.p_obs
        if p_obs <= 0.0:
            impossible += 1
            continue
        a = erec.mass_above
        b = a + p_obs
        if b > 1.0:
            b = 1.0
        samples.append(
            DmapSample(
                x=a + (b - a) * uniforms[rec.pos],
                weight=min(h, lam) if capped else max(h, lam),
                pos=rec.pos,
                entropy=h,
                text_id=tid,
            )
        )
    return MapResult(samples=samples, impossible_tokens=impossible)


def map_streams(streams: list[TextRecordStream], spec: DecodingSpec, cfg: EngineConfig) -> MapResult:
    """map_text over several texts, concatenated in text_id order."""
    total = MapResult(samples=[])
    for stream in sorted(streams, key=lambda s: s.text_id):
        res = map_text(stream, spec, cfg)
        total.samples.extend(res.samples)
        total.impossible_tokens += res.impossible_tokens
    return total


def weighted_density(
    streams: list[TextRecordStream], spec: DecodingSpec, cfg: EngineConfig
) -> StepDensity:
    """Exact entropy-weighted step density over all usable positions.

    Each position contributes weight * indicator(I)/|I|; the accumulated
    step function is divided by the total weight, then renormalized by its
    exact integral so that the result integrates to 1 at float precision.
    """
    starts: list[float] = []
    ends: list[float] = []
    rates: list[float] = []
    capped = cfg.clip_mode == "cap"
    memo: dict = {}
    for stream in streams:
        passthrough = spec.is_pure and cfg.order_mode == "dynamic"
        for rec in _selected_positions(stream, cfg):
            erec = rec if passthrough else _evaluation_summary(stream, rec, spec, cfg, memo)
            h = erec.entropy
            if not _in_entropy_range(h, cfg.entropy_range):
                continue
            # inline interval_for: [mass_above, min(mass_above + p_obs, 1)]
            if erec.p_obs <= 0.0:
                continue
            a = erec.mass_above
            b = a + erec.p_obs
            if b > 1.0:
                b = 1.0
            if b <= a:
                continue
            w = min(h, cfg.lam) if capped else max(h, cfg.lam)
            if w <= 0.0:
                continue
            starts.append(a)
            ends.append(b)
            rates.append(w / (b - a))
    if not starts:
        raise EmptyInputError("no usable positions to build a density from")

    points = np.unique(np.concatenate([[0.0, 1.0], starts, ends]))
    deltas = np.zeros(points.size, dtype=np.float64)
    si = np.searchsorted(points, starts)
    ei = np.searchsorted(points, ends)
    np.add.at(deltas, si, rates)
    np.subtract.at(deltas, ei, rates)
    heights = np.cumsum(deltas)[:-1]
    heights[heights < 0.0] = 0.0  # cancellation dust at covered-region edges

    widths = np.diff(points)
    total = math.fsum((heights * widths).tolist())
    if total <= 0.0:
        raise EmptyInputError("density accumulated zero mass")
    return StepDensity(breakpoints=points, heights=heights / total)


def bin_density(d: StepDensity, k: int) -> np.ndarray:
    """Average the density over k equal bins: height_j = k * integral over bin j."""
    if k < 1:
        raise ParameterError(f"bin count must be >= 1, got {k}")
    edges = np.arange(k + 1) / k
    # integrate the step function exactly against each bin
    cut = np.unique(np.concatenate([d.breakpoints, edges]))
    mids = (cut[:-1] + cut[1:]) / 2.0
    seg = np.clip(np.searchsorted(d.breakpoints, mids, side="right") - 1, 0, len(d.heights) - 1)
    vals = d.heights[seg]
    widths = np.diff(cut)
    which_bin = np.clip(np.searchsorted(edges, mids, side="right") - 1, 0, k - 1)
    out = np.zeros(k, dtype=np.float64)
    np.add.at(out, which_bin, vals * widths)
    return out * k


def filter_by_entropy(samples: list[DmapSample], lo: float, hi: float) -> list[DmapSample]:
    """Keep samples whose distribution entropy lies in [lo, hi)."""
    if not (lo < hi):
        raise ParameterError("entropy filter needs lo < hi")
    return [s for s in samples if lo <= s.entropy < hi]
