"""Seeded order-1 Markov categorical model over a small vocabulary.

Small enough that every mapping formula can be checked against exhaustive
brute force, but with real conditional structure: each row is a distinct
next-token distribution, so decoding transforms, adapted evaluation and
cross-model (black-box) evaluation are all exercised for real.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .decoding import DecodingSpec, apply_spec
from .errors import FormatError, ParameterError
from .records import (
    FullDistributionRecord,
    TextRecordStream,
    TokenDistributionSummary,
    canonical_order,
    distribution_entropy,
)
from .stats import chi_square_stat, frequencies

_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class CategoricalLM:
    vocab_size: int
    transition: np.ndarray  # (V, V): row = previous token, column = next token
    initial: np.ndarray  # (V,)

    def __post_init__(self):
        V = self.vocab_size
        if V < 2:
            raise ParameterError("vocab_size must be >= 2")
        if self.transition.shape != (V, V) or self.initial.shape != (V,):
            raise FormatError("transition must be (V, V) and initial (V,)")
        rows = np.vstack([self.initial[None, :], self.transition])
        if np.any(rows < 0.0):
            raise FormatError("probabilities must be >= 0")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > _ROW_SUM_TOL):
            raise FormatError("every row must sum to 1")

    def row(self, prev: int | None) -> np.ndarray:
        return self.initial if prev is None else self.transition[prev]

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "initial": [float(x) for x in self.initial],
            "transition": [[float(x) for x in row] for row in self.transition],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CategoricalLM":
        return cls(
            vocab_size=int(obj["vocab_size"]),
            transition=np.asarray(obj["transition"], dtype=np.float64),
            initial=np.asarray(obj["initial"], dtype=np.float64),
        )


@dataclass
class GenerationRun:
    model: CategoricalLM
    spec: DecodingSpec
    seed: int
    tokens: list[int]
    records: list[FullDistributionRecord] = field(default_factory=list)


def _dirichlet_rows(rng: np.random.Generator, n: int, dim: int, concentration: float) -> np.ndarray:
    g = rng.standard_gamma(concentration, size=(n, dim))
    sums = g.sum(axis=1, keepdims=True)
    # extreme concentrations can underflow a whole row to zero; fall back to one-hot
    dead = sums[:, 0] <= 0.0
    if np.any(dead):
        hot = rng.integers(0, dim, size=int(dead.sum()))
        g[dead] = 0.0
        g[np.nonzero(dead)[0], hot] = 1.0
        sums = g.sum(axis=1, keepdims=True)
    return g / sums


def random_model(seed: int, vocab_size: int = 16, concentration: float = 1.0) -> CategoricalLM:
    """Model with symmetric-Dirichlet rows; low concentration gives spiky rows."""
    if vocab_size < 2:
        raise ParameterError("vocab_size must be >= 2")
    if not (concentration > 0.0):
        raise ParameterError("concentration must be > 0")
    rng = np.random.default_rng(seed)
    transition = _dirichlet_rows(rng, vocab_size, vocab_size, concentration)
    initial = _dirichlet_rows(rng, 1, vocab_size, concentration)[0]
    return CategoricalLM(vocab_size=vocab_size, transition=transition, initial=initial)


def generate(
    model: CategoricalLM,
    spec: DecodingSpec,
    T: int,
    seed: int,
    text_id: str = "toy",
) -> GenerationRun:
    """Autoregressively sample T tokens from the spec-adapted model.

    Records carry the BASE model rows, so the evaluation side must re-apply
    the adaptation itself; that path is exercised, not bypassed.
    """
    if T < 1:
        raise ParameterError("T must be >= 1")
    V = model.vocab_size
    adapted = [apply_spec(model.initial, spec).tolist()] + [
        apply_spec(model.transition[v], spec).tolist() for v in range(V)
    ]
    cums = [np.cumsum(q).tolist() for q in adapted]
    base_rows = [model.initial] + [model.transition[v] for v in range(V)]

    u = np.random.default_rng(seed).random(T).tolist()
    tokens: list[int] = []
    records: list[FullDistributionRecord] = []
    ctx = 0  # row index: 0 = initial, v+1 = after token v
    for i in range(T):
        tok = bisect_right(cums[ctx], u[i])
        if tok >= V:
            tok = V - 1
        while tok > 0 and adapted[ctx][tok] == 0.0:
            tok -= 1
        tokens.append(tok)
        records.append(FullDistributionRecord(text_id, i, tok, base_rows[ctx], False))
        ctx = tok + 1
    return GenerationRun(model=model, spec=spec, seed=seed, tokens=tokens, records=records)


def _row_tables(model: CategoricalLM):
    """Per-row lookup tables: mass strictly ahead of each token, and entropy."""
    rows = [model.initial] + [model.transition[v] for v in range(model.vocab_size)]
    p_lists = []
    mass_above = []
    entropies = []
    for r in rows:
        order = canonical_order(r)
        m = [0.0] * model.vocab_size
        running: list[float] = []
        for idx in order:
            m[idx] = math.fsum(running)
            running.append(float(r[idx]))
        p_lists.append(r.tolist())
        mass_above.append(m)
        entropies.append(distribution_entropy(r))
    return rows, p_lists, mass_above, entropies


def evaluate(run: GenerationRun, evaluator: CategoricalLM, text_id: str | None = None) -> TextRecordStream:
    """Score the run's token sequence under an evaluator model.

    evaluator == run.model is the white-box case; a different model is the
    black-box case. Returns a stream carrying both compact summaries and
    the evaluator's full records.
    """
    if evaluator.vocab_size != run.model.vocab_size:
        raise FormatError(
            f"vocabulary mismatch: generator {run.model.vocab_size}, evaluator {evaluator.vocab_size}"
        )
    tid = text_id if text_id is not None else f"toy-{run.seed}"
    rows, p_lists, mass_above, entropies = _row_tables(evaluator)
    records: list[TokenDistributionSummary] = []
    full: list[FullDistributionRecord] = []
    ctx = 0
    for i, tok in enumerate(run.tokens):
        records.append(
            TokenDistributionSummary(tid, i, p_lists[ctx][tok], mass_above[ctx][tok], entropies[ctx], False)
        )
        full.append(FullDistributionRecord(tid, i, tok, rows[ctx], False))
        ctx = tok + 1
    return TextRecordStream(text_id=tid, prompt_len=0, records=records, full=full)


@dataclass(frozen=True)
class NullSummary:
    mean: float
    variance: float
    trials: int


def monte_carlo_null(k: int, T: int, trials: int, seed: int) -> NullSummary:
    """Chi-square moments over independent uniform sample sets of size T."""
    if trials < 100:
        raise ParameterError("trials must be >= 100")
    rng = np.random.default_rng(seed)
    stats = np.empty(trials, dtype=np.float64)
    for t in range(trials):
        xs = rng.random(T)
        stats[t] = chi_square_stat(frequencies(xs, k), T)
    return NullSummary(mean=float(stats.mean()), variance=float(stats.var(ddof=1)), trials=trials)
