"""Row-level scoring math: softmax, decoding transforms, record fields.

Everything runs in float64 numpy after the model forward pass, so the
emitted probabilities satisfy the stream invariants (masses in [0, 1],
mass_above + p_obs <= 1 + 1e-6) regardless of model dtype. The token
order for mass_above is probability descending with ties broken by
ascending vocabulary index, matching the consumer's convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SpecError(ValueError):
    """Unparseable or out-of-range decoding spec."""


@dataclass(frozen=True)
class Step:
    kind: str  # temp | topk | topp
    value: float


def parse_spec(text: str) -> tuple[Step, ...]:
    """Same textual form the consumer uses: "pure", "temp=0.7+topp=0.9", ..."""
    text = text.strip()
    if text in ("", "pure"):
        return ()
    steps = []
    for part in text.split("+"):
        name, _, value = part.strip().partition("=")
        name = name.strip().lower()
        try:
            if name in ("temp", "temperature"):
                v = float(value)
                if not (v > 0.0):
                    raise SpecError(f"temperature must be > 0, got {v}")
                steps.append(Step("temp", v))
            elif name in ("topk", "top-k", "top_k"):
                k = int(value)
                if k < 1:
                    raise SpecError(f"top-k must be >= 1, got {k}")
                steps.append(Step("topk", k))
            elif name in ("topp", "top-p", "top_p"):
                v = float(value)
                if not (0.0 < v <= 1.0):
                    raise SpecError(f"top-p must be in (0, 1], got {v}")
                steps.append(Step("topp", v))
            else:
                raise SpecError(f"unknown decoding step {part!r}")
        except ValueError as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(f"cannot parse decoding step {part!r}") from exc
    return tuple(steps)


def softmax64(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def descending_order(probs: np.ndarray) -> np.ndarray:
    # stable sort on the negated values keeps ties in ascending-index order
    return np.argsort(-probs, kind="stable")


def apply_steps(probs: np.ndarray, steps: tuple[Step, ...]) -> np.ndarray:
    p = probs
    for step in steps:
        if step.kind == "temp":
            with np.errstate(divide="ignore"):
                logits = np.log(p) / step.value
            p = softmax64(np.where(np.isfinite(logits), logits, -np.inf))
        elif step.kind == "topk":
            k = int(step.value)
            if k < p.size:
                keep = descending_order(p)[:k]
                out = np.zeros_like(p)
                out[keep] = p[keep]
                p = out / out.sum()
        elif step.kind == "topp":
            if step.value < 1.0:
                order = descending_order(p)
                cum = np.cumsum(p[order])
                m = int(np.searchsorted(cum, step.value, side="right")) + 1
                keep = order[: min(m, p.size)]
                out = np.zeros_like(p)
                out[keep] = p[keep]
                p = out / out.sum()
    return p


def record_fields(probs: np.ndarray, token: int) -> tuple[float, float, float]:
    """(p_obs, mass_above, entropy) for one position's distribution."""
    order = descending_order(probs)
    where = int(np.nonzero(order == token)[0][0])
    mass_above = float(probs[order[:where]].sum()) if where else 0.0
    nz = probs[probs > 0.0]
    entropy = float(-(nz * np.log(nz)).sum())
    return float(probs[token]), min(mass_above, 1.0), max(entropy, 0.0)


def softmax_logspace_reference(logits: np.ndarray, token: int) -> float:
    """Independent p_obs path used by tests: log-sum-exp in plain Python."""
    zs = [float(v) for v in logits]
    m = max(zs)
    lse = m + math.log(math.fsum(math.exp(v - m) for v in zs))
    return math.exp(zs[token] - lse)
