"""Decoding-strategy transforms: temperature, top-k, top-p (nucleus).

These turn a base next-token distribution into the adapted distribution a
sampler actually draws from. The same transforms are applied on the
evaluation side when checking text against a claimed decoding setup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .records import canonical_order, distribution_entropy

entropy = distribution_entropy


@dataclass(frozen=True)
class Temperature:
    tau: float

    def __post_init__(self):
        if not (self.tau > 0.0) or not math.isfinite(self.tau):
            raise ParameterError(f"temperature must be > 0, got {self.tau}")

    def __call__(self, probs: np.ndarray) -> np.ndarray:
        return apply_temperature(probs, self.tau)

    def __str__(self) -> str:
        return f"temp={self.tau:g}"


@dataclass(frozen=True)
class TopK:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"top-k must be >= 1, got {self.k}")

    def __call__(self, probs: np.ndarray) -> np.ndarray:
        return apply_top_k(probs, self.k)

    def __str__(self) -> str:
        return f"topk={self.k}"


@dataclass(frozen=True)
class TopP:
    pi: float

    def __post_init__(self):
        if not (0.0 < self.pi <= 1.0):
            raise ParameterError(f"top-p must be in (0, 1], got {self.pi}")

    def __call__(self, probs: np.ndarray) -> np.ndarray:
        return apply_top_p(probs, self.pi)

    def __str__(self) -> str:
        return f"topp={self.pi:g}"


Transform = Temperature | TopK | TopP


@dataclass(frozen=True)
class DecodingSpec:
    """An ordered list of transforms; the empty list is pure sampling."""

    steps: tuple[Transform, ...] = ()

    @property
    def is_pure(self) -> bool:
        return len(self.steps) == 0

    def __str__(self) -> str:
        if self.is_pure:
            return "pure"
        return "+".join(str(s) for s in self.steps)

    @classmethod
    def parse(cls, text: str) -> "DecodingSpec":
        """Parse the textual form: "pure", "temp=0.7", "topk=50", "topp=0.8",
        composable with "+" preserving order, e.g. "temp=0.7+topp=0.9".
        """
        text = text.strip()
        if text in ("", "pure"):
            return cls()
        steps: list[Transform] = []
        for part in text.split("+"):
            part = part.strip()
            if "=" not in part:
                raise ParameterError(f"cannot parse decoding step {part!r}")
            name, _, value = part.partition("=")
            name = name.strip().lower()
            value = value.strip()
            try:
                if name in ("temp", "temperature"):
                    steps.append(Temperature(float(value)))
                elif name in ("topk", "top-k", "top_k"):
                    steps.append(TopK(int(value)))
                elif name in ("topp", "top-p", "top_p"):
                    steps.append(TopP(float(value)))
                else:
                    raise ParameterError(f"unknown decoding step {name!r}")
            except ValueError as exc:
                raise ParameterError(f"cannot parse decoding step {part!r}: {exc}") from exc
        return cls(steps=tuple(steps))


def apply_temperature(probs: np.ndarray, tau: float) -> np.ndarray:
    """Rescale a distribution to p^(1/tau), renormalized.

    Works in log space (stable softmax on ln(p)/tau) so small temperatures
    neither overflow nor underflow. Zero entries stay zero.
    """
    if not (tau > 0.0) or not math.isfinite(tau):
        raise ParameterError(f"temperature must be > 0, got {tau}")
    p = np.asarray(probs, dtype=np.float64)
    if tau == 1.0:
        return p.copy()
    with np.errstate(divide="ignore"):
        logits = np.log(p) / tau
    finite = np.isfinite(logits)
    if not np.any(finite):
        raise ParameterError("temperature transform needs at least one positive entry")
    shifted = logits - np.max(logits[finite])
    out = np.exp(shifted)
    out[~finite] = 0.0
    return out / math.fsum(out.tolist())


def apply_top_k(probs: np.ndarray, k: int) -> np.ndarray:
    """Keep the k most likely tokens (canonical order breaks boundary ties),
    zero the rest, renormalize. k >= vocabulary size is the identity."""
    if k < 1:
        raise ParameterError(f"top-k must be >= 1, got {k}")
    p = np.asarray(probs, dtype=np.float64)
    if k >= p.size:
        return p.copy()
    keep = canonical_order(p)[:k]
    out = np.zeros_like(p)
    out[keep] = p[keep]
    return out / math.fsum(out[keep].tolist())


def apply_top_p(probs: np.ndarray, pi: float) -> np.ndarray:
    """Nucleus truncation: keep the shortest canonical-order prefix whose
    mass strictly exceeds pi, renormalize. pi = 1 is the identity."""
    if not (0.0 < pi <= 1.0):
        raise ParameterError(f"top-p must be in (0, 1], got {pi}")
    p = np.asarray(probs, dtype=np.float64)
    if pi == 1.0:
        return p.copy()
    order = canonical_order(p)
    running = 0.0
    comp = 0.0  # Kahan compensation
    m = p.size
    for i, idx in enumerate(order):
        y = float(p[idx]) - comp
        t = running + y
        comp = (t - running) - y
        running = t
        if running > pi:
            m = i + 1
            break
    keep = order[:m]
    out = np.zeros_like(p)
    out[keep] = p[keep]
    return out / math.fsum(out[keep].tolist())


def apply_spec(probs: np.ndarray, spec: DecodingSpec) -> np.ndarray:
    """Apply the spec's transforms in their listed order; empty spec is identity."""
    p = np.asarray(probs, dtype=np.float64)
    if spec.is_pure:
        return p.copy()
    for step in spec.steps:
        p = step(p)
    return p
