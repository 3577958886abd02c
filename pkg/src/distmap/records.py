"""Per-position next-token distribution records and the JSONL ingestion layer.

Two record granularities exist: full records keep the whole probability
vector (needed for decoding-adapted evaluation and the random-order
baseline), compact summaries keep only what the unit-interval mapping
needs per position: the observed token's probability, the mass strictly
ahead of it in the canonical order, and the distribution entropy.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import FormatError

# |sum(probs) - 1| below this is silently renormalized; between this and
# REJECT_TOL it is renormalized with a warning; above REJECT_TOL the line
# is rejected. Extractors emit float32-rounded probabilities, hence tiers.
SILENT_TOL = 1e-6
REJECT_TOL = 1e-3

MASS_TOL = 1e-9


class FullDistributionRecord(NamedTuple):
    """One position with its complete next-token probability vector."""

    text_id: str
    pos: int
    obs_index: int
    probs: np.ndarray
    is_prompt: bool = False

    def validate(self) -> None:
        p = self.probs
        if p.ndim != 1 or p.size == 0:
            raise FormatError(f"{self.text_id}@{self.pos}: probs must be a non-empty vector")
        if self.obs_index < 0 or self.obs_index >= p.size:
            raise FormatError(f"{self.text_id}@{self.pos}: obs_index {self.obs_index} out of range")
        if np.any(p < 0.0) or np.any(p > 1.0 + MASS_TOL):
            raise FormatError(f"{self.text_id}@{self.pos}: probability entries outside [0, 1]")
        if abs(math.fsum(p.tolist()) - 1.0) > SILENT_TOL:
            raise FormatError(f"{self.text_id}@{self.pos}: probabilities do not sum to 1")


class TokenDistributionSummary(NamedTuple):
    """Compact per-position record: everything the interval mapping needs."""

    text_id: str
    pos: int
    p_obs: float
    mass_above: float
    entropy: float
    is_prompt: bool = False

    def validate(self) -> None:
        if not (0.0 <= self.p_obs <= 1.0):
            raise FormatError(f"{self.text_id}@{self.pos}: p_obs {self.p_obs} outside [0, 1]")
        if not (0.0 <= self.mass_above <= 1.0):
            raise FormatError(f"{self.text_id}@{self.pos}: mass_above {self.mass_above} outside [0, 1]")
        if self.mass_above + self.p_obs > 1.0 + MASS_TOL:
            raise FormatError(
                f"{self.text_id}@{self.pos}: mass_above + p_obs = "
                f"{self.mass_above + self.p_obs} exceeds 1"
            )
        if self.entropy < 0.0 or not math.isfinite(self.entropy):
            raise FormatError(f"{self.text_id}@{self.pos}: entropy {self.entropy} invalid")


@dataclass
class TextRecordStream:
    """All records of one text, ordered by position.

    ``full`` is populated when the stream was parsed from the full schema
    (or produced by the toy model); decoding-adapted evaluation and the
    random-order baseline need it.
    """

    text_id: str
    prompt_len: int = 0
    records: list[TokenDistributionSummary] = field(default_factory=list)
    full: list[FullDistributionRecord] | None = None

    def __len__(self) -> int:
        return len(self.records)

    def validate(self) -> None:
        for i, rec in enumerate(self.records):
            if rec.pos != i:
                raise FormatError(f"{self.text_id}: pos values not consecutive from 0")
            want_prompt = rec.pos < self.prompt_len
            if rec.is_prompt != want_prompt:
                raise FormatError(
                    f"{self.text_id}@{rec.pos}: is_prompt inconsistent with prompt_len={self.prompt_len}"
                )
            rec.validate()
        if self.full is not None and len(self.full) != len(self.records):
            raise FormatError(f"{self.text_id}: full/compact record count mismatch")


def canonical_order(probs: np.ndarray) -> np.ndarray:
    """Indices sorted by descending probability, ties by ascending index.

    The resulting total order makes prefix-sum intervals a true partition
    of [0, 1) even when probabilities tie.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise FormatError("probability vector must be non-empty")
    # stable sort on -p keeps equal entries in ascending-index order
    return np.argsort(-p, kind="stable")


def distribution_entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats with the 0*ln(0) = 0 convention."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p[p > 0.0]
    if nz.size == 0:
        return 0.0
    return float(-math.fsum((nz * np.log(nz)).tolist()))


def mass_before_observed(probs: np.ndarray, obs_index: int, order: np.ndarray | None = None) -> float:
    """Total probability of tokens strictly preceding the observed one.

    Preceding means earlier in the supplied order (canonical by default).
    The prefix is summed with compensated summation so large vocabularies
    do not bias the interval's left endpoint.
    """
    p = np.asarray(probs, dtype=np.float64)
    if order is None:
        order = canonical_order(p)
    where = int(np.nonzero(order == obs_index)[0][0])
    if where == 0:
        return 0.0
    return math.fsum(p[order[:where]].tolist())


def compact_from_full(rec: FullDistributionRecord) -> TokenDistributionSummary:
    """Reduce a full record to the compact summary under the canonical order."""
    rec.validate()
    p = np.asarray(rec.probs, dtype=np.float64)
    p_obs = float(p[rec.obs_index])
    mass_above = mass_before_observed(p, rec.obs_index)
    out = TokenDistributionSummary(
        text_id=rec.text_id,
        pos=rec.pos,
        p_obs=p_obs,
        mass_above=min(mass_above, 1.0),
        entropy=distribution_entropy(p),
        is_prompt=rec.is_prompt,
    )
    out.validate()
    return out


def _renormalize(probs: np.ndarray, lineno: int) -> np.ndarray:
    total = math.fsum(probs.tolist())
    dev = abs(total - 1.0)
    if dev > REJECT_TOL:
        raise FormatError(f"line {lineno}: probabilities sum to {total:.6g}, deviation > {REJECT_TOL}")
    if dev > SILENT_TOL:
        warnings.warn(
            f"line {lineno}: probabilities sum to {total:.9g}; renormalizing",
            stacklevel=3,
        )
    if dev > 0.0:
        probs = probs / total
    return probs


def _require(obj: dict, keys: tuple[str, ...], lineno: int) -> None:
    for key in keys:
        if key not in obj:
            raise FormatError(f"line {lineno}: missing field {key!r}")


def parse_stream(lines, schema: str = "compact") -> list[TextRecordStream]:
    """Parse newline-delimited JSON records into per-text streams.

    ``lines`` is any iterable of str/bytes. The optional per-text metadata
    line ``{"text_id": ..., "prompt_len": N}`` must precede that text's
    records and drives the is_prompt flags for full-schema input. Malformed
    lines raise FormatError naming the line number. Streams are returned
    sorted by text_id.
    """
    if schema not in ("full", "compact"):
        raise FormatError(f"unknown schema {schema!r}")
    streams: dict[str, TextRecordStream] = {}
    for lineno, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict) or "text_id" not in obj:
            raise FormatError(f"line {lineno}: missing field 'text_id'")
        text_id = str(obj["text_id"])

        if "prompt_len" in obj and "pos" not in obj:
            # metadata line
            prompt_len = int(obj["prompt_len"])
            if prompt_len < 0:
                raise FormatError(f"line {lineno}: prompt_len must be >= 0")
            stream = streams.setdefault(text_id, TextRecordStream(text_id=text_id))
            if stream.records:
                raise FormatError(f"line {lineno}: metadata for {text_id!r} after its records")
            stream.prompt_len = prompt_len
            continue

        stream = streams.setdefault(text_id, TextRecordStream(text_id=text_id))
        if schema == "full" and stream.full is None:
            stream.full = []

        _require(obj, ("pos",), lineno)
        pos = int(obj["pos"])
        if pos != len(stream.records):
            raise FormatError(
                f"line {lineno}: pos {pos} for {text_id!r}, expected {len(stream.records)} "
                "(positions must be consecutive from 0)"
            )
        is_prompt = pos < stream.prompt_len

        try:
            if schema == "full":
                _require(obj, ("obs_index", "probs"), lineno)
                probs = np.asarray(obj["probs"], dtype=np.float64)
                if probs.ndim != 1 or probs.size == 0:
                    raise FormatError(f"line {lineno}: probs must be a non-empty array")
                if np.any(probs < 0.0) or np.any(probs > 1.0 + MASS_TOL):
                    raise FormatError(f"line {lineno}: probability entries outside [0, 1]")
                probs = _renormalize(probs, lineno)
                full_rec = FullDistributionRecord(
                    text_id=text_id,
                    pos=pos,
                    obs_index=int(obj["obs_index"]),
                    probs=probs,
                    is_prompt=is_prompt,
                )
                rec = compact_from_full(full_rec)
                stream.full.append(full_rec)
            else:
                _require(obj, ("p_obs", "mass_above", "entropy", "is_prompt"), lineno)
                rec = TokenDistributionSummary(
                    text_id=text_id,
                    pos=pos,
                    p_obs=float(obj["p_obs"]),
                    mass_above=float(obj["mass_above"]),
                    entropy=float(obj["entropy"]),
                    is_prompt=bool(obj["is_prompt"]),
                )
                rec.validate()
        except FormatError as exc:
            if str(exc).startswith("line "):
                raise
            raise FormatError(f"line {lineno}: {exc}") from exc
        stream.records.append(rec)

    out = [streams[tid] for tid in sorted(streams)]
    for stream in out:
        if stream.prompt_len == 0 and schema == "compact":
            # derive prompt_len from the flags when no metadata line was given
            n = 0
            for rec in stream.records:
                if rec.is_prompt:
                    n += 1
                else:
                    break
            stream.prompt_len = n
        stream.validate()
    return out


def serialize_compact(streams: list[TextRecordStream]) -> str:
    """Emit the compact schema, one JSON object per line, metadata first."""
    out = []
    for stream in streams:
        out.append(json.dumps({"text_id": stream.text_id, "prompt_len": stream.prompt_len}))
        for rec in stream.records:
            out.append(
                json.dumps(
                    {
                        "text_id": rec.text_id,
                        "pos": rec.pos,
                        "p_obs": rec.p_obs,
                        "mass_above": rec.mass_above,
                        "entropy": rec.entropy,
                        "is_prompt": rec.is_prompt,
                    }
                )
            )
    return "\n".join(out) + "\n" if out else ""


def serialize_full(streams: list[TextRecordStream]) -> str:
    """Emit the full schema for streams that carry full records."""
    out = []
    for stream in streams:
        if stream.full is None:
            raise FormatError(f"{stream.text_id}: stream has no full records to serialize")
        out.append(json.dumps({"text_id": stream.text_id, "prompt_len": stream.prompt_len}))
        for rec in stream.full:
            out.append(
                json.dumps(
                    {
                        "text_id": rec.text_id,
                        "pos": rec.pos,
                        "obs_index": rec.obs_index,
                        "probs": [float(x) for x in rec.probs],
                    }
                )
            )
    return "\n".join(out) + "\n" if out else ""
