"""Score texts with a causal LM and emit next-token probability records.

Output is the consumer's newline-delimited JSON stream: one metadata line
per text ({"text_id", "prompt_len"}) followed by compact records
({"text_id", "pos", "p_obs", "mass_above", "entropy", "is_prompt"}), or
full records ({"text_id", "pos", "obs_index", "probs"}) for small
vocabularies. Prompt tokens are scored as context and flagged is_prompt;
the continuation is never empty.

When the tokenizer defines a BOS token it is prepended, so every real
token gets a conditional distribution. Without one, the first token has
no context to score and is consumed as context only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import torch

from .scoring import Step, apply_steps, record_fields, softmax64


class ExtractionError(RuntimeError):
    """Model loading or per-text scoring failure."""


@dataclass(frozen=True)
class TextItem:
    text_id: str
    prompt: str
    continuation: str


@dataclass
class ExtractionJob:
    model_id: str
    texts: list[TextItem]
    device: str = "cpu"
    schema: str = "compact"  # compact | full
    steps: tuple[Step, ...] = ()
    out_path: str | None = None
    errors: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.schema not in ("compact", "full"):
            raise ExtractionError(f"unknown schema {self.schema!r}")
        for item in self.texts:
            if not item.continuation:
                raise ExtractionError(f"{item.text_id}: continuation must be non-empty")


def load_model(model_id: str, device: str = "cpu"):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModelForCausalLM.from_pretrained(model_id)
    except Exception as exc:
        raise ExtractionError(f"cannot load model {model_id!r}: {exc}") from exc
    model.to(device)
    model.eval()
    return model, tokenizer


def _encode(tokenizer, text: str) -> list[int]:
    return tokenizer.encode(text, add_special_tokens=False)


def score_text(model, tokenizer, item: TextItem, steps: tuple[Step, ...], device: str):
    """One text's records: list of (pos, token, probs, is_prompt).

    probs is the float64 (possibly decoding-adapted) distribution that
    conditioned the token at this position.
    """
    prompt_ids = _encode(tokenizer, item.prompt) if item.prompt else []
    full_ids = _encode(tokenizer, item.prompt + item.continuation)
    if full_ids[: len(prompt_ids)] != prompt_ids:
        raise ExtractionError(
            f"{item.text_id}: prompt tokenization is not a prefix of the full text "
            "(re-tokenization mismatch)"
        )
    if len(full_ids) <= len(prompt_ids):
        raise ExtractionError(f"{item.text_id}: continuation contributes no tokens")

    bos = tokenizer.bos_token_id
    if bos is not None:
        ids = [bos] + full_ids
        scored = list(range(len(full_ids)))  # full_ids[j] predicted by logits[j]
        n_prompt_records = len(prompt_ids)
    else:
        ids = full_ids
        scored = list(range(1, len(full_ids)))
        n_prompt_records = max(len(prompt_ids) - 1, 0)

    with torch.no_grad():
        logits = model(torch.tensor([ids], device=device)).logits[0].float().cpu().numpy()

    out = []
    for pos, j in enumerate(scored):
        row = softmax64(logits[j if bos is not None else j - 1])
        if steps:
            row = apply_steps(row, steps)
        out.append((pos, full_ids[j], row, pos < n_prompt_records))
    return out, n_prompt_records


def extract(job: ExtractionJob) -> list[str]:
    """Run the job; returns the output lines (also written to out_path)."""
    model, tokenizer = load_model(job.model_id, job.device)
    lines: list[str] = []
    for item in job.texts:
        try:
            scored, prompt_len = score_text(model, tokenizer, item, job.steps, job.device)
        except ExtractionError as exc:
            job.errors.append(str(exc))
            continue
        lines.append(json.dumps({"text_id": item.text_id, "prompt_len": prompt_len}))
        for pos, token, probs, is_prompt in scored:
            if job.schema == "full":
                lines.append(
                    json.dumps(
                        {
                            "text_id": item.text_id,
                            "pos": pos,
                            "obs_index": int(token),
                            "probs": [float(x) for x in probs],
                        }
                    )
                )
            else:
                p_obs, mass_above, entropy = record_fields(probs, token)
                lines.append(
                    json.dumps(
                        {
                            "text_id": item.text_id,
                            "pos": pos,
                            "p_obs": p_obs,
                            "mass_above": mass_above,
                            "entropy": entropy,
                            "is_prompt": is_prompt,
                        }
                    )
                )
    if job.out_path:
        with open(job.out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n" if lines else "")
    return lines


def read_text_items(path: str) -> list[TextItem]:
    """Input schema: one {"text_id", "prompt", "continuation"} object per line."""
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            obj = json.loads(line)
            try:
                items.append(
                    TextItem(
                        text_id=str(obj["text_id"]),
                        prompt=str(obj.get("prompt", "")),
                        continuation=str(obj["continuation"]),
                    )
                )
            except KeyError as exc:
                raise ExtractionError(f"line {lineno}: missing field {exc}") from exc
    return items
