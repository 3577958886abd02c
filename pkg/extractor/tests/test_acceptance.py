"""Secondary acceptance: extractor conformance against the reference tiny model."""

import json
import warnings

import torch

from distmap_extractor import ExtractionJob, TextItem, extract, load_model
from distmap_extractor.scoring import softmax_logspace_reference


def test_extractor_conformance(tiny_model_dir, tmp_path):
    texts = [
        TextItem("a", "the cat sat", " on the mat and then the dog ran fast"),
        TextItem("b", "", "a big dog sat on a small rug and then ran"),
    ]
    out = tmp_path / "records.jsonl"
    job = ExtractionJob(model_id=tiny_model_dir, texts=texts, out_path=str(out))
    lines = extract(job)
    assert not job.errors

    # parses in the primary tool with zero warnings
    from distmap import parse_stream

    with warnings.catch_warnings():
        warnings.simplefilter("error")
        streams = parse_stream(out.read_text().splitlines(), schema="compact")
    for stream in streams:
        stream.validate()

    # record invariants
    recs = [json.loads(l) for l in lines if "pos" in json.loads(l)]
    invariants_ok = all(
        0.0 <= r["p_obs"] <= 1.0
        and 0.0 <= r["mass_above"] <= 1.0
        and r["mass_above"] + r["p_obs"] <= 1.0 + 1e-6
        and r["entropy"] >= 0.0
        for r in recs
    )

    # independent per-position p_obs recomputation (prefix-only forwards)
    model, tokenizer = load_model(tiny_model_dir)
    bos = tokenizer.bos_token_id
    worst = 0.0
    for item in texts:
        ids = tokenizer.encode(item.prompt + item.continuation, add_special_tokens=False)
        mine = [r for r in recs if r["text_id"] == item.text_id]
        for pos, rec in enumerate(mine):
            with torch.no_grad():
                row = model(torch.tensor([[bos] + ids[:pos]])).logits[0, -1].float().numpy()
            want = softmax_logspace_reference(row, ids[pos])
            worst = max(worst, abs(rec["p_obs"] - want))

    ok = invariants_ok and worst <= 1e-5
    print(
        f"ACCEPTANCE extractor conformance: {'PASS' if ok else 'FAIL'} "
        f"(zero-warning parse; invariants {'ok' if invariants_ok else 'VIOLATED'}; "
        f"max |p_obs - recomputation| = {worst:.2e} <= 1e-5)"
    )
    assert ok
