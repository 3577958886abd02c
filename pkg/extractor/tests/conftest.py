import json
import os

import pytest
import torch

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

WORDS = [
    "the", "a", "cat", "dog", "sat", "ran", "on", "mat",
    "rug", "fast", "slow", "and", "then", "big", "small", "red",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """Reference tiny causal LM in hub format, built and saved locally.

    Deterministic weights (fixed torch seed), word-level tokenizer with a
    BOS token so every real token is scoreable.
    """
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import Whitespace
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    vocab = {"<bos>": 0, "<unk>": 1}
    for w in WORDS:
        vocab[w] = len(vocab)
    tok = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = Whitespace()
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, bos_token="<bos>", unk_token="<unk>")

    torch.manual_seed(1234)
    config = GPT2Config(
        vocab_size=len(vocab), n_positions=128, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=0, eos_token_id=0,
    )
    model = GPT2LMHeadModel(config)
    path = tmp_path_factory.mktemp("reference-tiny-lm")
    model.save_pretrained(path)
    fast.save_pretrained(path)
    return str(path)


@pytest.fixture()
def texts_file(tmp_path):
    path = tmp_path / "texts.jsonl"
    rows = [
        {
            "text_id": "t1",
            "prompt": "the cat sat",
            "continuation": " on the mat and then the dog ran fast",
        },
        {"text_id": "t2", "prompt": "", "continuation": "a big dog sat on a small rug"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return str(path)
