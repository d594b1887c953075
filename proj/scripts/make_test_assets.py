#!/usr/bin/env python3
"""Generate test fixtures: a randomly initialized GPT-2-Small-shaped checkpoint
plus reference outputs computed with torch/transformers on that checkpoint.

The checkpoint is synthetic (random weights, fixed seed). Its metadata marks it
as such so downstream checks that depend on trained-model behavior can skip
with an explanation instead of failing on noise.

Outputs (under testdata/, not committed):
  testdata/model/model.safetensors   F32 weights, metadata {"synthetic": "true"}
  testdata/reference_forward.json    per-prompt final-position logits for probe
                                     token ids, computed by transformers
  tests/data/tokenizer_cases.json    reference BPE encodings (committed)
"""

import json
import os
import sys

import torch
from safetensors.torch import save_file
from transformers import GPT2Config, GPT2LMHeadModel, GPT2Tokenizer

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SEED = 20240817


def build_model() -> GPT2LMHeadModel:
    torch.manual_seed(SEED)
    config = GPT2Config()  # GPT-2 Small defaults
    model = GPT2LMHeadModel(config)
    model.eval()
    return model


def save_checkpoint(model: GPT2LMHeadModel, path: str) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    state = {}
    for name, tensor in model.state_dict().items():
        if name.endswith(".attn.bias") or name.endswith(".attn.masked_bias"):
            continue
        if name == "lm_head.weight":
            continue  # tied to transformer.wte.weight
        state[name] = tensor.to(torch.float32).contiguous()
    save_file(state, path, metadata={"synthetic": "true", "seed": str(SEED)})


def tokenizer() -> GPT2Tokenizer:
    return GPT2Tokenizer(
        os.path.join(ROOT, "assets", "tokenizer", "vocab.json"),
        os.path.join(ROOT, "assets", "tokenizer", "merges.txt"),
    )


TOKENIZER_CASES = [
    "Alice walks",
    "Alice and Bob walk",
    "She runs",
    "They do not run",
    "Usually, Alice walks",
    "Yesterday, Alice and Bob walked",
    "hello world",
    "  leading spaces",
    "trailing spaces  ",
    "don't stop, it's fine",
    "I'll've they're we'd",
    "numbers 123 and 4567!",
    "mixed42tokens",
    "punctuation!!! ...and, more; stuff?",
    "UPPER lower MiXeD",
    "unicode café naïve über",
    "tabs\tand\nnewlines",
    "",
    " ",
    "a",
]


def write_tokenizer_cases(tok: GPT2Tokenizer) -> None:
    cases = [{"text": t, "ids": tok.encode(t)} for t in TOKENIZER_CASES]
    path = os.path.join(ROOT, "tests", "data", "tokenizer_cases.json")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(cases, f, indent=2)
    print(f"wrote {path} ({len(cases)} cases)")


REFERENCE_PROMPTS = [
    "Alice walks",
    "Alice and Bob",
    "Usually, Alice does not",
    "Yesterday, they",
    "She",
]


def write_reference_forward(model: GPT2LMHeadModel, tok: GPT2Tokenizer, path: str) -> None:
    records = []
    probe_words = [" walks", " walk", " walked", " run", " runs"]
    probe_ids = [tok.encode(w)[0] for w in probe_words]
    with torch.no_grad():
        for text in REFERENCE_PROMPTS:
            ids = tok.encode(text)
            out = model(torch.tensor([ids]))
            logits = out.logits[0, -1].to(torch.float64)
            top5 = torch.topk(logits, 5)
            records.append(
                {
                    "text": text,
                    "ids": ids,
                    "probe_ids": probe_ids,
                    "probe_logits": [logits[i].item() for i in probe_ids],
                    "top5_ids": top5.indices.tolist(),
                    "logit_sum_abs": float(logits.abs().sum().item()),
                }
            )
    with open(path, "w") as f:
        json.dump(records, f, indent=2)
    print(f"wrote {path} ({len(records)} prompts)")


def main() -> int:
    model = build_model()
    tok = tokenizer()
    ckpt = os.path.join(ROOT, "testdata", "model", "model.safetensors")
    save_checkpoint(model, ckpt)
    print(f"wrote {ckpt}")
    write_tokenizer_cases(tok)
    write_reference_forward(model, tok, os.path.join(ROOT, "testdata", "reference_forward.json"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
