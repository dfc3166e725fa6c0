"""Evaluator model backends.

A backend exposes a tokenizer plus next-token logits for every in-chunk
position. Two tiny numpy models with pinned weights serve tests and smoke
runs without any ML runtime; HF transformers models load lazily behind the
"hf:" prefix.
"""

from __future__ import annotations

import numpy as np


class TinyBigramBackend:
    """Byte-level order-1 causal LM with fixed random weights.

    The logit table is generated from a pinned seed, so streams are
    reproducible across runs and machines with the same numpy.
    """

    WEIGHT_SEED = 0x7A11

    def __init__(self):
        rng = np.random.default_rng(self.WEIGHT_SEED)
        self.table = rng.standard_normal((256, 256)) * 1.5
        self.vocab_size = 256
        self.name = "tiny:bigram"

    def encode(self, text: str) -> np.ndarray:
        return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)

    def next_logits(self, chunk: np.ndarray) -> np.ndarray:
        """(len(chunk)-1, 256) logits predicting chunk[1:] from chunk[:-1]."""
        return self.table[chunk[:-1]]


class TwoSymbolBackend:
    """Hand-built 2-symbol model with a fixed next-token distribution.

    P(a) = 0.9, P(b) = 0.1 regardless of context, so the entropy of every
    position is -0.9 ln 0.9 - 0.1 ln 0.1 = 0.32508... nats.
    """

    PROBS = (0.9, 0.1)

    def __init__(self):
        self.logits_row = np.log(np.array(self.PROBS))
        self.vocab_size = 2
        self.name = "tiny:two-symbol"

    def encode(self, text: str) -> np.ndarray:
        mapping = {"a": 0, "b": 1}
        try:
            return np.array([mapping[ch] for ch in text], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"two-symbol model only accepts 'a'/'b' text, got {exc}") from exc

    def next_logits(self, chunk: np.ndarray) -> np.ndarray:
        return np.tile(self.logits_row, (len(chunk) - 1, 1))


class HFCausalBackend:
    """transformers causal LM wrapper (requires the [hf] extra)."""

    def __init__(self, model_name: str, device: str | None = None):
        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise ImportError(
                "hf backends need torch and transformers installed (pip install 'trace-scorer[hf]')"
            ) from exc
        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModelForCausalLM.from_pretrained(model_name)
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        self.model.to(self.device)
        self.model.eval()
        self.vocab_size = int(self.model.config.vocab_size)
        self.name = f"hf:{model_name}"

    def encode(self, text: str) -> np.ndarray:
        return np.asarray(self.tokenizer.encode(text), dtype=np.int64)

    def next_logits(self, chunk: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            ids = torch.as_tensor(chunk[None, :], device=self.device)
            logits = self.model(ids).logits[0, :-1, :]
        out = logits.float().cpu().numpy().astype(np.float64)
        # some models carry padded logit rows wider than the tokenizer vocab
        return out[:, : self.vocab_size]

    def next_logits_batch(self, chunks: list[np.ndarray]) -> list[np.ndarray]:
        """One forward pass for equal-length chunks; ragged tails fall back
        to single-chunk calls. Raises with sizing advice on GPU OOM."""
        torch = self._torch
        lengths = {len(c) for c in chunks}
        if len(lengths) != 1:
            return [self.next_logits(c) for c in chunks]
        try:
            with torch.no_grad():
                ids = torch.as_tensor(np.stack(chunks), device=self.device)
                logits = self.model(ids).logits[:, :-1, :]
            out = logits.float().cpu().numpy().astype(np.float64)
        except torch.cuda.OutOfMemoryError as exc:
            raise RuntimeError(
                f"evaluator ran out of memory on a batch of {len(chunks)}; rerun with a smaller --batch-size"
            ) from exc
        return [row[:, : self.vocab_size] for row in out]


def make_backend(spec: str, device: str | None = None):
    """Resolve a model identifier: tiny:bigram | tiny:two-symbol | hf:<name>."""
    if spec == "tiny:bigram":
        return TinyBigramBackend()
    if spec == "tiny:two-symbol":
        return TwoSymbolBackend()
    if spec.startswith("hf:"):
        return HFCausalBackend(spec[3:], device=device)
    raise ValueError(f"unknown model spec {spec!r}; expected tiny:bigram, tiny:two-symbol, or hf:<name>")
