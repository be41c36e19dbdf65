"""Sentence-pair embeddings and their fusion into phoneme-level features.

A frozen pair embedder turns each of the 2L sentence pairs into one vector
(a PBE).  Cross-utterance attention then lets every phoneme query those 2L
vectors (keys/values) and the result is concatenated with the phoneme hidden
state and projected back down.  Two embedders ship: a deterministic hashing
one (no downloads, used by tests and the toy pipeline) and an adapter for a
pretrained two-segment encoder loaded from disk.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import records
from .context import SentencePair
from .errors import EmbedderError, InvalidConfig, InvalidInput


class HashPairEmbedder:
    """Feature-hashing embedder over token n-grams; frozen by construction.

    Each side's token unigrams and bigrams (tagged by side, so (a,b) and
    (b,a) differ) are hashed into a d_pbe-dim vector which is then L2
    normalized.  Same text, same seed -> bit-identical vector, any process.
    """

    deterministic = True

    def __init__(self, d_pbe: int = 768, seed: int = 0):
        if d_pbe < 2:
            raise InvalidConfig("d_pbe must be >= 2")
        self.d_pbe = d_pbe
        self.seed = seed
        self._key = f"pbe-hash-{seed}".encode()

    @property
    def fingerprint(self) -> str:
        return f"hash:d{self.d_pbe}:s{self.seed}"

    def _ngrams(self, pair: SentencePair):
        for tag, text in (("a", pair.text_a), ("b", pair.text_b)):
            tokens = text.split()
            for tok in tokens:
                yield f"{tag}\x00{tok}"
            for t1, t2 in zip(tokens, tokens[1:]):
                yield f"{tag}\x00{t1}\x00{t2}"

    def embed(self, pair: SentencePair) -> np.ndarray:
        vec = np.zeros(self.d_pbe, dtype=np.float64)
        for gram in self._ngrams(pair):
            digest = hashlib.blake2b(gram.encode(), key=self._key, digest_size=8).digest()
            h = int.from_bytes(digest, "little")
            vec[(h >> 1) % self.d_pbe] += 1.0 if h & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec.astype(np.float32)


class PretrainedPairEmbedder:
    """Adapter for a pretrained two-segment text encoder stored on disk.

    Loads a directory holding encoder weights plus tokenizer files, feeds
    the two sentences as one pair input, and returns the pooled first-token
    vector.  The encoder never sees gradients.
    """

    deterministic = True

    def __init__(self, model_dir):
        try:
            from transformers import AutoModel, AutoTokenizer  # noqa: PLC0415
        except ImportError as exc:
            raise EmbedderError(
                "pretrained pair embedder needs the 'transformers' package"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_dir)
            self._model = AutoModel.from_pretrained(model_dir)
        except Exception as exc:
            raise EmbedderError(f"cannot load pair encoder from {model_dir}: {exc}") from exc
        self._model.eval()
        for p in self._model.parameters():
            p.requires_grad_(False)
        self.d_pbe = int(self._model.config.hidden_size)
        self.fingerprint = f"pretrained:{model_dir}"

    def embed(self, pair: SentencePair) -> np.ndarray:
        inputs = self._tokenizer(pair.text_a, pair.text_b, return_tensors="pt")
        with torch.no_grad():
            hidden = self._model(**inputs).last_hidden_state
        return hidden[0, 0].cpu().numpy().astype(np.float32)


def embed_pairs(pairs, embedder) -> np.ndarray:
    """Stack embed(pair) rows into a [2L, d_pbe] matrix."""
    rows = []
    for pair in pairs:
        try:
            vec = np.asarray(embedder.embed(pair), dtype=np.float32)
        except EmbedderError:
            raise
        except Exception as exc:
            raise EmbedderError(f"embedder failed on pair {pair.pair_index}: {exc}") from exc
        if vec.shape != (embedder.d_pbe,):
            raise EmbedderError(
                f"embedder returned shape {vec.shape}, expected ({embedder.d_pbe},)"
            )
        rows.append(vec)
    return np.stack(rows) if rows else np.zeros((0, embedder.d_pbe), np.float32)


def cache_pbes(store, embedder, L: int, path):
    """Embed every utterance's 2L pairs once; write one record file.

    Array names are utterance ids (the embedder is frozen, so this is safe
    to do once at preparation time instead of every training step).
    """
    from .context import build_window, derive_pairs  # noqa: PLC0415

    arrays = {}
    for pid in store.paragraphs:
        para = store.paragraph(pid)
        for idx in range(len(para)):
            pairs = derive_pairs(build_window(para, idx, L))
            arrays[para[idx].utterance_id] = embed_pairs(pairs, embedder)
    records.write_record(
        path,
        arrays,
        meta={"embedder": embedder.fingerprint, "L": L, "d_pbe": embedder.d_pbe},
    )
    return arrays


def load_pbe_cache(path):
    """Returns (dict utterance_id -> [2L, d_pbe] array, meta)."""
    return records.read_record(path)


@dataclass(frozen=True)
class CUAttentionConfig:
    heads: int = 4
    hidden: int = 512
    use_pair_position: bool = True
    dropout: float = 0.1
    max_pairs: int = 16

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise InvalidConfig(f"hidden {self.hidden} not divisible by heads {self.heads}")


def _ordered_sum(x: torch.Tensor, dim: int) -> torch.Tensor:
    """Sum along dim in value order, so the result is exactly invariant to
    any permutation of the inputs (float addition does not commute)."""
    return x.sort(dim=dim).values.sum(dim=dim)


class CrossUtteranceAttention(nn.Module):
    """Phonemes attend over the 2L pair embeddings (multi-head, scaled dot).

    With use_pair_position a learned pair-index embedding is added to the
    keys so the model can tell preceding from following context; without it
    the output is exactly permutation-invariant over key/value rows.
    """

    def __init__(self, d_model: int, d_pbe: int, cfg: CUAttentionConfig = None):
        super().__init__()
        self.cfg = cfg or CUAttentionConfig()
        self.d_model = d_model
        self.d_pbe = d_pbe
        hidden = self.cfg.hidden
        self.q_proj = nn.Linear(d_model, hidden)
        self.k_proj = nn.Linear(d_pbe, hidden)
        self.v_proj = nn.Linear(d_pbe, hidden)
        self.out_proj = nn.Linear(hidden, d_model)
        self.pair_position = nn.Embedding(self.cfg.max_pairs, hidden)
        self.dropout = nn.Dropout(self.cfg.dropout)

    def forward(self, query_seq: torch.Tensor, pbes: torch.Tensor, return_weights=False):
        if query_seq.dim() != 2 or query_seq.shape[1] != self.d_model:
            raise InvalidInput(f"query_seq must be [T, {self.d_model}]")
        if pbes.dim() != 2 or pbes.shape[1] != self.d_pbe:
            raise InvalidInput(f"pbes must be [K, {self.d_pbe}]")
        n_heads = self.cfg.heads
        d_head = self.cfg.hidden // n_heads
        T, K = query_seq.shape[0], pbes.shape[0]
        if K > self.cfg.max_pairs:
            raise InvalidInput(f"{K} pairs exceeds max_pairs {self.cfg.max_pairs}")

        q = self.q_proj(query_seq).view(T, n_heads, d_head).transpose(0, 1)
        k = self.k_proj(pbes)
        if self.cfg.use_pair_position:
            k = k + self.pair_position(torch.arange(K, device=k.device))
        k = k.view(K, n_heads, d_head).transpose(0, 1)
        v = self.v_proj(pbes).view(K, n_heads, d_head).transpose(0, 1)

        logits = q @ k.transpose(1, 2) / math.sqrt(d_head)  # [h, T, K]
        # softmax written with order-independent sums: permuting the keys
        # permutes the addends but cannot change a single output bit
        peak = logits.max(dim=-1, keepdim=True).values
        p = torch.exp(logits - peak)
        denom = _ordered_sum(p, dim=-1)  # [h, T]
        weights = p / denom.unsqueeze(-1)
        weights = self.dropout(weights)
        num = _ordered_sum(weights.unsqueeze(-1) * v.unsqueeze(1), dim=2)  # [h, T, dh]

        out = self.out_proj(num.transpose(0, 1).reshape(T, self.cfg.hidden))
        if return_weights:
            return out, weights
        return out


class Fuse(nn.Module):
    """Concatenate phoneme hidden states with attention output, project back."""

    def __init__(self, d_model: int):
        super().__init__()
        self.proj = nn.Linear(2 * d_model, d_model)

    def forward(self, phoneme_hidden: torch.Tensor, cu_out: torch.Tensor) -> torch.Tensor:
        if phoneme_hidden.shape != cu_out.shape:
            raise InvalidInput(
                f"fuse inputs disagree: {tuple(phoneme_hidden.shape)} "
                f"vs {tuple(cu_out.shape)}"
            )
        return self.proj(torch.cat([phoneme_hidden, cu_out], dim=-1))
