"""Closed-vocabulary tokenizer and a small transformer text tower."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .blocks import encoder_layer, init_encoder_layer
from .errors import ContractError
from .params import ParamSet
from .tensor import Tensor

PAD, UNK, CLS = "<pad>", "<unk>", "<cls>"
_WORD_RE = re.compile(r"[a-z0-9]+")


class Vocabulary:
    """token -> dense id map; ids 0..2 are PAD, UNK, CLS."""

    def __init__(self, words):
        self.id_of: dict[str, int] = {PAD: 0, UNK: 1, CLS: 2}
        for w in sorted(set(words)):
            if w not in self.id_of:
                self.id_of[w] = len(self.id_of)
        self.token_of = {i: t for t, i in self.id_of.items()}

    def __len__(self) -> int:
        return len(self.id_of)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def cls_id(self) -> int:
        return 2

    def save(self, path: str | Path) -> None:
        lines = [f"{t}\t{i}" for t, i in sorted(self.id_of.items())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        vocab = cls([])
        id_of = {}
        for line in Path(path).read_text().splitlines():
            tok, sep, idx = line.partition("\t")
            if not sep:
                raise ContractError(f"bad vocabulary line: {line!r}")
            id_of[tok] = int(idx)
        vocab.id_of = id_of
        vocab.token_of = {i: t for t, i in id_of.items()}
        return vocab


@dataclass
class TokenSequence:
    ids: list[int]

    def __len__(self) -> int:
        return len(self.ids)


def words_of(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def tokenize(vocab: Vocabulary, text: str) -> TokenSequence:
    """Lowercased word split; out-of-vocabulary words map to UNK; a leading
    CLS is always present. Total function of the input string."""
    ids = [vocab.cls_id]
    ids.extend(vocab.id_of.get(w, vocab.unk_id) for w in words_of(text))
    return TokenSequence(ids)


def detokenize(vocab: Vocabulary, seq: TokenSequence) -> str:
    words = []
    for i in seq.ids:
        tok = vocab.token_of.get(i, UNK)
        if tok in (PAD, CLS):
            continue
        words.append("unk" if tok == UNK else tok)
    return " ".join(words)


def pad_to(seq: TokenSequence, length: int, pad_id: int = 0) -> TokenSequence:
    if len(seq) > length:
        raise ContractError(f"sequence length {len(seq)} exceeds {length}")
    return TokenSequence(seq.ids + [pad_id] * (length - len(seq)))


@dataclass
class TextEncoderConfig:
    d: int = 64
    heads: int = 4
    n_layers: int = 2
    ffn_hidden: int = 128
    max_len: int = 32


class TextEncoder:
    def __init__(self, cfg: TextEncoderConfig, vocab: Vocabulary, params: ParamSet,
                 prefix: str = "text"):
        self.cfg = cfg
        self.vocab = vocab
        self.ps = params
        self.prefix = prefix

    @classmethod
    def create(cls, cfg: TextEncoderConfig, vocab: Vocabulary, rng: np.random.Generator,
               prefix: str = "text", params: ParamSet | None = None) -> "TextEncoder":
        ps = params if params is not None else ParamSet()
        p = prefix
        ps.add(f"{p}.emb", rng.normal(0.0, 0.02, size=(len(vocab), cfg.d)))
        ps.add(f"{p}.pos", rng.normal(0.0, 0.02, size=(cfg.max_len, cfg.d)))
        for i in range(cfg.n_layers):
            init_encoder_layer(ps, f"{p}.layer{i}", cfg.d, cfg.ffn_hidden, rng)
        return cls(cfg, vocab, ps, prefix=p)

    def encode(self, seq: TokenSequence) -> Tensor:
        """(1, d) embedding: token + positional, transformer layers, mean pool
        over non-PAD positions. The PAD suffix is stripped up front, which
        makes PAD invariance exact."""
        ids = list(seq.ids)
        while ids and ids[-1] == self.vocab.pad_id:
            ids.pop()
        if any(i == self.vocab.pad_id for i in ids):
            raise ContractError("PAD tokens allowed only as a suffix")
        if not ids:
            ids = [self.vocab.cls_id]
        if len(ids) > self.cfg.max_len:
            raise ContractError(f"sequence length {len(ids)} exceeds max {self.cfg.max_len}")
        p = self.prefix
        x = T.add(T.embedding_lookup(self.ps.t(f"{p}.emb"), np.asarray(ids)),
                  T.slice_rows(self.ps.t(f"{p}.pos"), 0, len(ids)))
        for i in range(self.cfg.n_layers):
            x = encoder_layer(self.ps, f"{p}.layer{i}", x, self.cfg.heads)
        return T.mean_pool(x)

    def encode_text(self, text: str) -> Tensor:
        return self.encode(tokenize(self.vocab, text))

    def embed_np(self, text: str) -> np.ndarray:
        with T.inference_mode():
            return self.encode_text(text).data.reshape(self.cfg.d)
