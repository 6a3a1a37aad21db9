"""Supervised pretraining of a navigation backbone on web-style renders.

Stands in for generic web pretraining: the backbone learns its features on
the `web` style only, so the in-domain style shift is a genuine gap for the
downstream stages to close. The classification head used here is discarded.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .blocks import init_linear, linear
from .optim import Adam
from .params import ParamSet
from .render import ALL_CLASSES, CorpusImage, to_float
from .tensor import Tensor
from .vision import VisionBackboneConfig, VisionEncoder


def pretrain_backbone(cfg: VisionBackboneConfig, corpus: list[CorpusImage],
                      epochs: int = 8, batch_size: int = 20, lr: float = 1e-3,
                      seed: int = 0) -> tuple[VisionEncoder, list[dict]]:
    """Train backbone + throwaway linear head to classify the salient class."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    encoder = VisionEncoder.create(cfg, rng, prefix="backbone")
    head = ParamSet()
    init_linear(head, "tmp_head", cfg.d, len(ALL_CLASSES), rng)
    # raw pixels are the only safe precompute here: the embedding layer trains
    tokens = np.stack([encoder.patch_tokens_np(to_float(r.image)) for r in corpus])
    labels = np.array([ALL_CLASSES.index(r.salient) for r in corpus])
    opt = Adam(list(encoder.ps.trainable()) + list(head.trainable()), lr=lr)
    log: list[dict] = []
    for epoch in range(epochs):
        order = rng.permutation(len(corpus))
        for step in range(0, len(order) - batch_size + 1, batch_size):
            idx = order[step:step + batch_size]
            xn = encoder.encode_batch(encoder.embed_batch(Tensor(tokens[idx])))
            logits = linear(head, "tmp_head", xn)
            loss = T.cross_entropy(logits, labels[idx])
            acc = float((logits.data.argmax(axis=1) == labels[idx]).mean())
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            log.append({"epoch": epoch, "step": step // batch_size,
                        "loss": float(loss.data), "acc": acc})
    return encoder, log
