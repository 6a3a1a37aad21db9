"""Soft-prompt and head training on a frozen backbone.

Only the prompt matrix ("prompt.*") and the classification head ("head.*")
receive updates; every "backbone.*" parameter is frozen and verified
unchanged by digest. A prompt-free head trainer is kept as a separate code
path for the K=0 equivalence contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .blocks import init_linear, linear
from .errors import ContractError
from .optim import Adam, make_optimizer
from .params import ParamSet, check_freeze_partition, digest
from .render import to_float
from .tensor import Tensor
from .vision import VisionEncoder

FROZEN_PREFIXES = ("backbone.",)
TRAINABLE_PREFIXES = ("prompt.", "head.")


def init_prompts(k: int, d: int, seed: int | np.random.Generator) -> ParamSet:
    """K x d prompt rows, uniform(-a, a) with a = sqrt(6/d)."""
    if k < 0 or d <= 0:
        raise ContractError(f"bad prompt shape ({k}, {d})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = math.sqrt(6.0 / d)
    ps = ParamSet()
    ps.add("prompt.p0", rng.uniform(-a, a, size=(k, d)))
    return ps


def init_head(d: int, hidden: int, classes: int,
              rng: np.random.Generator) -> ParamSet:
    """MLP head (linear-gelu-linear); hidden=0 reduces it to a single linear."""
    ps = ParamSet()
    if hidden > 0:
        init_linear(ps, "head.fc1", d, hidden, rng)
        init_linear(ps, "head.fc2", hidden, classes, rng)
    else:
        init_linear(ps, "head.fc", d, classes, rng)
    return ps


def head_forward(head: ParamSet, x: Tensor) -> Tensor:
    if "head.fc.w" in head:
        return linear(head, "head.fc", x)
    return linear(head, "head.fc2", T.gelu(linear(head, "head.fc1", x)))


def head_param_count(head: ParamSet) -> int:
    return sum(p.data.size for p in head)


@dataclass
class TuneExample:
    e0: np.ndarray  # precomputed embedded patch rows (M, d); backbone frozen
    class_id: int


def prepare_examples(encoder: VisionEncoder, images: list[np.ndarray],
                     class_ids: list[int]) -> list[TuneExample]:
    """Embed once up front; valid because the embedding layer is frozen."""
    return [TuneExample(encoder.embed_tokens_np(to_float(img)), cid)
            for img, cid in zip(images, class_ids)]


def _epoch_order(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.permutation(n)


def prompt_tune(encoder: VisionEncoder, prompts: ParamSet, head: ParamSet,
                dataset: list[TuneExample], epochs: int = 20, batch_size: int = 10,
                lr: float = 1e-3, rule: str = "adam", seed: int = 0) -> list[dict]:
    """Cross-entropy training of prompts + head; backbone stays bitwise fixed.

    Returns log rows {epoch, step, loss, acc}. epochs=0 is a bitwise no-op.
    """
    if not dataset:
        raise ContractError("empty tuning dataset")
    merged = ParamSet()  # shares the Parameter objects of all three sources
    for src in (encoder.ps, prompts, head):
        for p in src:
            merged._params[p.name] = p
    merged.freeze_prefix("backbone.")
    check_freeze_partition(merged, FROZEN_PREFIXES, TRAINABLE_PREFIXES)
    if epochs == 0:
        return []
    trainable = [p for p in merged.trainable() if p.data.size > 0]
    opt = make_optimizer(trainable, rule=rule, lr=lr)
    prompt_t = prompts.t("prompt.p0")
    e0 = np.stack([ex.e0 for ex in dataset])
    labels = np.array([ex.class_id for ex in dataset])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 41]))
    log: list[dict] = []
    for epoch in range(epochs):
        order = _epoch_order(rng, len(dataset))
        for step in range(0, len(order) - batch_size + 1, batch_size):
            idx = order[step:step + batch_size]
            xn = encoder.encode_batch(Tensor(e0[idx]), prompt_t)
            logits = head_forward(head, xn)
            loss = T.cross_entropy(logits, labels[idx])
            acc = float((logits.data.argmax(axis=1) == labels[idx]).mean())
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            log.append({"epoch": epoch, "step": step // batch_size,
                        "loss": float(loss.data), "acc": acc})
    return log


def head_only_tune(encoder: VisionEncoder, head: ParamSet,
                   dataset: list[TuneExample], epochs: int = 20, batch_size: int = 10,
                   lr: float = 1e-3, rule: str = "adam", seed: int = 0) -> list[dict]:
    """Head training with no prompt code path at all (K=0 reference)."""
    if not dataset:
        raise ContractError("empty tuning dataset")
    encoder.ps.freeze_prefix("backbone.")
    if epochs == 0:
        return []
    opt = make_optimizer([p for p in head.trainable() if p.data.size > 0],
                         rule=rule, lr=lr)
    e0 = np.stack([ex.e0 for ex in dataset])
    labels = np.array([ex.class_id for ex in dataset])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 41]))
    log: list[dict] = []
    for epoch in range(epochs):
        order = _epoch_order(rng, len(dataset))
        for step in range(0, len(order) - batch_size + 1, batch_size):
            idx = order[step:step + batch_size]
            xn = encoder.encode_batch(Tensor(e0[idx]))
            logits = head_forward(head, xn)
            loss = T.cross_entropy(logits, labels[idx])
            acc = float((logits.data.argmax(axis=1) == labels[idx]).mean())
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            log.append({"epoch": epoch, "step": step // batch_size,
                        "loss": float(loss.data), "acc": acc})
    return log


def classify(encoder: VisionEncoder, prompts: ParamSet | None, head: ParamSet,
             image: np.ndarray) -> np.ndarray:
    """Class distribution y = softmax(head(X_N)); sums to 1."""
    with T.inference_mode():
        prompt_t = prompts.t("prompt.p0") if prompts is not None else None
        state = encoder.encode(encoder.embed_image(to_float(image)), prompt_t)
        y = T.softmax(head_forward(head, state.X))
        return y.data.reshape(-1)


def accuracy(encoder: VisionEncoder, prompts: ParamSet | None, head: ParamSet,
             examples: list[TuneExample]) -> float:
    """Batch accuracy on precomputed examples."""
    with T.inference_mode():
        e0 = Tensor(np.stack([ex.e0 for ex in examples]))
        prompt_t = prompts.t("prompt.p0") if prompts is not None else None
        logits = head_forward(head, encoder.encode_batch(e0, prompt_t))
        labels = np.array([ex.class_id for ex in examples])
        return float((logits.data.argmax(axis=1) == labels).mean())


def backbone_digest(encoder: VisionEncoder) -> str:
    return digest(encoder.ps, prefix="backbone.")
