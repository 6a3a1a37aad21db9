"""Dual-encoder trained with symmetric InfoNCE on web-style pairs, then used
zero-shot with a fill-in template to pseudo-label in-domain images."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .blocks import init_linear, linear
from .errors import ContractError
from .optim import Adam
from .params import ParamSet
from .render import CorpusImage, to_float
from .text import TextEncoder, TextEncoderConfig, Vocabulary
from .tensor import Tensor
from .vision import VisionBackboneConfig, VisionEncoder, extract_patches


@dataclass
class DualEncoderConfig:
    vision: VisionBackboneConfig
    text: TextEncoderConfig
    shared_dim: int = 32
    tau: float = 0.1

    def __post_init__(self):
        if self.tau <= 0:
            raise ContractError(f"temperature must be > 0, got {self.tau}")


def standardize_image(img: np.ndarray) -> np.ndarray:
    """Per-image, per-channel standardization (float image in [0,1]). Makes
    the tower invariant to global palette scale/shift by construction; the
    navigation backbone deliberately does NOT get this."""
    mu = img.mean(axis=(0, 1), keepdims=True)
    sd = img.std(axis=(0, 1), keepdims=True)
    return (img - mu) / (sd + 1e-6)


class DualEncoder:
    """Vision tower (no prompts) + text tower + two projections into a shared
    space; similarities are cosines of the projected embeddings."""

    def __init__(self, cfg: DualEncoderConfig, vocab: Vocabulary, params: ParamSet):
        self.cfg = cfg
        self.ps = params
        self.vision = VisionEncoder(cfg.vision, params, prefix="vision")
        self.text = TextEncoder(cfg.text, vocab, params, prefix="text")

    @classmethod
    def create(cls, cfg: DualEncoderConfig, vocab: Vocabulary,
               rng: np.random.Generator) -> "DualEncoder":
        ps = ParamSet()
        VisionEncoder.create(cfg.vision, rng, prefix="vision", params=ps)
        TextEncoder.create(cfg.text, vocab, rng, prefix="text", params=ps)
        init_linear(ps, "proj_image", cfg.vision.d, cfg.shared_dim, rng)
        init_linear(ps, "proj_text", cfg.text.d, cfg.shared_dim, rng)
        return cls(cfg, vocab, ps)

    def embed_images(self, tok_batch: Tensor) -> Tensor:
        """(B, M, patch_dim) raw patches -> L2-normalized (B, shared_dim)."""
        xn = self.vision.encode_batch(self.vision.embed_batch(tok_batch))
        return T.l2_normalize_rows(linear(self.ps, "proj_image", xn))

    def embed_texts(self, texts: list[str]) -> Tensor:
        rows = [linear(self.ps, "proj_text", self.text.encode_text(t)) for t in texts]
        return T.l2_normalize_rows(T.concat_rows(rows))

    def image_tokens(self, image_float: np.ndarray) -> np.ndarray:
        return extract_patches(standardize_image(image_float), self.cfg.vision.patch)

    def image_vec(self, image: np.ndarray) -> np.ndarray:
        with T.inference_mode():
            tok = Tensor(self.image_tokens(to_float(image))[None])
            return self.embed_images(tok).data.reshape(self.cfg.shared_dim)

    def text_vec(self, text: str) -> np.ndarray:
        with T.inference_mode():
            return self.embed_texts([text]).data.reshape(self.cfg.shared_dim)


def info_nce(img_embs: Tensor, txt_embs: Tensor, tau: float) -> Tensor:
    """Symmetric InfoNCE over in-batch similarity logits (cosines / tau)."""
    b = img_embs.shape[0]
    if b < 2:
        raise ContractError("contrastive loss needs batch_size >= 2")
    logits = T.scale(T.matmul(img_embs, T.transpose(txt_embs)), 1.0 / tau)
    labels = np.arange(b)
    loss_i2t = T.cross_entropy(logits, labels)
    loss_t2i = T.cross_entropy(T.transpose(logits), labels)
    return T.scale(T.add(loss_i2t, loss_t2i), 0.5)


def _augment(batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Jitter standing in for web-scale input diversity: per-image channel
    scale/shift, pixel noise, and small translations (float images in [0,1])."""
    b = batch.shape[0]
    scale = rng.uniform(0.85, 1.15, size=(b, 1, 1, 3))
    shift = rng.uniform(-0.06, 0.06, size=(b, 1, 1, 3))
    sigma = rng.uniform(0.0, 0.08, size=(b, 1, 1, 1))
    noisy = batch * scale + shift + rng.standard_normal(batch.shape) * sigma
    noisy = np.clip(noisy, 0.0, 1.0)
    offsets = rng.integers(-2, 3, size=(b, 2))
    for i in range(b):
        dy, dx = int(offsets[i, 0]), int(offsets[i, 1])
        if dy or dx:
            shifted = np.pad(noisy[i], ((2, 2), (2, 2), (0, 0)), mode="edge")
            noisy[i] = shifted[2 + dy:2 + dy + noisy.shape[1],
                               2 + dx:2 + dx + noisy.shape[2]]
    return noisy


def contrastive_train(model: DualEncoder, pairs: list[tuple[np.ndarray, str]],
                      epochs: int, batch_size: int, tau: float | None = None,
                      lr: float = 1e-3, seed: int = 0, augment: bool = True) -> list[dict]:
    """Train on (uint8 image, caption) pairs; returns per-batch log rows."""
    if batch_size < 2:
        raise ContractError("contrastive loss undefined for batch_size < 2")
    tau = model.cfg.tau if tau is None else float(tau)
    if tau <= 0:
        raise ContractError(f"temperature must be > 0, got {tau}")
    images = np.stack([to_float(img) for img, _ in pairs])
    captions = [text for _, text in pairs]
    patch = model.cfg.vision.patch
    opt = Adam(model.ps.trainable(), lr=lr)
    log: list[dict] = []
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    for epoch in range(epochs):
        order = rng.permutation(len(pairs))
        for step in range(0, len(order) - batch_size + 1, batch_size):
            idx = order[step:step + batch_size]
            batch = images[idx]
            if augment:
                batch = _augment(batch, rng)
            tok = np.stack([model.image_tokens(im) for im in batch])
            img_embs = model.embed_images(Tensor(tok))
            txt_embs = model.embed_texts([captions[i] for i in idx])
            loss = info_nce(img_embs, txt_embs, tau)
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            log.append({"epoch": epoch, "step": step // batch_size,
                        "loss": float(loss.data)})
    return log


def retrieval_at_1(model: DualEncoder, pairs: list[tuple[np.ndarray, str]]) -> float:
    """Fraction of images whose own caption is the top match in the pool."""
    img = np.stack([model.image_vec(im) for im, _ in pairs])
    txt = np.stack([model.text_vec(t) for _, t in pairs])
    hits = (img @ txt.T).argmax(axis=1) == np.arange(len(pairs))
    return float(hits.mean())


# ---------------------------------------------------------------------------
# zero-shot pseudo-labeling
# ---------------------------------------------------------------------------

@dataclass
class LabeledPair:
    image_path: str
    text: str
    class_id: int
    score: float


def _check_template(template: str) -> None:
    if template.count("{object}") != 1:
        raise ContractError(f"template must contain exactly one {{object}} slot: {template!r}")


def class_text_vectors(model: DualEncoder, class_names: list[str],
                       template: str) -> np.ndarray:
    if not class_names:
        raise ContractError("empty class list")
    _check_template(template)
    return np.stack([model.text_vec(template.format(object=name))
                     for name in class_names])


def pseudo_label(model: DualEncoder, image: np.ndarray, class_names: list[str],
                 template: str, image_path: str = "",
                 text_vecs: np.ndarray | None = None) -> LabeledPair:
    """Argmax cosine-similarity class; ties resolve to the lowest class index."""
    if text_vecs is None:
        text_vecs = class_text_vectors(model, class_names, template)
    else:
        _check_template(template)
        if not class_names:
            raise ContractError("empty class list")
    sims = text_vecs @ model.image_vec(image)
    cid = int(np.argmax(sims))
    return LabeledPair(image_path=image_path,
                       text=template.format(object=class_names[cid]),
                       class_id=cid, score=float(sims[cid]))


def build_indomain_dataset(model: DualEncoder, images: list[tuple[str, np.ndarray]],
                           class_names: list[str], template: str, count: int,
                           seed: int = 0) -> list[LabeledPair]:
    """Pseudo-label `count` images drawn (seeded) from the candidates."""
    if count > len(images):
        raise ContractError(f"requested {count} pairs from {len(images)} images")
    text_vecs = class_text_vectors(model, class_names, template)
    order = np.random.default_rng(np.random.SeedSequence([seed, 29])).permutation(len(images))
    chosen = order[:count]
    return [pseudo_label(model, images[i][1], class_names, template,
                         image_path=images[i][0], text_vecs=text_vecs)
            for i in chosen]


_MANIFEST_FIELDS = ["image_path", "text", "class_id", "score"]


def save_manifest(pairs: list[LabeledPair], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_MANIFEST_FIELDS)
        for p in pairs:
            writer.writerow([p.image_path, p.text, p.class_id, repr(p.score)])


def load_manifest(path: str | Path) -> list[LabeledPair]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(LabeledPair(image_path=row["image_path"], text=row["text"],
                                   class_id=int(row["class_id"]),
                                   score=float(row["score"])))
    return out
