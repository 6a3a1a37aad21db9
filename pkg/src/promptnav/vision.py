"""Mini vision transformer with a soft-prompt slot between [CLS] and patches.

The sequence layout is [cls; prompts; patches]. Positional embeddings are
added to the cls token and the patch tokens only; prompt rows get none, so
permuting prompt rows permutes their outputs identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .blocks import encoder_layer, init_encoder_layer, init_linear, linear
from .errors import ShapeError
from .params import ParamSet
from .tensor import Tensor


@dataclass
class VisionBackboneConfig:
    n_layers: int = 4
    d: int = 64
    heads: int = 4
    patch: int = 4
    image_hw: int = 16
    channels: int = 3
    ffn_hidden: int = 128

    def __post_init__(self):
        if self.d % self.heads:
            raise ShapeError(f"model width {self.d} not divisible by {self.heads} heads")
        if self.image_hw % self.patch:
            raise ShapeError(f"image size {self.image_hw} not divisible by patch {self.patch}")

    @property
    def tokens(self) -> int:
        side = self.image_hw // self.patch
        return side * side

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch * self.channels


@dataclass
class EncoderState:
    """Per-layer state: cls row X (1,d), prompt rows P (K,d), patch rows E (M,d)."""
    X: Tensor
    P: Tensor
    E: Tensor
    layer_index: int = 0

    @property
    def k(self) -> int:
        return self.P.shape[-2]


def extract_patches(image: np.ndarray, patch: int) -> np.ndarray:
    """(H, W, C) -> (M, patch*patch*C), patches in row-major raster order."""
    h, w, c = image.shape
    if h % patch or w % patch:
        raise ShapeError(f"image {image.shape} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    grid = image.reshape(gh, patch, gw, patch, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(grid.reshape(gh * gw, patch * patch * c))


class VisionEncoder:
    def __init__(self, cfg: VisionBackboneConfig, params: ParamSet, prefix: str = "backbone"):
        self.cfg = cfg
        self.ps = params
        self.prefix = prefix

    @classmethod
    def create(cls, cfg: VisionBackboneConfig, rng: np.random.Generator,
               prefix: str = "backbone", params: ParamSet | None = None) -> "VisionEncoder":
        ps = params if params is not None else ParamSet()
        p = prefix
        ps.add(f"{p}.cls", rng.normal(0.0, 0.02, size=(1, cfg.d)))
        init_linear(ps, f"{p}.patch_proj", cfg.patch_dim, cfg.d, rng)
        ps.add(f"{p}.pos", rng.normal(0.0, 0.02, size=(1 + cfg.tokens, cfg.d)))
        for i in range(cfg.n_layers):
            init_encoder_layer(ps, f"{p}.layer{i}", cfg.d, cfg.ffn_hidden, rng)
        return cls(cfg, ps, prefix=p)

    # -- embedding ----------------------------------------------------------

    def _check_image(self, image: np.ndarray) -> None:
        want = (self.cfg.image_hw, self.cfg.image_hw, self.cfg.channels)
        if image.shape != want:
            raise ShapeError(f"image shape {image.shape}, config expects {want}")

    def embed_image(self, image: np.ndarray) -> EncoderState:
        """Embedding layer: cls + positional, patch projections + positional.
        The prompt slot starts empty."""
        self._check_image(image)
        p = self.prefix
        tok = T.Tensor(extract_patches(image, self.cfg.patch))
        e0 = T.add(linear(self.ps, f"{p}.patch_proj", tok),
                   T.slice_rows(self.ps.t(f"{p}.pos"), 1, 1 + self.cfg.tokens))
        x0 = T.add(self.ps.t(f"{p}.cls"), T.slice_rows(self.ps.t(f"{p}.pos"), 0, 1))
        return EncoderState(X=x0, P=T.Tensor(np.zeros((0, self.cfg.d))), E=e0, layer_index=0)

    def patch_tokens_np(self, image: np.ndarray) -> np.ndarray:
        """Raw flattened patches (M, patch*patch*C); constant w.r.t. params."""
        self._check_image(image)
        return extract_patches(image, self.cfg.patch)

    def embed_tokens_np(self, image: np.ndarray) -> np.ndarray:
        """Embedded patch rows E0 as plain data. Only valid as a precompute
        when the embedding parameters are frozen."""
        with T.inference_mode():
            return self.embed_image(image).E.data

    def embed_batch(self, tok_batch: Tensor) -> Tensor:
        """(B, M, patch_dim) raw patches -> (B, M, d) embedded rows, with the
        projection inside the graph so embedding parameters can train."""
        p = self.prefix
        return T.add(linear(self.ps, f"{p}.patch_proj", tok_batch),
                     T.slice_rows(self.ps.t(f"{p}.pos"), 1, 1 + self.cfg.tokens))

    # -- encoding -----------------------------------------------------------

    def encode(self, state: EncoderState, prompts: Tensor | None = None,
               layer_hook=None) -> EncoderState:
        """Run all layers over [X; P; E]; returns the layer-N state.

        `prompts` (K, d) fills the empty prompt slot of a freshly embedded
        state. layer_hook(i, state_in, state_out) observes each layer.
        """
        if prompts is not None:
            if prompts.shape[-1] != self.cfg.d:
                raise ShapeError(
                    f"prompt width {prompts.shape[-1]} != model width {self.cfg.d}")
            state = EncoderState(X=state.X, P=prompts, E=state.E,
                                 layer_index=state.layer_index)
        k, m = state.k, state.E.shape[-2]
        seq = T.concat_rows([state.X, state.P, state.E])
        cur = state
        for i in range(self.cfg.n_layers):
            seq = encoder_layer(self.ps, f"{self.prefix}.layer{i}", seq, self.cfg.heads)
            nxt = EncoderState(X=T.slice_rows(seq, 0, 1),
                               P=T.slice_rows(seq, 1, 1 + k),
                               E=T.slice_rows(seq, 1 + k, 1 + k + m),
                               layer_index=cur.layer_index + 1)
            if layer_hook is not None:
                layer_hook(i + 1, cur, nxt)
            cur = nxt
        return cur

    def forward_plain(self, image: np.ndarray) -> Tensor:
        """No-prompt transformer over [cls; patches]; returns X_N (1, d).
        Kept free of any prompt handling as the reduction baseline."""
        self._check_image(image)
        p = self.prefix
        tok = T.Tensor(extract_patches(image, self.cfg.patch))
        e0 = T.add(linear(self.ps, f"{p}.patch_proj", tok),
                   T.slice_rows(self.ps.t(f"{p}.pos"), 1, 1 + self.cfg.tokens))
        x0 = T.add(self.ps.t(f"{p}.cls"), T.slice_rows(self.ps.t(f"{p}.pos"), 0, 1))
        seq = T.concat_rows([x0, e0])
        for i in range(self.cfg.n_layers):
            seq = encoder_layer(self.ps, f"{p}.layer{i}", seq, self.cfg.heads)
        return T.slice_rows(seq, 0, 1)

    def encode_batch(self, e0_batch: Tensor, prompts: Tensor | None = None) -> Tensor:
        """Batched forward from embedded patch rows (B, M, d) to X_N (B, d)."""
        p = self.prefix
        b = e0_batch.shape[0]
        x0 = T.add(self.ps.t(f"{p}.cls"), T.slice_rows(self.ps.t(f"{p}.pos"), 0, 1))
        parts = [T.expand_batch(x0, b)]
        if prompts is not None and prompts.shape[-2] > 0:
            parts.append(T.expand_batch(prompts, b))
        parts.append(e0_batch)
        seq = T.concat_rows(parts)
        for i in range(self.cfg.n_layers):
            seq = encoder_layer(self.ps, f"{self.prefix}.layer{i}", seq, self.cfg.heads)
        xn = T.slice_rows(seq, 0, 1)
        return T.reshape(xn, (b, self.cfg.d))

    def features(self, image: np.ndarray, prompts: Tensor | None = None) -> np.ndarray:
        """X_N as plain data; no graph is recorded."""
        with T.inference_mode():
            state = self.encode(self.embed_image(image), prompts)
            return state.X.data.reshape(self.cfg.d)
