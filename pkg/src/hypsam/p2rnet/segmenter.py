"""Frozen promptable segmenters behind a small load/embed/decode interface."""
from __future__ import annotations

import hashlib
import logging
import os

import cv2
import numpy as np

from ..errors import BackendUnavailable, ConfigInvalid, PromptRejected, ShapeMismatch
from .prompts import HybridPrompt

log = logging.getLogger(__name__)

# binary mask -> dense-prompt logits
MASK_LOGIT = 8.0


class SegmenterBackend:
    """Interface: ``load`` weights, ``embed`` an image once, ``decode`` one box
    (plus optional dense mask) into a full-resolution probability map."""

    name = "base"
    accepts_dense = True

    def load(self, weights_path=None):
        return self

    def embed(self, image: np.ndarray):
        raise NotImplementedError

    def decode(self, embedding, box=None, dense_mask=None):
        """Return (mask in [0,1] at image resolution, confidence)."""
        raise NotImplementedError

    def state_tensors(self) -> dict:
        return {}


class StubBackend(SegmenterBackend):
    """Echoes the interior of each box; ignores the image and the dense mask."""

    name = "stub"

    def __init__(self, accepts_dense: bool = True):
        self.accepts_dense = accepts_dense
        self.weights = np.linspace(-1, 1, 16, dtype=np.float32)

    def embed(self, image):
        return {"shape": image.shape[:2]}

    def decode(self, embedding, box=None, dense_mask=None):
        if dense_mask is not None and not self.accepts_dense:
            raise PromptRejected("stub backend configured without a dense-prompt pathway")
        h, w = embedding["shape"]
        out = np.zeros((h, w), dtype=np.float32)
        if box is not None:
            x0, y0, x1, y1 = box
            out[y0:y1 + 1, x0:x1 + 1] = 1.0
        return out, 1.0

    def state_tensors(self):
        return {"weights": self.weights}


class SamBackend(SegmenterBackend):
    """Segment Anything through ``transformers.SamModel``."""

    name = "sam"
    DEFAULT_MODEL = "facebook/sam-vit-huge"
    PIXEL_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
    PIXEL_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

    def __init__(self, model=None):
        self.model = model
        if model is not None:
            self._freeze()

    def load(self, weights_path=None):
        try:
            from transformers import SamModel
        except ImportError as exc:
            raise BackendUnavailable("transformers is not installed") from exc
        name = weights_path or self.DEFAULT_MODEL
        try:
            self.model = SamModel.from_pretrained(name, cache_dir=os.environ.get("HYPSAM_CACHE"))
        except Exception as exc:
            raise BackendUnavailable(f"could not load SAM weights {name!r}: {exc}") from exc
        self._freeze()
        return self

    def _freeze(self):
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        cfg = self.model.config
        self.image_size = cfg.vision_config.image_size
        self.grid = cfg.prompt_encoder_config.image_embedding_size
        self.mask_size = 4 * self.grid

    def _require(self):
        if self.model is None:
            raise BackendUnavailable("SAM backend used before load()")

    def embed(self, image):
        import torch

        self._require()
        h, w = image.shape[:2]
        scale = self.image_size / max(h, w)
        nh, nw = int(round(h * scale)), int(round(w * scale))
        img = cv2.resize(image.astype(np.float32), (nw, nh), interpolation=cv2.INTER_LINEAR)
        img = (img / 255.0 - self.PIXEL_MEAN) / self.PIXEL_STD
        padded = np.zeros((self.image_size, self.image_size, 3), dtype=np.float32)
        padded[:nh, :nw] = img
        px = torch.from_numpy(padded).permute(2, 0, 1)[None]
        with torch.no_grad():
            emb = self.model.get_image_embeddings(px)
        return {"emb": emb, "orig": (h, w), "resized": (nh, nw), "scale": scale}

    def _dense(self, mask, e):
        nh, nw = e["resized"]
        m = cv2.resize(mask.astype(np.float32), (nw, nh), interpolation=cv2.INTER_LINEAR)
        full = np.zeros((self.image_size, self.image_size), dtype=np.float32)
        full[:nh, :nw] = m
        low = cv2.resize(full, (self.mask_size, self.mask_size), interpolation=cv2.INTER_AREA)
        return np.where(low > 0.5, MASK_LOGIT, -MASK_LOGIT).astype(np.float32)

    def decode(self, embedding, box=None, dense_mask=None):
        import torch

        self._require()
        kwargs = {"image_embeddings": embedding["emb"], "multimask_output": False}
        if box is not None:
            s = embedding["scale"]
            # inclusive pixel box -> continuous corner coordinates in the resized frame
            x0, y0, x1, y1 = box
            kwargs["input_boxes"] = torch.tensor([[[x0 * s, y0 * s, (x1 + 1) * s, (y1 + 1) * s]]], dtype=torch.float32)
        if dense_mask is not None:
            kwargs["input_masks"] = torch.from_numpy(self._dense(dense_mask, embedding))[None, None]
        with torch.no_grad():
            out = self.model(**kwargs)
        low = out.pred_masks[0, 0, 0].numpy().astype(np.float32)
        up = cv2.resize(low, (self.image_size, self.image_size), interpolation=cv2.INTER_LINEAR)
        nh, nw = embedding["resized"]
        h, w = embedding["orig"]
        logits = cv2.resize(up[:nh, :nw], (w, h), interpolation=cv2.INTER_LINEAR)
        return (logits > 0).astype(np.float32), float(out.iou_scores[0, 0, 0])

    def state_tensors(self):
        self._require()
        return {k: v.detach().cpu().numpy() for k, v in self.model.state_dict().items()}


BACKENDS = {"stub": StubBackend, "sam": SamBackend}


def build_backend(name: str, weights_path=None) -> SegmenterBackend:
    if name not in BACKENDS:
        raise ConfigInvalid(f"unknown segmenter backend {name!r}; choose from {sorted(BACKENDS)}")
    return BACKENDS[name]().load(weights_path)


def checksum(backend: SegmenterBackend) -> str:
    h = hashlib.sha256()
    for k, v in sorted(backend.state_tensors().items()):
        h.update(k.encode())
        h.update(np.ascontiguousarray(v).tobytes())
    return h.hexdigest()


def segment(prompt: HybridPrompt, backend: SegmenterBackend, use_mask: bool = True, use_boxes: bool = True,
            out_shape=None) -> np.ndarray:
    """One decode per box, unioned by pixelwise max, at the mask resolution."""
    mask = prompt.mask
    if prompt.image.shape[:2] != mask.shape:
        raise ShapeMismatch(f"prompt image {prompt.image.shape[:2]} vs mask {mask.shape}")
    dense = mask if use_mask else None
    if dense is not None and not backend.accepts_dense:
        log.warning("backend %s has no dense-prompt pathway; dropping the mask prompt", backend.name)
        dense = None
    emb = backend.embed(prompt.image)
    queries = list(prompt.boxes) if use_boxes else [None]
    s_g = np.zeros(mask.shape, dtype=np.float32)
    for box in queries:
        try:
            m, _ = backend.decode(emb, box, dense)
        except PromptRejected:
            log.warning("backend %s rejected the dense prompt; retrying with the box only", backend.name)
            dense = None
            m, _ = backend.decode(emb, box, None)
        s_g = np.maximum(s_g, m)
    if out_shape is not None and tuple(out_shape) != s_g.shape:
        s_g = cv2.resize(s_g, (out_shape[1], out_shape[0]), interpolation=cv2.INTER_NEAREST)
    return s_g
