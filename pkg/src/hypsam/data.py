"""Dataset ingestion for aligned RGB-T benchmarks.

Layout on disk::

    <root>/<split>/RGB/<name>.<ext>
    <root>/<split>/T/<name>.<ext>
    <root>/<split>/GT/<name>.<ext>
    <root>/attributes.csv          (optional, ``name,attr1;attr2;...``)
"""
from __future__ import annotations

import csv
import logging
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np
import torch
from torch.utils.data import Dataset

from .errors import CorruptImage, DatasetMissing, MissingFile, ShapeMismatch

log = logging.getLogger(__name__)

IMAGE_EXTS = (".jpg", ".png", ".bmp")
ATTRIBUTES = ("BSO", "CB", "CIB", "IC", "LI", "MSO", "OF", "SSO", "SA", "TC", "BW", "bRGB", "bT")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

GT_THRESHOLD = 128


@dataclass
class BoundaryLabel:
    boundary: np.ndarray
    content: np.ndarray


@dataclass
class RgbtSample:
    name: str
    rgb: np.ndarray
    thermal: np.ndarray
    gt: Optional[np.ndarray] = None
    attributes: frozenset = field(default_factory=frozenset)
    boundary: Optional[BoundaryLabel] = None

    def __post_init__(self):
        hw = self.rgb.shape[:2]
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ShapeMismatch(f"{self.name}: rgb must be HxWx3, got {self.rgb.shape}")
        if self.thermal.shape != self.rgb.shape:
            raise ShapeMismatch(f"{self.name}: thermal {self.thermal.shape} != rgb {self.rgb.shape}")
        if self.gt is not None and self.gt.shape != hw:
            raise ShapeMismatch(f"{self.name}: gt {self.gt.shape} != {hw}")
        if self.boundary is not None and self.boundary.boundary.shape != hw:
            raise ShapeMismatch(f"{self.name}: boundary label does not match image size")

    @property
    def shape(self):
        return self.rgb.shape[:2]


@dataclass
class TensorPair:
    rgb: torch.Tensor
    thermal: torch.Tensor
    size: int


# ---------------------------------------------------------------------------
# file access


def read_image(path, grayscale=False) -> np.ndarray:
    """Decode an 8-bit image; colour images come back in RGB channel order."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    buf = np.fromfile(str(path), dtype=np.uint8)
    flag = cv2.IMREAD_GRAYSCALE if grayscale else cv2.IMREAD_UNCHANGED
    img = cv2.imdecode(buf, flag) if buf.size else None
    if img is None:
        raise CorruptImage(str(path))
    if img.dtype != np.uint8:
        img = cv2.normalize(img, None, 0, 255, cv2.NORM_MINMAX).astype(np.uint8)
    if grayscale:
        return img
    if img.ndim == 2:
        return np.repeat(img[:, :, None], 3, axis=2)
    if img.shape[2] == 4:
        img = img[:, :, :3]
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def write_gray_png(path, saliency: np.ndarray) -> None:
    """Write a [0,1] map (or uint8 map) as an 8-bit grayscale PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if saliency.dtype != np.uint8:
        saliency = np.clip(np.rint(np.asarray(saliency, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    ok, buf = cv2.imencode(".png", saliency)
    if not ok:
        raise CorruptImage(f"could not encode {path}")
    path.write_bytes(buf.tobytes())


def find_image(folder, stem: str) -> Path:
    folder = Path(folder)
    for ext in IMAGE_EXTS:
        for cand in (folder / f"{stem}{ext}", folder / f"{stem}{ext.upper()}"):
            if cand.is_file():
                return cand
    raise MissingFile(f"{folder}/{stem}.{{jpg,png,bmp}}")


def list_images(folder) -> dict:
    """Map stem -> path for every image in ``folder``."""
    folder = Path(folder)
    if not folder.is_dir():
        raise DatasetMissing(str(folder))
    out = {}
    for p in sorted(folder.iterdir()):
        if p.suffix.lower() in IMAGE_EXTS and p.is_file():
            out.setdefault(p.stem, p)
    return out


def list_names(root, split: str) -> list:
    return sorted(list_images(Path(root) / split / "RGB"))


def load_attributes(root) -> dict:
    """Read ``<root>/attributes.csv``; returns {} when the file is absent."""
    path = Path(root) / "attributes.csv"
    if not path.is_file():
        return {}
    table = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader):
            if not row:
                continue
            if i == 0 and row[0].strip().lower() == "name":
                continue
            name = Path(row[0].strip()).stem
            tags = row[1].split(";") if len(row) > 1 else []
            table[name] = frozenset(t.strip() for t in tags if t.strip())
    return table


def binarize_gt(gt: np.ndarray) -> np.ndarray:
    return (gt >= GT_THRESHOLD).astype(np.uint8)


def load_sample(root, split: str, name: str, require_gt: bool = True, attributes=None) -> RgbtSample:
    base = Path(root) / split
    stem = Path(name).stem
    rgb = read_image(find_image(base / "RGB", stem))
    thermal = read_image(find_image(base / "T", stem))
    gt = None
    try:
        gt = binarize_gt(read_image(find_image(base / "GT", stem), grayscale=True))
    except MissingFile:
        if require_gt:
            raise
    tags = frozenset()
    if attributes:
        tags = attributes.get(stem, frozenset())
    return RgbtSample(stem, rgb, thermal, gt, tags)


# ---------------------------------------------------------------------------
# label decoupling


def _square_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask.copy()
    kernel = np.ones((2 * radius + 1, 2 * radius + 1), np.uint8)
    return cv2.dilate(mask, kernel, borderType=cv2.BORDER_CONSTANT, borderValue=0)


def decouple_boundary(gt: np.ndarray, low: float = 100, high: float = 200, dilate_radius: int = 2) -> BoundaryLabel:
    """Split a binary label into a boundary band and the remaining content.

    Canny places an edge on either side of a step, so each detected edge is
    snapped to the adjacent foreground perimeter pixels before the band is
    grown by ``dilate_radius`` (square neighbourhood) and clipped to the
    foreground.
    """
    fg = (np.asarray(gt) > 0).astype(np.uint8)
    if not fg.any():
        z = np.zeros_like(fg)
        return BoundaryLabel(z, z.copy())
    edges = (cv2.Canny(fg * 255, low, high) > 0).astype(np.uint8)
    # foreground pixels with at least one 8-neighbour outside the object (image border counts as outside)
    eroded = cv2.erode(fg, np.ones((3, 3), np.uint8), borderType=cv2.BORDER_CONSTANT, borderValue=0)
    perimeter = fg & (1 - eroded)
    snapped = perimeter & _square_dilate(edges, 1)
    boundary = _square_dilate(snapped, dilate_radius) & fg
    content = fg & (1 - boundary)
    return BoundaryLabel(boundary.astype(np.uint8), content.astype(np.uint8))


# ---------------------------------------------------------------------------
# augmentation and tensor preparation


def _warp(img, matrix, size, nearest):
    interp = cv2.INTER_NEAREST if nearest else cv2.INTER_LINEAR
    return cv2.warpAffine(img, matrix, size, flags=interp, borderMode=cv2.BORDER_CONSTANT, borderValue=0)


def augment(
    sample: RgbtSample,
    rng_seed: int,
    flip_p: float = 0.5,
    max_rotate_deg: float = 10.0,
    crop_ratio: float = 0.8,
) -> RgbtSample:
    """Random joint flip, rotation and crop.

    ``crop_ratio`` is the smallest allowed crop side as a fraction of the
    image side; the ratio actually used is drawn from ``[crop_ratio, 1]``.
    The same geometry is applied to every array in the sample.
    """
    rng = np.random.default_rng(rng_seed)
    do_flip = rng.random() < flip_p
    angle = rng.uniform(-max_rotate_deg, max_rotate_deg) if max_rotate_deg > 0 else 0.0
    ratio = rng.uniform(crop_ratio, 1.0) if crop_ratio < 1 else 1.0
    u, v = rng.random(2)

    arrays = {"rgb": (sample.rgb, False), "thermal": (sample.thermal, False)}
    if sample.gt is not None:
        arrays["gt"] = (sample.gt, True)
    if sample.boundary is not None:
        arrays["boundary"] = (sample.boundary.boundary, True)
        arrays["content"] = (sample.boundary.content, True)

    h, w = sample.shape
    out = {}
    for key, (img, nearest) in arrays.items():
        if do_flip:
            img = img[:, ::-1]
        if angle != 0.0:
            m = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), angle, 1.0)
            img = _warp(np.ascontiguousarray(img), m, (w, h), nearest)
        if ratio < 1.0:
            ch, cw = max(1, int(round(h * ratio))), max(1, int(round(w * ratio)))
            y0 = min(int(v * (h - ch + 1)), h - ch)
            x0 = min(int(u * (w - cw + 1)), w - cw)
            img = img[y0 : y0 + ch, x0 : x0 + cw]
        out[key] = np.ascontiguousarray(img)

    boundary = None
    if sample.boundary is not None:
        boundary = BoundaryLabel(out.pop("boundary"), out.pop("content"))
    return replace(sample, rgb=out["rgb"], thermal=out["thermal"], gt=out.get("gt"), boundary=boundary)


def resize_bilinear(img: np.ndarray, size) -> np.ndarray:
    """Half-pixel-centre bilinear resize in float32. ``size`` is (H, W) or an int."""
    if isinstance(size, int):
        size = (size, size)
    img = np.asarray(img, dtype=np.float32)
    if img.shape[:2] == tuple(size):
        return img.copy()
    return cv2.resize(img, (size[1], size[0]), interpolation=cv2.INTER_LINEAR)


def _normalize(img, size, mean, std):
    x = resize_bilinear(img, size) / 255.0
    x = (x - np.asarray(mean, np.float32)) / np.asarray(std, np.float32)
    return torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1)))


def prepare(sample: RgbtSample, size: int = 384, mean=IMAGENET_MEAN, std=IMAGENET_STD) -> TensorPair:
    if size <= 0:
        raise ValueError("size must be positive")
    return TensorPair(_normalize(sample.rgb, size, mean, std), _normalize(sample.thermal, size, mean, std), size)


def resize_mask(mask: np.ndarray, size) -> np.ndarray:
    """Resize a binary mask by bilinear interpolation followed by a 0.5 cut."""
    return (resize_bilinear(mask.astype(np.float32), size) > 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# torch dataset


def sample_seed(seed: int, epoch: int, name: str) -> int:
    """Per-sample augmentation seed; independent of worker count and order."""
    return (seed * 1_000_003 + epoch * 7_919 + zlib.crc32(name.encode())) % (2**32)


class RgbtDataset(Dataset):
    """Torch view of a split, producing normalised tensors and targets.

    Boundary labels are derived after augmentation and resizing, so the band
    width is expressed in model-resolution pixels.
    """

    def __init__(
        self,
        root,
        split: str,
        size: int = 384,
        train: bool = False,
        seed: int = 0,
        flip_p: float = 0.5,
        max_rotate_deg: float = 10.0,
        crop_ratio: float = 0.8,
        boundary_radius: int = 2,
        names: Optional[Sequence[str]] = None,
        mean=IMAGENET_MEAN,
        std=IMAGENET_STD,
    ):
        self.root = Path(root)
        self.split = split
        self.size = size
        self.train = train
        self.seed = seed
        self.epoch = 0
        self.aug = dict(flip_p=flip_p, max_rotate_deg=max_rotate_deg, crop_ratio=crop_ratio)
        self.boundary_radius = boundary_radius
        self.mean, self.std = mean, std
        self.names = list(names) if names is not None else list_names(root, split)
        if not self.names:
            raise DatasetMissing(f"no images under {self.root / split / 'RGB'}")

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self):
        return len(self.names)

    def __getitem__(self, idx):
        name = self.names[idx]
        sample = load_sample(self.root, self.split, name, require_gt=self.train)
        if self.train:
            sample = augment(sample, sample_seed(self.seed, self.epoch, name), **self.aug)
        pair = prepare(sample, self.size, self.mean, self.std)
        item = {"name": name, "rgb": pair.rgb, "thermal": pair.thermal, "hw": torch.tensor(sample.shape)}
        if sample.gt is not None:
            gt = resize_mask(sample.gt, self.size)
            label = decouple_boundary(gt, dilate_radius=self.boundary_radius)
            item["gt"] = torch.from_numpy(gt.astype(np.float32))[None]
            item["boundary"] = torch.from_numpy(label.boundary.astype(np.float32))[None]
        return item
