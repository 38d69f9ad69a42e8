import cv2
import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from hypsam.data import (
    ATTRIBUTES,
    IMAGENET_MEAN,
    IMAGENET_STD,
    RgbtDataset,
    RgbtSample,
    augment,
    decouple_boundary,
    list_names,
    load_attributes,
    load_sample,
    prepare,
    read_image,
    write_gray_png,
)
from hypsam.errors import CorruptImage, DatasetMissing, MissingFile, ShapeMismatch


def write_split(root, split, items, gt=True, ext=".png"):
    for name, (rgb, thermal, mask) in items.items():
        for sub, img in (("RGB", rgb), ("T", thermal)):
            d = root / split / sub
            d.mkdir(parents=True, exist_ok=True)
            cv2.imwrite(str(d / f"{name}{ext}"), img[..., ::-1] if img.ndim == 3 else img)
        if gt and mask is not None:
            d = root / split / "GT"
            d.mkdir(parents=True, exist_ok=True)
            cv2.imwrite(str(d / f"{name}.png"), mask)


def rand_img(rng, h=20, w=24):
    return rng.integers(0, 256, (h, w, 3), dtype=np.uint8)


class TestLoad:
    def test_saturated_and_threshold(self, tmp_path):
        rng = np.random.default_rng(0)
        full = np.full((20, 24), 255, np.uint8)
        mixed = np.where(rng.uniform(size=(20, 24)) < 0.4, 200, 0).astype(np.uint8)
        write_split(tmp_path, "test", {"a": (rand_img(rng), rand_img(rng), full),
                                       "b": (rand_img(rng), rand_img(rng), mixed)})
        a = load_sample(tmp_path, "test", "a")
        assert a.gt.dtype == np.uint8 and (a.gt == 1).all()
        b = load_sample(tmp_path, "test", "b")
        assert set(np.unique(b.gt)) <= {0, 1}
        assert int(b.gt.sum()) == sum(1 for v in mixed.ravel() if v > 127)

    def test_boundary_values(self, tmp_path):
        rng = np.random.default_rng(1)
        gt = np.array([[127, 128, 0, 255]], np.uint8).repeat(4, 0)
        write_split(tmp_path, "s", {"x": (rand_img(rng, 4, 4), rand_img(rng, 4, 4), gt)})
        assert load_sample(tmp_path, "s", "x").gt[0].tolist() == [0, 1, 0, 1]

    def test_rgb_order_and_gray_thermal(self, tmp_path):
        rgb = np.zeros((6, 6, 3), np.uint8)
        rgb[..., 0] = 200  # red
        thermal = np.full((6, 6), 90, np.uint8)
        write_split(tmp_path, "s", {"x": (rgb, thermal, np.zeros((6, 6), np.uint8))})
        s = load_sample(tmp_path, "s", "x")
        assert (s.rgb[..., 0] == 200).all() and (s.rgb[..., 2] == 0).all()
        assert s.thermal.shape == (6, 6, 3) and (s.thermal == 90).all()

    def test_errors(self, tmp_path):
        rng = np.random.default_rng(2)
        write_split(tmp_path, "s", {"x": (rand_img(rng), rand_img(rng, 10, 10), np.zeros((20, 24), np.uint8))})
        with pytest.raises(ShapeMismatch):
            load_sample(tmp_path, "s", "x")
        with pytest.raises(MissingFile):
            load_sample(tmp_path, "s", "nope")
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"garbage")
        with pytest.raises(CorruptImage):
            read_image(bad)
        with pytest.raises(DatasetMissing):
            list_names(tmp_path, "missing")

    def test_gt_optional(self, tmp_path):
        rng = np.random.default_rng(3)
        write_split(tmp_path, "s", {"x": (rand_img(rng), rand_img(rng), None)}, gt=False)
        assert load_sample(tmp_path, "s", "x", require_gt=False).gt is None
        with pytest.raises(MissingFile):
            load_sample(tmp_path, "s", "x")

    def test_attributes(self, tmp_path):
        (tmp_path / "attributes.csv").write_text("name,attributes\nimg1.jpg,BSO;LI\nimg2,bT\n")
        table = load_attributes(tmp_path)
        assert table["img1"] == {"BSO", "LI"} and table["img2"] == {"bT"}
        assert len(ATTRIBUTES) == 13

    def test_split_enumeration(self, tmp_path):
        rng = np.random.default_rng(4)
        items = {f"n{i:03d}": (rand_img(rng, 8, 8), rand_img(rng, 8, 8), np.zeros((8, 8), np.uint8))
                 for i in range(25)}
        write_split(tmp_path, "train", items, ext=".jpg")
        names = list_names(tmp_path, "train")
        assert len(names) == 25
        for n in names:
            s = load_sample(tmp_path, "train", n)
            assert s.rgb.shape[:2] == s.thermal.shape[:2] == s.gt.shape

    def test_write_gray_png(self, tmp_path):
        sal = np.linspace(0, 1, 12).reshape(3, 4)
        write_gray_png(tmp_path / "o.png", sal)
        back = cv2.imread(str(tmp_path / "o.png"), cv2.IMREAD_UNCHANGED)
        assert back.dtype == np.uint8 and np.array_equal(back, np.round(sal * 255).astype(np.uint8))


def boundary_oracle(gt, radius):
    h, w = gt.shape
    ring = np.zeros_like(gt)
    for y in range(h):
        for x in range(w):
            if gt[y, x]:
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        yy, xx = y + dy, x + dx
                        if not (0 <= yy < h and 0 <= xx < w) or not gt[yy, xx]:
                            ring[y, x] = 1
    grown = np.zeros_like(gt)
    for y in range(h):
        for x in range(w):
            if gt[y, x]:
                ys = slice(max(0, y - radius), y + radius + 1)
                xs = slice(max(0, x - radius), x + radius + 1)
                grown[y, x] = ring[ys, xs].any()
    return grown


class TestBoundary:
    def test_empty(self):
        lab = decouple_boundary(np.zeros((16, 16), np.uint8))
        assert not lab.boundary.any() and not lab.content.any()

    def test_square(self):
        gt = np.zeros((32, 32), np.uint8)
        gt[11:21, 11:21] = 1
        lab = decouple_boundary(gt, dilate_radius=1)
        assert np.array_equal(lab.boundary.astype(np.uint8), boundary_oracle(gt, 1))
        assert lab.boundary.sum() == 100 - 36

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(0, 3))
    def test_partition(self, seed, radius):
        rng = np.random.default_rng(seed)
        gt = (cv2.GaussianBlur(rng.uniform(size=(24, 24)), (5, 5), 0) > 0.5).astype(np.uint8)
        lab = decouple_boundary(gt, dilate_radius=radius)
        assert not (lab.boundary & lab.content).any()
        assert np.array_equal((lab.boundary | lab.content).astype(np.uint8), gt)


def make_sample(seed=0, h=30, w=40):
    rng = np.random.default_rng(seed)
    gt = np.zeros((h, w), np.uint8)
    gt[5:20, 3:15] = 1
    return RgbtSample("s", rand_img(rng, h, w), rand_img(rng, h, w), gt)


class TestAugment:
    def test_identity(self):
        s = make_sample()
        out = augment(s, 123, flip_p=0.0, max_rotate_deg=0.0, crop_ratio=1.0)
        assert np.array_equal(out.rgb, s.rgb) and np.array_equal(out.thermal, s.thermal)
        assert np.array_equal(out.gt, s.gt)

    def test_flip_is_joint(self):
        s = make_sample()
        out = augment(s, 5, flip_p=1.0, max_rotate_deg=0.0, crop_ratio=1.0)
        assert np.array_equal(out.rgb, s.rgb[:, ::-1]) and np.array_equal(out.gt, s.gt[:, ::-1])
        assert np.array_equal(out.thermal, s.thermal[:, ::-1])

    def test_deterministic_and_valid(self):
        s = make_sample()
        a, b = augment(s, 42), augment(s, 42)
        assert np.array_equal(a.rgb, b.rgb) and np.array_equal(a.gt, b.gt)
        assert a.rgb.shape[:2] == a.thermal.shape[:2] == a.gt.shape
        assert set(np.unique(a.gt)) <= {0, 1}
        assert a.gt.shape[0] >= int(0.8 * 30) and a.gt.shape[1] >= int(0.8 * 40)


class TestPrepare:
    def test_mean_image_is_zero(self):
        mean_px = np.round(np.array(IMAGENET_MEAN) * 255).astype(np.uint8)
        img = np.broadcast_to(mean_px, (10, 10, 3)).copy()
        s = RgbtSample("m", img, img)
        mean = tuple(mean_px / 255.0)
        pair = prepare(s, 384, mean=mean, std=IMAGENET_STD)
        assert pair.rgb.shape == (3, 384, 384) and pair.thermal.shape == (3, 384, 384)
        assert torch.allclose(pair.rgb, torch.zeros_like(pair.rgb), atol=1e-6)

    def test_checkerboard_bilinear(self):
        board = np.array([[0, 255], [255, 0]], np.uint8)
        img = np.repeat(board[..., None], 3, axis=2)
        pair = prepare(RgbtSample("c", img, img), 4, mean=(0, 0, 0), std=(1, 1, 1))

        def src(i):
            # half-pixel centres, clamped to the border
            return min(max((i + 0.5) / 2 - 0.5, 0.0), 1.0)

        ref = np.zeros((4, 4))
        v = board / 255.0
        for y in range(4):
            for x in range(4):
                sy, sx = src(y), src(x)
                ref[y, x] = ((1 - sy) * (1 - sx) * v[0, 0] + (1 - sy) * sx * v[0, 1]
                             + sy * (1 - sx) * v[1, 0] + sy * sx * v[1, 1])
        assert np.allclose(pair.rgb[0].numpy(), ref, atol=1e-6)


class TestDataset:
    def test_items(self, tmp_path):
        rng = np.random.default_rng(5)
        items = {}
        for i in range(3):
            m = np.zeros((20, 24), np.uint8)
            m[4:14, 6:18] = 255
            items[f"x{i}"] = (rand_img(rng), rand_img(rng), m)
        write_split(tmp_path, "train", items)
        ds = RgbtDataset(tmp_path, "train", size=32, train=True, seed=1)
        it = ds[0]
        assert it["rgb"].shape == (3, 32, 32) and it["gt"].shape == (1, 32, 32)
        assert it["boundary"].shape == (1, 32, 32)
        assert ((it["boundary"] <= it["gt"])).all()
        again = RgbtDataset(tmp_path, "train", size=32, train=True, seed=1)[0]
        assert torch.equal(it["rgb"], again["rgb"])
        ds.set_epoch(1)
        assert len(ds) == 3
        infer = RgbtDataset(tmp_path, "train", size=32)
        assert torch.equal(infer[0]["hw"], torch.tensor([20, 24]))
