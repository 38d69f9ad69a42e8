import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from hypsam.dfnet import PredictionSet
from hypsam.errors import ShapeMismatch
from hypsam.losses import (
    LossBreakdown,
    bce_loss,
    dice_loss,
    format_log_line,
    hybrid_loss,
    iou_loss,
    parse_log_line,
    ssim_loss,
    total_loss,
)


def half_image(h=16, w=16):
    gt = torch.zeros(h, w)
    gt[:, w // 2:] = 1
    return gt


def ssim_loop(pred, gt, win=11, sigma=1.5):
    """Direct windowed SSIM with zero padding, pixel by pixel."""
    pred, gt = np.asarray(pred, float), np.asarray(gt, float)
    h, w = pred.shape
    r = win // 2
    g = [math.exp(-((i - r) ** 2) / (2 * sigma**2)) for i in range(win)]
    s = sum(g)
    g = [v / s for v in g]
    c1, c2 = 0.01**2, 0.03**2
    total = 0.0
    for y in range(h):
        for x in range(w):
            mx = my = sxx = syy = sxy = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w:
                        wt = g[dy + r] * g[dx + r]
                        a, b = pred[yy, xx], gt[yy, xx]
                        mx += wt * a
                        my += wt * b
                        sxx += wt * a * a
                        syy += wt * b * b
                        sxy += wt * a * b
            vx, vy, cxy = sxx - mx * mx, syy - my * my, sxy - mx * my
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return 1 - total / (h * w)


class TestBce:
    def test_perfect(self):
        gt = half_image()
        assert bce_loss(gt.clone(), gt) <= 1e-6

    def test_half(self):
        gt = half_image()
        assert abs(float(bce_loss(torch.full_like(gt, 0.5), gt)) - math.log(2)) < 1e-6

    def test_loop_oracle(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(0.01, 0.99, (8, 8))
        g = (rng.uniform(size=(8, 8)) > 0.5).astype(float)
        ref = -sum(g[i, j] * math.log(p[i, j]) + (1 - g[i, j]) * math.log(1 - p[i, j])
                   for i in range(8) for j in range(8)) / 64
        got = float(bce_loss(torch.tensor(p), torch.tensor(g)))
        assert abs(got - ref) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            bce_loss(torch.zeros(4, 4), torch.zeros(4, 5))


class TestSsim:
    def test_identity(self):
        gt = half_image()
        assert abs(float(ssim_loss(gt.clone(), gt))) < 1e-6

    def test_inverted_near_max(self):
        gt = half_image().double()
        got = float(ssim_loss(1 - gt, gt))
        assert abs(got - ssim_loop(1 - gt, gt)) < 1e-9
        assert got > 0.9

    def test_loop_oracle_random(self):
        rng = np.random.default_rng(1)
        p = torch.tensor(rng.uniform(size=(12, 12)))
        g = torch.tensor((rng.uniform(size=(12, 12)) > 0.5).astype(float))
        assert abs(float(ssim_loss(p, g)) - ssim_loop(p, g)) < 1e-9

    def test_even_window(self):
        with pytest.raises(ValueError):
            ssim_loss(torch.zeros(8, 8), torch.zeros(8, 8), window=10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_range(self, seed):
        g = torch.Generator().manual_seed(seed)
        p = torch.rand(1, 1, 12, 12, generator=g, dtype=torch.float64)
        t = (torch.rand(1, 1, 12, 12, generator=g, dtype=torch.float64) > 0.5).double()
        v = float(ssim_loss(p, t))
        assert 0.0 <= v <= 2.0


class TestIouDice:
    @pytest.mark.parametrize("m", [1, 5, 40])
    def test_empty_prediction_closed_form(self, m):
        gt = torch.zeros(10, 10)
        gt.view(-1)[:m] = 1
        pred = torch.zeros_like(gt)
        assert abs(float(iou_loss(pred, gt)) - (1 - 1 / (m + 1))) < 1e-6
        assert abs(float(dice_loss(pred, gt)) - (1 - 1 / (m + 1))) < 1e-6

    def test_perfect(self):
        gt = half_image()
        assert abs(float(iou_loss(gt, gt))) < 1e-6
        assert abs(float(dice_loss(gt, gt))) < 1e-6

    def test_both_empty(self):
        z = torch.zeros(6, 6)
        assert float(iou_loss(z, z)) == 0.0
        assert float(dice_loss(z, z)) == 0.0

    def test_loop_oracle(self):
        rng = np.random.default_rng(2)
        p = rng.uniform(size=(7, 9))
        g = (rng.uniform(size=(7, 9)) > 0.6).astype(float)
        inter = sum(p[i, j] * g[i, j] for i in range(7) for j in range(9))
        sp, sg = p.sum(), g.sum()
        iou_ref = 1 - (inter + 1) / (sp + sg - inter + 1)
        dice_ref = 1 - (2 * inter + 1) / (sp + sg + 1)
        assert abs(float(iou_loss(torch.tensor(p), torch.tensor(g))) - iou_ref) < 1e-9
        assert abs(float(dice_loss(torch.tensor(p), torch.tensor(g))) - dice_ref) < 1e-9


def random_set(seed, shape=(1, 1, 12, 12), dtype=torch.float64, requires_grad=False):
    g = torch.Generator().manual_seed(seed)
    maps = {f"sal_{b}": torch.rand(*shape, generator=g, dtype=dtype).clamp(0.05, 0.95).requires_grad_(requires_grad)
            for b in ("mixed", "rgb", "thermal", "boundary", "fused")}
    gt = (torch.rand(*shape, generator=g, dtype=dtype) > 0.5).to(dtype)
    bd = (torch.rand(*shape, generator=g, dtype=dtype) > 0.8).to(dtype)
    return PredictionSet(**maps), gt, bd


class TestTotal:
    def test_sum_identity(self):
        preds, gt, bd = random_set(0)
        lb = total_loss(preds, gt, bd)
        assert isinstance(lb, LossBreakdown)
        parts = lb.l_R + lb.l_T + lb.l_M + lb.l_B + lb.l_F
        assert abs(float(lb.total - parts)) < 1e-12
        assert abs(float(lb.l_R - hybrid_loss(preds.sal_rgb, gt))) < 1e-12
        assert abs(float(lb.l_B - dice_loss(preds.sal_boundary, bd))) < 1e-12

    def test_finite_difference_gradients(self):
        preds, gt, bd = random_set(3, requires_grad=True)
        total_loss(preds, gt, bd).total.backward()
        h = 1e-5
        rng = np.random.default_rng(0)
        for name, t in preds.as_dict().items():
            for _ in range(3):
                idx = tuple(int(rng.integers(0, s)) for s in t.shape)
                with torch.no_grad():
                    orig = float(t[idx])
                    t[idx] = orig + h
                    up = float(total_loss(preds, gt, bd).total)
                    t[idx] = orig - h
                    down = float(total_loss(preds, gt, bd).total)
                    t[idx] = orig
                fd = (up - down) / (2 * h)
                an = float(t.grad[idx])
                assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an), 1e-8), (name, idx, fd, an)

    def test_moving_towards_gt_reduces_loss(self):
        for seed in range(20):
            preds, gt, bd = random_set(seed + 100)
            before = float(total_loss(preds, gt, bd).total)
            closer = PredictionSet(**{
                k: 0.5 * v + 0.5 * (bd if k == "sal_boundary" else gt) for k, v in preds.as_dict().items()
            })
            assert float(total_loss(closer, gt, bd).total) < before


def test_log_line_roundtrip():
    preds, gt, bd = random_set(5)
    lb = total_loss(preds, gt, bd)
    line = format_log_line(17, lb, 0.05)
    assert line.split()[0] == "step=17"
    assert [t.split("=")[0] for t in line.split()] == ["step", "l_R", "l_T", "l_M", "l_B", "l_F", "total", "lr"]
    parsed = parse_log_line(line)
    assert parsed["step"] == 17 and abs(parsed["total"] - lb.items()["total"]) < 1e-5
    assert parsed["lr"] == 0.05


def test_perfect_total():
    _, gt, bd = random_set(7, dtype=torch.float32)
    perfect = PredictionSet(sal_mixed=gt, sal_rgb=gt, sal_thermal=gt, sal_boundary=bd, sal_fused=gt)
    assert float(total_loss(perfect, gt, bd).total) <= 1e-5


@pytest.mark.parametrize("fn", [bce_loss, ssim_loss, iou_loss, dice_loss])
def test_single_loss_gradcheck(fn):
    g = torch.Generator().manual_seed(11)
    p = (torch.rand(1, 1, 4, 4, generator=g, dtype=torch.float64) * 0.9 + 0.05).requires_grad_(True)
    t = (torch.rand(1, 1, 4, 4, generator=g, dtype=torch.float64) > 0.5).double()
    fn(p, t).backward()
    h = 1e-5
    for idx in np.ndindex(4, 4):
        i = (0, 0) + idx
        with torch.no_grad():
            orig = float(p[i])
            p[i] = orig + h
            up = float(fn(p, t))
            p[i] = orig - h
            down = float(fn(p, t))
            p[i] = orig
        fd, an = (up - down) / (2 * h), float(p.grad[i])
        assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an)) + 1e-9


@pytest.mark.parametrize("step", [1e-3, 1e-4])
def test_negative_gradient_step(step):
    for seed in range(20):
        preds, gt, bd = random_set(seed + 200, requires_grad=True)
        loss = total_loss(preds, gt, bd).total
        loss.backward()
        moved = PredictionSet(**{k: (v - step * v.grad).detach() for k, v in preds.as_dict().items()})
        assert float(total_loss(moved, gt, bd).total) <= loss.item()


def test_all_terms_nonnegative():
    for seed in range(10):
        preds, gt, bd = random_set(seed + 300)
        lb = total_loss(preds, gt, bd)
        assert all(v >= 0 for v in lb.items().values())
        assert 0 <= lb.items()["l_B"] <= 1
