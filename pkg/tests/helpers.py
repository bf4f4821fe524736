"""Independent oracles used across the test suite."""

import numpy as np
import torch


def central_difference_check(fn, inputs, eps=1e-5, max_coords=None, seed=0):
    """Compare autograd gradients of sum(w * fn(*inputs)) with central differences.

    Returns the largest per-tensor relative error ||g_auto - g_fd|| / max(||g_auto||, ||g_fd||)
    over the checked coordinates. ``max_coords`` limits the coordinates probed per tensor.
    """
    gen = torch.Generator().manual_seed(seed)
    inputs = [x.detach().clone().double().requires_grad_(True) for x in inputs]
    out = fn(*inputs)
    w = torch.randn(out.shape, generator=gen, dtype=torch.float64)

    def loss():
        return (fn(*inputs) * w).sum()

    grads = torch.autograd.grad((out * w).sum(), inputs, allow_unused=True)
    worst = 0.0
    for x, g in zip(inputs, grads):
        g = torch.zeros_like(x) if g is None else g
        flat = x.data.view(-1)
        n = flat.numel()
        idx = torch.arange(n) if max_coords is None or n <= max_coords else \
            torch.randperm(n, generator=gen)[:max_coords]
        auto = g.reshape(-1)[idx]
        numeric = torch.empty(len(idx), dtype=torch.float64)
        with torch.no_grad():
            for k, i in enumerate(idx.tolist()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss().item()
                flat[i] = orig - eps
                down = loss().item()
                flat[i] = orig
                numeric[k] = (up - down) / (2 * eps)
        scale = max(auto.norm().item(), numeric.norm().item(), 1e-12)
        worst = max(worst, (auto - numeric).norm().item() / scale)
    return worst


def brute_force_metrics(y_true, y_pred, n_classes):
    """UF1 / UAR / ACC by looping over raw (true, predicted) pairs."""
    f1s, recalls = [], []
    for c in range(n_classes):
        tp = fp = fn = 0
        for t, p in zip(y_true, y_pred):
            if t == c and p == c:
                tp += 1
            elif t != c and p == c:
                fp += 1
            elif t == c and p != c:
                fn += 1
        f1s.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
        recalls.append(tp / (tp + fn) if (tp + fn) else 0.0)
    acc = sum(int(t == p) for t, p in zip(y_true, y_pred)) / len(y_true)
    return float(np.mean(f1s)), float(np.mean(recalls)), acc


def textured_image(size=64, seed=0, sigma=2.0):
    import cv2

    rng = np.random.default_rng(seed)
    img = cv2.GaussianBlur(rng.normal(0, 1, (size, size)), (0, 0), sigma)
    img = (img - img.min()) / (img.max() - img.min())
    return img * 200 + 25
