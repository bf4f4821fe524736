"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The desk-scale training criteria (7, 8) take a few minutes on one CPU core.
"""

import math
import time

import numpy as np
import pytest
import torch

from causalnet import cli
from causalnet.attention import (GridGeometry, SpatialTemporalCausalAttention, TemporalCausalAttention,
                                 build_neighborhood_mask, build_pseudo_matrix, causal_relation_mining,
                                 masked_pseudo_attention, position_monotonicity_check)
from causalnet.config import DESK_SCALE
from causalnet.data_model import KeyFrames
from causalnet.evaluation import COMPOSITE, evaluate_cde, loso_split
from causalnet.flow import build_sample_inputs, direction_agreement, sample_flows
from causalnet.metrics import ConfusionMatrix, compute_metrics
from causalnet.model import CausalNet
from causalnet.robustness import NoiseSpec, degradation_comparison, inject_noise, run_sweep
from helpers import brute_force_metrics, central_difference_check

G = GridGeometry(2, 1.0)


def test_1_mask_and_pseudo_matrices(acceptance):
    t = time.perf_counter()
    mask = build_neighborhood_mask(G)
    pseudo = build_pseudo_matrix(G, 0.1)
    want_m = torch.tensor([[1, 1, 1, 0], [1, 1, 0, 1], [1, 0, 1, 1], [0, 1, 1, 1]], dtype=torch.float64)
    want_p = torch.zeros(4, 4, dtype=torch.float64)
    want_p[0, 3], want_p[1, 2], want_p[2, 1], want_p[3, 0] = -0.3, -0.2, -0.1, 0.0
    # -3 * 0.1 is one ulp away from the double nearest -0.3: exact against the
    # literal product, ulp-level against the decimal values
    literal = want_p.clone()
    literal[0, 3], literal[1, 2], literal[2, 1] = -3 * 0.1, -2 * 0.1, -1 * 0.1
    ok = (torch.equal(mask, want_m) and torch.equal(pseudo, literal)
          and torch.allclose(pseudo, want_p, rtol=0, atol=1e-15) and not torch.signbit(pseudo[3, 0]))
    dt = time.perf_counter() - t
    ok = ok and dt < 1
    acceptance(1, "mask/pseudo oracle", ok, f"exact={ok} {dt:.3f}s")
    assert ok and dt < 1


def test_2_position_monotonicity(acceptance):
    t = time.perf_counter()
    sums = {g: position_monotonicity_check(g).row_sums for g in (0.01, 0.1, 1.0)}
    strict = all(all(a > b for a, b in zip(s, s[1:])) for s in sums.values())
    closed = [3 / (3 + math.exp(-0.3)), 3 / (3 + math.exp(-0.2)), 3 / (3 + math.exp(-0.1)), 0.75]
    close = np.allclose(sums[0.1], closed, atol=1e-3) and np.allclose(sums[0.1], [0.8020, 0.7856, 0.7683, 0.75],
                                                                      atol=1e-3)
    dt = time.perf_counter() - t
    ok = strict and close and dt < 1
    acceptance(2, "position monotonicity", ok, "row sums(0.1)=" + ",".join(f"{x:.4f}" for x in sums[0.1]))
    assert ok


def test_3_causality(acceptance):
    t = time.perf_counter()
    torch.manual_seed(0)
    block = SpatialTemporalCausalAttention(8).double()
    x = torch.randn(4, 2, 4, 8, dtype=torch.float64)
    y = x.clone()
    y[:, 1] = torch.randn(4, 4, 8, dtype=torch.float64) * 3
    block_diff = (block(x)[:, 0] - block(y)[:, 0]).abs().max().item()

    net = CausalNet(dim=8, enc_width=4).double().eval()
    gen = torch.Generator().manual_seed(1)
    x1, x2, p1, p2 = (torch.randn(2, 4, 8, generator=gen, dtype=torch.float64) for _ in range(4))
    _, a = net.cab_forward(x1, x2, p1, p2, return_parts=True)
    _, b = net.cab_forward(x1, x2 + torch.randn(2, 4, 8, generator=gen, dtype=torch.float64), p1, p2,
                           return_parts=True)
    e2e_diff = (a["y_for1"] - b["y_for1"]).abs().max().item()
    live = not torch.equal(a["y_for2"], b["y_for2"])
    dt = time.perf_counter() - t
    ok = block_diff == 0 and e2e_diff == 0 and live and dt < 5
    acceptance(3, "causality", ok, f"block diff={block_diff} end-to-end diff={e2e_diff}")
    assert ok


def test_4_gradient_checks(acceptance):
    t = time.perf_counter()

    def rand(*shape, seed):
        return torch.randn(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)

    mask, pseudo = build_neighborhood_mask(G), build_pseudo_matrix(G, 0.1)
    torch.manual_seed(0)
    temporal = TemporalCausalAttention(8).double()
    net = CausalNet(dim=8, enc_width=4).double().eval()
    gen = torch.Generator().manual_seed(5)
    net_inputs = [torch.rand(1, 3, 28, 28, generator=gen, dtype=torch.float64) for _ in range(2)] + \
                 [torch.randn(1, 2, 28, 28, generator=gen, dtype=torch.float64) for _ in range(2)]
    errs = {
        "masked_pseudo_attention": central_difference_check(
            lambda q, k, v: masked_pseudo_attention(q, k, v, mask, pseudo)[0],
            [rand(4, 8, seed=i) for i in range(3)]),
        "temporal_causal_attention": central_difference_check(temporal, [rand(2, 4, 8, seed=3)]),
        "causal_relation_mining": central_difference_check(
            causal_relation_mining, [rand(4, 8, seed=4), rand(4, 8, seed=5)]),
        "forward": central_difference_check(net, net_inputs, max_coords=40),
    }
    dt = time.perf_counter() - t
    ok = max(errs.values()) <= 1e-4 and dt < 30
    acceptance(4, "gradient checks", ok, " ".join(f"{k}={v:.1e}" for k, v in errs.items()) + f" {dt:.1f}s")
    assert ok


def test_5_metric_oracle(acceptance):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        yt, yp = rng.integers(0, 3, n), rng.integers(0, 3, n)
        got = tuple(compute_metrics(ConfusionMatrix.from_pairs(yt, yp, 3)))
        mismatches += got != brute_force_metrics(yt.tolist(), yp.tolist(), 3)
    m = compute_metrics(ConfusionMatrix(np.array([[2, 0, 0], [1, 1, 0], [0, 1, 1]])))
    hand = (abs(m.uf1 - (0.8 + 0.5 + 2 / 3) / 3) <= 1e-6 and abs(m.uf1 - 0.6556) <= 1e-4
            and abs(m.uar - 2 / 3) <= 1e-6 and abs(m.acc - 2 / 3) <= 1e-6)
    dt = time.perf_counter() - t
    ok = mismatches == 0 and hand and dt < 5
    acceptance(5, "metric oracle", ok, f"mismatches={mismatches} UF1={m.uf1:.4f} UAR={m.uar:.4f} ACC={m.acc:.4f}")
    assert ok


def test_6_noise_statistics(acceptance):
    t = time.perf_counter()
    n, kf, spec = 10_000, KeyFrames(2000, 6000, 10_000), NoiseSpec(20, seed=9)
    d = np.array([inject_noise(kf, spec, 12_001, stream_id=f"clip{i}").apex for i in range(n)], float) - kf.apex
    std = spec.effective_std(200)
    mean_ok = abs(d.mean()) <= 3 * std / math.sqrt(n)
    std_ok = abs(d.std(ddof=1) - std) <= 3 * std / math.sqrt(2 * (n - 1))
    halves = spec.effective_std(100) == spec.effective_std(200) / 2
    dt = time.perf_counter() - t
    ok = mean_ok and std_ok and halves and dt < 5
    acceptance(6, "noise statistics", ok, f"mean={d.mean():+.3f} std={d.std(ddof=1):.3f} (target {std:g})")
    assert ok


def _block_mean_features(sample, blocks=4):
    feats = []
    for flow in sample_flows(sample):
        for ch in (flow.u, flow.v):
            h, w = ch.shape
            feats.append(ch[: h - h % blocks, : w - w % blocks]
                         .reshape(blocks, h // blocks, blocks, w // blocks).mean(axis=(1, 3)).ravel())
    return np.concatenate(feats)


@pytest.mark.slow
def test_7_synthetic_learnability(acceptance, synth60):
    from sklearn.linear_model import LogisticRegression

    t = time.perf_counter()
    X = np.stack([_block_mean_features(s) for s in synth60])
    y = np.array([s.composite_label.index for s in synth60])
    pred = np.empty_like(y)
    for fold in loso_split(synth60):
        tr, te = list(fold.train), list(fold.test)
        clf = LogisticRegression(max_iter=2000).fit(X[tr], y[tr])
        pred[te] = clf.predict(X[te])
    oracle_uf1 = compute_metrics(ConfusionMatrix.from_pairs(y, pred, 3)).uf1
    assert oracle_uf1 >= 0.90, f"task not learnable by the linear oracle (UF1 {oracle_uf1:.3f})"

    config = DESK_SCALE
    assert config.epochs <= 200
    uf1 = evaluate_cde(synth60, config, seed=0).metrics[COMPOSITE].uf1
    dt = time.perf_counter() - t
    ok = uf1 >= 0.90 and dt < 600
    acceptance(7, "synthetic learnability", ok,
               f"oracle UF1={oracle_uf1:.3f} CausalNet UF1={uf1:.3f} ({config.epochs} epochs, {dt:.0f}s)")
    assert ok


@pytest.mark.slow
def test_8_robustness_trend(acceptance, synth60):
    t = time.perf_counter()
    report = run_sweep(synth60, DESK_SCALE, levels=[0, 10, 20, 30], n_runs=1, base_seed=0)
    curve = [report.metric(level) for level in report.levels]
    modes = degradation_comparison(synth60, DESK_SCALE, 30.0, n_runs=1, base_seed=0)
    uf1 = {m: s.mean[COMPOSITE].uf1 for m, s in modes.items()}
    dt = time.perf_counter() - t
    ranking = uf1["full"] > uf1["onset_apex"] - 0.02 and uf1["full"] > uf1["apex_only"] - 0.02
    ok = ranking and curve[-1] <= curve[0] + 0.02 and dt < 1800
    acceptance(8, "robustness trend", ok,
               "full sweep=" + ",".join(f"{x:.3f}" for x in curve)
               + " level30 " + " ".join(f"{m}={v:.3f}" for m, v in uf1.items()) + f" ({dt:.0f}s)")
    assert ok


def test_9_antiparallel_directions(acceptance, synth60):
    t = time.perf_counter()
    dots = []
    for s in synth60:
        inputs = build_sample_inputs(s)
        dots.append(direction_agreement(inputs.dir_oa, inputs.dir_ao)[0])
    worst = max(dots)
    dt = time.perf_counter() - t
    ok = worst <= -0.8 and dt < 10
    acceptance(9, "antiparallel directions", ok, f"worst mean dot={worst:.3f} over {len(synth60)} samples")
    assert ok


def test_10_reproducible_metrics(acceptance, tmp_path):
    assert cli.main(["synth", "--subjects", "3", "--per-subject", "3", "--seed", "2",
                     "--out", str(tmp_path / "data"), "-q"]) == 0
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["train-eval", "--data", str(tmp_path / "data"), "--preset", "desk", "--epochs", "20",
                         "--seed", "5", "--out", str(out), "-q"]) == 0
        lines = (out / "metrics.json").read_bytes().splitlines(keepends=True)
        # run_id carries the wall-clock timestamp
        blobs.append(b"".join(x for x in lines if not x.lstrip().startswith(b'"run_id"')))
    ok = blobs[0] == blobs[1]
    acceptance(10, "reproducible metrics", ok, f"{len(blobs[0])} bytes identical={ok}")
    assert ok
