"""
Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 5 to 7 run the shipped configs in ``configs/`` through the runner,
so they exercise the same path as the ``midlab`` command.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from midlab.domains import LabeledDataset
from midlab.middlegan import GanTrainConfig, fit_discriminator, generate, train_middlegan
from midlab.nn_core import Network, gradient_check, quadratic_loss, random_architecture
from midlab.oracles import (
    LOG2,
    LOG4,
    DensityGrid,
    estimate_density,
    gaussian_grid,
    grid_value,
    jsd,
    jsd_centroid,
    kl,
    optimal_discriminator,
    random_grid,
    verify_theorem2,
    virtual_criterion,
)
from midlab.runner.config import load_config, parse_config
from midlab.runner.experiments import run_experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
B1 = ((-6.0, 6.0),)
N1 = (241,)


def verdict(request, label, ok, detail, elapsed, limit):
    within = elapsed < limit
    line = (
        f"[{'PASS' if ok and within else 'FAIL'}] {label}: {detail} "
        f"({elapsed:.1f} s, limit {limit:.0f} s)"
    )
    with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
        print("\n" + line)
    assert ok, line
    assert within, line


def run_config(name, tmp_path):
    return run_experiment(load_config(CONFIGS / name), tmp_path / name)


# 1 ----------------------------------------------------------------------------------


def test_c1_gradient_correctness(request):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    errors = []
    for _ in range(25):
        sizes, acts = random_architecture(rng)
        net = Network.build(sizes, acts, rng)
        for layer in net.layers:
            layer.bias[...] = rng.normal(0.0, 0.1, size=layer.bias.shape)
        x = rng.normal(size=(6, sizes[0]))
        target = rng.normal(size=(6, sizes[-1]))
        errors.append(gradient_check(net, lambda o: quadratic_loss(o, target), x, 1e-5))
    worst = max(errors)
    verdict(request, "C1 gradient check", worst < 1e-4,
            f"max relative error {worst:.2e} < 1e-4 over {len(errors)} architectures",
            time.perf_counter() - t, 10)


# 2 ----------------------------------------------------------------------------------


def _triple(rng, cells):
    grids = []
    for _ in range(3):
        m = rng.dirichlet(np.full(cells, rng.choice([0.1, 1.0, 10.0])))
        if rng.random() < 0.5:  # exact zeros exercise the 0 log 0 convention
            m[rng.random(cells) < 0.3] = 0.0
            if m.sum() == 0:
                m[0] = 1.0
            m = m / m.sum()
        grids.append(DensityGrid(((0.0, 1.0),), (cells,), m))
    return grids


def test_c2_identity_at_optimal_discriminator(request):
    t = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        ps, pt, pm = _triple(rng, int(rng.integers(2, 60)))
        ds, _ = optimal_discriminator(ps, pm)
        dt, _ = optimal_discriminator(pt, pm)
        ds_rest, _ = optimal_discriminator(ps, pm, complement=True)
        dt_rest, _ = optimal_discriminator(pt, pm, complement=True)
        v = grid_value(ps, pt, pm, ds, dt, ds_rest, dt_rest)
        closed = -2 * LOG4 + 2 * jsd(ps, pm) + 2 * jsd(pt, pm)
        worst = max(worst, abs(v - closed))
    verdict(request, "C2 identity", worst < 1e-9,
            f"max |V(D*) - criterion| = {worst:.1e} < 1e-9 over 100 triples",
            time.perf_counter() - t, 5)


# 3 ----------------------------------------------------------------------------------


def test_c3_discriminator_matches_ratio(request):
    t = time.perf_counter()
    maes = []
    for seed in range(3):
        pts = np.random.default_rng(100 + seed).normal(-2.0, 0.5, size=(2000, 1))
        src = LabeledDataset(pts, np.zeros(2000, dtype=int), "source", 1)
        model = train_middlegan(src, src.with_domain("target"), GanTrainConfig(epochs=0), seed)
        disc = fit_discriminator(model, src, GanTrainConfig(), 2000, seed + 1)
        ps = gaussian_grid([-2.0], [0.5], [1.0], B1, N1)
        pm = estimate_density(generate(model, 1_000_000, seed + 2).points, B1, N1)
        dstar, _ = optimal_discriminator(ps, pm)
        # smallest set of cells holding 99% of the mass both players see
        mix = 0.5 * (ps.mass + pm.mass)
        order = np.argsort(mix)[::-1]
        cells = order[: np.searchsorted(np.cumsum(mix[order]), 0.99) + 1]
        dhat = disc(ps.centers())[:, 0]
        maes.append(float(np.mean(np.abs(dhat[cells] - dstar[cells]))))
    verdict(request, "C3 discriminator vs D*", max(maes) < 0.1,
            f"MAE per seed {', '.join(f'{m:.3f}' for m in maes)}; max < 0.1",
            time.perf_counter() - t, 60)


# 4 ----------------------------------------------------------------------------------


def test_c4_centroid_optimality(request):
    t = time.perf_counter()
    ps = gaussian_grid([-2.0], [1.0], [1.0], B1, N1)
    pt = gaussian_grid([2.0], [1.0], [1.0], B1, N1)
    rep = verify_theorem2(ps, pt)
    same = jsd_centroid(ps, ps).objective
    ok = rep.passed and rep.trace_monotone and rep.max_violation <= 1e-9 and abs(same) < 1e-9
    verdict(request, "C4 centroid", ok,
            f"objective {rep.centroid_objective:.9f}, {rep.probes_checked} probes, worst probe "
            f"margin {rep.max_violation:.1e} <= 1e-9, trace monotone {rep.trace_monotone}; "
            f"ps = pt objective {same:.1e}",
            time.perf_counter() - t, 30)


# 5 ----------------------------------------------------------------------------------


def test_c5_generator_in_the_middle(request, tmp_path):
    t = time.perf_counter()
    rep = run_config("middle_gaussians.cfg", tmp_path)
    tvs = [r["tv_to_centroid_max"] for r in rep.per_seed]
    med = float(np.median(tvs))
    verdict(request, "C5 generator at centroid", len(tvs) == 5 and med <= 0.25,
            f"TV to centroid per seed {', '.join(f'{v:.3f}' for v in tvs)}; median {med:.3f} <= 0.25",
            time.perf_counter() - t, 300)


# 6 ----------------------------------------------------------------------------------


def test_c6_agnosticism(request, tmp_path):
    t = time.perf_counter()
    rep = run_config("agnosticism_gaussians.cfg", tmp_path)
    deltas = [r["max_delta"] for r in rep.per_seed]
    med = float(np.median(deltas))
    verdict(request, "C6 agnosticism", len(deltas) == 5 and med <= 0.05,
            f"max_delta per seed {', '.join(f'{d:.3f}' for d in deltas)}; median {med:.3f} <= 0.05",
            time.perf_counter() - t, 300)


# 7 ----------------------------------------------------------------------------------


def test_c7_adaptation_benefit(request, tmp_path):
    t = time.perf_counter()
    shift = run_config("adapt_moons.cfg", tmp_path).per_seed
    control = run_config("adapt_moons_noshift.cfg", tmp_path).per_seed
    wins = sum(r["middlegan_acc"] >= r["source_only_acc"] for r in shift)
    gaps = [abs(r["middlegan_acc"] - r["source_only_acc"]) for r in control]
    ok = len(shift) == 5 and wins >= 4 and max(gaps) <= 0.05
    pairs = ", ".join(f"{r['source_only_acc']:.3f}->{r['middlegan_acc']:.3f}" for r in shift)
    verdict(request, "C7 adaptation benefit", ok,
            f"30 deg wins {wins}/5 ({pairs}); no-shift max gap {max(gaps):.3f} <= 0.05",
            time.perf_counter() - t, 600)


# 8 ----------------------------------------------------------------------------------

SMALL = {
    "gradcheck": "[gradcheck]\nn_architectures = 4\n",
    "verify_identity": "[source]\nclass_count = 1\nmeans = -2.0\n[target]\npreset = \"severe\"\n[verify]\nn_triples = 10\n",
    "oracle_centroid": "[source]\nclass_count = 1\nmeans = -2.0\n[target]\npreset = \"severe\"\n",
    "gan_train": "[source]\nclass_count = 1\nmeans = -2.0\n[target]\npreset = \"severe\"\n"
                 "[data]\nn_per_class = 200\n[gan]\nepochs = 3\nn_generate = 2000\n",
    "agnosticism": "[source]\nmeans = 2.0, 1.5, 2.0, -1.5\nstd = 0.5\n[target]\npreset = \"severe\"\n"
                   "[data]\nn_per_class = 100\nn_test_per_class = 50\n[gan]\nepochs = 3\n",
    "adaptation": "[source]\nfamily = \"two_moons\"\nnoise = 0.2\n[data]\nn_per_class = 150\nn_test_per_class = 50\n"
                  "[gan]\nepochs = 3\n[pseudo_label]\nepochs = 30\nlearning_rate = 0.001\n",
}


def _tree(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c8_determinism(request, tmp_path):
    t = time.perf_counter()
    mismatched = []
    for kind, body in SMALL.items():
        cfg = parse_config(f"[experiment]\nkind = \"{kind}\"\nseeds = 0, 1\n{body}")
        run_experiment(cfg, tmp_path / kind / "a")
        run_experiment(cfg, tmp_path / kind / "b")
        a, b = _tree(tmp_path / kind / "a"), _tree(tmp_path / kind / "b")
        if a != b or not a:
            mismatched.append(kind)
    verdict(request, "C8 determinism", not mismatched,
            f"{len(SMALL)} experiment kinds rerun, every artifact byte-identical"
            + (f"; mismatched: {mismatched}" if mismatched else ""),
            time.perf_counter() - t, math.inf)


# 9 ----------------------------------------------------------------------------------


def test_c9_divergence_sanity(request):
    t = time.perf_counter()
    rng = np.random.default_rng(99)
    bad = []
    for i in range(1000):
        cells = int(rng.integers(2, 50))
        conc = float(rng.choice([0.05, 1.0, 20.0]))
        p, q, m = (random_grid(rng, (cells,), concentration=conc) for _ in range(3))
        d = jsd(p, q)
        checks = {
            "jsd(p,p)=0": jsd(p, p) == 0.0,
            "jsd symmetric": d == jsd(q, p),
            "jsd<=log2": d <= LOG2,
            "kl>=0": kl(p, q) >= 0.0,
            "criterion>=-2log4": virtual_criterion(p, q, m) >= -2 * LOG4,
        }
        bad += [f"{name} (case {i})" for name, ok in checks.items() if not ok]
    verdict(request, "C9 divergence sanity", not bad,
            "5 properties over 1000 random pairs/triples" + (f"; violations: {bad[:5]}" if bad else ""),
            time.perf_counter() - t, 5)
