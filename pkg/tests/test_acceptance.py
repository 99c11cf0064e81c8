"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
(and immediately, when run with ``-s``).
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from nmfsga import data
from nmfsga.classifier import fit
from nmfsga.evaluation import conditional_pcc_closed_form, conditional_pcc_mc
from nmfsga.experiment import cmd_run, load_results, parse_config
from nmfsga.ga import GaConfig, run_nmfs_ga
from nmfsga.loss import LossSpec, PredictionBatch, auc, estimate_centroid, eval_loss
from nmfsga.pareto import fast_nondominated_sort

from conftest import record_acceptance
from oracles import brute_force_fronts, vectorised_fronts
from test_ga import reference_f1

pytestmark = pytest.mark.slow

GRID_SEED = 2024


def report(number, passed, detail):
    record_acceptance(number, passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def cell_values(docs, rate, kind, metric):
    return [
        d["summary"][metric]
        for d in docs
        if d["status"] == "ok" and d["config"]["noise_rate"] == rate and d["config"]["loss"]["kind"] == kind
    ]


@pytest.fixture(scope="module")
def synth_a_grid(tmp_path_factory):
    """Dataset A, three noise rates, BA and CWD, five replicates, fast preset."""
    cfg = parse_config(
        {
            "task": "synthA",
            "n_per_class": 100,
            "noise_rates": [0.05, 0.10, 0.15],
            "losses": ["BA", "CWD"],
            "replicates": 5,
            "seed": GRID_SEED,
        }
    )
    cfg.apply_fast()
    out = tmp_path_factory.mktemp("synthA")
    start = time.perf_counter()
    code = cmd_run(cfg, out, workers=1)
    elapsed = time.perf_counter() - start
    return load_results(out), code, elapsed


def test_01_nondominated_sort_oracle():
    gen = np.random.default_rng(1)
    pops = [gen.random((int(gen.integers(1, 201)), 2)) for _ in range(500)]
    start = time.perf_counter()
    fronts = [fast_nondominated_sort(p) for p in pops]
    elapsed = time.perf_counter() - start
    mismatches = sum([sorted(f.tolist()) for f in fr] != vectorised_fronts(p) for fr, p in zip(fronts, pops))
    # The loop oracle is slow in Python; spot-check it agrees on a subset.
    spot = sum([sorted(f.tolist()) for f in fronts[i]] != brute_force_fronts(pops[i]) for i in range(0, 500, 25))
    ok = mismatches == 0 and spot == 0 and elapsed < 10.0
    report(1, ok, f"500 populations, {mismatches} mismatches ({spot} on loop-oracle subset), sort time {elapsed:.2f}s < 10s")


def test_02_pcc_mc_matches_closed_form():
    gen = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for t in range(50):
        d = int(gen.integers(3, 30))
        k = int(gen.integers(1, min(d, 7) + 1))
        spec = data.equicorrelated_spec(
            d, k, float(gen.uniform(0.02, 0.45)), seed=t, correlation=float(gen.uniform(0.0, 0.9))
        )
        ds = data.generate_synthetic(spec, int(gen.integers(10, 60)))
        mask = gen.random(d) < 0.5
        mask[gen.integers(d)] = True
        model = fit(ds.features[:, mask], ds.clean_labels, float(gen.uniform(0.0, 0.5)))
        mc = conditional_pcc_mc(model, mask, spec, n_samples=1_000_000, seed=1000 + t)
        closed = conditional_pcc_closed_form(model, mask, spec)
        worst = max(worst, abs(mc - closed))
    elapsed = time.perf_counter() - start
    report(2, worst <= 0.0015 and elapsed < 60.0, f"50 models, max |MC - closed| = {worst:.5f} <= 0.0015, {elapsed:.1f}s < 60s")


def test_03_bayes_error_calibration():
    errs = [abs(data.bayes_error(data.dataset_a_spec(s)) - 0.046) for s in range(5)]
    errs += [abs(data.bayes_error(data.dataset_b_spec(s)) - 0.141) for s in range(5)]
    a = data.bayes_error(data.dataset_a_spec(0))
    b = data.bayes_error(data.dataset_b_spec(0))
    report(3, max(errs) < 1e-9, f"A {a:.12f}, B {b:.12f}, max deviation {max(errs):.1e} < 1e-9")


def test_04_exhaustive_small_instance():
    start = time.perf_counter()
    d = 8
    masks = [np.array(bits, dtype=bool) for bits in itertools.product([False, True], repeat=d) if any(bits)]
    failures = []
    front_sizes = []
    for seed in range(5):
        spec = data.equicorrelated_spec(d, 3, 0.1, seed=seed)
        ds = data.generate_synthetic(spec, 30)
        ds = data.inject_label_noise(ds, data.NoiseSpec.symmetric(0.1, seed + 50))
        folds = data.stratified_kfold(ds, 10, seed + 7)
        loss = LossSpec("CWD")
        exact = np.array([(reference_f1(ds, m, loss, folds), m.sum()) for m in masks])
        exact_front = {masks[i].tobytes() for i in brute_force_fronts(exact)[0]}
        exact_f1 = {m.tobytes(): f for m, (f, _) in zip(masks, exact)}
        cfg = GaConfig(population_per_niche=40, niches=2, generations=100, loss=loss, seed=seed)
        result = run_nmfs_ga(ds, cfg, folds=folds)
        front_sizes.append(len(result.front))
        for ind in result.front:
            key = ind.mask.tobytes()
            if key not in exact_front or abs(ind.f1 - exact_f1[key]) > 1e-9:
                failures.append((seed, ind.to_dict()))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 120.0
    report(4, ok, f"5 seeds, GA front sizes {front_sizes}, {len(failures)} members outside the exact front, {elapsed:.1f}s < 120s")


def test_05_dataset_a_band(synth_a_grid):
    docs, code, elapsed = synth_a_grid
    pcc = cell_values(docs, 0.05, "CWD", "pcc_mc")
    mean = float(np.mean(pcc)) if pcc else float("nan")
    ok = code == 0 and len(pcc) == 5 and mean >= 0.80 and elapsed < 20 * 60
    report(5, ok, f"dataset A rho=0.05 CWD: mean PCC {mean:.3f} >= 0.80 over {len(pcc)} replicates (grid {elapsed:.0f}s < 1200s)")


def test_06_noise_monotonicity(synth_a_grid):
    docs, _, _ = synth_a_grid
    parts, ok = [], True
    for kind in ("BA", "CWD"):
        means = [float(np.mean(cell_values(docs, r, kind, "pcc_mc"))) for r in (0.05, 0.10, 0.15)]
        rises = [b - a for a, b in zip(means, means[1:]) if b > a]
        ok &= len(rises) <= 1 and all(r <= 0.02 for r in rises)
        parts.append(f"{kind} " + ", ".join(f"{m:.3f}" for m in means))
    report(6, ok, "mean PCC at rho 0.05, 0.10, 0.15: " + "; ".join(parts) + " (at most one rise, <= 0.02)")


def test_07_breast_cancer_band(tmp_path, breast_cancer_csv):
    cfg = parse_config(
        {
            "task": "csv",
            "csv": {"path": str(breast_cancer_csv), "label_column": "diagnosis", "positive_label": "M", "noise_features": 300},
            "noise_rates": [0.1, 0.2],
            "losses": ["CWD"],
            "replicates": 1,
            "seed": GRID_SEED,
        }
    )
    cfg.apply_fast()
    start = time.perf_counter()
    code = cmd_run(cfg, tmp_path, workers=1)
    elapsed = time.perf_counter() - start
    docs = load_results(tmp_path)
    ba = {r: cell_values(docs, r, "CWD", "balanced_accuracy") for r in (0.1, 0.2)}
    means = {r: float(np.mean(v)) if v else float("nan") for r, v in ba.items()}
    width = {d["config"]["noise_rate"]: d["n_selected"] for d in docs if d["status"] == "ok"}
    ok = code == 0 and means[0.1] >= 0.80 and means[0.2] >= 0.66 and elapsed < 30 * 60
    report(
        7,
        ok,
        f"330 features: rho=0.1 BA {means[0.1]:.3f} >= 0.80, rho=0.2 BA {means[0.2]:.3f} >= 0.66 "
        f"(selected {width.get(0.1)}/{width.get(0.2)} features, {elapsed:.0f}s < 1800s)",
    )


def test_08_loss_identities():
    gen = np.random.default_rng(8)
    checks = {}
    y = gen.integers(0, 2, 50)
    y[:2] = [0, 1]

    def L(kind, h, labels, **kw):
        return eval_loss(LossSpec(kind, **kw), PredictionBatch(h, labels))

    checks["CE zero at perfect predictions"] = L("CE", y.astype(float), y) < 1e-10
    gaps = []
    for _ in range(200):
        t = gen.uniform(0.02, 1.0, 20)
        labels = gen.integers(0, 2, 20)
        h = np.where(labels == 1, t, 1 - t)
        gaps.append(abs(L("GCE", h, labels, q=1e-4) - L("CE", h, labels)))
    checks["GCE -> CE at q=1e-4"] = max(gaps) < 1e-3
    sym = []
    for _ in range(200):
        h = gen.uniform(0.001, 0.999, 20)
        labels = gen.integers(0, 2, 20)
        a = float(gen.uniform())
        sym.append(abs(L("SCE", h, labels, alpha=a) - L("SCE", 1 - h, 1 - labels, alpha=1 - a)))
    checks["SCE flip / alpha swap"] = max(sym) < 1e-12
    checks["PL zero for constant predictor"] = all(
        L("PL", np.full(50, c), y) == 0.0 for c in (0.0, 0.2, 0.7, 1.0)
    )
    X = gen.normal(size=(50, 4))
    base = estimate_centroid(X, y)
    checks["CWD centroid scaling 1/(1-2 rho)"] = all(
        np.allclose(estimate_centroid(X, y, r), base / (1 - 2 * r), rtol=1e-14, atol=0) for r in (0.05, 0.2, 0.45)
    )
    s = gen.normal(size=50)
    checks["AUC monotone invariance"] = all(
        abs(auc(f(s), y) - auc(s, y)) < 1e-15 for f in (np.exp, np.arctan, lambda v: 5 * v + 2, lambda v: v**3)
    )
    failed = [name for name, passed in checks.items() if not passed]
    report(8, not failed, f"{len(checks) - len(failed)}/{len(checks)} identities hold" + (f"; failed: {failed}" if failed else ""))


def test_09_worker_count_determinism(tmp_path):
    doc = {"task": "synthA", "noise_rates": [0.05], "losses": ["BA", "CWD"], "replicates": 1, "seed": GRID_SEED}
    outputs = []
    for workers in (1, 8):
        cfg = parse_config(doc)
        cfg.apply_fast()
        out = tmp_path / f"w{workers}"
        assert cmd_run(cfg, out, workers=workers) == 0
        cells = {}
        for d in load_results(out):
            d.pop("runtime_seconds")
            cells[d["config"]["name"]] = json.dumps(d, sort_keys=True)
        outputs.append(((out / "aggregate.csv").read_bytes(), cells))
    same_csv = outputs[0][0] == outputs[1][0]
    same_cells = outputs[0][1] == outputs[1][1]
    report(9, same_csv and same_cells, f"2-cell grid, workers 1 vs 8: aggregate identical={same_csv}, cell JSON identical={same_cells}")


def test_10_feature_recovery(synth_a_grid):
    docs, _, _ = synth_a_grid
    rec = cell_values(docs, 0.05, "CWD", "informative_recovered")
    hits = sum(r >= 3 for r in rec)
    report(10, len(rec) == 5 and hits >= 4, f"informative features recovered per replicate {rec}; {hits}/5 with >= 3 (need 4)")
