"""Acceptance suite: one test per release criterion, each printing a verdict line.

The training-dependent criteria share module-scoped fixtures, so the expensive
runs happen once. Run with ``pytest tests/test_acceptance.py -v`` (add ``-s``
to watch the verdict lines as they appear).
"""

import sys
import time
from dataclasses import dataclass

import numpy as np
import pytest

from crossgaze.evaluate import CenterBaseline, ModelPredictor, run_eval
from crossgaze.geometry import (Cone, cone_matrix, frame_point, intersect_map,
                                params_to_affine, plane_frame, ray_cast_oracle,
                                sigma_matrix)
from crossgaze.io import read_dataset, write_dataset
from crossgaze.learning import TrainConfig, build_model, gradcheck, train
from crossgaze.model import GazeModel, load_model, tiny_config
from crossgaze.scenes import GenConfig, make_dataset

SEEDS = (0, 1, 2)


def verdict(criterion: str, passed: bool, detail: str):
    line = f"[{criterion}] {'PASS' if passed else 'FAIL'} - {detail}\n"
    sys.__stdout__.write(line)
    sys.__stdout__.flush()


def random_oracle_config(rng):
    """One non-degenerate cone/plane pair: a forward cone of moderate aperture
    against an orbit-style rotated view plane."""
    apex = np.array([rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), 0.0])
    axis = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0])
    axis /= np.linalg.norm(axis)
    cone = Cone(apex=apex, axis=axis, aperture=float(rng.uniform(0.35, 0.6)),
                head_radius=0.0)
    angle_raw = np.arctanh(rng.uniform(-30.0, 30.0) / 180.0)
    transform = params_to_affine("vertical_rot_trans", [
        angle_raw, rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
        rng.uniform(0.9, 1.3)])
    return cone, plane_frame(transform)


def test_criterion_1_geometry_oracle_equivalence():
    start = time.time()
    rng = np.random.default_rng(2024)
    ious = []
    for i in range(20):
        cone, frame = random_oracle_config(rng)
        analytic = intersect_map(cone, frame, 64, sharpness=50.0) > 0.5
        sampled = ray_cast_oracle(cone, frame, 200000, 64, seed=1000 + i) > 0.5
        union = np.count_nonzero(analytic | sampled)
        ious.append(np.count_nonzero(analytic & sampled) / union if union else 1.0)
    elapsed = time.time() - start
    ok = all(v > 0.95 for v in ious) and elapsed < 30.0
    verdict("criterion 1", ok,
            f"analytic-vs-raycast IoU min {min(ious):.3f} over 20 configs "
            f"(> 0.95 required), {elapsed:.1f}s (< 30s)")
    assert all(v > 0.95 for v in ious), f"worst IoU {min(ious):.4f}"
    assert elapsed < 30.0


def test_criterion_2_quadric_consistency():
    start = time.time()
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(100):
        cone, frame = random_oracle_config(rng)
        sigma = sigma_matrix(cone, frame)
        m = cone_matrix(cone)
        for _ in range(10):
            b1, b2 = rng.uniform(-1.0, 1.0, 2)
            beta = np.array([b1, b2, 1.0])
            p = frame_point(frame, b1, b2)
            direct = (p - cone.apex) @ m @ (p - cone.apex)
            worst = max(worst, abs(beta @ sigma @ beta - direct))
    elapsed = time.time() - start
    ok = worst < 1e-10 and elapsed < 1.0
    verdict("criterion 2", ok,
            f"max |b'Sb - direct quadric| = {worst:.2e} over 100 configs "
            f"(< 1e-10 required), {elapsed:.2f}s (< 1s)")
    assert worst < 1e-10
    assert elapsed < 1.0


def test_criterion_3_gradient_suite():
    start = time.time()
    reports = {name: gradcheck(name, seed=0) for name in
               ("dense", "conv", "geometry", "model")}
    extra = {f"geometry/{s}": gradcheck("geometry", seed=s) for s in (1, 2, 5)}
    reports.update(extra)
    elapsed = time.time() - start
    ok = all(r.passed for r in reports.values()) and elapsed < 120.0
    worst = {k: f"{v.max_rel_error:.1e}" for k, v in reports.items()}
    verdict("criterion 3", ok,
            f"layer/geometry/model gradients vs finite differences {worst}, "
            f"{elapsed:.1f}s (< 2 min)")
    for name, report in reports.items():
        assert report.passed, f"{name}: {report.table()}"
    assert elapsed < 120.0


@dataclass
class TrainedWorld:
    vertical: dict
    identity: dict
    extended: dict
    center_rows: dict
    vertical_rows: dict
    identity_rows: dict
    extended_rows: dict
    vertical_sweeps: dict
    identity_sweeps: dict
    budget_seconds: float


@pytest.fixture(scope="module")
def world():
    """Train everything the learning criteria need, once.

    The criterion-4 budget covers its three base models plus the three
    extended models; the identity ablations train outside that clock.
    """
    budget = 0.0
    vertical, identity, extended = {}, {}, {}
    center_rows, vertical_rows, identity_rows, extended_rows = {}, {}, {}, {}
    vertical_sweeps, identity_sweeps = {}, {}
    for seed in SEEDS:
        t0 = time.time()
        train_set = make_dataset(GenConfig(), seed=seed, count=5000)
        test_set = make_dataset(GenConfig(), seed=1000 + seed, count=1000)
        cfg = TrainConfig(seed=seed)
        model = build_model(cfg)
        train(model, train_set, cfg)
        vertical[seed] = model
        report = run_eval({"model": ModelPredictor(model),
                           "center": CenterBaseline()}, test_set)
        budget += time.time() - t0
        vertical_rows[seed] = report.row("model")
        center_rows[seed] = report.row("center")
        vertical_sweeps[seed] = report.sweep_rows("model")

        t0 = time.time()
        mixed_train = make_dataset(GenConfig(mixed_scenes=True), seed=seed, count=5000)
        mixed_test = make_dataset(GenConfig(mixed_scenes=True), seed=1000 + seed, count=1000)
        xcfg = TrainConfig(seed=seed, extension=True)
        xmodel = build_model(xcfg)
        train(xmodel, mixed_train, xcfg)
        extended[seed] = xmodel
        xreport = run_eval({"model": ModelPredictor(xmodel)}, mixed_test, sweep=False)
        budget += time.time() - t0
        extended_rows[seed] = xreport.row("model")

        icfg = TrainConfig(seed=seed, family="identity")
        imodel = build_model(icfg)
        train(imodel, train_set, icfg)
        identity[seed] = imodel
        ireport = run_eval({"model": ModelPredictor(imodel)}, test_set)
        identity_rows[seed] = ireport.row("model")
        identity_sweeps[seed] = ireport.sweep_rows("model")
    return TrainedWorld(vertical, identity, extended, center_rows, vertical_rows,
                        identity_rows, extended_rows, vertical_sweeps,
                        identity_sweeps, budget)


def test_criterion_4_learning_beats_center_baseline(world):
    details = []
    ok = True
    for seed in SEEDS:
        model_row = world.vertical_rows[seed]
        center_row = world.center_rows[seed]
        auc_ok = model_row.auc >= center_row.auc + 0.10
        l2_ok = model_row.l2 <= center_row.l2 - 0.05
        ok = ok and auc_ok and l2_ok
        details.append(f"seed {seed}: auc {model_row.auc:.3f}/{center_row.auc:.3f} "
                       f"l2 {model_row.l2:.3f}/{center_row.l2:.3f}")
    budget_ok = world.budget_seconds < 1200.0
    verdict("criterion 4", ok and budget_ok,
            "; ".join(details) + f"; train budget {world.budget_seconds:.0f}s (< 1200s)")
    for seed in SEEDS:
        assert world.vertical_rows[seed].auc >= world.center_rows[seed].auc + 0.10
        assert world.vertical_rows[seed].l2 <= world.center_rows[seed].l2 - 0.05
    assert budget_ok


def test_criterion_5_transform_family_ordering(world):
    wins = sum(world.vertical_rows[s].auc > world.identity_rows[s].auc for s in SEEDS)
    pairs = [f"seed {s}: {world.vertical_rows[s].auc:.3f} vs "
             f"{world.identity_rows[s].auc:.3f}" for s in SEEDS]
    verdict("criterion 5", wins >= 2,
            f"rotation family beats identity on {wins}/3 seeds ({'; '.join(pairs)})")
    assert wins >= 2


def test_criterion_6_scene_change_detection(world):
    aps = {s: world.extended_rows[s].ap for s in SEEDS}
    ok = all(v >= 0.80 for v in aps.values())
    verdict("criterion 6", ok,
            "scene-change AP " + ", ".join(f"seed {s}: {v:.3f}" for s, v in aps.items())
            + " (>= 0.80 required, chance 0.5)")
    for s, v in aps.items():
        assert v >= 0.80, f"seed {s} AP {v:.3f}"


def _bucket_auc(sweep_rows):
    """Seed-level near (<= 15 deg) and far (>= 30 deg) bucket AUCs."""
    by_range = {(r.lo_deg, r.hi_deg): r for r in sweep_rows}
    near = by_range[(0.0, 15.0)].auc
    far_rows = [by_range[(30.0, 45.0)], by_range[(45.0, 60.0)]]
    total = sum(r.count for r in far_rows)
    far = sum(r.auc * r.count for r in far_rows) / total
    return near, far


def test_criterion_7_view_difference_sweep(world):
    # bucket AUCs averaged over the three seeds for stability
    vnear, vfar = np.mean([_bucket_auc(world.vertical_sweeps[s]) for s in SEEDS], axis=0)
    inear, ifar = np.mean([_bucket_auc(world.identity_sweeps[s]) for s in SEEDS], axis=0)
    v_drop = vnear - vfar
    i_drop = inear - ifar
    ok = abs(v_drop) <= 0.05 and i_drop > v_drop
    verdict("criterion 7", ok,
            f"full model near {vnear:.3f} far {vfar:.3f} (drop {v_drop:+.3f}, "
            f"|drop| <= 0.05); identity near {inear:.3f} far {ifar:.3f} "
            f"(drop {i_drop:+.3f}, must exceed the full model's)")
    assert abs(v_drop) <= 0.05
    assert i_drop > v_drop


def test_criterion_8_format_round_trips(tmp_path, world):
    # checkpoint: bit-exact round trip through the container
    model = world.vertical[0]
    p1, p2 = tmp_path / "m1.gzc", tmp_path / "m2.gzc"
    model.save(p1)
    load_model(p1).save(p2)
    checkpoint_ok = p1.read_bytes() == p2.read_bytes()

    samples = make_dataset(GenConfig(), seed=9, count=50)
    d1, d2 = tmp_path / "d1.gzds", tmp_path / "d2.gzds"
    write_dataset(d1, samples)
    write_dataset(d2, read_dataset(d1))
    dataset_ok = d1.read_bytes() == d2.read_bytes()

    from PIL import Image
    from crossgaze.io import export_heatmap
    pred = model.predict(samples[0])
    pgm = tmp_path / "heat.pgm"
    export_heatmap(pgm, pred.density)
    with Image.open(pgm) as img:
        pgm_ok = img.size == (240, 240) and img.mode == "L"
        arr = np.asarray(img)
    expected = np.rint(pred.density / pred.density.max() * 255).astype(np.uint8)
    pgm_ok = pgm_ok and np.array_equal(arr[::16, ::16], expected)

    ok = checkpoint_ok and dataset_ok and pgm_ok
    verdict("criterion 8", ok,
            f"checkpoint bit-exact: {checkpoint_ok}; dataset bit-exact: "
            f"{dataset_ok}; PGM readable by a third-party reader: {pgm_ok}")
    assert checkpoint_ok and dataset_ok and pgm_ok
