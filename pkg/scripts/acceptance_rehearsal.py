"""Dry run of the training-dependent acceptance checks across three seeds.

Prints one line per trained model plus the derived criterion verdicts; used to
pin expected behavior before freezing the acceptance suite.
"""

import time

import numpy as np

from crossgaze.evaluate import CenterBaseline, ModelPredictor, run_eval
from crossgaze.learning import TrainConfig, build_model, train
from crossgaze.scenes import GenConfig, make_dataset

SEEDS = (0, 1, 2)


def far_bucket(report, name):
    buckets = {(b.lo_deg, b.hi_deg): (b.auc, b.count) for b in report.sweep_rows(name)}
    c1, c2 = buckets[(30.0, 45.0)], buckets[(45.0, 60.0)]
    near = buckets[(0.0, 15.0)][0]
    far = (c1[0] * c1[1] + c2[0] * c2[1]) / (c1[1] + c2[1])
    return near, far


def main():
    t_start = time.time()
    rows = {}
    for seed in SEEDS:
        train_set = make_dataset(GenConfig(), seed=seed, count=5000)
        test_set = make_dataset(GenConfig(), seed=1000 + seed, count=1000)
        mixed_train = make_dataset(GenConfig(mixed_scenes=True), seed=seed, count=5000)
        mixed_test = make_dataset(GenConfig(mixed_scenes=True), seed=1000 + seed, count=1000)

        for family in ("vertical_rot_trans", "identity"):
            t0 = time.time()
            cfg = TrainConfig(seed=seed, family=family)
            model = build_model(cfg)
            train(model, train_set, cfg)
            report = run_eval({family: ModelPredictor(model), "center": CenterBaseline()}, test_set)
            near, far = far_bucket(report, family)
            r = report.row(family)
            c = report.row("center")
            rows[(seed, family)] = (r.auc, r.l2, c.auc, c.l2, near, far)
            print(f'seed {seed} {family}: auc {r.auc:.3f} l2 {r.l2:.3f} '
                  f'center {c.auc:.3f}/{c.l2:.3f} near {near:.3f} far {far:.3f} '
                  f'[{time.time()-t0:.0f}s]', flush=True)

        t0 = time.time()
        cfg = TrainConfig(seed=seed, extension=True)
        model = build_model(cfg)
        train(model, mixed_train, cfg)
        report = run_eval({"extended": ModelPredictor(model)}, mixed_test, sweep=False)
        r = report.row("extended")
        rows[(seed, "extended")] = (r.ap,)
        print(f'seed {seed} extended: AP {r.ap:.3f} auc {r.auc:.3f} [{time.time()-t0:.0f}s]', flush=True)

    print("\n--- verdicts ---")
    for seed in SEEDS:
        va, vl, ca, cl, vnear, vfar = rows[(seed, "vertical_rot_trans")]
        ia, il, _, _, inear, ifar = rows[(seed, "identity")]
        ap = rows[(seed, "extended")][0]
        print(f'seed {seed}: c4 auc {"OK" if va >= ca + 0.10 else "FAIL"} '
              f'c4 l2 {"OK" if vl <= cl - 0.05 else "FAIL"} '
              f'c5 order {"OK" if va > ia else "FAIL"} '
              f'c6 ap {"OK" if ap >= 0.80 else "FAIL"}')
    vdeg = np.mean([rows[(s, "vertical_rot_trans")][4] - rows[(s, "vertical_rot_trans")][5] for s in SEEDS])
    ideg = np.mean([rows[(s, "identity")][4] - rows[(s, "identity")][5] for s in SEEDS])
    print(f'c7: vertical degradation {vdeg:+.3f} (|.| <= 0.05 needed), '
          f'identity degradation {ideg:+.3f} (> vertical needed): '
          f'{"OK" if abs(vdeg) <= 0.05 and ideg > vdeg else "FAIL"}')
    print(f'total {time.time()-t_start:.0f}s')


if __name__ == "__main__":
    main()
