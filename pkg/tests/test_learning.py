import numpy as np
import pytest

from crossgaze.errors import ConfigError, InputError, TrainingDiverged
from crossgaze.learning import (GRADCHECK_TOLERANCES, TrainConfig, build_model,
                                grid_targets, gradcheck, scene_change_loss,
                                shifted_grids_loss, total_loss, train,
                                write_metrics_csv, METRICS_CSV_HEADER)
from crossgaze.model import NO_GAZE_CLASS, N_CLASSES, N_GRIDS
from crossgaze.scenes import GenConfig, make_dataset

LN_26 = np.log(26.0)


def tiny_train_config(**kw):
    defaults = dict(k=5, image_side=8, head_side=7, epochs=2, batch_size=8,
                    log_eval_samples=20, seed=0)
    defaults.update(kw)
    return TrainConfig(**defaults)


def tiny_data(seed=0, count=24, mixed=False):
    return make_dataset(GenConfig(image_side=8, head_side=7, mixed_scenes=mixed),
                        seed=seed, count=count)


class TestGridTargets:
    def test_center_point_centered_grid(self):
        targets = grid_targets(np.array([0.5, 0.5]))
        assert targets[0] == 12  # row-major (2, 2) of the 5x5 grid

    def test_no_gaze_targets_extra_class(self):
        assert np.all(grid_targets(None) == NO_GAZE_CLASS)

    def test_shifted_targets_clamped(self):
        targets = grid_targets(np.array([0.999, 0.999]))
        assert np.all(targets <= 24)
        assert targets[0] == 24
        # the grids shifted toward the far corner push the cell out; clamped back
        assert np.all(targets >= 0)

    def test_outside_unit_square_rejected(self):
        with pytest.raises(InputError):
            grid_targets(np.array([1.2, 0.5]))
        with pytest.raises(InputError):
            shifted_grids_loss(np.zeros((5, 26)), np.array([-0.1, 0.5]))


class TestShiftedGridsLoss:
    def test_confident_correct_logits_near_zero(self):
        y = np.array([0.5, 0.5])
        targets = grid_targets(y)
        logits = np.zeros((N_GRIDS, N_CLASSES))
        for g in range(N_GRIDS):
            logits[g, targets[g]] = 40.0
        assert shifted_grids_loss(logits, y) < 1e-6

    def test_uniform_logits(self):
        assert shifted_grids_loss(np.zeros((5, 26)), np.array([0.5, 0.5])) == \
            pytest.approx(5 * LN_26, rel=1e-12)

    def test_no_gaze_target(self):
        logits = np.zeros((5, 26))
        logits[:, NO_GAZE_CLASS] = 40.0
        assert shifted_grids_loss(logits, None) < 1e-6

    def test_loss_nonnegative_random(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            loss = shifted_grids_loss(rng.normal(size=(5, 26)) * 5,
                                      rng.uniform(0, 1, 2))
            assert np.isfinite(loss) and loss >= 0.0


class TestSceneChangeLoss:
    def test_half_confidence(self):
        assert scene_change_loss(0.5, True) == pytest.approx(np.log(2.0))
        assert scene_change_loss(0.5, False) == pytest.approx(np.log(2.0))

    def test_confident_same(self):
        assert scene_change_loss(1.0 - 1e-9, True) < 1e-6

    def test_wrong_confident_closed_form(self):
        assert scene_change_loss(0.9, False) == pytest.approx(-np.log(0.1), rel=1e-12)

    def test_clamped_at_extremes(self):
        assert np.isfinite(scene_change_loss(0.0, True))
        assert np.isfinite(scene_change_loss(1.0, False))


class TestTotalLoss:
    def test_extension_off_equals_gaze_loss(self):
        cfg = tiny_train_config()
        model = build_model(cfg)
        sample = next(s for s in tiny_data() if s.gaze_point is not None)
        state = model.forward(sample.source_view[None], sample.target_view[None],
                              sample.head_crop[None], sample.eye_position[None])
        expected = shifted_grids_loss(state.logits[0], sample.gaze_point)
        assert total_loss(model, sample, cfg) == pytest.approx(expected)

    def test_scene_term_absent_when_off(self):
        cfg = tiny_train_config(scene_loss_weight=100.0)
        model = build_model(cfg)
        sample = tiny_data()[0]
        base = total_loss(model, sample, tiny_train_config(scene_loss_weight=0.0))
        assert total_loss(model, sample, cfg) == pytest.approx(base)

    def test_both_terms_positive_sum_strictly_greater(self):
        cfg = tiny_train_config(extension=True, scene_loss_weight=1.0)
        model = build_model(cfg)
        sample = tiny_data(mixed=True)[0]
        state = model.forward(sample.source_view[None], sample.target_view[None],
                              sample.head_crop[None], sample.eye_position[None])
        gaze = shifted_grids_loss(state.logits[0], sample.gaze_point)
        scene = scene_change_loss(float(state.gamma[0]), sample.same_scene)
        total = total_loss(model, sample, cfg)
        assert total == pytest.approx(gaze + scene)
        assert total > gaze and total > scene


class TestTrain:
    def test_deterministic_weights(self):
        samples = tiny_data(count=32)
        cfg = tiny_train_config(epochs=2)
        m1, m2 = build_model(cfg), build_model(cfg)
        train(m1, samples, cfg)
        train(m2, samples, cfg)
        for a, b in zip(m1.parameters(), m2.parameters()):
            assert a.value.tobytes() == b.value.tobytes()

    def test_loss_decreases_memorizing_one_sample(self):
        # one sample, 200 steps: the model must be able to memorize it
        samples = [s for s in tiny_data(count=8) if s.gaze_point is not None][:1]
        cfg = tiny_train_config(epochs=200, batch_size=1, val_fraction=0.0,
                                augment_flips=False, learning_rate=0.003,
                                log_eval_samples=1, patience=1000)
        model = build_model(cfg)
        history = train(model, samples, cfg)
        losses = [r.loss for r in history if r.split == "train"]
        assert losses[-1] < 0.1
        assert losses[-1] < losses[0]

    def test_metrics_log_format(self, tmp_path):
        samples = tiny_data(count=24)
        cfg = tiny_train_config(epochs=2)
        history = train(build_model(cfg), samples, cfg)
        splits = {r.split for r in history}
        assert splits == {"train", "val"}
        path = tmp_path / "log.csv"
        write_metrics_csv(path, history)
        lines = path.read_text().splitlines()
        assert lines[0] == METRICS_CSV_HEADER == "epoch,split,loss,auc,l2,ap"
        assert len(lines) == len(history) + 1

    def test_empty_dataset_rejected(self):
        with pytest.raises(ConfigError):
            train(build_model(tiny_train_config()), [], tiny_train_config())

    def test_divergence_aborts_with_tensor_name(self):
        samples = tiny_data(count=16)
        cfg = tiny_train_config(epochs=1, learning_rate=1.0, optimizer="sgd")
        model = build_model(cfg)
        model.head.grids[0].w.value[:] = np.nan
        with pytest.raises(TrainingDiverged, match="tensor"):
            train(model, samples, cfg)

    def test_flip_augmentation_equivariance(self):
        # flipping inputs and labels together leaves the per-sample loss
        # unchanged when every map in the pipeline is mirrored; verified at
        # the geometry level in test_geometry, here end to end on targets
        from crossgaze.learning import grid_targets
        y = np.array([0.3, 0.7])
        flipped = np.array([1.0 - y[0], y[1]])
        t, tf = grid_targets(y), grid_targets(flipped)
        # columns mirror: class c at (gi, gj) maps to (gi, 4 - gj) with the
        # horizontal shifts swapped
        swap = {0: 0, 1: 1, 2: 2, 3: 4, 4: 3}
        for g in range(N_GRIDS):
            gi, gj = divmod(int(t[g]), 5)
            gi2, gj2 = divmod(int(tf[swap[g]]), 5)
            assert (gi2, gj2) == (gi, 4 - gj)

    def test_validation_split_excluded_from_training(self):
        samples = tiny_data(count=20)
        cfg = tiny_train_config(epochs=1, val_fraction=0.5)
        history = train(build_model(cfg), samples, cfg)
        assert any(r.split == "val" for r in history)

    @pytest.mark.slow
    def test_standard_config_loss_decreases(self):
        # default generator and trainer, long budget with early stopping
        samples = make_dataset(GenConfig(), seed=0)
        cfg = TrainConfig(epochs=100, seed=0)
        history = train(build_model(cfg), samples, cfg)
        losses = [r.loss for r in history if r.split == "train"]
        assert losses[-1] < losses[0]


class TestGradcheck:
    @pytest.mark.parametrize("component", ["dense", "conv"])
    def test_layers_tight_tolerance(self, component):
        report = gradcheck(component, seed=0)
        assert report.max_rel_error < 1e-6, report.table()

    def test_geometry_tolerance(self):
        report = gradcheck("geometry", seed=5)
        assert report.max_rel_error < 1e-4

    def test_full_model_tolerance(self):
        report = gradcheck("model", seed=0)
        assert report.max_rel_error < 1e-3, report.table()

    def test_unknown_component(self):
        with pytest.raises(ConfigError):
            gradcheck("quantum", seed=0)

    def test_report_table_lists_parameters(self):
        report = gradcheck("dense", seed=1)
        table = report.table()
        assert "rel_error" in table
        assert report.passed
        assert report.tolerance == GRADCHECK_TOLERANCES["dense"]
