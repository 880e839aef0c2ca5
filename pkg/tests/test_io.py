import numpy as np
import pytest

from crossgaze.errors import FormatError
from crossgaze.io import (DATASET_MAGIC, apply_config_values, config_to_text,
                          export_heatmap, read_checkpoint, read_config_text,
                          read_dataset, write_checkpoint, write_dataset,
                          write_pgm)
from crossgaze.scenes import GenConfig, make_dataset


def random_tensors(rng):
    return [
        ("alpha", rng.normal(size=(3, 4))),
        ("beta/weights", rng.normal(size=(2, 2, 5))),
        ("scalar", rng.normal(size=(1,))),
    ]


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        tensors = random_tensors(np.random.default_rng(0))
        path = tmp_path / "model.gzc"
        write_checkpoint(path, tensors)
        loaded = read_checkpoint(path)
        assert [n for n, _ in loaded] == [n for n, _ in tensors]
        for (_, a), (_, b) in zip(tensors, loaded):
            assert a.shape == b.shape
            assert a.tobytes() == b.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.gzc"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError, match="magic"):
            read_checkpoint(path)

    def test_truncation_reports_offset(self, tmp_path):
        tensors = random_tensors(np.random.default_rng(1))
        path = tmp_path / "model.gzc"
        write_checkpoint(path, tensors)
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError) as err:
            read_checkpoint(path)
        assert err.value.offset is not None

    def test_empty_container(self, tmp_path):
        path = tmp_path / "empty.gzc"
        write_checkpoint(path, [])
        assert read_checkpoint(path) == []


class TestDataset:
    def test_round_trip_bit_exact(self, tmp_path):
        samples = make_dataset(GenConfig(), seed=3, count=12)
        path = tmp_path / "data.gzds"
        write_dataset(path, samples)
        loaded = read_dataset(path)
        assert len(loaded) == len(samples)
        for a, b in zip(samples, loaded):
            assert a.source_view.tobytes() == b.source_view.tobytes()
            assert a.head_crop.tobytes() == b.head_crop.tobytes()
            assert a.target_view.tobytes() == b.target_view.tobytes()
            assert a.eye_position.tobytes() == b.eye_position.tobytes()
            assert a.same_scene == b.same_scene
            assert a.camera_angle == b.camera_angle
            assert a.gaze_direction.tobytes() == b.gaze_direction.tobytes()
            if a.gaze_point is None:
                assert b.gaze_point is None
            else:
                assert a.gaze_point.tobytes() == b.gaze_point.tobytes()

    def test_double_round_trip_identical_bytes(self, tmp_path):
        samples = make_dataset(GenConfig(), seed=4, count=6)
        p1, p2 = tmp_path / "a.gzds", tmp_path / "b.gzds"
        write_dataset(p1, samples)
        write_dataset(p2, read_dataset(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_dataset(self, tmp_path):
        path = tmp_path / "none.gzds"
        write_dataset(path, [])
        assert read_dataset(path) == []

    def test_truncated_no_partial_result(self, tmp_path):
        samples = make_dataset(GenConfig(), seed=5, count=4)
        path = tmp_path / "data.gzds"
        write_dataset(path, samples)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(FormatError):
            read_dataset(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "data.gzds"
        path.write_bytes(b"XXXX")
        with pytest.raises(FormatError, match="magic"):
            read_dataset(path)

    def test_magic_value(self):
        assert DATASET_MAGIC == b"GZDS"


class TestPgm:
    def test_header_and_payload(self, tmp_path):
        path = tmp_path / "img.pgm"
        write_pgm(path, np.arange(6, dtype=np.uint8).reshape(2, 3))
        data = path.read_bytes()
        assert data.startswith(b"P5\n3 2\n255\n")
        assert data[len(b"P5\n3 2\n255\n"):] == bytes(range(6))

    def test_export_scales_max_to_255(self, tmp_path):
        density = np.zeros((15, 15))
        density[7, 7] = 0.3
        density[0, 0] = 0.15
        path = tmp_path / "heat.pgm"
        csv_path = export_heatmap(path, density)
        data = path.read_bytes()
        header_end = data.index(b"255\n") + 4
        img = np.frombuffer(data[header_end:], dtype=np.uint8).reshape(240, 240)
        # nearest-neighbor upsample by 16: cell (7,7) spans rows/cols 112..127
        assert img.max() == 255
        assert np.all(img[112:128, 112:128] == 255)
        assert np.all(img[0:16, 0:16] == 128)
        # sidecar keeps the raw values
        rows = [line.split(",") for line in csv_path.read_text().splitlines()]
        raw = np.array([[float(v) for v in row] for row in rows])
        assert np.array_equal(raw, density)

    def test_export_all_zero(self, tmp_path):
        path = tmp_path / "zero.pgm"
        export_heatmap(path, np.zeros((15, 15)))
        data = path.read_bytes()
        img = np.frombuffer(data[data.index(b"255\n") + 4:], dtype=np.uint8)
        assert np.all(img == 0)

    def test_parses_under_third_party_reader(self, tmp_path):
        PIL = pytest.importorskip("PIL.Image")
        density = np.random.default_rng(0).uniform(0, 1, (15, 15))
        path = tmp_path / "heat.pgm"
        export_heatmap(path, density)
        with PIL.open(path) as img:
            assert img.size == (240, 240)
            arr = np.asarray(img)
        expected = np.rint(density / density.max() * 255).astype(np.uint8)
        assert np.array_equal(arr[::16, ::16], expected)


class TestConfigText:
    def test_round_trip(self, tmp_path):
        cfg = GenConfig(image_side=24, no_gaze_fraction=0.2, mixed_scenes=True)
        path = tmp_path / "gen.cfg"
        path.write_text(config_to_text(cfg))
        loaded = apply_config_values(GenConfig(), read_config_text(path))
        assert loaded == cfg

    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "gen.cfg"
        path.write_text("# a comment\n\nimage_side = 16  # inline\n")
        values = read_config_text(path)
        assert values == {"image_side": "16"}

    def test_unknown_key_rejected(self):
        with pytest.raises(FormatError, match="unknown config key"):
            apply_config_values(GenConfig(), {"nope": "1"})

    def test_bad_boolean(self):
        with pytest.raises(FormatError):
            apply_config_values(GenConfig(), {"mixed_scenes": "perhaps"})

    def test_missing_equals(self, tmp_path):
        path = tmp_path / "gen.cfg"
        path.write_text("image_side 16\n")
        with pytest.raises(FormatError):
            read_config_text(path)
