"""Five-image smoke set: every exported file must pass the seguq loaders unchanged."""

import json

import numpy as np
import pytest
from PIL import Image

import seguq.tensor_io as tio
from seguq import pipeline
from seguq.thresholding import ThresholdPolicy

from seguq_exporter import ScenarioConfig, TinySegNet, export, folder_dataset, load_model
from seguq_exporter.cli import main as export_main
from seguq_exporter.errors import ScenarioError, SetupError

N_IMAGES = 5
K = 5


@pytest.fixture(scope="module")
def smoke_set(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    images, labels = root / "images", root / "labels"
    images.mkdir()
    labels.mkdir()
    rng = np.random.default_rng(0)
    for i in range(N_IMAGES):
        rgb = rng.integers(0, 256, (24, 32, 3), dtype=np.uint8)
        Image.fromarray(rgb, "RGB").save(images / f"img{i}.png")
        lab = rng.integers(0, K, (24, 32)).astype(np.uint8)
        lab[rng.random((24, 32)) < 0.1] = 255
        Image.fromarray(lab, "L").save(labels / f"img{i}.png")
    return images, labels


@pytest.fixture(scope="module")
def model():
    return TinySegNet(num_classes=K, seed=7)


def _export(smoke_set, model, tmp_path, **kw):
    images, labels = smoke_set
    dataset = folder_dataset(str(images), str(labels))
    config = ScenarioConfig(**kw)
    return export(model, dataset, config, tmp_path)


def _check_conformance(manifest_path, expect_n):
    """Primary-loader round trip with zero invariant violations."""
    manifest = tio.load_manifest(manifest_path)
    assert len(manifest.entries) == N_IMAGES
    for entry in manifest.entries:
        stack = tio.load_probability_stack(entry, manifest.root)
        assert stack.num_predictions == expect_n
        assert stack.num_classes == K
        for p in stack.predictions:
            sums = p.data.sum(axis=0, dtype=np.float64)
            assert np.abs(sums - 1.0).max() <= 1e-3  # pre-renormalization gate
            assert p.data.min() >= 0.0 and p.data.max() <= 1.0
        labels = tio.load_label_map(
            f"{manifest.root}/{entry.label_path}", manifest.ignore_index, manifest.num_classes
        )
        assert labels.labels.shape == (stack.height, stack.width)
    return manifest


class TestScenarios:
    def test_base_single_file(self, smoke_set, model, tmp_path):
        manifest_path = _export(smoke_set, model, tmp_path, scenario="base")
        _check_conformance(manifest_path, expect_n=1)

    def test_noise_ten_passes(self, smoke_set, model, tmp_path):
        manifest_path = _export(smoke_set, model, tmp_path, scenario="noise", passes=10)
        manifest = _check_conformance(manifest_path, expect_n=10)
        # members actually differ
        stack = tio.load_probability_stack(manifest.entries[0], manifest.root)
        assert not np.array_equal(stack.predictions[0].data, stack.predictions[1].data)

    def test_scale_five_factors_same_resolution(self, smoke_set, model, tmp_path):
        manifest_path = _export(smoke_set, model, tmp_path, scenario="scale")
        manifest = _check_conformance(manifest_path, expect_n=5)
        stack = tio.load_probability_stack(manifest.entries[0], manifest.root)
        assert (stack.height, stack.width) == (24, 32)

    def test_drop_passes(self, smoke_set, model, tmp_path):
        manifest_path = _export(smoke_set, model, tmp_path, scenario="drop", passes=4)
        manifest = _check_conformance(manifest_path, expect_n=4)
        stack = tio.load_probability_stack(manifest.entries[0], manifest.root)
        assert not np.array_equal(stack.predictions[0].data, stack.predictions[1].data)

    def test_input_noise_is_base_shaped(self, smoke_set, model, tmp_path):
        manifest_path = _export(
            smoke_set, model, tmp_path, scenario="input-noise", input_noise_std=25.0
        )
        manifest = _check_conformance(manifest_path, expect_n=1)
        assert manifest.entries[0].scenario.value == "base"


class TestDeterminism:
    @pytest.mark.parametrize("scenario", ["noise", "drop"])
    def test_seeded_rerun_is_byte_identical(self, smoke_set, model, tmp_path, scenario):
        a = _export(smoke_set, model, tmp_path / "a", scenario=scenario, passes=3, seed=9)
        b = _export(smoke_set, model, tmp_path / "b", scenario=scenario, passes=3, seed=9)
        ma, mb = tio.load_manifest(a), tio.load_manifest(b)
        for ea, eb in zip(ma.entries, mb.entries):
            for pa, pb in zip(ea.prediction_paths, eb.prediction_paths):
                assert (
                    (a.parent / pa).read_bytes() == (b.parent / pb).read_bytes()
                )

    def test_seed_recorded_in_manifest(self, smoke_set, model, tmp_path):
        path = _export(smoke_set, model, tmp_path, scenario="noise", passes=2, seed=31)
        doc = json.loads(path.read_text())
        assert doc["export_config"]["seed"] == 31
        assert doc["export_config"]["scenario"] == "noise"


class TestPipelineIntegration:
    def test_full_eval_runs_on_export(self, smoke_set, model, tmp_path):
        manifest_path = _export(smoke_set, model, tmp_path / "exp", scenario="noise", passes=4)
        report = pipeline.run_eval(
            manifest_path,
            pipeline.EvalOptions(metric="avg-entropy", policy=ThresholdPolicy("max-frac", budget=0.1)),
            tmp_path / "rep",
        )
        assert report.totals["images"] == N_IMAGES
        assert report.micro["brier"] is not None
        mis_total = report.totals["n_misclassified"]
        assert 0 <= mis_total <= report.totals["n_valid"]

    def test_scharr_metric_works_on_export(self, smoke_set, model, tmp_path):
        manifest_path = _export(smoke_set, model, tmp_path / "exp", scenario="base")
        report = pipeline.run_eval(
            manifest_path,
            pipeline.EvalOptions(metric="scharr", policy=ThresholdPolicy("largest-diff")),
            tmp_path / "rep",
        )
        assert set(report.per_image) == {f"img{i}" for i in range(N_IMAGES)}


class TestCli:
    def test_cli_export(self, smoke_set, tmp_path, capsys):
        images, labels = smoke_set
        code = export_main(
            [
                "--model", "tiny", "--dataset", f"folder:{images}:{labels}",
                "--scenario", "base", "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 0
        assert "exported 5 images" in capsys.readouterr().out
        tio.load_manifest(tmp_path / "out" / "manifest.json")

    def test_missing_dataset_is_setup_error(self, tmp_path, capsys):
        code = export_main(
            ["--model", "tiny", "--dataset", "folder:/nope/a:/nope/b", "--out", str(tmp_path)]
        )
        assert code == 3
        assert "does not exist" in capsys.readouterr().err

    def test_bad_passes_is_usage_error(self, smoke_set, tmp_path):
        images, labels = smoke_set
        with pytest.raises(SystemExit) as exc:
            export_main(
                ["--model", "tiny", "--dataset", f"folder:{images}:{labels}",
                 "--scenario", "noise", "--passes", "1", "--out", str(tmp_path)]
            )
        assert exc.value.code == 2


class TestErrorPaths:
    def test_drop_without_dropout_layers(self, smoke_set, tmp_path):
        model = TinySegNet(num_classes=3)
        model.supports_dropout = False
        with pytest.raises(ScenarioError, match="drop"):
            _export(smoke_set, model, tmp_path, scenario="drop", passes=2)

    def test_real_checkpoints_give_instructions(self):
        for model_id, needle in [
            ("drn-d-22", "github.com/fyu/drn"),
            ("oneformer-convnext-l", "huggingface"),
        ]:
            with pytest.raises(SetupError, match=needle):
                load_model(model_id)

    def test_scale_config_needs_factors(self):
        with pytest.raises(ScenarioError):
            ScenarioConfig(scenario="scale", scale_factors=())
