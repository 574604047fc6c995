import numpy as np
import pytest

from seguq import evaluation, synth, uncertainty
from seguq.errors import ConfigError
from seguq.types import Scenario


def _cfg(**kw):
    base = dict(
        height=48,
        width=40,
        num_classes=5,
        num_predictions=1,
        mis_rate=0.25,
        informativeness=1.0,
        region_count=8,
        ignore_rate=0.0,
        seed=0,
    )
    base.update(kw)
    return synth.SynthConfig(**base)


def _entropy_auroc(result) -> float:
    mean = uncertainty.average_probabilities(result.stack)
    ent = uncertainty.entropy(mean, result.labels.valid)
    return evaluation.auroc(ent, result.target)


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        a = synth.generate(_cfg(seed=123, num_predictions=4, ignore_rate=0.1))
        b = synth.generate(_cfg(seed=123, num_predictions=4, ignore_rate=0.1))
        assert np.array_equal(a.labels.labels, b.labels.labels)
        assert np.array_equal(a.target.misclassified, b.target.misclassified)
        for pa, pb in zip(a.stack.predictions, b.stack.predictions):
            assert pa.data.tobytes() == pb.data.tobytes()

    def test_different_seeds_differ(self):
        a = synth.generate(_cfg(seed=1))
        b = synth.generate(_cfg(seed=2))
        assert not np.array_equal(a.labels.labels, b.labels.labels)


class TestRealizedRate:
    def test_quarter_rate_exact(self):
        result = synth.generate(_cfg(height=100, width=100, mis_rate=0.25))
        assert abs(synth.realized_mis_rate(result) - 0.25) <= 0.0002

    def test_ignore_rate_half(self):
        result = synth.generate(_cfg(ignore_rate=0.5))
        n_pixels = 48 * 40
        assert result.target.num_valid == n_pixels - round(0.5 * n_pixels)

    def test_half_rate_seed_sweep(self):
        for seed in range(10):
            result = synth.generate(_cfg(height=64, width=64, mis_rate=0.5, seed=seed))
            n_valid = result.target.num_valid
            assert result.target.num_misclassified == round(0.5 * n_valid)

    def test_rate_within_spec_window(self):
        for seed in range(5):
            cfg = _cfg(height=32, width=32, mis_rate=0.3, ignore_rate=0.2, seed=seed)
            result = synth.generate(cfg)
            rate = synth.realized_mis_rate(result)
            assert abs(rate - 0.3) <= 2 / (32 * 32)


class TestInformativeness:
    def test_gamma_one_perfect_auroc(self):
        for k in (2, 3, 5, 8):
            result = synth.generate(_cfg(num_classes=k, informativeness=1.0))
            assert _entropy_auroc(result) == 1.0

    def test_gamma_one_mis_pixels_uniform(self):
        result = synth.generate(_cfg(num_classes=4, informativeness=1.0))
        data = result.stack.predictions[0].data
        mis = result.target.misclassified
        picked = data[:, mis]
        assert (picked == np.float32(1 / 4)).all()

    def test_gamma_zero_auroc_near_half(self):
        vals = [
            _entropy_auroc(synth.generate(_cfg(height=64, width=64, informativeness=0.0, seed=s)))
            for s in range(10)
        ]
        assert 0.45 < float(np.mean(vals)) < 0.55

    def test_monotone_in_gamma(self):
        for seed in range(3):
            sweep = [
                _entropy_auroc(
                    synth.generate(_cfg(height=64, width=64, informativeness=g, seed=seed))
                )
                for g in (0.0, 0.25, 0.5, 0.75, 1.0)
            ]
            inversions = [a - b for a, b in zip(sweep[:-1], sweep[1:]) if a > b]
            assert len(inversions) <= 1
            assert all(d < 0.02 for d in inversions)


class TestTargetConsistency:
    @pytest.mark.parametrize("gamma", [0.0, 0.25, 0.5, 0.75, 1.0])
    @pytest.mark.parametrize("n", [1, 5])
    def test_argmax_of_mean_reproduces_target(self, gamma, n):
        result = synth.generate(
            _cfg(informativeness=gamma, num_predictions=n, ignore_rate=0.1, seed=3)
        )
        mean = uncertainty.average_probabilities(result.stack)
        pred = evaluation.argmax_labels(mean)
        tgt = evaluation.misclassification_target(pred, result.labels)
        assert np.array_equal(tgt.misclassified, result.target.misclassified)
        assert np.array_equal(tgt.valid, result.target.valid)


class TestInvariants:
    def test_sum_to_one(self):
        for n in (1, 6):
            result = synth.generate(_cfg(num_predictions=n, seed=9))
            for p in result.stack.predictions:
                dev = np.abs(p.data.sum(axis=0, dtype=np.float64) - 1.0).max()
                assert dev <= 1e-6

    def test_labels_cover_classes(self):
        result = synth.generate(_cfg(region_count=16, seed=4))
        present = np.unique(result.labels.labels[result.labels.valid])
        assert len(present) >= 2

    def test_scenario_defaults(self):
        assert synth.generate(_cfg()).stack.scenario is Scenario.BASE
        assert synth.generate(_cfg(num_predictions=3)).stack.scenario is Scenario.NOISE
        forced = synth.generate(_cfg(num_predictions=5), Scenario.DROP)
        assert forced.stack.scenario is Scenario.DROP

    def test_members_disagree_for_stacks(self):
        result = synth.generate(_cfg(num_predictions=4, informativeness=0.5, seed=5))
        a = result.stack.predictions[0].data
        b = result.stack.predictions[1].data
        assert not np.array_equal(a, b)


class TestConfigValidation:
    def test_rate_too_small_for_image(self):
        with pytest.raises(ConfigError):
            synth.SynthConfig(height=2, width=2, num_classes=3, mis_rate=0.1)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(mis_rate=0.0),
            dict(mis_rate=1.0),
            dict(informativeness=1.5),
            dict(ignore_rate=1.0),
            dict(num_classes=1),
            dict(num_predictions=0),
            dict(region_count=0),
        ],
    )
    def test_invalid_fields(self, kw):
        with pytest.raises(ConfigError):
            _cfg(**kw)
