"""Acceptance suite.

One test per acceptance criterion, each at its stated tolerance, each
printing a PASS line once its assertions hold (run with ``pytest -s`` to
see them live).
"""

import math
import time

import numpy as np
import pytest

from seguq import evaluation, kernels, pipeline, synth, thresholding, uncertainty
from seguq.evaluation import _rank_auroc
from seguq.thresholding import ThresholdPolicy
from seguq.types import ProbabilityMap, VarianceReduction

import oracles
from helpers import labels, pmap, stack_from_array, umap


# one line per criterion; echoed after the run by the conftest summary hook
REPORTED: list[str] = []


def _report(name: str) -> None:
    line = f"[ACCEPTANCE] {name}: PASS"
    REPORTED.append(line)
    print(line)


class TestMetricOracleEquivalence:
    def test_metrics_match_scalar_loop_oracle(self):
        """>=1000 random stacks (K<=8, <=32x32, N<=10), every metric within 1e-6, <60s."""
        rng = np.random.default_rng(2024)
        tol = 1e-6
        start = time.perf_counter()
        n_instances = 0
        for i in range(1000):
            if i < 10:  # a few at the size caps
                n, k, h, w = 10, 8, 32, 32
            else:
                n = int(rng.integers(2, 11))
                k = int(rng.integers(2, 9))
                h = int(rng.integers(2, 10))
                w = int(rng.integers(2, 10))
            arr = oracles.random_stack(rng, n, k, h, w)
            s = stack_from_array(arr)
            p = pmap(arr[0])

            np.testing.assert_allclose(
                uncertainty.variation_ratio(p).values, oracles.vr_loop(arr[0]), atol=tol
            )
            np.testing.assert_allclose(
                uncertainty.probability_margin(p).values, oracles.pm_loop(arr[0]), atol=tol
            )
            np.testing.assert_allclose(
                uncertainty.entropy(p).values, oracles.entropy_loop(arr[0]), atol=tol
            )

            mean = oracles.mean_loop(arr)
            np.testing.assert_allclose(
                uncertainty.averaged_vr(s).values, oracles.vr_loop(mean), atol=tol
            )
            np.testing.assert_allclose(
                uncertainty.averaged_margin(s).values, oracles.pm_loop(mean), atol=tol
            )
            np.testing.assert_allclose(
                uncertainty.averaged_entropy(s).values, oracles.entropy_loop(mean), atol=tol
            )
            np.testing.assert_allclose(
                uncertainty.class_variance(s, VarianceReduction.MEAN_OVER_CLASSES).values,
                oracles.variance_loop(arr, "mean"),
                atol=tol,
            )
            np.testing.assert_allclose(
                uncertainty.class_variance(s, VarianceReduction.MAX_OVER_CLASSES).values,
                oracles.variance_loop(arr, "max"),
                atol=tol,
            )
            np.testing.assert_allclose(
                uncertainty.bald(s).values, np.maximum(oracles.bald_loop(arr), 0.0), atol=tol
            )
            n_instances += 1
        elapsed = time.perf_counter() - start
        assert n_instances >= 1000
        assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s"
        _report(f"metric-oracle equivalence (1000 stacks, 1e-6, {elapsed:.1f}s)")


class TestAurocExactness:
    def test_rank_statistic_vs_pairwise(self):
        """>=1000 instances (<=512 px, tie-heavy included) within 1e-12 of O(n^2)."""
        rng = np.random.default_rng(77)
        worst = 0.0
        checked = 0
        while checked < 1000:
            n = int(rng.integers(4, 513))
            vals = rng.random(n)
            if checked % 2 == 0:  # tie-heavy: quantize to an 8-level grid
                vals = np.floor(vals * 8) / 8
            vals = vals.astype(np.float32)
            pos = rng.random(n) < rng.uniform(0.05, 0.95)
            if pos.all() or not pos.any():
                continue
            got = _rank_auroc(vals, pos)
            worst = max(worst, abs(got - oracles.auroc_pairwise(vals, pos)))
            checked += 1
        assert worst <= 1e-12, f"worst pairwise deviation {worst}"
        _report(f"AUROC exactness (1000 instances, worst dev {worst:.2e})")

    def test_rank_statistic_vs_trapezoid(self):
        """Rank statistic equals trapezoidal ROC area on >=1000 random instances."""
        rng = np.random.default_rng(78)
        worst = 0.0
        checked = 0
        while checked < 1000:
            n = int(rng.integers(4, 257))
            levels = int(rng.integers(2, 12))
            vals = (np.floor(rng.random(n) * levels) / levels).astype(np.float32)
            pos = rng.random(n) < 0.5
            if pos.all() or not pos.any():
                continue
            worst = max(worst, abs(_rank_auroc(vals, pos) - oracles.auroc_trapezoid(vals, pos)))
            checked += 1
        assert worst <= 1e-12
        _report(f"AUROC rank == trapezoid (1000 instances, worst dev {worst:.2e})")


class TestAnalyticFixtures:
    def test_uniform_entropy(self):
        """entropy(uniform, K) = ln K within 1e-7 for K in 2..19 (float64 layer)."""
        for k in range(2, 20):
            p = pmap(np.full((k, 3, 3), 1.0 / k, dtype=np.float32))
            precise = kernels.entropy64(p.data)
            assert abs(float(precise[0, 0]) - math.log(k)) <= 1e-7, f"K={k}"
            # float32 public surface stays within half an ulp of the float64 value
            public = uncertainty.entropy(p).values
            assert abs(float(public[0, 0]) - math.log(k)) <= 2.5e-7, f"K={k}"
        _report("uniform entropy = ln K within 1e-7 for K in 2..19")

    def test_bald_two_one_hots(self):
        """BALD of two disagreeing one-hots (K=2) = ln 2 within 1e-9 (float64 layer)."""
        s = stack_from_array(
            np.array([[[[1.0]], [[0.0]]], [[[0.0]], [[1.0]]]], dtype=np.float32)
        )
        raw = kernels.bald_raw(s.as_array())
        assert abs(float(raw[0, 0]) - math.log(2)) <= 1e-9
        _report("BALD(two one-hots, K=2) = ln 2 within 1e-9")

    def test_brier_uniform(self):
        """Brier of the uniform prediction = (K-1)/K within 1e-7."""
        for k in (2, 4, 7, 19):
            p = pmap(np.full((k, 4, 4), 1.0 / k, dtype=np.float32))
            gt = labels(np.zeros((4, 4), dtype=np.int32), num_classes=k)
            assert abs(evaluation.brier(p, gt) - (k - 1) / k) <= 1e-7
        _report("Brier(uniform) = (K-1)/K within 1e-7")

    def test_bald_nonnegative_on_random_stacks(self):
        """BALD >= -1e-9 before clamping, on random stacks."""
        rng = np.random.default_rng(5)
        low = 0.0
        for _ in range(200):
            n, k = int(rng.integers(2, 10)), int(rng.integers(2, 9))
            arr = oracles.random_stack(rng, n, k, 5, 5)
            low = min(low, float(kernels.bald_raw(arr).min()))
        assert low >= -1e-9
        _report(f"BALD Jensen floor (min raw value {low:.2e} >= -1e-9)")


class TestThresholding:
    def test_budget_never_exceeded(self):
        """10000 random maps, budgets 0.05/0.10/0.15: flagged fraction <= budget."""
        rng = np.random.default_rng(99)
        budgets = (0.05, 0.10, 0.15)
        for i in range(10000):
            h, w = int(rng.integers(1, 16)), int(rng.integers(1, 16))
            vals = rng.random((h, w)).astype(np.float32)
            if i % 3 == 0:  # heavy ties stress the order statistic
                vals = (np.floor(vals * 4) / 4).astype(np.float32)
            valid = rng.random((h, w)) < 0.9
            if not valid.any():
                valid[0, 0] = True
            m = umap(vals, valid)
            beta = budgets[i % 3]
            t = thresholding.max_fraction_threshold(m, beta)
            flagged = thresholding.flag(m, t).flagged.sum()
            assert flagged <= beta * valid.sum()
        _report("max-fraction budget never exceeded (10000 maps)")

    def test_largest_difference_matches_grid_oracle(self):
        """1000 random maps: selected threshold equals the exhaustive scan exactly."""
        rng = np.random.default_rng(100)
        for _ in range(1000):
            h, w = int(rng.integers(2, 10)), int(rng.integers(2, 10))
            vals = rng.random((h, w)).astype(np.float32)
            valid = rng.random((h, w)) < 0.9
            if not valid.any():
                valid[0, 0] = True
            m = umap(vals, valid)
            got = thresholding.largest_difference_threshold(m, 100)
            assert got == oracles.largest_diff_scan(vals, valid, 100)
        _report("largest-difference matches exhaustive grid oracle (1000 maps)")


class TestEndToEndSynthetic:
    def _dataset_auroc(self, gamma: float, seed: int) -> float:
        cfg = synth.SynthConfig(
            height=64, width=64, num_classes=5, num_predictions=1,
            mis_rate=0.25, informativeness=gamma, region_count=8,
            ignore_rate=0.05, seed=seed,
        )
        result = synth.generate(cfg)
        ent = uncertainty.entropy(result.stack.predictions[0], result.labels.valid)
        return evaluation.auroc(ent, result.target)

    def test_gamma_one_micro_and_macro_exactly_one(self, tmp_path):
        from test_cli import run_cli

        out = tmp_path / "ds"
        assert run_cli(
            ["synth", "--out", str(out), "--images", "4", "--height", "48", "--width", "48",
             "--classes", "5", "--mis-rate", "0.25", "--gamma", "1.0", "--seed", "5"]
        ) == 0
        report = pipeline.run_eval(
            out / "manifest.json",
            pipeline.EvalOptions(metric="entropy", policy=ThresholdPolicy("max-frac", budget=0.1)),
            tmp_path / "rep",
        )
        assert report.micro["auroc"] == 1.0
        assert report.macro["auroc"] == 1.0
        _report("end-to-end gamma=1: micro and macro entropy-AUROC exactly 1.0")

    def test_gamma_sweep_monotone(self):
        """10 seeds, gammas {0,.25,.5,.75,1}: at most one inversion, smaller than 0.02."""
        for seed in range(10):
            sweep = [self._dataset_auroc(g, seed) for g in (0.0, 0.25, 0.5, 0.75, 1.0)]
            inversions = [a - b for a, b in zip(sweep[:-1], sweep[1:]) if a > b]
            assert len(inversions) <= 1, f"seed {seed}: {sweep}"
            assert all(d < 0.02 for d in inversions), f"seed {seed}: {sweep}"
        _report("gamma sweep monotone over 10 seeds")

    def test_gamma_zero_auroc_band(self):
        """gamma=0 entropy AUROC averaged over 30 seeds lies in (0.45, 0.55)."""
        vals = [self._dataset_auroc(0.0, seed) for seed in range(30)]
        mean = float(np.mean(vals))
        assert 0.45 < mean < 0.55, f"mean {mean}"
        _report(f"gamma=0 AUROC band (mean {mean:.4f} over 30 seeds)")


class TestMiouEceEquivalence:
    def test_200_random_instances(self):
        """mIoU matches the set-arithmetic oracle exactly; ECE within 1e-9."""
        rng = np.random.default_rng(314)
        for _ in range(200):
            k = int(rng.integers(2, 7))
            p = oracles.random_probs(rng, k, 16, 16)
            gt_arr = rng.integers(0, k, (16, 16)).astype(np.int32)
            gt_arr[rng.random((16, 16)) < 0.1] = 255
            gt = labels(gt_arr, num_classes=k)
            pred = evaluation.argmax_labels(pmap(p))
            cm = evaluation.accumulate_confusion(pred, gt)
            per_class, mean = oracles.iou_sets(np.asarray(pred), gt_arr, 255, k)
            assert evaluation.miou(cm) == mean
            ious = evaluation.iou_per_class(cm)
            for c, v in per_class.items():
                assert ious[c] == v
            bins = int(rng.integers(1, 21))
            conf = p.max(axis=0)[gt.valid]
            correct = (np.asarray(pred) == gt_arr)[gt.valid]
            assert evaluation.ece(pmap(p), gt, bins) == pytest.approx(
                oracles.ece_hand(conf, correct, bins), abs=1e-9
            )
        _report("mIoU exact and ECE within 1e-9 on 200 random instances")


class TestDeterminismAndThroughput:
    def test_eval_reports_byte_identical(self, tmp_path):
        from test_cli import run_cli

        out = tmp_path / "ds"
        assert run_cli(
            ["synth", "--out", str(out), "--images", "3", "--height", "32", "--width", "32",
             "--classes", "4", "--passes", "3", "--scenario", "scale", "--gamma", "0.5",
             "--seed", "8"]
        ) == 0
        opts = pipeline.EvalOptions(metric="avg-entropy", policy=ThresholdPolicy("largest-diff"))
        pipeline.run_eval(out / "manifest.json", opts, tmp_path / "r1")
        pipeline.run_eval(out / "manifest.json", opts, tmp_path / "r2")
        assert (tmp_path / "r1" / "report.json").read_bytes() == (tmp_path / "r2" / "report.json").read_bytes()
        assert (tmp_path / "r1" / "report.csv").read_bytes() == (tmp_path / "r2" / "report.csv").read_bytes()
        _report("eval reports byte-identical on identical inputs")

    def test_base_metric_throughput_full_resolution(self):
        """VR+PM+entropy on one (19, 1024, 2048) float32 map in under 1 s.

        The target is stated for a 4-core desktop; the fused kernel meets it
        on a single core, so no scaling is applied here.
        """
        rng = np.random.default_rng(0)
        r = rng.random((19, 1024, 2048), dtype=np.float32)
        sums = r.sum(axis=0, dtype=np.float64)
        p = ProbabilityMap((r / sums).astype(np.float32))
        uncertainty.base_metrics(ProbabilityMap(p.data[:, :64].copy()))  # warm-up
        start = time.perf_counter()
        maps = uncertainty.base_metrics(p)
        elapsed = time.perf_counter() - start
        assert set(maps) == {"vr", "pm", "entropy"}
        assert elapsed < 1.0, f"took {elapsed:.3f}s (backend {kernels.backend_name()})"
        _report(
            f"throughput: VR+PM+entropy on 19x1024x2048 in {elapsed:.3f}s "
            f"({kernels.backend_name()} backend)"
        )
