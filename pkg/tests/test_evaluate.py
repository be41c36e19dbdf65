"""Alignment and metric contracts, checked against brute-force oracles."""

import json

import numpy as np
import pytest

from paraspeech.errors import InvalidInput
from paraspeech.evaluate import (
    dtw_align,
    evaluate_corpus,
    f0_metrics,
    f0_sd,
    msd,
    validate_path,
)


def brute_force_dtw(pred, ref):
    """Minimum path cost by enumerating every monotonic path (lengths <= 6)."""
    d = np.linalg.norm(pred[:, None, :] - ref[None, :, :], axis=2)
    P, R = d.shape

    def walk(i, j):
        here = d[i, j]
        if (i, j) == (P - 1, R - 1):
            return here
        options = []
        if i + 1 < P and j + 1 < R:
            options.append(walk(i + 1, j + 1))
        if i + 1 < P:
            options.append(walk(i + 1, j))
        if j + 1 < R:
            options.append(walk(i, j + 1))
        return here + min(options)

    return walk(0, 0)


class TestDTW:
    def test_identical_sequences_diagonal_zero(self, rng):
        x = rng.standard_normal((7, 4))
        path, cost = dtw_align(x, x)
        assert path == [(i, i) for i in range(7)]
        assert cost == 0.0

    def test_two_to_one_collapse(self):
        path, cost = dtw_align(np.array([[0.0], [0.0]]), np.array([[0.0]]))
        assert path == [(0, 0), (1, 0)]
        assert cost == 0.0

    def test_matches_brute_force_on_200_random_instances(self, rng):
        for _ in range(200):
            p = int(rng.integers(1, 7))
            r = int(rng.integers(1, 7))
            pred = rng.standard_normal((p, 3))
            ref = rng.standard_normal((r, 3))
            path, cost = dtw_align(pred, ref)
            validate_path(path, p, r)
            assert cost == pytest.approx(brute_force_dtw(pred, ref), abs=1e-12)

    def test_ties_prefer_diagonal(self):
        zeros = np.zeros((4, 2))
        path, cost = dtw_align(zeros, zeros)
        assert path == [(i, i) for i in range(4)]

    def test_path_cost_consistency(self, rng):
        pred = rng.standard_normal((5, 3))
        ref = rng.standard_normal((8, 3))
        path, cost = dtw_align(pred, ref)
        direct = sum(float(np.linalg.norm(pred[i] - ref[j])) for i, j in path)
        assert cost == pytest.approx(direct, rel=1e-12)

    @pytest.mark.parametrize("pred,ref", [
        (np.zeros((0, 3)), np.zeros((4, 3))),
        (np.zeros((4, 3)), np.zeros((4, 2))),
        (np.zeros(4), np.zeros(4)),
    ])
    def test_bad_inputs_rejected(self, pred, ref):
        with pytest.raises(InvalidInput):
            dtw_align(pred, ref)


class TestPathValidation:
    def test_wrong_start(self):
        with pytest.raises(InvalidInput):
            validate_path([(1, 0), (1, 1)], 2, 2)

    def test_skipping_step(self):
        with pytest.raises(InvalidInput):
            validate_path([(0, 0), (2, 2)], 3, 3)

    def test_stalling_step(self):
        with pytest.raises(InvalidInput):
            validate_path([(0, 0), (0, 0), (1, 1)], 2, 2)


class TestMSD:
    def test_identical_is_zero(self, rng):
        x = rng.standard_normal((6, 80))
        path, _ = dtw_align(x, x)
        assert msd(x, x, path) == 0.0

    def test_constant_offset_geometry(self, rng):
        ref = rng.standard_normal((10, 80))
        pred = ref + 0.5
        path = [(i, i) for i in range(10)]
        assert msd(pred, ref, path) == pytest.approx(0.5 * np.sqrt(80), rel=1e-12)

    def test_matches_direct_summation(self, rng):
        pred = rng.standard_normal((5, 12))
        ref = rng.standard_normal((7, 12))
        path, _ = dtw_align(pred, ref)
        direct = np.mean([np.linalg.norm(pred[i] - ref[j]) for i, j in path])
        assert msd(pred, ref, path) == pytest.approx(direct, abs=1e-9)

    def test_noise_never_decreases_msd(self, rng):
        ref = rng.standard_normal((20, 16))
        noise = rng.standard_normal((20, 16))
        values = []
        for amp in (0.1, 0.5, 2.0):
            pred = ref + amp * noise
            path = [(i, i) for i in range(20)]
            values.append(msd(pred, ref, path))
        assert values == sorted(values)


class TestF0Metrics:
    def diag(self, n):
        return [(i, i) for i in range(n)]

    def test_identical_fully_voiced(self):
        f0 = np.array([200.0, 210.0, 220.0, 215.0])
        rmse, vuv, corr = f0_metrics(f0, f0, self.diag(4))
        assert rmse == 0.0
        assert vuv == 0.0
        assert corr == pytest.approx(1.0, abs=1e-9)

    def test_constant_shift(self):
        ref = np.array([200.0, 210.0, 220.0, 230.0])
        rmse, vuv, corr = f0_metrics(ref + 10.0, ref, self.diag(4))
        assert rmse == pytest.approx(10.0, abs=1e-12)
        assert vuv == 0.0
        assert corr == pytest.approx(1.0, abs=1e-9)

    def test_hand_built_voicing_disagreements(self):
        # 6 aligned pairs, disagreement at indices 1 and 4 -> 2/6
        pred = np.array([100.0, 0.0, 120.0, 0.0, 140.0, 150.0])
        ref = np.array([110.0, 105.0, 125.0, 0.0, 0.0, 145.0])
        _, vuv, _ = f0_metrics(pred, ref, self.diag(6))
        assert vuv == pytest.approx(100.0 * 2 / 6, abs=1e-9)

    def test_unvoiced_pairs_excluded_from_rmse(self):
        pred = np.array([0.0, 0.0, 200.0, 220.0])
        ref = np.array([0.0, 0.0, 210.0, 230.0])
        rmse, vuv, corr = f0_metrics(pred, ref, self.diag(4))
        assert rmse == pytest.approx(10.0, abs=1e-12)
        assert vuv == 0.0

    def test_single_voiced_pair_has_no_corr(self):
        pred = np.array([0.0, 150.0])
        ref = np.array([0.0, 160.0])
        rmse, vuv, corr = f0_metrics(pred, ref, self.diag(2))
        assert rmse == pytest.approx(10.0)
        assert corr is None

    def test_no_voiced_pairs(self):
        rmse, vuv, corr = f0_metrics(np.zeros(3), np.zeros(3), self.diag(3))
        assert rmse is None and corr is None and vuv == 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInput):
            f0_metrics(np.ones(3), np.ones(5), self.diag(4))

    def test_corr_bounds_on_random_pairs(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 30))
            pred = rng.uniform(80, 300, n)
            ref = rng.uniform(80, 300, n)
            _, _, corr = f0_metrics(pred, ref, self.diag(n))
            if corr is not None:
                assert -1.0 - 1e-9 <= corr <= 1.0 + 1e-9


class TestF0SD:
    def test_constant_is_zero(self):
        assert f0_sd([np.full(10, 200.0)]) == 0.0

    def test_two_values(self):
        assert f0_sd([np.array([100.0, 300.0])]) == pytest.approx(100.0, abs=1e-12)

    def test_pooling_matches_two_pass_oracle(self, toy_store):
        seqs = [u.f0 for u in toy_store.utterances.values()]
        pooled = np.concatenate(seqs)
        voiced = pooled[pooled > 0].astype(np.float64)
        mean = voiced.sum() / voiced.size
        var = ((voiced - mean) ** 2).sum() / voiced.size
        assert f0_sd(seqs) == pytest.approx(float(np.sqrt(var)), abs=1e-9)

    def test_zeros_ignored(self):
        assert f0_sd([np.array([0.0, 100.0, 0.0, 300.0, 0.0])]) == pytest.approx(100.0)

    def test_insufficient_voiced_rejected(self):
        with pytest.raises(InvalidInput):
            f0_sd([np.array([0.0, 150.0, 0.0])])


@pytest.fixture(scope="module")
def toy_maps(toy_store):
    return {
        uid: {"mel": utt.mel, "f0": utt.f0}
        for uid, utt in sorted(toy_store.utterances.items())[:4]
    }


class TestCorpusEvaluate:
    def test_self_evaluation_identities(self, toy_maps):
        report = evaluate_corpus(toy_maps, toy_maps)
        agg = report.aggregate
        assert agg["msd"] == pytest.approx(0.0, abs=1e-12)
        assert agg["vuv_pct"] == 0.0
        assert agg["f0_corr"] == pytest.approx(1.0, abs=1e-9)
        assert agg["f0_sd_hz"] == agg["f0_sd_ref_hz"]
        assert len(report.per_utterance) == len(toy_maps)

    def test_id_mismatch_rejected(self, toy_maps):
        partial = dict(list(toy_maps.items())[:2])
        with pytest.raises(InvalidInput):
            evaluate_corpus(partial, toy_maps)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInput):
            evaluate_corpus({}, {})

    def test_parallel_matches_serial(self, toy_maps):
        serial = evaluate_corpus(toy_maps, toy_maps, workers=1)
        parallel = evaluate_corpus(toy_maps, toy_maps, workers=3)
        assert serial.to_json() == parallel.to_json()

    def test_report_json_shape(self, toy_maps):
        report = json.loads(evaluate_corpus(toy_maps, toy_maps).to_json())
        assert set(report) == {"aggregate", "per_utterance"}
        assert set(report["aggregate"]) == {
            "msd", "f0_rmse_hz", "vuv_pct", "f0_corr", "f0_sd_hz", "f0_sd_ref_hz",
        }
        ids = [row["utterance_id"] for row in report["per_utterance"]]
        assert ids == sorted(ids)

    def test_degraded_copy_scores_worse(self, toy_maps, rng):
        noisy = {
            uid: {"mel": m["mel"] + rng.normal(0, 0.4, m["mel"].shape).astype(np.float32),
                  "f0": m["f0"]}
            for uid, m in toy_maps.items()
        }
        clean = evaluate_corpus(toy_maps, toy_maps)
        degraded = evaluate_corpus(noisy, toy_maps)
        assert degraded.aggregate["msd"] > clean.aggregate["msd"]
