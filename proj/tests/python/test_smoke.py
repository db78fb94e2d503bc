import json
import math

import numpy as np
import pytest

import seguq


def box(shape, lo, hi):
    m = np.zeros(shape, dtype=np.uint8)
    m[tuple(slice(a, b) for a, b in zip(lo, hi))] = 1
    return m


def test_version_and_defaults():
    assert seguq.__version__
    cfg = json.loads(seguq.default_config())
    assert cfg["sampling"]["samples"] == 10
    assert cfg["classify"]["k"] == 18


def test_dice_and_components():
    a = box((4, 4, 4), (0, 0, 0), (2, 2, 2))
    b = box((4, 4, 4), (1, 0, 0), (3, 2, 2))
    assert seguq.dice(a, b) == pytest.approx(0.5)
    assert seguq.dice(a, a) == 1.0
    labels, n = seguq.connected_components(a + box((4, 4, 4), (3, 3, 3), (4, 4, 4)))
    assert n == 2
    assert labels.shape == (4, 4, 4)
    f = seguq.component_f1(a, b)
    assert f["tp"] == 1 and f["fp"] == 0


def test_distance_field_uses_spacing():
    m = np.zeros((1, 1, 3), dtype=np.uint8)
    m[0, 0, 0] = 1
    d = seguq.distance_field(m, spacing=(2.0, 1.0, 1.0))
    assert d[0, 0].tolist() == [0.0, 2.0, 4.0]


def test_entropy_of_samples():
    s = np.stack([np.full((2, 2, 2), 0.25), np.full((2, 2, 2), 0.75)])
    h = seguq.predictive_entropy(s)
    assert np.all(h == math.log(2.0))
    with pytest.raises(seguq.SeguqError):
        seguq.predictive_entropy(np.full((2, 2, 2), 1.5))


def test_uq_metrics():
    e = box((4, 4, 4), (0, 0, 0), (2, 2, 2))
    u = 0.5 * e.astype(float)
    assert seguq.sueo(u, e) == pytest.approx(0.8)
    assert seguq.ueo(u, e, 0.3) == 1.0
    stats = seguq.patch_metrics(e, e, np.zeros((4, 4, 4)), 0.1)
    assert stats["pavpu"] == 1.0
    cov = seguq.lesion_coverage(np.zeros_like(e), e, np.full((4, 4, 4), 0.6), 0.3)
    assert cov["coverage"] == 1.0
    assert cov["undetected_strict"] == 0.0


def test_losses_and_gradients():
    alpha = np.array([[2.0, 1.5], [1.2, 3.0]])
    y = np.array([[1.0, 0.0], [0.0, 1.0]])
    v, g = seguq.evid_xent(alpha, y, gradient=True)
    h = 1e-6
    bumped = alpha.copy()
    bumped[0, 0] += h
    v2, _ = seguq.evid_xent(bumped, y)
    assert g.shape == alpha.shape
    assert (v2 - v) / h == pytest.approx(g[0, 0], rel=1e-4)
    kl, _ = seguq.evid_kl(np.ones((3, 2)), np.eye(2)[[0, 1, 0]])
    assert abs(kl) < 1e-12
    assert seguq.gaussian_kl([1.0], [1.0], [0.0], [1.0]) == pytest.approx(0.5)


def test_synth_sampling_and_features():
    case = seguq.synth(json.dumps({"lesions_per_ring": [1, 1, 1, 1], "noise": 0.5, "seed": 3}))
    assert case["lesions"].shape == case["brain"].shape
    samples = seguq.sample_logits(case["logit_mean"], case["logit_factor"], case["logit_diag"], n=3, seed=1,
                                  spacing=case["spacing"])
    assert samples.shape == (3,) + case["brain"].shape
    again = seguq.sample_logits(case["logit_mean"], case["logit_factor"], case["logit_diag"], n=3, seed=1,
                                spacing=case["spacing"])
    assert np.array_equal(samples, again)
    mean = samples.mean(axis=0)
    feats = seguq.extract_features(mean, seguq.predictive_entropy(samples), case["ventricles"], case["brain"],
                                   spacing=case["spacing"], samples=samples)
    assert feats["seg_global_volume"] > 0
    assert "sstd_seg_r0_volume" in feats
    rings = seguq.ring_partition(case["ventricles"], case["brain"], spacing=case["spacing"])
    assert set(np.unique(rings)) <= {-1, 0, 1, 2, 3}


def test_classifier():
    rng = np.random.default_rng(0)
    y = [i % 2 for i in range(40)]
    x = np.column_stack([rng.normal(size=40), np.array(y) * 4.0 + 0.1 * rng.normal(size=40)])
    model = seguq.fit(x, y, reg=0.1, names=["noise", "signal"])
    p = model.predict_proba(x[0].tolist())
    assert sum(p) == pytest.approx(1.0)
    selected, eliminated, _ = seguq.rfe(x, y, 1, names=["noise", "signal"])
    assert selected == ["signal"] and eliminated == ["noise"]
    m = seguq.eval_metrics([[1.0, 0.0], [0.0, 1.0]], [0, 1], [0, 1])
    assert m["balanced_accuracy"] == 1.0
    assert seguq.qc_labels([0.57, 0.6]) == [1, 0]


def test_vgf_round_trip(tmp_path):
    f = np.array([[[0.0, -0.0, 3.4028235e38]]], dtype=np.float32)
    seguq.write_vgf(str(tmp_path / "f.vgf"), f)
    back = seguq.read_vgf(str(tmp_path / "f.vgf"))
    assert back.dtype == np.float32
    assert back.tobytes() == f.tobytes()
    m = box((2, 2, 2), (0, 0, 0), (1, 1, 1))
    seguq.write_vgf(str(tmp_path / "m.vgf"), m)
    assert np.array_equal(seguq.read_vgf(str(tmp_path / "m.vgf")), m)


def test_empty_pipeline(tmp_path):
    code, text = seguq.run_pipeline(json.dumps({"output_dir": str(tmp_path / "out")}))
    assert code == 0
    assert json.loads(text)["subjects"] == []
