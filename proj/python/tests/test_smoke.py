import math
import os
import subprocess

import numpy as np
import pytest

import dopcc


@pytest.fixture(scope="module")
def dataset():
    return dopcc.simulate(duration=30, seed=3)


def test_simulate_shapes(dataset):
    assert len(dataset) == 300
    assert dataset.config.num_bs == 4
    assert dataset.csi.shape == (300, 4, 64)
    assert dataset.csi.dtype == np.complex64
    assert dataset.positions.shape == (300, 3)
    assert dataset.freq_offsets.shape == (300, 4)
    assert np.all(np.diff(dataset.timestamps) > 0)
    assert dataset.config.bs_positions.shape == (4, 3)


def test_simulate_is_seeded(dataset):
    assert dopcc.simulate(duration=30, seed=3) == dataset
    assert not dopcc.simulate(duration=30, seed=4) == dataset


def test_invalid_settings_raise():
    with pytest.raises(dopcc.PreconditionError):
        dopcc.simulate(speed=5)
    with pytest.raises(dopcc.PreconditionError):
        dopcc.simulate(colour="red")


def test_save_and_load(dataset, tmp_path):
    path = tmp_path / "d.dpcc"
    dataset.save(path)
    assert dopcc.load_dataset(path) == dataset
    (tmp_path / "bad.dpcc").write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(dopcc.Error):
        dopcc.load_dataset(tmp_path / "bad.dpcc")


def test_noiseless_loss_at_truth():
    ds = dopcc.simulate(duration=20, snr_db="inf", freq_noise_std=0, multipath="none")
    track, flagged, warning = dopcc.track_phases(ds)
    assert flagged == 0.0 and not warning
    unc = dopcc.build_uncertainty(ds)
    assert unc.sigma(0, 1, 7, 7) == unc.beta
    truth = ds.positions_2d
    delta_phi, sigma = dopcc.pair_sample(track, unc, 5, 150)
    loss, g1, g2 = dopcc.pair_loss(truth[5], truth[150], delta_phi, sigma, ds.config)
    assert loss < 1e-6
    shifted, _, _ = dopcc.pair_loss(truth[5] + 1.0, truth[150], delta_phi, sigma, ds.config)
    assert shifted > loss


def test_metrics_and_geodesic():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5, 5, size=(40, 2))
    report = dopcc.evaluate(pts, pts, neighbors=3)
    assert report["mae"] == 0.0 and report["ct"] == 1.0 and report["tw"] == 1.0
    a, b = dopcc.fit_affine(2.0 * pts + 1.0, pts)
    assert np.allclose(a, 0.5 * np.eye(2)) and np.allclose(b, -0.5)
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    g = dopcc.geodesic(d, 39)
    assert np.allclose(g, d)


def test_train_predict_evaluate(dataset, tmp_path):
    quick = dict(epochs=2, pairs_per_epoch=300, hidden_widths=[32, 16], frame_iterations=3)
    model, report = dopcc.train(dataset, **quick)
    assert report.startswith("epoch pairs batch_size")
    est = dopcc.predict(model, dataset)
    assert est.shape == (300, 2) and np.all(np.isfinite(est))
    raw = dopcc.evaluate(est, dataset.positions_2d)
    fitted = dopcc.evaluate(est, dataset.positions_2d, affine=True)
    assert fitted["drms"] <= raw["drms"]
    model.save(tmp_path / "m.fcf")
    assert dopcc.load_model(tmp_path / "m.fcf") == model
    again, _ = dopcc.train(dataset, **quick)
    assert again == model
    cira, _ = dopcc.train(dataset, loss="cira", **quick)
    assert cira.num_bs == 4
    assert len(dopcc.split_indices(300, "test")) == 60


def test_run_cli(dataset, tmp_path):
    path = tmp_path / "d.dpcc"
    dataset.save(path)
    out = tmp_path / "phases.csv"
    assert dopcc.run_cli(["phase-dump", "--dataset", str(path), "-o", str(out)]) == 0
    assert out.read_text().startswith("t,phi_1")
    assert dopcc.run_cli(["simulate"]) == 2


@pytest.mark.skipif("DOPCC_CLI" not in os.environ, reason="tool path not provided")
def test_tool_matches_module(dataset, tmp_path):
    out = tmp_path / "d.dpcc"
    subprocess.run([os.environ["DOPCC_CLI"], "simulate", "--set", "duration=30", "--seed", "3", "-o", str(out)],
                   check=True, capture_output=True)
    assert dopcc.load_dataset(out) == dataset
