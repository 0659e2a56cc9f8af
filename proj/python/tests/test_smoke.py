import json
from pathlib import Path

import numpy as np
import pytest

fac_tta = pytest.importorskip("fac_tta")

DATA = Path(__file__).resolve().parents[2] / "tests" / "data"


def test_rfft_matches_numpy():
    rng = np.random.default_rng(0)
    for n in (1, 2, 7, 96, 97):
        x = rng.standard_normal(n)
        np.testing.assert_allclose(fac_tta.rfft(x), np.fft.rfft(x), atol=1e-12)
        np.testing.assert_allclose(fac_tta.irfft(np.fft.rfft(x), n), x, atol=1e-12)


def test_irfft_strict_rejects_imaginary_dc():
    spec = np.zeros(5, dtype=complex)
    spec[0] = 1 + 1j
    with pytest.raises(fac_tta.Error):
        fac_tta.irfft(spec, 8)
    assert fac_tta.irfft(spec, 8, strict=False) == pytest.approx(np.full(8, 1 / 8))


def test_param_counts():
    assert fac_tta.param_count("fac", 7) == 2758
    assert fac_tta.param_count("fac", 7, horizon=192, input_calibration=False) == 2723
    assert fac_tta.param_count("temporal_gcm", 7) == 130382
    with pytest.raises(fac_tta.Error):
        fac_tta.param_count("petsa", 7)


def test_period_estimate():
    t = np.arange(2000)
    values = np.stack([np.sin(2 * np.pi * t / 24), np.cos(2 * np.pi * t / 24)], axis=1)
    assert fac_tta.estimate_period(values, 96) == 24


def test_correction_spectrum_single_tone():
    h = np.arange(32)
    post = np.broadcast_to(np.cos(2 * np.pi * 3 * h / 32)[None, :, None], (2, 32, 1))
    mag = fac_tta.correction_spectrum(np.zeros_like(post), post)
    assert mag.shape == (16,)
    assert mag[2] == pytest.approx(16.0)
    assert np.count_nonzero(mag > 1e-9) == 1


def test_run_and_config_hash(tmp_path):
    cfg = fac_tta.default_config()
    cfg.update(data=str(DATA / "periodic.csv"), lookback=24, horizon=8, batch_rule="fixed:6", out=str(tmp_path))
    res = fac_tta.run(cfg, write_outputs=True)
    assert res["config_hash"] == fac_tta.config_hash(cfg)
    assert res["final"].shape == res["targets"].shape
    assert sum(res["batch_sizes"]) == res["final"].shape[0]
    assert res["report"]["mse"] == pytest.approx(float(np.mean((res["final"] - res["targets"]) ** 2)))
    stored = json.loads((tmp_path / "report.json").read_text())
    assert stored["config_hash"] == res["config_hash"]


def test_frozen_run_equals_source():
    res = fac_tta.run(json.dumps({"data": str(DATA / "periodic.csv"), "lookback": 24, "horizon": 8, "mode": "frozen"}))
    np.testing.assert_array_equal(res["final"], res["source"])


def test_bad_config_raises():
    with pytest.raises(fac_tta.ConfigError):
        fac_tta.config_hash({"horizn": 3})
    with pytest.raises(ValueError):
        fac_tta.run({"data": "/no/such/file.csv"})


def test_audit_streaming_leaks():
    r = fac_tta.audit({"horizon": 96, "lookback": 24, "batch_rule": "fixed:24"}, 200)
    assert r["streaming"]["violations"]
    assert not r["matured"]["violations"]
