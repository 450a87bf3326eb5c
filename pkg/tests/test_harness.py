import json

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from csikit.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from csikit.errors import ConfigError
from csikit.harness import config_from_dict, derive_seed, load_config, run_experiment, seed_stream
from csikit.harness.ber import ber_interval, qam16_demodulate, qam16_modulate, zf_precoder
from csikit.harness.runner import CSV_COLUMNS, aggregate, rows_to_csv
from csikit.harness.experiments import points

SMALL = {"M": 32, "P": 4, "S_a": [4], "cluster_count": 2, "trials": 3, "seed": 11}


def small(experiment, **kw):
    raw = dict(SMALL, experiment=experiment)
    raw.update(kw)
    return config_from_dict(raw)


# config


def test_schema_errors_list_fields():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"experiment": "tracking", "bogus": 1, "M": "many"})
    text = "\n".join(exc.value.problems)
    assert "bogus" in text and "M" in text


def test_unknown_experiment_and_cross_field_checks():
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "nope"})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "algo-compare", "S_a": [20], "G": [10]})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "calibrate", "trials": 10})


def test_defaults_fill(tmp_path):
    cfg = config_from_dict({"experiment": "overhead-dist"})
    assert cfg.G0 == 8 and cfg.trial_count == 1000 and cfg.snr_db == (10.0, 20.0, 30.0)
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"experiment": "ber-zf", "symbols": 100000}))
    assert load_config(path).trial_count == 20
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


# seeds


def test_seed_streams_reproducible_and_independent():
    a = seed_stream(5, 0).random(100)
    np.testing.assert_array_equal(a, seed_stream(5, 0).random(100))
    x = seed_stream(5, 0).integers(0, 4, 10_000)
    y = seed_stream(5, 1).integers(0, 4, 10_000)
    table = np.zeros((4, 4))
    np.add.at(table, (x, y), 1)
    assert chi2_contingency(table).pvalue > 0.01
    assert derive_seed(5, 0) != derive_seed(6, 0)
    with pytest.raises(ValueError):
        derive_seed(-1, 0)


# runner


def test_csv_byte_identical(tmp_path):
    cfg = small("tracking", trials=1, snr_db=[20.0], G0=6, Q=2)
    run_experiment(cfg, out_dir=tmp_path / "a")
    run_experiment(cfg, out_dir=tmp_path / "b")
    a = (tmp_path / "a" / "tracking.csv").read_bytes()
    assert a == (tmp_path / "b" / "tracking.csv").read_bytes()
    assert a.decode().splitlines()[0] == ",".join(CSV_COLUMNS)
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["provenance"]["master_seed"] == 11


def test_different_seeds_differ():
    a = run_experiment(small("overhead-dist", snr_db=[20.0], G0=5), write=False)
    b = run_experiment(small("overhead-dist", snr_db=[20.0], G0=5, seed=12), write=False)
    assert rows_to_csv(a.rows) != rows_to_csv(b.rows)


def test_aggregation_ignores_record_order():
    cfg = small("algo-compare", G=[10], snr_db=[20.0], algorithms=["dsamp", "oracle_ls"])
    res = run_experiment(cfg, write=False)
    again = aggregate(cfg, points(cfg), list(reversed(res.records)))
    assert rows_to_csv(again) == rows_to_csv(res.rows)


def test_histogram_rows():
    res = run_experiment(small("overhead-dist", snr_db=[30.0], G0=5, trials=4), write=False)
    hist = [r for r in res.rows if r["statistic"].startswith("G_final=")]
    assert sum(r["mean"] for r in hist) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "experiment,extra",
    [
        ("algo-compare", {"G": [10], "snr_db": [20.0]}),
        ("detection", {"G": [8], "noiseless": True}),
        ("mse-vs-g", {"G": [8], "snr_db": [20.0], "G0": 5}),
        ("sparsity-dist", {"snr_db": [20.0], "G0": 5}),
        ("mse-vs-snr", {"G": [8], "snr_db": [20.0], "G0": 5, "Q": 2}),
    ],
)
def test_every_experiment_runs(experiment, extra):
    res = run_experiment(small(experiment, trials=2, **extra), write=False)
    assert res.rows and all(r["experiment"] == experiment for r in res.rows)


def test_parallel_matches_serial():
    cfg = small("overhead-dist", snr_db=[20.0], G0=5, trials=4)
    serial = run_experiment(cfg, workers=1, write=False)
    parallel = run_experiment(cfg, workers=2, write=False)
    assert rows_to_csv(serial.rows) == rows_to_csv(parallel.rows)


# BER


def test_qam_roundtrip_and_energy(rng):
    bits = rng.integers(0, 2, size=(5000, 4))
    s = qam16_modulate(bits)
    np.testing.assert_array_equal(qam16_demodulate(s), bits)
    assert np.mean(np.abs(s) ** 2) == pytest.approx(1.0, rel=0.05)
    all_bits = np.array([[(k >> i) & 1 for i in (3, 2, 1, 0)] for k in range(16)])
    pts = qam16_modulate(all_bits)
    # Gray mapping: nearest neighbours differ in exactly one bit
    for a in range(16):
        d = np.abs(pts - pts[a])
        for b in np.flatnonzero(np.isclose(d, 2 / np.sqrt(10))):
            assert np.sum(all_bits[a] != all_bits[b]) == 1


def test_zf_inverts_channel(rng):
    H = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    W, scale, cond = zf_precoder(H)
    np.testing.assert_allclose(H @ W * scale, np.eye(4), atol=1e-10)
    assert np.linalg.norm(W) == pytest.approx(1.0) and cond >= 1


def test_ber_interval():
    ber, lo, hi = ber_interval(10, 1000)
    assert ber == 0.01 and lo < 0.01 < hi
    assert np.isnan(ber_interval(0, 0)[0])


def test_perfect_csi_ber_falls_to_zero():
    cfg = config_from_dict(
        {"experiment": "ber-zf", "M": 32, "K": 4, "P": 8, "Q": 2, "S_a": [4], "G0": 6,
         "snr_db": [5.0, 15.0, 60.0], "symbols": 3000, "seed": 2}
    )
    res = run_experiment(cfg, write=False)
    ber = [res.row("perfect", "ber", snr_db=s)["mean"] for s in cfg.snr_db]
    assert ber[0] > ber[1] > ber[2] and ber[2] == 0


# CLI


def test_cli_codes(tmp_path, capsys):
    assert main(["list-experiments"]) == EXIT_OK
    assert "ber-zf" in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text('{"experiment": "tracking", "M": -3}')
    assert main(["run", str(bad)]) == EXIT_CONFIG
    good = tmp_path / "good.json"
    good.write_text(json.dumps(dict(SMALL, experiment="overhead-dist", snr_db=[20.0], G0=5)))
    out = tmp_path / "out"
    assert main(["run", str(good), "--trials", "1", "--out", str(out)]) == EXIT_OK
    assert (out / "overhead-dist.csv").exists() and (out / "overhead-dist_trials.jsonl").exists()
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(good), "--trials", "1", "--out", str(blocker / "x")]) == EXIT_RUNTIME
    assert main(["calibrate", "--snr-db", "15", "--trials", "5"]) == EXIT_CONFIG
