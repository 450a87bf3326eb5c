"""Experiment configuration: JSON schema validation plus per-experiment defaults."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema

from ..errors import ConfigError

EXPERIMENTS = (
    "algo-compare",
    "detection",
    "mse-vs-g",
    "overhead-dist",
    "sparsity-dist",
    "tracking",
    "mse-vs-snr",
    "ber-zf",
    "calibrate",
)

DESCRIPTIONS = {
    "algo-compare": "MSE and multiplication counts of DSAMP, OMP, SP, SAMP, J-OMP and oracle LS versus S_a",
    "detection": "support detection probability versus G for SMV, MMV and GMMV sensing (noiseless by default)",
    "mse-vs-g": "MSE versus G for J-OMP, DSAMP and oracle LS at fixed G, plus the adaptive scheme",
    "overhead-dist": "distribution of the adaptively selected overhead G_final",
    "sparsity-dist": "distribution of the acquired sparsity level",
    "tracking": "acquisition versus tracking MSE and overhead over a Q-block window",
    "mse-vs-snr": "MSE versus SNR for fixed-G J-OMP/DSAMP and the two-stage scheme",
    "ber-zf": "downlink ZF-precoded 16-QAM BER for proposed, oracle-bound and perfect CSI",
    "calibrate": "Monte-Carlo calibration of the DSAMP and residual thresholds per SNR",
}

ALL_ALGORITHMS = ("dsamp", "omp", "sp", "samp", "joint_omp", "oracle_ls")

# Overrides on top of the shared defaults.
EXPERIMENT_DEFAULTS = {
    "algo-compare": dict(S_a=[8, 9, 10, 11, 12, 13, 14], G=[30], snr_db=[20.0], sensing="gaussian", trials=500),
    "detection": dict(S_a=[8], G=list(range(8, 21)), noiseless=True, sensing="gaussian", trials=200),
    "mse-vs-g": dict(S_a=[8], G=[8, 10, 12, 14, 16, 18, 20, 24, 28, 32], snr_db=[10.0, 20.0, 30.0], G0=8, trials=200,
                     algorithms=["joint_omp", "dsamp", "oracle_ls"]),
    "overhead-dist": dict(S_a=[8, 10, 12, 14], snr_db=[10.0, 20.0, 30.0], G0=8, trials=1000),
    "sparsity-dist": dict(S_a=[8, 10, 12, 14], snr_db=[10.0, 20.0, 30.0], G0=8, trials=1000),
    "tracking": dict(S_a=[8, 9, 10, 11, 12, 13, 14], snr_db=[20.0], G0=10, trials=500),
    "mse-vs-snr": dict(S_a=[8], snr_db=[10.0, 15.0, 20.0, 25.0, 30.0], G=[15], G0=13, trials=500,
                       algorithms=["joint_omp", "dsamp", "oracle_ls"]),
    "ber-zf": dict(S_a=[8], snr_db=[15.0, 20.0, 25.0, 30.0, 35.0, 40.0], G=[15], G0=13),
    "calibrate": dict(S_a=[8, 10, 12, 14], G=[20, 25, 30], snr_db=[10.0, 15.0, 20.0, 25.0, 30.0], trials=1000),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    M: int = 128
    N: int = 2048
    P: tuple = (64,)
    K: int = 16
    S_a: tuple = (8,)
    cluster_count: int = 2
    snr_db: tuple = (20.0,)
    noiseless: bool = False
    G: tuple = (30,)
    G0: int = 8
    epsilon: object = "auto"
    p_th: object = "auto"
    Q: int = 5
    trials: int | None = None
    seed: int = 0
    out: str = "results"
    workers: int = 1
    algorithms: tuple = ALL_ALGORITHMS
    modes: tuple = ("gmmv", "mmv")
    sensing: str = "pilot"
    symbols: int = 100_000
    feedback_noise: str = "off"
    warm_start: bool = False
    windows: int = 1

    @property
    def trial_count(self) -> int:
        if self.trials is not None:
            return self.trials
        if self.experiment == "ber-zf":
            per_trial = self.K * self.P[0] * self.Q
            return max(1, -(-self.symbols // per_trial))
        return 1

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["trials"] = self.trial_count
        return d

    def with_overrides(self, **kw) -> ExperimentConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        return _checked(replace(self, **kw)) if kw else self


def schema() -> dict:
    text = resources.files(__package__).joinpath("config.schema.json").read_text()
    return json.loads(text)


def _as_tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


_GRIDS = ("P", "S_a", "G", "algorithms", "modes")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate ``raw`` against the schema and fill per-experiment defaults."""
    validator = jsonschema.Draft202012Validator(schema())
    problems = [
        f"{'/'.join(str(p) for p in err.absolute_path) or '<root>'}: {err.message}"
        for err in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    ]
    if problems:
        raise ConfigError(problems)
    merged = dict(EXPERIMENT_DEFAULTS[raw["experiment"]])
    merged.update(raw)
    for key in _GRIDS:
        if key in merged:
            merged[key] = _as_tuple(merged[key])
    if "snr_db" in merged:
        merged["snr_db"] = tuple(float(s) for s in _as_tuple(merged["snr_db"]))
    return _checked(ExperimentConfig(**merged))


def _checked(cfg: ExperimentConfig) -> ExperimentConfig:
    problems = []
    M = cfg.M
    if cfg.trials is not None and cfg.trials < 1:
        problems.append("trials: must be >= 1")
    if cfg.workers < 1:
        problems.append("workers: must be >= 1")
    if any(s > M for s in cfg.S_a):
        problems.append(f"S_a: every sparsity level must be <= M={M}")
    if cfg.cluster_count > min(cfg.S_a):
        problems.append(f"cluster_count: {cfg.cluster_count} exceeds the smallest S_a {min(cfg.S_a)}")
    if any(g > M for g in cfg.G):
        problems.append(f"G: every overhead must be <= M={M}")
    if cfg.G0 > M:
        problems.append(f"G0: must be <= M={M}")
    if cfg.K > M:
        problems.append(f"K: the user count must be <= M={M}")
    if any(p > cfg.N for p in cfg.P):
        problems.append(f"P: pilot subcarriers cannot exceed N={cfg.N}")
    if cfg.experiment in ("algo-compare", "mse-vs-g", "mse-vs-snr"):
        for s in cfg.S_a:
            if any(s > g for g in cfg.G):
                problems.append(f"G: every G must be >= S_a ({s}) for the fixed-overhead solvers")
                break
    if cfg.experiment == "calibrate":
        if not any(g >= s + 2 for s in cfg.S_a for g in cfg.G):
            problems.append("G: calibration needs some G >= S_a + 2")
        if cfg.trials is not None and cfg.trials < 1000:
            problems.append("trials: calibration needs at least 1000 trials per SNR")
    if cfg.noiseless and cfg.experiment not in ("detection", "algo-compare"):
        problems.append("noiseless: only supported by the detection and algo-compare experiments")
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError([f"config file not found: {path}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON (line {exc.lineno}): {exc.msg}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    return config_from_dict(raw)
