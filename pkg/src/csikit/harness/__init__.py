"""Monte-Carlo campaign harness: configs, seeded trials and CSV/JSON reporting."""
from .config import EXPERIMENTS, ExperimentConfig, config_from_dict, load_config
from .runner import CampaignResult, TrialRecord, run_experiment, run_trial
from .seeds import derive_seed, seed_stream

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "CampaignResult",
    "TrialRecord",
    "config_from_dict",
    "load_config",
    "run_experiment",
    "run_trial",
    "derive_seed",
    "seed_stream",
]
