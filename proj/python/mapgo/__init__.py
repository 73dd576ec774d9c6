"""Python front end for the mapgo training core.

Configs travel as plain dicts and run logs come back as lists of dicts, one per
JSON-lines record.
"""

import json

from . import _mapgo
from ._mapgo import CheckpointError, ContractViolation, TwoDWorld, derive_seed, goal_reward

__version__ = _mapgo.__version__

__all__ = [
    "CheckpointError",
    "ContractViolation",
    "TwoDWorld",
    "default_config",
    "derive_seed",
    "goal_reward",
    "load_config",
    "normalize_config",
    "read_curve",
    "train",
]


def default_config():
    return json.loads(_mapgo.default_config())


def normalize_config(config):
    """Validate `config` and return it with every omitted field filled in."""
    return json.loads(_mapgo.normalize_config(json.dumps(config)))


def load_config(path):
    with open(path) as f:
        return normalize_config(json.load(f))


def train(config, out_dir=None, resume=False, seed=None):
    text = _mapgo.run_training(json.dumps(config), str(out_dir or ""), resume, seed)
    return [json.loads(line) for line in text.splitlines() if line]


def read_curve(path):
    """Rows of a curve.csv as dicts."""
    return [
        {"env_steps": steps, "success_rate": rate, "mean_return": ret}
        for steps, rate, ret in _mapgo.read_curve_csv(str(path))
    ]
