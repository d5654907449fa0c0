#!/usr/bin/env python3
"""
Configuration for the DAN simulator

Settings live in etc/dan-sim/config.json and run state under var/dan-sim/
(logs, dataset cache, scratch), both below $DAN_HOME or the working directory.
Module defaults are read through `config.get('section.key', fallback)`;
per-run parameters come from scenario files instead.
"""

import copy
import json
import os
from pathlib import Path

PROJECT = "dan-sim"

DEFAULTS = {
    "identity": {
        "duplicate_threshold": 0.85,
        "face_dim": 128,
        "genders": ["female", "male", "nonbinary", "undisclosed"],
        "ambitions": ["low", "moderate", "high", "very_high"],
        "job_levels": ["none", "entry", "intermediate", "senior", "executive"],
        "education_levels": ["none", "primary", "secondary", "tertiary", "postgraduate"],
    },
    "ledger": {"validator_threshold": 1_000_000},
    "governance": {"quorum": 0.25, "pass_threshold": 0.5},
    "consensus": {
        "reward_seal": 10,
        "slash": 100,
        "epoch_blocks": 10,
        "min_validators": 23,
        "round_timeout": 10,
        "max_failed_rounds": 50,
    },
    "gating": {"eta_short": 0.05, "eta_long": 0.01},
    "econodynamics": {"zero_sum_epsilon": 1e-9},
    "forecaster": {
        "hidden": 8,
        "blocks": 2,
        "kernel_size": 2,
        "diffusion_steps": 2,
        "padding": "causal",
        "learning_rate": 0.01,
        "optimizer": "adam",
        "batch_size": 8,
    },
    "cache": {"timeout_hours": 168},
    "logging": {"level": "INFO", "file": "dan-sim.log", "max_size": "10MB", "backup_count": 5},
}


def merge(base: dict, override: dict) -> dict:
    """Recursive merge; tables merge key by key, anything else in `override` wins"""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(out.get(key), dict) and isinstance(value, dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


class Config:
    """etc/ + var/ layout and the merged settings tree"""

    def __init__(self, root=None):
        self.root_dir = Path(root or os.environ.get("DAN_HOME", "."))
        self.etc_dir = self.root_dir / "etc" / PROJECT
        self.var_dir = self.root_dir / "var" / PROJECT
        self.config_file = self.etc_dir / "config.json"
        self.logs_dir = self.var_dir / "logs"
        self.cache_dir = self.var_dir / "cache"
        self.temp_dir = self.var_dir / "tmp"

        for path in (self.etc_dir, self.logs_dir, self.cache_dir, self.temp_dir):
            path.mkdir(parents=True, exist_ok=True)

        self.config = self._load_config()

    @staticmethod
    def defaults() -> dict:
        return copy.deepcopy(DEFAULTS)

    def _load_config(self) -> dict:
        """Settings file merged over DEFAULTS; a missing file is written out with the defaults"""
        if not self.config_file.exists():
            self._save_config(DEFAULTS)
            return self.defaults()
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                return merge(DEFAULTS, json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            print(f"⚠️ Ignoring unreadable {self.config_file}: {e}")
            return self.defaults()

    def _save_config(self, settings: dict) -> None:
        try:
            with open(self.config_file, 'w', encoding='utf-8') as f:
                json.dump(settings, f, indent=2)
        except OSError as e:
            print(f"⚠️ Cannot write {self.config_file}: {e}")

    def get(self, key_path: str, default=None):
        """Dotted lookup, e.g. config.get('consensus.reward_seal', 10)"""
        node = self.config
        for key in key_path.split('.'):
            if not isinstance(node, dict) or key not in node:
                return default
            node = node[key]
        return node

    def get_logs_dir(self) -> str:
        return str(self.logs_dir)

    def get_cache_dir(self) -> str:
        return str(self.cache_dir)

    def get_var_dir(self) -> str:
        return str(self.var_dir)


config = Config()
