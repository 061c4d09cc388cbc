"""Federated generative time-series anomaly detection.

Thin convenience layer over the compiled ``_fedgen`` module: configs may be
given as dicts or as paths to json files, and the staged commands mirror the
``fedgen`` CLI (generate_data -> train -> calibrate -> evaluate, plus
comm_report and run_all).
"""

import json as _json
from pathlib import Path as _Path

try:
    from . import _fedgen as _core  # installed package layout
except ImportError:  # pragma: no cover - build-tree layout used by ctest
    import _fedgen as _core

ConfigError = _core.ConfigError
PrereqError = _core.PrereqError

comm_cost = _core.comm_cost
count_shared_params = _core.count_shared_params
time_offsets = _core.time_offsets
point_metrics = _core.point_metrics
pr_auc = _core.pr_auc
predict_tau = _core.predict_tau
calibrate_threshold = _core.calibrate_threshold

__all__ = [
    "ConfigError",
    "PrereqError",
    "generate_data",
    "train",
    "calibrate",
    "evaluate",
    "comm_report",
    "run_all",
    "canonical_config",
    "config_hash",
    "comm_cost",
    "count_shared_params",
    "time_offsets",
    "point_metrics",
    "pr_auc",
    "predict_tau",
    "calibrate_threshold",
]


def _config_text(config):
    if isinstance(config, (str, _Path)):
        return _Path(config).read_text()
    return _json.dumps(config)


def _stage(fn):
    def run(config, *, seed=None, output=None):
        fn(_config_text(config), seed, None if output is None else str(output))

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


generate_data = _stage(_core.generate_data)
train = _stage(_core.train)
calibrate = _stage(_core.calibrate)
evaluate = _stage(_core.evaluate)
comm_report = _stage(_core.comm_report)
run_all = _stage(_core.run_all)


def canonical_config(config):
    """The fully-defaulted canonical form of a config, as a dict."""
    return _json.loads(_core.canonical_config(_config_text(config)))


def config_hash(config):
    """Hash of the canonical config (the identity stamped on artifacts)."""
    return _core.config_hash(_config_text(config))
