"""Doppler channel charting toolkit.

Settings are ``key=value`` overrides with the same keys as the ``dopcc`` tool's
``--set`` option; values may be numbers, strings or sequences.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence

from . import _core
from ._core import (
    Dataset,
    Error,
    FormatError,
    IoError,
    Model,
    NumericError,
    PhaseTrack,
    PreconditionError,
    SystemConfig,
    UncertaintyModel,
    cira_matrix,
    evaluate,
    fit_affine,
    geodesic,
    integrate_offsets,
    load_dataset,
    load_model,
    pair_loss,
    pair_sample,
    pipeline_keys,
    run_cli,
    scenario_keys,
    set_threads,
    thread_count,
    track_phases,
    wrap_to_pi,
)

__all__ = [
    "Dataset", "Error", "FormatError", "IoError", "Model", "NumericError", "PhaseTrack",
    "PreconditionError", "SystemConfig", "UncertaintyModel", "build_uncertainty", "cira_matrix",
    "evaluate", "fit_affine", "geodesic", "integrate_offsets", "load_dataset", "load_model",
    "pair_loss", "pair_sample", "pipeline_keys", "predict", "run_cli", "scenario_keys",
    "set_threads", "simulate", "split_indices", "thread_count", "track_phases", "train", "wrap_to_pi",
]


def _format(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Sequence):
        # Nested sequences are groups, e.g. base station positions.
        if value and isinstance(value[0], Sequence) and not isinstance(value[0], str):
            return "; ".join(_format(v) for v in value)
        return ",".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _settings(settings: Mapping | None, overrides: dict) -> dict[str, str]:
    merged = dict(settings or {})
    merged.update(overrides)
    return {str(k): _format(v) for k, v in merged.items()}


def simulate(settings: Mapping | None = None, **overrides) -> Dataset:
    """Simulates the default scenario, e.g. ``simulate(duration=30, seed=4)``."""
    return _core.simulate(_settings(settings, overrides))


def build_uncertainty(dataset: Dataset, settings: Mapping | None = None, **overrides) -> UncertaintyModel:
    return _core.build_uncertainty(dataset, _settings(settings, overrides))


def train(dataset: Dataset, loss: str = "doppler", subset: str = "all", settings: Mapping | None = None,
          **overrides) -> tuple[Model, str]:
    """Trains a charting function; returns the model and the training report text."""
    return _core.train(dataset, loss, _settings(settings, overrides), subset)


def predict(model: Model, dataset: Dataset, settings: Mapping | None = None, **overrides):
    """Chart positions (L x 2) of every datapoint."""
    return _core.predict(model, dataset, _settings(settings, overrides))


def split_indices(num_points: int, subset: str = "train", settings: Mapping | None = None, **overrides) -> list[int]:
    return _core.split_indices(num_points, _settings(settings, overrides), subset)
