"""Shipped scenario files reproducing the reference simulations and flight setups."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

NAMES = ("sim1", "sim1_scaled", "sim2", "sim3", "sim4", "exp1", "exp2")


def preset_path(name: str) -> Path:
    if name not in NAMES:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(NAMES)}")
    return Path(str(resources.files(__name__).joinpath(f"{name}.toml")))


def preset_data(name: str) -> dict:
    from ..scenario import load_file

    return load_file(preset_path(name))


def presets(seed: int | None = None) -> dict:
    """All presets as built scenarios."""
    from ..scenario import build

    return {name: build(preset_data(name), seed=seed, default_name=name) for name in NAMES}
