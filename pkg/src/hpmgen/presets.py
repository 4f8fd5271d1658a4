"""Named training configurations.

The ``*-paper`` presets reproduce the full-scale experiments (hours of CPU
time); the ``desk-*`` presets are reduced configurations sized for a laptop
CPU and are the ones exercised by the acceptance suite.
"""

from __future__ import annotations

from .errors import ValidationError
from .model import Scenario
from .training import TrainConfig

PRESETS: dict[str, TrainConfig] = {
    "desk-small": TrainConfig(
        scenario=Scenario.INPUT_GEN,
        n_fun=50,
        n_data=500,
        n_colloc=1000,
        schedule=((200, 1e-3), (100, 1e-4)),
        seed=0,
    ),
    "inputgen-paper": TrainConfig(
        scenario=Scenario.INPUT_GEN,
        n_fun=200,
        n_data=1000,
        n_colloc=5000,
        schedule=((1000, 1e-3), (1000, 1e-4)),
        seed=0,
    ),
    "paramgen-desk": TrainConfig(
        scenario=Scenario.PARAM_GEN,
        n_fun=50,
        n_data=500,
        n_colloc=1000,
        schedule=((60, 1e-3), (40, 1e-4)),
        seed=0,
        d_values=(1e-3, 5e-3),
        k_values=(1e-3, 5e-3),
    ),
    "paramgen-paper": TrainConfig(
        scenario=Scenario.PARAM_GEN,
        n_fun=200,
        n_data=500,
        n_colloc=1000,
        schedule=((1000, 1e-3), (2000, 1e-4)),
        seed=0,
        d_values=(1e-3, 3e-3, 5e-3),
        k_values=(1e-3, 3e-3, 5e-3),
    ),
    "domaingen-desk": TrainConfig(
        scenario=Scenario.DOMAIN_GEN,
        n_fun=50,
        n_data=500,
        n_colloc=1000,
        schedule=((60, 1e-3), (40, 1e-4)),
        seed=0,
        lengths=(1.0, 1.25, 1.5),
    ),
    "domaingen-paper": TrainConfig(
        scenario=Scenario.DOMAIN_GEN,
        n_fun=200,
        n_data=500,
        n_colloc=1000,
        schedule=((1000, 1e-3), (2000, 1e-4)),
        seed=0,
        lengths=(1.0, 1.1, 1.2, 1.3, 1.4, 1.5),
    ),
}


def get_preset(name: str) -> TrainConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None
