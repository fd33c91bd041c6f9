"""Shared fixtures for the towerforge test suite."""

from __future__ import annotations

import pytest

from towerforge.grammar import default_recipe_table, default_rules
from towerforge.rooms import default_template_library
from towerforge.simulator import EpisodeConfig, Simulator


@pytest.fixture(scope="session")
def rules():
    return default_rules()

@pytest.fixture(scope="session")
def recipes():
    return default_recipe_table()

@pytest.fixture(scope="session")
def library():
    return default_template_library()

@pytest.fixture
def sim_factory():
    """Build a fresh simulator for a given seed pair."""

    def make(tower_seed: int = 0, dynamics_seed: int = 0, **overrides) -> Simulator:
        config = EpisodeConfig(
            tower_seed=tower_seed, dynamics_seed=dynamics_seed, **overrides
        )
        sim = Simulator(config)
        sim.reset()
        return sim

    return make
