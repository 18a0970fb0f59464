import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from epimtl import scenario_io, synth


@pytest.fixture(scope="session")
def solved():
    """Lazy session-wide cache of synthesized bundled scenarios."""
    cache: dict[str, tuple] = {}

    def get(name: str):
        if name not in cache:
            scenario = scenario_io.load_scenario(name)
            cache[name] = (scenario, synth.synthesize(scenario.problem()))
        return cache[name]

    return get
