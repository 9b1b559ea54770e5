import os
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))
os.environ.setdefault("LOG_TO_FILE", "false")

from norms import load_norm_file  # noqa: E402
from pacman import Direction, PacmanEnv, load_layout_file  # noqa: E402
from supervisor import NormativeSupervisor  # noqa: E402


def still_ghost(state, index, legal, rng):
    """Ghost policy that never moves."""
    return Direction.STOP


@pytest.fixture(scope="session")
def mini_layout():
    return load_layout_file(ROOT / "layouts" / "mini.lay")


@pytest.fixture(scope="session")
def tiny_layout():
    return load_layout_file(ROOT / "layouts" / "tiny.lay")


@pytest.fixture(scope="session")
def maze_layout():
    return load_layout_file(ROOT / "layouts" / "classic2g.lay")


@pytest.fixture
def mini_env(mini_layout):
    return PacmanEnv(mini_layout, scared_duration=40, ghost_no_reversal=True, ghost_respawn=True)


@pytest.fixture
def still_env(mini_layout):
    return PacmanEnv(mini_layout, scared_duration=40, ghost_policy=still_ghost)


@pytest.fixture(scope="session")
def benevolent():
    return load_norm_file(ROOT / "norms" / "benevolent.norms")


@pytest.fixture(scope="session")
def benevolent_permit():
    return load_norm_file(ROOT / "norms" / "benevolent_permit.norms")


@pytest.fixture(scope="session")
def vegan():
    return load_norm_file(ROOT / "norms" / "vegan.norms")


@pytest.fixture
def mini_supervisor(mini_env, benevolent):
    return NormativeSupervisor.for_env(benevolent, mini_env)
