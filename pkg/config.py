"""
Configuration management for the norm-guided RL toolkit.
Loads settings from environment variables or .env file.
"""

import os
from pathlib import Path

# Try to load .env file if python-dotenv is available
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

# Project root directory
PROJECT_ROOT = Path(__file__).parent


def _env_bool(name: str, default: bool) -> bool:
    """Read a boolean flag from the environment ("1", "true", "yes", "on" are true)."""
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in ("1", "true", "yes", "on")


# =============================================================================
# Logging Configuration
# =============================================================================
LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_TO_FILE: bool = _env_bool("LOG_TO_FILE", True)

# =============================================================================
# Bundled Data
# =============================================================================
LAYOUTS_DIR: Path = PROJECT_ROOT / "layouts"
NORMS_DIR: Path = PROJECT_ROOT / "norms"
EXPERIMENTS_DIR: Path = PROJECT_ROOT / "experiments"

# =============================================================================
# Environment Defaults
# =============================================================================
# Steps a capsule keeps the ghosts scared
SCARED_DURATION: int = int(os.getenv("NGRL_SCARED_DURATION", "40"))
GHOST_NO_REVERSAL: bool = _env_bool("NGRL_GHOST_NO_REVERSAL", True)
GHOST_RESPAWN: bool = _env_bool("NGRL_GHOST_RESPAWN", True)
MAX_STEPS: int = int(os.getenv("NGRL_MAX_STEPS", "500"))

# =============================================================================
# Learning Defaults
# =============================================================================
ALPHA: float = float(os.getenv("NGRL_ALPHA", "0.2"))
GAMMA: float = float(os.getenv("NGRL_GAMMA", "0.95"))
EPSILON_START: float = float(os.getenv("NGRL_EPSILON_START", "1.0"))
EPSILON_END: float = float(os.getenv("NGRL_EPSILON_END", "0.05"))
PENALTY: float = float(os.getenv("NGRL_PENALTY", "-1"))
WEIGHT: float = float(os.getenv("NGRL_WEIGHT", "100"))
THRESHOLD_N: float = float(os.getenv("NGRL_THRESHOLD_N", "0"))
TRAIN_EPISODES: int = int(os.getenv("NGRL_TRAIN_EPISODES", "9000"))
TEST_EPISODES: int = int(os.getenv("NGRL_TEST_EPISODES", "1000"))
REPETITIONS: int = int(os.getenv("NGRL_REPETITIONS", "5"))
MASTER_SEED: int = int(os.getenv("NGRL_SEED", "0"))
EVAL_WORKERS: int = int(os.getenv("NGRL_EVAL_WORKERS", "1"))

# =============================================================================
# Output Directories
# =============================================================================
LOGS_DIR: Path = PROJECT_ROOT / os.getenv("LOGS_DIR", "logs")
RESULTS_DIR: Path = PROJECT_ROOT / os.getenv("RESULTS_DIR", "results")
CHECKPOINTS_DIR: Path = PROJECT_ROOT / os.getenv("CHECKPOINTS_DIR", "checkpoints")

# Ensure directories exist
for directory in [LOGS_DIR, RESULTS_DIR, CHECKPOINTS_DIR]:
    directory.mkdir(parents=True, exist_ok=True)


def print_config():
    """Print current configuration for debugging."""
    print("=" * 60)
    print("Current Configuration:")
    print("=" * 60)
    print(f"  LOG_LEVEL:        {LOG_LEVEL}")
    print(f"  LOG_TO_FILE:      {LOG_TO_FILE}")
    print(f"  SCARED_DURATION:  {SCARED_DURATION}")
    print(f"  GHOST_NO_REVERSAL:{GHOST_NO_REVERSAL}")
    print(f"  MAX_STEPS:        {MAX_STEPS}")
    print(f"  ALPHA / GAMMA:    {ALPHA} / {GAMMA}")
    print(f"  EPSILON:          {EPSILON_START} -> {EPSILON_END}")
    print(f"  PENALTY / WEIGHT: {PENALTY} / {WEIGHT}")
    print(f"  THRESHOLD_N:      {THRESHOLD_N}")
    print(f"  TRAIN / TEST:     {TRAIN_EPISODES} / {TEST_EPISODES}")
    print(f"  REPETITIONS:      {REPETITIONS}")
    print(f"  RESULTS_DIR:      {RESULTS_DIR}")
    print("=" * 60)


if __name__ == "__main__":
    print_config()
