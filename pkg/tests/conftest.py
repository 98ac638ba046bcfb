import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from evounet.genome import SearchSpace, baseline_genome, default_space

TESTS_DIR = Path(__file__).parent
LOOPBACK = TESTS_DIR / "loopback_evaluator.py"


@pytest.fixture
def space():
    return default_space()


@pytest.fixture
def baseline(space):
    return baseline_genome(space)


@pytest.fixture
def tiny_space():
    """8-genome space, small enough to brute-force."""
    return SearchSpace(channel_choices=(64, 128), channel_code_length=2, skip_code_length=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def loopback_endpoint(mode: str) -> str:
    """Command line for the line-protocol test evaluator."""
    return f"{sys.executable} {LOOPBACK} {mode}"


def run_cli(*args: str, timeout: float = 300) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "evounet", *args],
        capture_output=True,
        text=True,
        timeout=timeout,
    )
