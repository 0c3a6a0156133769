import sys
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from lqg_signaling import GameSpec, load_spec

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = resources.files("lqg_signaling") / "fixtures"


def fixture_path(name):
    return Path(str(FIXTURES / name))


@pytest.fixture(scope="session")
def example1():
    return load_spec(fixture_path("example1.json"))


@pytest.fixture(scope="session")
def example2():
    return load_spec(fixture_path("example2.json"))


@pytest.fixture(scope="session")
def scalar3():
    return load_spec(fixture_path("scalar_t3.json"))


def random_game(rng, n=(1, 1), m=(1, 1), horizon=2, pd=True, with_b=True):
    """Random game with PD composite costs (by construction) and PSD noise."""
    N, M = sum(n), sum(m)
    A = [0.8 * rng.standard_normal((k, k)) / np.sqrt(k) for k in n]
    B = [(0.5 * rng.standard_normal((k, M)) if with_b else np.zeros((k, M))) for k in n]
    Q = []
    S1 = []
    for k in n:
        a = rng.standard_normal((k, k))
        Q.append(a @ a.T + 0.2 * np.eye(k))
        b = rng.standard_normal((k, k))
        S1.append(b @ b.T + 0.2 * np.eye(k))
    T, S, P = [], [], []
    for _ in range(2):
        r = rng.standard_normal((M + N, M + N))
        R = r @ r.T / (M + N) + (0.3 if pd else 0.0) * np.eye(M + N)
        R = 0.5 * (R + R.T)
        T.append(R[:M, :M])
        S.append(R[:M, M:])
        P.append(R[M:, M:])
    return GameSpec.build(horizon, n, m, A, B, Q, S1, T, S, P)
