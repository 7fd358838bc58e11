import numpy as np
import pytest

from efla.scan import SequenceBatch


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_batch(rng, L, d_k, d_v, key_norm=(0.0, 1.0), beta=(0.0, 1.0)):
    K = rng.standard_normal((L, d_k))
    K /= np.linalg.norm(K, axis=1, keepdims=True)
    K *= rng.uniform(*key_norm, size=L)[:, None]
    return SequenceBatch(rng.standard_normal((L, d_k)), K,
                         rng.standard_normal((L, d_v)), rng.uniform(*beta, size=L))


def unit(rng, d):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
