import numpy as np
import pytest

from v2drop.oracle.needle import NEEDLE_CONFIG, build_needle_weights
from v2drop.runtime import DecoderRuntime, ModelConfig, assemble_sequence, generate_weights, save_model

SMALL = ModelConfig(n_layers=4, d_model=32, n_heads=2, d_ff=48, vocab_size=64)


@pytest.fixture(scope="session")
def small_config():
    return SMALL


@pytest.fixture(scope="session")
def small_weights():
    return generate_weights(SMALL, 7)


@pytest.fixture(scope="session")
def small_runtime(small_weights):
    return DecoderRuntime(small_weights, SMALL)


@pytest.fixture(scope="session")
def default_runtime():
    cfg = ModelConfig()
    return DecoderRuntime(generate_weights(cfg, 42), cfg)


@pytest.fixture(scope="session")
def needle_model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("needle") / "needle.v2dm"
    save_model(build_needle_weights(), NEEDLE_CONFIG, path)
    return path


def make_sequence(runtime, m=12, n_sys=2, n_txt=3, seed=0):
    rng = np.random.default_rng(seed)
    cfg = runtime.config
    vis = rng.normal(size=(m, cfg.d_model)).astype(np.float32)
    return assemble_sequence(rng.integers(0, cfg.vocab_size, n_sys), vis,
                             rng.integers(0, cfg.vocab_size, n_txt), runtime.weights["embedding_table"])


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one verdict line per acceptance criterion; all lines are repeated in the summary."""

    def record(number, name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}){': ' + detail if detail else ''}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
