import numpy as np
import pytest

from avse.models import ModelConfig, build_model

TOY = dict(n_freq=17, latent_dim=2, visual_dim=4, visual_input_dim=4, hidden=8)


def toy_config(kind="AV-CVAE", **kw) -> ModelConfig:
    return ModelConfig(kind=kind, **{**TOY, **kw})


def toy_model(kind="AV-CVAE", seed=0, **kw):
    return build_model(toy_config(kind, **kw), seed=seed)


def central_difference(fn, array, index, h=1e-5):
    """d fn / d array[index], perturbing ``array`` in place and restoring it."""
    old = array[index]
    array[index] = old + h
    up = fn()
    array[index] = old - h
    down = fn()
    array[index] = old
    return (up - down) / (2 * h)


def relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:>2}. {title}: {detail}")
