import numpy as np
import pytest

from sedlab.network import ConvRecurrentNet, ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture
def tiny_model():
    """Under-5k-parameter model used by the gradient suites."""
    cfg = ModelConfig(
        n_mel_in=6,
        conv_channels=(3, 4),
        pool_time=(1, 2),
        pool_freq=(3, 2),
        rnn_hidden=5,
        rnn_layers=1,
        n_classes=3,
        dropout_rate=0.5,
    )
    net = ConvRecurrentNet(cfg)
    assert net.n_params < 5000
    return net


def finite_difference(fn, params, indices, h=1e-4):
    """Central finite differences of a scalar function at selected coords."""
    out = {}
    for i in indices:
        up = params.copy()
        up[i] += h
        down = params.copy()
        down[i] -= h
        out[i] = (fn(up) - fn(down)) / (2.0 * h)
    return out


def finite_difference5(fn, params, indices, h=1e-4):
    """Five-point central stencil: truncation O(h^4), for curvy scalars."""
    out = {}
    for i in indices:
        vals = []
        for step in (h, -h, 2 * h, -2 * h):
            p = params.copy()
            p[i] += step
            vals.append(fn(p))
        f1, f_1, f2, f_2 = vals
        out[i] = (8.0 * (f1 - f_1) - (f2 - f_2)) / (12.0 * h)
    return out


def relative_errors(analytic, numeric: dict, floor=1e-4):
    """|num - ana| / max(|num|, |ana|, floor) per sampled coordinate.

    The floor makes the measure an absolute check where the gradient sits
    at FD round-off scale (|g| ~ 1e-8, noise ~ 1e-12): pure pointwise
    relative error is ill-posed there for any 64-bit difference oracle,
    while real gradient bugs show absolute errors at the magnitude of the
    surrounding gradients (~1e-3 here), far above floor * tolerance.
    """
    errs = []
    for i, num in numeric.items():
        scale = max(abs(num), abs(analytic[i]), floor)
        errs.append(abs(num - analytic[i]) / scale)
    return np.array(errs)
