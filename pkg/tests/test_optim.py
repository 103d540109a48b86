import numpy as np
import pytest

from edgesr.nn import build_model, init_params, model_backward, model_forward
from edgesr.optim import CONVENTIONAL_BETAS, DEFAULT_BETAS, AdamState, adam_step
from edgesr.tensors import ShapeMismatchError
from oracles.reference import oracle_adam_scalar


class ScalarLayer:
    """Minimal single-parameter layer for driving adam_step directly."""

    name = "w"

    def __init__(self, w0=0.0, dtype=np.float64):
        self.kernel = np.full((1, 1, 1, 1), w0, dtype=dtype)
        self.bias = np.zeros(1, dtype=dtype)

    def params(self):
        return {"kernel": self.kernel, "bias": self.bias}


class ScalarModel:
    def __init__(self, w0=0.0):
        self.layers = [ScalarLayer(w0)]

    def conv_layers(self):
        return self.layers

    @property
    def w(self):
        return float(self.layers[0].kernel[0, 0, 0, 0])


def grads_for(g):
    return {"w": {"kernel": np.full((1, 1, 1, 1), g, dtype=np.float64), "bias": np.zeros(1)}}


def test_default_betas_and_lr():
    st = AdamState(ScalarModel(), lr=0.001)
    assert (st.beta1, st.beta2) == DEFAULT_BETAS == (0.999, 0.99)
    assert CONVENTIONAL_BETAS == (0.9, 0.999)
    assert st.eps == 1e-8


def test_zero_gradient_leaves_parameters():
    m = ScalarModel(w0=0.5)
    st = AdamState(m)
    adam_step(st, m, grads_for(0.0))
    assert m.w == 0.5
    assert st.t == 1


def test_first_step_hand_calculation():
    # w=0, g=1, lr=0.001: bias correction gives m_hat = v_hat = 1,
    # so w becomes -lr / (1 + eps).
    m = ScalarModel(0.0)
    st = AdamState(m, lr=0.001)
    adam_step(st, m, grads_for(1.0))
    assert m.w == pytest.approx(-0.001 / (1.0 + 1e-8), rel=1e-12)


def test_five_steps_on_quadratic_match_recurrence_oracle():
    # f(w) = w^2, gradient 2w, from w = 1.
    m = ScalarModel(1.0)
    st = AdamState(m, lr=0.001)
    mine = []
    grads = []
    for _ in range(5):
        grads.append(2.0 * m.w)
        adam_step(st, m, grads_for(grads[-1]))
        mine.append(m.w)
    # Replay the recorded gradient sequence through the scripted recurrences.
    expected = oracle_adam_scalar(1.0, grads, lr=0.001, beta1=0.999, beta2=0.99, eps=1e-8)
    for a, b in zip(mine, expected):
        assert a == pytest.approx(b, abs=1e-10)


def test_gradient_rescale_near_invariance():
    # Doubling the gradient changes the first step by < 1e-6 relative.
    outs = []
    for g in (0.05, 0.10):
        m = ScalarModel(0.0)
        adam_step(AdamState(m, lr=0.001), m, grads_for(g))
        outs.append(m.w)
    assert abs(outs[0] - outs[1]) / abs(outs[0]) < 1e-6


def test_shape_mismatch_rejected():
    m = ScalarModel()
    st = AdamState(m)
    bad = {"w": {"kernel": np.zeros((2, 1, 1, 1)), "bias": np.zeros(1)}}
    with pytest.raises(ShapeMismatchError):
        adam_step(st, m, bad)


def test_update_magnitude_bounded_in_training():
    # No per-coordinate update should exceed 10 * lr on a short real run.
    rng = np.random.default_rng(0)
    model = init_params(build_model("srcnn", 2, widths=(4, 2)), 1)
    st = AdamState(model, lr=0.001)
    x = rng.random((4, 1, 16, 16)).astype(np.float32)
    y = rng.random((4, 1, 16, 16)).astype(np.float32)
    for _ in range(20):
        before = {l.name: (l.kernel.copy(), l.bias.copy()) for l in model.conv_layers()}
        out, tape = model_forward(model, x)
        grads, _ = model_backward(model, tape, 2.0 * (out - y) / out.size)
        adam_step(st, model, grads)
        for l in model.conv_layers():
            dk = np.abs(l.kernel - before[l.name][0]).max()
            db = np.abs(l.bias - before[l.name][1]).max()
            assert max(dk, db) <= 10 * st.lr


def test_conventional_betas_flag_changes_trajectory():
    a, b = ScalarModel(1.0), ScalarModel(1.0)
    sa = AdamState(a, betas=DEFAULT_BETAS)
    sb = AdamState(b, betas=CONVENTIONAL_BETAS)
    for _ in range(3):
        adam_step(sa, a, grads_for(2.0 * a.w))
        adam_step(sb, b, grads_for(2.0 * b.w))
    assert a.w != b.w
