import numpy as np
import pytest

from layerlr.nets import (
    Batch,
    LayerSpec,
    NetworkSpec,
    _im2col,
    _maxpool,
    forward_backward,
    init_state,
    plan_network,
)


def finite_difference_grads(spec, state, batch, h=1e-5):
    """Central-difference loss gradients; perturbs a float64 state in place."""
    grads = []
    for li in range(state.num_layers):
        pair = []
        for arr in (state.weights[li], state.biases[li]):
            flat = arr.reshape(-1)
            g = np.zeros_like(flat)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                lp, _ = forward_backward(spec, state, batch)
                flat[j] = orig - h
                lm, _ = forward_backward(spec, state, batch)
                flat[j] = orig
                g[j] = (lp.loss - lm.loss) / (2.0 * h)
            pair.append(g.reshape(arr.shape))
        grads.append(tuple(pair))
    return grads


def _min_abs_preactivation(spec, state, x):
    """Smallest |pre-activation| feeding a relu; finite differences are
    uninformative when a perturbation can flip a kink."""
    worst = np.inf
    for i, p in enumerate(plan_network(spec)):
        w, b = state.weights[i], state.biases[i]
        if p.kind == "dense":
            if p.flatten_input:
                x = x.reshape(x.shape[0], -1)
            z = x @ w + b
        else:
            bsz, h, wd, _ = x.shape
            z = (_im2col(x, p.kernel_size) @ w.reshape(-1, w.shape[-1]) + b).reshape(
                bsz, h, wd, w.shape[-1]
            )
        if p.activation == "relu":
            worst = min(worst, float(np.abs(z).min()))
            x = np.maximum(z, 0)
        else:
            x = z
        if p.pool:
            x, _ = _maxpool(x)
    return worst


def max_gradient_error(spec, seed, batch_size=4, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Resamples the batch while any relu pre-activation sits near its kink.
    """
    state = init_state(spec, seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    for _ in range(20):
        x = rng.normal(size=(batch_size,) + tuple(spec.input_shape))
        y = rng.integers(0, spec.num_classes, size=batch_size)
        if _min_abs_preactivation(spec, state, x) > 1e-3:
            break
    batch = Batch(inputs=x, labels=y)
    _, analytic = forward_backward(spec, state, batch)
    numeric = finite_difference_grads(spec, state, batch, h=h)
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
            worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


@pytest.fixture(scope="session")
def tiny_mlp_spec():
    return NetworkSpec(
        input_shape=(8,),
        num_classes=4,
        layers=(
            LayerSpec(kind="dense", out_dim=12, activation="relu"),
            LayerSpec(kind="dense", out_dim=4, activation="none"),
        ),
    )
