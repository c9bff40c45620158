import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerlr.errors import SnapshotError
from layerlr.nets import Batch, LayerSpec, NetworkSpec, forward_backward, init_state
from layerlr.optim import OptimConfig, adam_step
from layerlr.snapshot import restore, snapshot


def make_state(seed=0):
    spec = NetworkSpec(
        (6,), 3,
        (LayerSpec("dense", out_dim=5), LayerSpec("dense", out_dim=3, activation="none")),
    )
    return spec, init_state(spec, seed)


def run_updates(spec, state, batches, lr=0.01):
    cfg = OptimConfig(weight_decay=0.01)
    losses = []
    for x, y in batches:
        stats, grads = forward_backward(spec, state, Batch(x, y))
        state, _ = adam_step(state, grads, [lr] * state.num_layers, cfg)
        losses.append(stats.loss)
    return state, losses


class TestRoundTrip:
    def test_fresh_state_bit_exact(self):
        _, state = make_state()
        assert restore(snapshot(state)).equal_bits(state)

    def test_after_100_steps_bit_exact(self):
        spec, state = make_state(1)
        rng = np.random.default_rng(2)
        batches = [
            (rng.normal(size=(4, 6)).astype(np.float32), rng.integers(0, 3, 4))
            for _ in range(100)
        ]
        state, _ = run_updates(spec, state, batches)
        assert state.step == 100
        assert restore(snapshot(state)).equal_bits(state)

    def test_two_branches_from_one_snapshot_agree(self):
        spec, state = make_state(3)
        blob = snapshot(state)
        rng = np.random.default_rng(4)
        batches = [
            (rng.normal(size=(4, 6)).astype(np.float32), rng.integers(0, 3, 4))
            for _ in range(20)
        ]
        state_a, losses_a = run_updates(spec, restore(blob), batches)
        state_b, losses_b = run_updates(spec, restore(blob), batches)
        assert losses_a == losses_b
        assert state_a.equal_bits(state_b)

    @settings(max_examples=25, deadline=None)
    @given(
        widths=st.lists(st.integers(1, 7), min_size=1, max_size=3),
        seed=st.integers(0, 1000),
        step=st.integers(0, 2**40),
    )
    def test_arbitrary_shapes_round_trip(self, widths, seed, step):
        layers = tuple(LayerSpec("dense", out_dim=w) for w in widths) + (
            LayerSpec("dense", out_dim=2, activation="none"),
        )
        spec = NetworkSpec((3,), 2, layers)
        state = init_state(spec, seed)
        state.step = step
        assert restore(snapshot(state)).equal_bits(state)


class TestDecodeErrors:
    def test_bad_magic(self):
        _, state = make_state()
        blob = b"XXXX" + snapshot(state)[4:]
        with pytest.raises(SnapshotError):
            restore(blob)

    def test_truncation(self):
        _, state = make_state()
        blob = snapshot(state)
        with pytest.raises(SnapshotError):
            restore(blob[: len(blob) - 3])

    def test_trailing_garbage(self):
        _, state = make_state()
        with pytest.raises(SnapshotError):
            restore(snapshot(state) + b"\x00")

    def test_unsupported_version(self):
        _, state = make_state()
        blob = bytearray(snapshot(state))
        blob[4] = 99
        with pytest.raises(SnapshotError):
            restore(bytes(blob))
