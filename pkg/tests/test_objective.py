import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccrec import objective as obj
from ccrec.adapter import init_adapter
from ccrec.dataset import build_graph
from conftest import random_bipartite
from gradcheck import phase_gradient_max_error


def make_state(rng, n_users=6, n_items=5, dim=3, n_edges=16, k=2,
               normalize=True, exponent="squared", adapter_layers=2):
    inters = random_bipartite(rng, n_users, n_items, n_edges)
    graph = build_graph(inters)
    state = obj.PhaseState(
        graph=graph,
        user0=rng.normal(size=(n_users, dim)),
        item0=rng.normal(size=(n_items, dim)),
        adapter=init_adapter(dim, adapter_layers, 4, 0.0, seed=11),
        k_layers=k,
        loss=obj.LossConfig(normalize, exponent, 1024),
    )
    return state, inters.pairs


# ---------------------------------------------------------------------------
# alignment
# ---------------------------------------------------------------------------


def test_alignment_zero_on_coinciding_endpoints():
    h = np.array([[1.0, 2.0], [3.0, -4.0]])
    assert obj.alignment_loss([0, 1], [0, 1], h, h, normalize=False) == 0.0
    assert obj.alignment_loss([0, 1], [0, 1], h, h, normalize=True) == 0.0


def test_alignment_hand_value():
    h_u = np.array([[1.0, 0.0]])
    h_i = np.array([[0.0, 1.0]])
    assert obj.alignment_loss([0], [0], h_u, h_i, normalize=False) == pytest.approx(2.0, abs=1e-15)


def test_alignment_scale_invariance_under_normalization(rng):
    h_u = rng.normal(size=(4, 3))
    h_i = rng.normal(size=(4, 3))
    base = obj.alignment_loss([0, 1, 2, 3], [0, 1, 2, 3], h_u, h_i, normalize=True)
    scaled = obj.alignment_loss([0, 1, 2, 3], [0, 1, 2, 3], h_u, 7.5 * h_i, normalize=True)
    assert scaled == pytest.approx(base, abs=1e-12)


def test_alignment_nonnegative(rng):
    h_u = rng.normal(size=(8, 4))
    h_i = rng.normal(size=(8, 4))
    idx = np.arange(8)
    assert obj.alignment_loss(idx, idx, h_u, h_i, normalize=False) >= 0.0


def test_alignment_empty_batch_rejected(rng):
    h = rng.normal(size=(3, 2))
    with pytest.raises(ValueError, match="empty batch"):
        obj.alignment_loss([], [], h, h)


# ---------------------------------------------------------------------------
# uniformity
# ---------------------------------------------------------------------------


def test_uniformity_zero_on_identical_rows():
    rows = np.tile([[0.6, 0.8]], (5, 1))
    assert obj.uniformity_loss(rows, "squared", normalize=False) == pytest.approx(0.0, abs=1e-12)
    assert obj.uniformity_loss(rows, "literal", normalize=False) == pytest.approx(0.0, abs=1e-12)


def test_uniformity_two_point_closed_form():
    rows = np.array([[1.0, 0.0], [0.0, 1.0]])
    expected = np.log((2.0 + 2.0 * np.exp(-4.0)) / 4.0)
    got = obj.uniformity_loss(rows, "squared", normalize=False)
    assert got == pytest.approx(expected, abs=1e-12)


def test_uniformity_single_row_is_zero(rng):
    assert obj.uniformity_loss(rng.normal(size=(1, 4)), "squared") == pytest.approx(0.0, abs=1e-15)
    assert obj.uniformity_loss(rng.normal(size=(1, 4)), "literal") == pytest.approx(0.0, abs=1e-15)


@settings(deadline=None, max_examples=40)
@given(
    st.integers(0, 2**31 - 1),
    st.integers(1, 8),
    st.integers(1, 5),
    st.sampled_from(["squared", "literal"]),
    st.booleans(),
)
def test_uniformity_never_positive(seed, n, dim, exponent, normalize):
    rows = np.random.default_rng(seed).normal(size=(n, dim))
    assert obj.uniformity_loss(rows, exponent, normalize=normalize) <= 1e-12


def test_literal_and_squared_modes_differ(rng):
    rows = rng.normal(size=(4, 3))
    sq = obj.uniformity_loss(rows, "squared", normalize=False)
    lit = obj.uniformity_loss(rows, "literal", normalize=False)
    assert sq != pytest.approx(lit, abs=1e-6)


def test_uniformity_rejects_unknown_mode(rng):
    with pytest.raises(ValueError):
        obj.uniformity_loss(rng.normal(size=(3, 2)), "cubic")


# ---------------------------------------------------------------------------
# phase loss
# ---------------------------------------------------------------------------


def test_phase_loss_is_alignment_plus_uniformity(rng):
    state, pairs = make_state(rng)
    batch = (pairs[:10, 0], pairs[:10, 1])
    loss, _ = obj.phase_loss(obj.ITEM_TUTORING, batch, state)

    from ccrec.graph import propagate

    h_u, h_i = propagate(state.graph, state.user0, state.item0, state.k_layers)
    align = obj.alignment_loss(batch[0], batch[1], h_u, h_i, normalize=True)
    distinct = np.unique(batch[0])
    uniform = obj.uniformity_loss(h_u[distinct], "squared", normalize=True)
    assert loss == pytest.approx(align + uniform, abs=1e-10)


def test_phase_loss_user_phase_composition(rng):
    state, pairs = make_state(rng)
    batch = (pairs[:10, 0], pairs[:10, 1])
    loss, _ = obj.phase_loss(obj.USER_TUTORING, batch, state)

    from ccrec.graph import propagate

    transformed = state.adapter.forward(state.item0, train=False)
    h_u, h_i = propagate(state.graph, state.user0, transformed, state.k_layers)
    align = obj.alignment_loss(batch[1], batch[0], h_i, h_u, normalize=True)
    uniform = obj.uniformity_loss(h_i[np.unique(batch[1])], "squared", normalize=True)
    assert loss == pytest.approx(align + uniform, abs=1e-10)


@pytest.mark.parametrize("phase", [obj.ITEM_TUTORING, obj.USER_TUTORING])
@pytest.mark.parametrize("exponent", ["squared", "literal"])
@pytest.mark.parametrize("normalize", [True, False])
def test_phase_gradients_match_finite_differences(rng, phase, exponent, normalize):
    state, pairs = make_state(rng, normalize=normalize, exponent=exponent)
    batch = (pairs[:12, 0], pairs[:12, 1])
    assert phase_gradient_max_error(phase, batch, state) <= 1e-6


@pytest.mark.parametrize("layers", [1, 2, 3])
def test_user_phase_gradients_across_adapter_depths(rng, layers):
    state, pairs = make_state(rng, adapter_layers=layers)
    batch = (pairs[:12, 0], pairs[:12, 1])
    assert phase_gradient_max_error(obj.USER_TUTORING, batch, state) <= 1e-6


def test_frozen_tables_receive_no_writes(rng):
    state, pairs = make_state(rng)
    batch = (pairs[:10, 0], pairs[:10, 1])

    item_bytes = state.item0.tobytes()
    user_bytes = state.user0.tobytes()
    loss, grads = obj.phase_loss(obj.ITEM_TUTORING, batch, state)
    assert set(grads) == {"user0"}  # no gradient buffer for the frozen side
    assert state.item0.tobytes() == item_bytes
    assert state.user0.tobytes() == user_bytes  # loss evaluation never mutates

    adapter_bytes = [p.tobytes() for p in state.adapter.parameters()]
    loss, grads = obj.phase_loss(obj.USER_TUTORING, batch, state)
    assert set(grads) == {"adapter"}
    assert state.user0.tobytes() == user_bytes
    assert state.item0.tobytes() == item_bytes
    assert [p.tobytes() for p in state.adapter.parameters()] == adapter_bytes


def test_phase_loss_empty_batch_rejected(rng):
    state, _ = make_state(rng)
    with pytest.raises(ValueError, match="empty batch"):
        obj.phase_loss(obj.ITEM_TUTORING, (np.array([], dtype=int), np.array([], dtype=int)), state)


def test_phase_loss_out_of_range_batch(rng):
    state, _ = make_state(rng)
    with pytest.raises(IndexError):
        obj.phase_loss(obj.ITEM_TUTORING, (np.array([99]), np.array([0])), state)


def test_toggles_change_loss_value(rng):
    """Fidelity flags alter the objective but not gradient correctness."""
    values = {}
    for exponent in ("squared", "literal"):
        for normalize in (True, False):
            rng_local = np.random.default_rng(777)
            state, pairs = make_state(rng_local, normalize=normalize, exponent=exponent)
            batch = (pairs[:12, 0], pairs[:12, 1])
            loss, _ = obj.phase_loss(obj.ITEM_TUTORING, batch, state)
            values[(exponent, normalize)] = loss
    assert len(set(round(v, 9) for v in values.values())) == 4
