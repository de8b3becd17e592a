import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustagg.aggregators import AggregatorSpec
from robustagg.attacks import (
    AttackSpec,
    MimicState,
    assemble,
    attack_vector,
    default_grid,
    honest_reference,
    label_flip,
    mimic_select,
    optimize_eta,
    replicate,
)
from robustagg.preagg import parse_pipeline

from conftest import vector_sets


def test_honest_reference():
    assert honest_reference([[1.0, 2.0], [3.0, 4.0]]).tolist() == [2.0, 3.0]
    assert honest_reference([[5.0]]).tolist() == [5.0]
    with pytest.raises(ValueError):
        honest_reference(np.empty((0, 2)))


def test_attack_vector_examples():
    s = np.array([1.0, -2.0])
    h = np.array([[0.0, 0.0], [2.0, -4.0]])
    assert attack_vector("foe", s, h, 2.0).tolist() == attack_vector("sf", s, h).tolist() == [-1.0, 2.0]
    assert attack_vector("foe", s, h, 0.0).tolist() == s.tolist()
    assert attack_vector("alie", [1.0], [[0.0], [2.0]], 1.0).tolist() == [2.0]
    for kind in ("lf", "mimic"):
        with pytest.raises(ValueError, match="not a vector-formula attack"):
            attack_vector(kind, s, h)


@given(vector_sets(min_n=1))
def test_sf_is_foe_two(h):
    s = honest_reference(h)
    np.testing.assert_array_equal(attack_vector("sf", s, h), attack_vector("foe", s, h, 2.0))


def test_attack_spec_validation():
    with pytest.raises(ValueError):
        AttackSpec("ipm")
    with pytest.raises(ValueError):
        AttackSpec("foe", eta_grid=())
    with pytest.raises(ValueError):
        AttackSpec("alie", eta_grid=(0.0, float("nan")))
    grid = default_grid("foe")
    assert grid.size == 201 and grid[0] == 0.0 and grid[-1] == 10.0
    grid = AttackSpec("alie").grid()
    assert grid[0] == -5.0 and grid[-1] == 5.0 and 0.0 in grid and 1.0 in grid


def test_assemble_layout():
    honest = np.array([[1.0], [2.0], [3.0]])
    mask = np.array([True, False, True, True, False])
    out = assemble(honest, replicate(np.array([9.0]), 2), mask)
    assert out[:, 0].tolist() == [1.0, 9.0, 2.0, 3.0, 9.0]
    batched = assemble(honest, replicate(np.array([[7.0], [8.0]]), 2), mask)
    assert batched.shape == (2, 5, 1)
    assert batched[1, :, 0].tolist() == [1.0, 8.0, 2.0, 3.0, 8.0]


def test_optimize_eta_examples(rng):
    h = rng.normal(size=(6, 3))
    s = honest_reference(h)
    eta, vec, score = optimize_eta("foe", [0.0], h, 2, AggregatorSpec("cwtm", 2))
    assert eta == 0.0 and np.array_equal(vec, s)

    eta, _, _ = optimize_eta("alie", [1.0, -1.0, 3.0], h, 0, AggregatorSpec("cwtm", 0))
    assert eta == 1.0

    n, f = 8, 2
    eta, vec, score = optimize_eta("foe", [0.0, 2.0], h, f, AggregatorSpec("mean"))
    assert eta == 2.0
    np.testing.assert_allclose(vec, -s)
    assert score == pytest.approx(2 * f / n * np.linalg.norm(s), rel=1e-12)

    with pytest.raises(ValueError):
        optimize_eta("foe", [], h, 2, AggregatorSpec("mean"))
    with pytest.raises(ValueError):
        optimize_eta("sf", [0.0], h, 2, AggregatorSpec("mean"))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["foe", "alie"]), st.sampled_from(["cwtm", "nnm+krum", "nnm+gm", "cwmed"]), st.integers(0, 2**32))
def test_optimize_eta_score_dominates_grid(kind, name, seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(7, 2))
    f = 3
    grid = np.linspace(-3, 6, 19)
    pipe = parse_pipeline(name, f)
    eta, vec, score = optimize_eta(kind, grid, h, f, pipe)
    assert pipe.evaluations == grid.size
    s = honest_reference(h)
    # re-score every grid element one at a time
    check = parse_pipeline(name, f)
    for g in grid:
        byz = attack_vector(kind, s, h, g)
        out = check(np.vstack([h, np.tile(byz, (f, 1))]))
        assert np.linalg.norm(out - s) <= score + 1e-9
    assert eta in grid
    np.testing.assert_allclose(vec, attack_vector(kind, s, h, eta))


def test_optimize_eta_ties_go_to_first():
    h = np.array([[1.0], [1.0], [1.0]])
    # zero honest spread makes every ALIE candidate equal to s_bar
    eta, _, score = optimize_eta("alie", [0.5, -2.0, 3.0], h, 1, AggregatorSpec("cwmed"))
    assert eta == 0.5 and score == 0.0


def test_label_flip():
    assert label_flip(3, 10) == 6
    assert label_flip(0, 2) == 1
    for label in range(7):
        assert label_flip(label_flip(label, 7), 7) == label
    with pytest.raises(ValueError):
        label_flip(10, 10)


def test_mimic_examples():
    idx, state = mimic_select([[4.0, 1.0]])
    assert idx == 0
    assert mimic_select([[4.0, 1.0]], state)[0] == 0

    h = np.array([[1.0], [-1.0]])
    idx, state = mimic_select(h)
    dev = h - h.mean(axis=0)
    assert abs(float(dev[idx] @ state.direction)) == pytest.approx(1.0)


def test_mimic_deterministic_and_warmup(rng):
    seq = [rng.normal(size=(5, 3)) for _ in range(6)]

    def run(warmup):
        state, picks, dirs = MimicState(), [], []
        for h in seq:
            idx, state = mimic_select(h, state, warmup)
            picks.append(idx)
            dirs.append(state.direction)
        return picks, dirs

    assert run(None)[0] == run(None)[0]
    _, dirs = run(2)
    for later in dirs[2:]:
        np.testing.assert_array_equal(later, dirs[1])


def test_mimic_power_iteration_finds_dominant_direction(rng):
    # honest deviations stretched along e_0: the direction converges to +-e_0
    state = MimicState()
    for _ in range(30):
        h = rng.normal(size=(20, 3)) * np.array([10.0, 1.0, 0.5])
        idx, state = mimic_select(h, state)
        dev = h - h.mean(axis=0)
        assert idx == int(np.argmax(dev @ state.direction))
    assert abs(state.direction[0]) > 0.99
