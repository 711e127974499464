import itertools
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objground.errors import ConfigurationError, SizeGuardError
from objground.splitter import (
    SplitProblem,
    check_feasible,
    greedy,
    objective,
    relative_gap,
    solve_exact,
    solve_heuristic,
)


def problem(a, o, c=None, n_target=1, floors=(), top_floor=0.0):
    a = np.asarray(a, dtype=float)
    c = np.ones((len(a), 2)) if c is None else c
    return SplitProblem(a, o, c, n_target, list(floors), top_floor)


def brute_best(p):
    """Plain-Python enumeration with statistics.pvariance; first minimum wins."""
    best = None
    for combo in itertools.combinations(range(p.n_videos), p.n_target):
        a = [sum(p.interactions[i][j] for i in combo) for j in range(p.interactions.shape[1])]
        o = [sum(p.objects[i][j] for i in combo) for j in range(p.objects.shape[1])]
        top = sum(p.heatmaps[i][: p.heatmaps.shape[1] // 2].sum() for i in combo)
        if any(x < f for x, f in zip(a, p.floors)) or top < p.top_floor:
            continue
        z = statistics.pvariance(a) + statistics.pvariance(o)
        if best is None or z < best[0] - 1e-12:
            best = (z, list(combo))
    return best


def random_problem(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(4, 11))
    n_a, n_o = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    a = rng.integers(0, 5, (n, n_a))
    o = rng.integers(0, 5, (n, n_o))
    c = rng.integers(0, 4, (n, 4))
    k = int(rng.integers(1, n))
    floors = rng.integers(0, 3, n_a) if rng.random() < 0.5 else []
    return SplitProblem(a, o, c, k, floors, float(rng.integers(0, 3)))


def test_objective_hand_value():
    p = problem([[2, 0]], [[1, 1]])
    assert objective(p, [0]) == 1.0


def test_objective_uniform_and_zero_video():
    p = problem([[1, 1], [0, 0]], [[3, 3], [0, 0]], n_target=1)
    assert objective(p, [0]) == 0.0
    assert objective(p, [0, 1]) == objective(p, [0])
    assert objective(p, []) == 0.0


def test_check_feasible_floor_violation():
    p = problem([[4, 1], [0, 1]], [[1], [1]], n_target=1, floors=[5, 0])
    f = check_feasible(p, [0])
    assert f.floors_ok == [False, True]
    assert f.floor_slack == [-1.0, 1.0]
    assert not f.feasible and f.deficit == 1.0
    assert not check_feasible(p, []).size_ok


def test_top_half_floor():
    c = np.array([[3, 0, 0, 0], [0, 0, 5, 5]])
    p = problem([[1], [1]], [[1], [1]], c=c, n_target=1, top_floor=2)
    assert check_feasible(p, [0]).top_ok
    assert not check_feasible(p, [1]).top_ok


def test_exact_hand_example():
    # Pairs (0,1) and (1,2) both give a=(2,2), z=0; (0,2) gives a=(4,0), z=4.
    # The lexicographically first optimum wins.
    p = problem([[2, 0], [0, 2], [2, 0]], [[1], [1], [1]], n_target=2)
    sol = solve_exact(p)
    assert sol.selected == [0, 1]
    assert sol.z == 0.0


def test_exact_full_set_and_infeasible():
    p = problem([[1, 0], [0, 3]], [[1], [2]], n_target=2)
    assert solve_exact(p).selected == [0, 1]
    bad = problem([[1, 0], [0, 3]], [[1], [2]], n_target=1, floors=[2, 0])
    sol = solve_exact(bad)
    assert not sol.feasible and sol.z is None and sol.selected == []


def test_exact_size_guard():
    p = problem(np.ones((21, 2)), np.ones((21, 2)), n_target=2)
    with pytest.raises(SizeGuardError):
        solve_exact(p)


@pytest.mark.parametrize("seed", range(25))
def test_exact_matches_brute_force(seed):
    p = random_problem(seed)
    ref = brute_best(p)
    sol = solve_exact(p)
    if ref is None:
        assert not sol.feasible
    else:
        assert sol.feasible
        assert sol.z == pytest.approx(ref[0], abs=1e-9)
        assert sol.selected == ref[1]
        assert objective(p, sol.selected) == sol.z


def test_exact_thread_invariant():
    p = random_problem(3, n=14)
    assert solve_exact(p, threads=1).selected == solve_exact(p, threads=4).selected


@pytest.mark.parametrize("seed", range(15))
def test_heuristic_dominated_by_exact(seed):
    p = random_problem(100 + seed)
    ex = solve_exact(p)
    h = solve_heuristic(p, seed=seed)
    assert len(h.selected) == p.n_target
    assert objective(p, h.selected) == h.z
    if ex.feasible and h.feasible:
        assert h.z >= ex.z - 1e-9


def test_heuristic_zero_iterations_is_greedy():
    p = random_problem(7)
    sol = solve_heuristic(p, iterations=0)
    assert sol.selected == greedy(p)


def test_heuristic_never_worse_than_greedy_and_deterministic():
    for seed in range(10):
        p = random_problem(200 + seed)
        g = greedy(p)
        key_g = (check_feasible(p, g).deficit, objective(p, g))
        h = solve_heuristic(p, seed=1)
        assert (h.feasibility.deficit, h.z) <= key_g
        assert solve_heuristic(p, seed=1).selected == h.selected


def test_local_search_monotone_without_floors():
    rng = np.random.default_rng(0)
    p = SplitProblem(rng.integers(0, 6, (14, 4)), rng.integers(0, 6, (14, 3)), np.ones((14, 2)), 5, [])
    h = solve_heuristic(p, seed=3, restarts=0)
    assert all(b <= a for a, b in zip(h.history, h.history[1:]))


def test_identical_videos_reach_exact():
    p = problem(np.tile([1, 2], (6, 1)), np.tile([3, 1], (6, 1)), n_target=3)
    assert solve_heuristic(p).z == solve_exact(p).z


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_objective_permutation_invariant(seed):
    p = random_problem(seed)
    sel = list(range(p.n_target))
    assert objective(p, sel) == objective(p, sel[::-1])


def test_problem_validation_and_round_trip():
    with pytest.raises(ConfigurationError):
        problem([[1]], [[1]], n_target=2)
    with pytest.raises(ConfigurationError):
        problem([[-1]], [[1]])
    with pytest.raises(ConfigurationError):
        problem([[1, 1]], [[1]], floors=[1])
    p = random_problem(11)
    q = SplitProblem.from_dict(p.to_dict())
    assert q.to_dict() == p.to_dict()
    assert np.array_equal(q.interactions, p.interactions)


def test_relative_gap():
    assert relative_gap(1.1, 1.0) == pytest.approx(0.1)
    assert relative_gap(0.0, 0.0) == 0.0
    assert relative_gap(1.0, 0.0) == float("inf")
