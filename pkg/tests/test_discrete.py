import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jante import discrete as D
from jante.errors import (
    ConfigurationError,
    DistributionError,
    DomainError,
    UnsupportedTopologyError,
)
from jante.process import DistributionSpec, max_nonconformity
from jante.topology import counterexample_graph, cycle


def test_lyapunov_f_examples():
    assert D.lyapunov_f(np.array([1, 6, 9, 6, 1])) == 68
    assert D.lyapunov_f(np.array([1, 6, 6, 6, 1])) == 50
    assert D.lyapunov_f(np.array([4, 4, 4, 4])) == 0


def test_lyapunov_f_requires_cycle_and_integers():
    with pytest.raises(UnsupportedTopologyError):
        D.lyapunov_f(np.arange(6), counterexample_graph())
    with pytest.raises(ConfigurationError):
        D.lyapunov_f(np.array([0.5, 1.0, 2.0]))


def test_floor_midpoint_examples():
    assert D.floor_midpoint_replace(np.array([1, 2, 1]), 1).tolist() == [1, 1, 1]
    x = np.array([1, 3, 9, 18, 24, 27, 27, 24, 18, 9, 3, 1])
    # neighbours 1 and 9: the midpoint is 5, which is also the value that makes d grow to 5/2
    assert D.floor_midpoint_replace(x, 1)[1] == 5
    assert D.floor_midpoint_replace(np.array([5, 1, 3, 1]), 2)[2] == 1
    with pytest.raises(DomainError):
        D.floor_midpoint_replace(np.array([1, 2, 1]), 3)


def test_check_f_decrease_examples():
    assert D.check_f_decrease(np.array([1, 6, 9, 6, 1]), 2) == "decreased_by_one_or_more"
    # d_i = 0 leaves f alone
    assert D.check_f_decrease(np.array([1, 2, 3, 4, 5]), 2) == "unchanged_or_less"


def test_check_f_decrease_exhaustive_small():
    for x in itertools.product((1, 2, 3), repeat=5):
        for i in range(5):
            D.check_f_decrease(np.array(x), i)


def test_d_worked_example():
    # d alone is not monotone: the replacement at the worst node raises d
    t = cycle(12)
    x = np.array([1, 3, 9, 18, 24, 27, 27, 24, 18, 9, 3, 1])
    d, argmax = max_nonconformity(x, t)
    assert d == 2 and argmax == [1, 10]
    y = D.floor_midpoint_replace(x, 1)
    assert max_nonconformity(y, t)[0] == 2.5
    assert D.lyapunov_f(y) < D.lyapunov_f(x)


def test_diagnostics():
    dg = D.diagnostics(np.array([1, 6, 9, 6, 1]))
    assert dg == D.DiscreteDiagnostics(68, 9, (2,), 6)
    dg = D.diagnostics(np.array([3, 3, 1, 3]))
    assert dg.argmax_indices == (0, 1, 3) and dg.doubled_d == 4


def test_is_absorbed():
    assert D.is_absorbed(np.array([2, 2, 2]))
    assert not D.is_absorbed(np.array([1, 2, 1]))
    for x in itertools.product((1, 2), repeat=6):
        assert (D.lyapunov_f(np.array(x)) == 0) == D.is_absorbed(np.array(x))


def test_path_examples():
    p = D.construct_absorbing_path(np.array([1, 2, 1]))
    assert p.steps == [(1, 1)] and p.T == 1
    p = D.construct_absorbing_path(np.array([3, 3, 3, 3]))
    assert p.T == 0 and p.f_values == [0]
    p.check_windows()


def test_path_prefers_maximal_worst_node():
    # nodes 1 and 3 tie for the worst d; node 3 carries the maximum value
    x = np.array([2, 0, 2, 4, 2, 2])
    p = D.construct_absorbing_path(x, M=5)
    assert p.steps[0][0] == 3


def test_path_on_equally_spaced_support():
    p = D.construct_absorbing_path(np.array([0, 4, 2, 4, 0]), DistributionSpec.finite([0, 2, 4]))
    assert D.is_absorbed(p.final)
    assert all(v in (0, 2, 4) for _, v in p.steps)
    assert p.f_values[-1] == 0


def test_path_rejects_unequal_support():
    with pytest.raises(DistributionError):
        D.construct_absorbing_path(np.array([0, 1, 5, 6]), DistributionSpec.finite([0, 1, 5, 6]))
    with pytest.raises(ConfigurationError):
        D.construct_absorbing_path(np.array([1, 2, 7]), DistributionSpec.discrete(4))


def test_path_csv(tmp_path):
    p = D.construct_absorbing_path(np.array([1, 3, 1, 2, 2]), DistributionSpec.discrete(3))
    out = tmp_path / "path.csv"
    p.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "t,node,new_value,f_before,f_after"
    assert len(lines) == p.T + 1
    t, node, val, fb, fa = map(int, lines[1].split(","))
    assert t == 0 and 1 <= node <= 5 and fb == p.f_values[0] and fa == p.f_values[1]


@given(st.integers(3, 9), st.integers(1, 6), st.data())
@settings(max_examples=150, deadline=None)
def test_path_property(N, M, data):
    x = np.array(data.draw(st.lists(st.integers(1, M), min_size=N, max_size=N)))
    p = D.construct_absorbing_path(x, DistributionSpec.discrete(M))
    assert D.is_absorbed(p.final)
    assert p.T <= D.path_bound(M, N)
    assert p.check_windows()
    assert all(b <= a for a, b in zip(p.f_values, p.f_values[1:]))


@given(st.lists(st.integers(1, 10), min_size=3, max_size=12), st.data())
@settings(max_examples=300, deadline=None)
def test_f_decrease_property(values, data):
    i = data.draw(st.integers(0, len(values) - 1))
    D.check_f_decrease(np.array(values), i)


def test_stable_family_member():
    x = D.stable_family_member(0, 6)
    assert x.tolist() == [0, 1, 0, 5, 6, 5, 6, 1]
    dd = D.doubled_d(x)
    assert dd.max() == 6 and np.nonzero(dd == 6)[0].tolist() == [2, 6]
    with pytest.raises(DomainError):
        D.stable_family_member(2, 0)


@pytest.mark.parametrize("x,y", list(itertools.product(D.STABLE_SUPPORT, repeat=2)))
def test_stable_family_worst_nodes(x, y):
    dd = D.doubled_d(D.stable_family_member(x, y))
    assert set(np.nonzero(dd == dd.max())[0]) <= {2, 6}
    assert dd.max() in (4, 6)


def test_stable_family_run(rng):
    rep, tr = D.run_stable_family(2000, rng, 5, 1)
    assert rep.passed and not rep.absorbed
    assert set(rep.replaced_nodes) <= {2, 6}


def test_counterexample_graph_run(rng):
    rep, tr = D.run_counterexample_graph(2000, rng, 1, 1)
    assert rep.passed and set(rep.replaced_nodes) <= {1, 2}
    with pytest.raises(DomainError):
        D.run_counterexample_graph(10, rng, 2, 0)


def test_sweeps_small(rng):
    assert D.check_f_zero_iff_absorbed().samples == 307
    assert D.sweep_f_decrease(20000, rng).passed
    rep = D.sweep_absorbing_paths(200, rng)
    assert rep.passed and rep.details["bound"] == 1200


def test_step_log(tmp_path, rng):
    _, tr = D.run_counterexample_graph(50, rng)
    D.write_step_log(tr, tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "t,node,old_value,new_value" and len(lines) == 51
