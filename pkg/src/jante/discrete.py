"""Finite equally-spaced support: the potential f, absorbing paths, counterexamples.

All arithmetic here is on Python or numpy integers. Non-conformity is kept
doubled (``|2 x_i - x_{i-1} - x_{i+1}|``) on the cycle so it stays integral.
Node indices are 0-based in the API and 1-based in exported files.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from jante.checks import CheckReport
from jante.errors import (
    ConfigurationError,
    DistributionError,
    DomainError,
    UnsupportedTopologyError,
    VerificationError,
)
from jante.process import DistributionSpec, max_steps, run
from jante.topology import Topology, counterexample_graph, cycle

STABLE_SUPPORT = (0, 1, 5, 6)


def _int_cycle(c, t: Topology | None = None) -> np.ndarray:
    if t is not None and not t.is_cycle:
        raise UnsupportedTopologyError("this operation is defined on cycles only")
    x = np.asarray(c)
    if x.ndim != 1 or x.shape[0] < 3:
        raise ConfigurationError(f"need a 1-D configuration with N >= 3, got shape {x.shape}")
    if not np.issubdtype(x.dtype, np.integer):
        raise ConfigurationError("integer values required")
    if t is not None and t.node_count != x.shape[0]:
        raise ConfigurationError("configuration length does not match the topology")
    return x.astype(np.int64)


def lyapunov_f(c, t: Topology | None = None) -> int:
    """``sum (x_i - x_{i+1})^2`` around the cycle."""
    x = _int_cycle(c, t)
    return int(np.sum((x - np.roll(x, -1)) ** 2))


def doubled_d(c) -> np.ndarray:
    """``|2 x_i - x_{i-1} - x_{i+1}|`` per node of the cycle."""
    x = _int_cycle(c)
    return np.abs(2 * x - np.roll(x, 1) - np.roll(x, -1))


def is_absorbed(c) -> bool:
    x = np.asarray(c)
    return bool(np.all(x == x[0]))


@dataclass(frozen=True)
class DiscreteDiagnostics:
    f_value: int
    max_value: int
    argmax_indices: tuple[int, ...]
    doubled_d: int


def diagnostics(c) -> DiscreteDiagnostics:
    x = _int_cycle(c)
    top = int(x.max())
    return DiscreteDiagnostics(lyapunov_f(x), top, tuple(int(i) for i in np.nonzero(x == top)[0]),
                               int(doubled_d(x).max()))


def floor_midpoint(x, i: int) -> int:
    n = len(x)
    return (int(x[(i - 1) % n]) + int(x[(i + 1) % n])) // 2


def floor_midpoint_replace(c, i: int) -> np.ndarray:
    """Copy of ``c`` with node ``i`` set to the floor of its neighbours' mean."""
    x = _int_cycle(c).copy()
    if not 0 <= i < len(x):
        raise DomainError(f"node {i} out of range for N={len(x)}")
    x[i] = floor_midpoint(x, i)
    return x


def check_f_decrease(c, i: int) -> str:
    """Classify the change of f under a floor-midpoint replacement at ``i``.

    f never grows, and drops by at least one whenever ``d_i >= 1``; either
    failure raises :class:`VerificationError`.
    """
    x = _int_cycle(c)
    before = lyapunov_f(x)
    after = lyapunov_f(floor_midpoint_replace(x, i))
    dd = int(doubled_d(x)[i])
    if after > before:
        raise VerificationError("f increased", {"config": x.tolist(), "node": i, "f": [before, after]})
    if dd >= 2 and after > before - 1:
        raise VerificationError("f did not drop although d_i >= 1",
                                {"config": x.tolist(), "node": i, "f": [before, after]})
    return "decreased_by_one_or_more" if after <= before - 1 else "unchanged_or_less"


def path_bound(M: int, N: int) -> int:
    return M * M * N * (N - 2)


@dataclass
class AbsorbingPath:
    """Greedy sequence of floor-midpoint replacements ending in a constant configuration."""

    start: np.ndarray
    steps: list[tuple[int, int]] = field(default_factory=list)
    f_values: list[int] = field(default_factory=list)
    M: int = 1

    @property
    def T(self) -> int:
        return len(self.steps)

    def __len__(self) -> int:
        return self.T

    @property
    def bound(self) -> int:
        return path_bound(self.M, len(self.start))

    @property
    def final(self) -> np.ndarray:
        x = self.start.copy()
        for v, a in self.steps:
            x[v] = a
        return x

    def check_windows(self) -> bool:
        """f drops by at least one over every ``N - 2`` consecutive steps while positive."""
        n = len(self.start)
        f = self.f_values
        for s in range(self.T + 1):
            if f[s] > 0 and f[min(s + n - 2, self.T)] > f[s] - 1:
                raise VerificationError("f did not drop within N - 2 steps",
                                        {"s": s, "f": f[s : s + n - 1], "start": self.start.tolist()})
        return True

    def rows(self) -> list[tuple[int, int, int, int, int]]:
        """``(t, node (1-based), new_value, f_before, f_after)`` per step."""
        f = self.f_values
        return [(t, v + 1, a, f[t], f[t + 1]) for t, (v, a) in enumerate(self.steps)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "node", "new_value", "f_before", "f_after"])
            w.writerows(self.rows())


def _grid_indices(x, support):
    if support is None:
        return x, 0, 1, int(x.max() - x.min()) + 1
    dist = support if isinstance(support, DistributionSpec) else DistributionSpec.finite(support)
    if not dist.is_equally_spaced:
        raise DistributionError("absorbing paths need equally spaced support")
    if not dist.contains(x):
        raise ConfigurationError("configuration has values outside the support")
    base = dist.values[0]
    step = dist.values[1] - base if dist.M > 1 else 1
    return (x - base) // step, base, step, dist.M


def construct_absorbing_path(c, support=None, M: int | None = None) -> AbsorbingPath:
    """Explicit path to absorption along floor-midpoint replacements at worst nodes.

    At every step a worst node that carries the maximum value is used when
    there is one, otherwise any worst node; ties go to the lowest index.
    ``support`` (a :class:`DistributionSpec` or a value list) must be equally
    spaced; the path is then built on grid indices and mapped back. The
    length is checked against ``M^2 N (N - 2)``, with ``M`` defaulting to the
    support size or the value range.
    """
    x0 = _int_cycle(c)
    g, base, step, size = _grid_indices(x0, support)
    M = size if M is None else int(M)
    n = len(g)
    bound = path_bound(M, n)
    g = g.copy()
    path = AbsorbingPath(x0.copy(), [], [lyapunov_f(g)], M)
    f_scale = step * step
    while not is_absorbed(g):
        if path.T >= bound:
            raise VerificationError("absorbing path exceeded its length bound",
                                    {"start": x0.tolist(), "bound": bound})
        dd = doubled_d(g)
        worst = np.nonzero(dd == dd.max())[0]
        on_top = worst[g[worst] == g.max()]
        v = int(on_top[0] if on_top.size else worst[0])
        g[v] = floor_midpoint(g, v)
        path.steps.append((v, int(base + step * g[v])))
        path.f_values.append(lyapunov_f(g))
    path.f_values = [f * f_scale for f in path.f_values]
    return path


def stable_family_member(x_val: int, y_val: int) -> np.ndarray:
    """The N = 8 configuration ``[0, 1, x, 5, 6, 5, y, 1]``."""
    if x_val not in STABLE_SUPPORT or y_val not in STABLE_SUPPORT:
        raise DomainError(f"x and y must lie in {STABLE_SUPPORT}")
    return np.array([0, 1, x_val, 5, 6, 5, y_val, 1], dtype=np.int64)


def in_stable_family(c) -> bool:
    x = np.asarray(c)
    return (x.shape == (8,) and list(x[[0, 1, 3, 4, 5, 7]]) == [0, 1, 5, 6, 5, 1]
            and int(x[2]) in STABLE_SUPPORT and int(x[6]) in STABLE_SUPPORT)


# Sweeps.

def check_f_zero_iff_absorbed(grids=((3, 5), (2, 6))) -> CheckReport:
    """Exhaustive check of ``f = 0 <=> d = 0`` over ``{1..M}^N`` for each ``(M, N)``."""
    total, bad = 0, []
    for M, N in grids:
        X = np.array(list(itertools.product(range(1, M + 1), repeat=N)), dtype=np.int64)
        f = np.sum((X - np.roll(X, -1, axis=1)) ** 2, axis=1)
        dd = np.abs(2 * X - np.roll(X, 1, axis=1) - np.roll(X, -1, axis=1)).max(axis=1)
        mismatch = (f == 0) != (dd == 0)
        bad.extend(X[mismatch].tolist())
        total += len(X)
    return CheckReport("f_zero_iff_d_zero", total, float(len(bad)), not bad,
                       witness={"configs": bad[:10]} if bad else None)


def sweep_f_decrease(n_pairs: int, rng: np.random.Generator, max_M: int = 10,
                     sizes=range(3, 13)) -> CheckReport:
    """Random (configuration, node) pairs: f never grows, drops by >= 1 when ``d_i >= 1``."""
    sizes = list(sizes)
    Ns = rng.choice(sizes, size=n_pairs)
    worst, witness = -np.inf, None
    n_strict = 0
    for N in sizes:
        k = int(np.sum(Ns == N))
        if k == 0:
            continue
        Ms = rng.integers(1, max_M + 1, size=k)
        X = 1 + (rng.random((k, N)) * Ms[:, None]).astype(np.int64)
        i = rng.integers(0, N, size=k)
        rows = np.arange(k)
        left = X[rows, (i - 1) % N]
        right = X[rows, (i + 1) % N]
        dd = np.abs(2 * X[rows, i] - left - right)
        Y = X.copy()
        Y[rows, i] = (left + right) // 2
        fx = np.sum((X - np.roll(X, -1, axis=1)) ** 2, axis=1)
        fy = np.sum((Y - np.roll(Y, -1, axis=1)) ** 2, axis=1)
        change = fy - fx
        # allowed change: <= 0 always, <= -1 when doubled d >= 2
        viol = change - np.where(dd >= 2, -1, 0)
        n_strict += int(np.sum(dd >= 2))
        j = int(np.argmax(viol))
        if viol[j] > worst:
            worst = float(viol[j])
            witness = {"config": X[j].tolist(), "node": int(i[j]), "f": [int(fx[j]), int(fy[j])]}
    passed = worst <= 0
    return CheckReport("f_decrease", n_pairs, worst, bool(passed), witness=None if passed else witness,
                       details={"pairs_with_d_ge_1": n_strict})


def sweep_absorbing_paths(n_starts: int, rng: np.random.Generator, N: int = 8, M: int = 5) -> CheckReport:
    """Random ``{1..M}^N`` starts: every greedy path absorbs within ``M^2 N (N - 2)`` steps
    and f drops within every ``N - 2`` window."""
    support = DistributionSpec.discrete(M)
    longest, witness = 0, None
    for _ in range(n_starts):
        x = 1 + rng.integers(0, M, size=N)
        try:
            p = construct_absorbing_path(x, support)
            p.check_windows()
        except VerificationError as exc:
            witness = exc.witness
            break
        longest = max(longest, p.T)
    bound = path_bound(M, N)
    passed = witness is None and longest <= bound
    return CheckReport("absorbing_path", n_starts, float(longest - bound), passed, witness=witness,
                       details={"longest_path": longest, "bound": bound})


# Counterexample demonstrations.

@dataclass
class CounterexampleReport:
    name: str
    steps: int
    passed: bool
    replaced_nodes: list[int]
    absorbed: bool
    details: dict = field(default_factory=dict)

    def check_report(self) -> CheckReport:
        return CheckReport(self.name, self.steps, 0.0 if self.passed else 1.0, self.passed,
                           details={"replaced_nodes": self.replaced_nodes, "absorbed": self.absorbed,
                                    **self.details})


def run_stable_family(n_steps: int, rng: np.random.Generator, x_val: int = 0, y_val: int = 6):
    """Raw chain with replacement law uniform on {0, 1, 5, 6} from a stable family member.

    Returns ``(report, trajectory)``. The report passes when every visited
    configuration stays in the family, none is constant, and the worst
    nodes are always among the third and seventh with ``d`` equal to 2 or 3.
    """
    t = cycle(8)
    dist = DistributionSpec.finite(STABLE_SUPPORT)
    tr = run(stable_family_member(x_val, y_val), t, dist, rng, max_steps(n_steps))
    states = tr.states()
    in_family = all(in_stable_family(s) for s in states)
    absorbed = any(is_absorbed(s) for s in states)
    dd = np.abs(2 * states - np.roll(states, 1, axis=1) - np.roll(states, -1, axis=1))
    top = dd.max(axis=1)
    where_ok = bool(np.all((dd == top[:, None])[:, [0, 1, 3, 4, 5, 7]] == 0))
    value_ok = bool(np.all(np.isin(top, (4, 6))))
    passed = in_family and not absorbed and where_ok and value_ok
    report = CounterexampleReport(
        "stable_family", len(tr), passed, sorted({int(v) for v in tr.nodes}), absorbed,
        {"in_family": in_family, "worst_at_3_or_7": where_ok, "d_in_2_3": value_ok},
    )
    return report, tr


def run_counterexample_graph(n_steps: int, rng: np.random.Generator, x_val: int = 0, y_val: int = 1):
    """Raw chain on the six-node counterexample graph with law uniform on {0, 1}.

    Starts from ``(0, x, y, 1, 0, 1)``; passes when only nodes 1 and 2 are
    ever replaced and no constant configuration is reached.
    """
    if x_val not in (0, 1) or y_val not in (0, 1):
        raise DomainError("x and y must be 0 or 1")
    t = counterexample_graph()
    dist = DistributionSpec.finite((0, 1))
    tr = run(np.array([0, x_val, y_val, 1, 0, 1], dtype=np.int64), t, dist, rng, max_steps(n_steps))
    nodes = sorted({int(v) for v in tr.nodes})
    absorbed = any(is_absorbed(s) for s in tr.states())
    passed = set(nodes) <= {1, 2} and not absorbed
    return CounterexampleReport("counterexample_graph", len(tr), passed, nodes, absorbed), tr


def write_step_log(tr, path) -> None:
    """Per-step CSV: t, node (1-based), old_value, new_value."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "node", "old_value", "new_value"])
        for k in range(len(tr)):
            w.writerow([k, int(tr.nodes[k]) + 1, tr.old_values[k].item(), tr.new_values[k].item()])
