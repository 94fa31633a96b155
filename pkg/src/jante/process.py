"""The chain itself: non-conformity, worst-node selection, replacement.

Configurations are plain 1-D numpy arrays aligned to a :class:`Topology`:
``int64`` for finitely supported distributions (all arithmetic exact) and
``float64`` for the uniform law on [0, 1].

Randomness contract: each step consumes two uniforms, the first to break
ties among worst nodes, the second for the replacement draw. ``step`` draws
them one pair at a time; ``run`` draws them in chunks and hands them to the
compiled kernels, so ``run`` reproduces iterated ``step`` calls exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from jante import kernels
from jante.errors import (
    ConfigurationError,
    DistributionError,
    InvalidStopRuleError,
    NodeIndexError,
)
from jante.topology import Topology

CHUNK = 4096
_INT_LIMIT = 2**62


def derive_rng(seed: int, run_index: int = 0) -> np.random.Generator:
    """Independent stream for run ``run_index`` of an experiment seeded ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(run_index),)))


@dataclass(frozen=True)
class DistributionSpec:
    """Replacement law: finite integer support with probabilities, or U[0, 1]."""

    variant: str
    values: tuple[int, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.variant == "uniform01":
            if self.values or self.probs:
                raise DistributionError("uniform01 takes no parameters")
            return
        if self.variant != "discrete":
            raise DistributionError(f"unknown distribution variant {self.variant!r}")
        if not self.values:
            raise DistributionError("discrete distribution needs a non-empty support")
        if list(self.values) != sorted(set(self.values)):
            raise DistributionError("support must be strictly increasing")
        if len(self.probs) != len(self.values):
            raise DistributionError("need one probability per support value")
        if min(self.probs) <= 0:
            raise DistributionError("every support value needs positive probability")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise DistributionError(f"probabilities sum to {math.fsum(self.probs)!r}, not 1")

    @classmethod
    def discrete(cls, M: int, probs=None) -> DistributionSpec:
        """Support {1, ..., M}; uniform unless ``probs`` is given."""
        if M < 1:
            raise DistributionError(f"M must be positive, got {M}")
        return cls.finite(range(1, M + 1), probs)

    @classmethod
    def finite(cls, values, probs=None) -> DistributionSpec:
        values = tuple(int(v) for v in values)
        if probs is None:
            probs = (1.0 / len(values),) * len(values)
        return cls("discrete", values, tuple(float(p) for p in probs))

    @classmethod
    def uniform01(cls) -> DistributionSpec:
        return cls("uniform01")

    @property
    def is_continuous(self) -> bool:
        return self.variant == "uniform01"

    @property
    def M(self) -> int:
        return len(self.values)

    @property
    def is_standard_grid(self) -> bool:
        """Support is exactly {1, ..., M}."""
        return not self.is_continuous and self.values == tuple(range(1, self.M + 1))

    @property
    def is_equally_spaced(self) -> bool:
        if self.is_continuous:
            return False
        gaps = {b - a for a, b in zip(self.values, self.values[1:])}
        return len(gaps) <= 1

    @property
    def cdf(self) -> np.ndarray:
        cdf = np.cumsum(np.asarray(self.probs, dtype=np.float64))
        cdf[-1] = 1.0
        return cdf

    @property
    def dtype(self):
        return np.float64 if self.is_continuous else np.int64

    def value_from_uniform(self, u: float):
        if self.is_continuous:
            return float(u)
        idx = min(int(np.searchsorted(self.cdf, u, side="right")), self.M - 1)
        return self.values[idx]

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        u = rng.random(size)
        if self.is_continuous:
            return u
        idx = np.minimum(np.searchsorted(self.cdf, u, side="right"), self.M - 1)
        return np.asarray(self.values, dtype=np.int64)[idx]

    def contains(self, x) -> bool:
        x = np.asarray(x)
        if self.is_continuous:
            return bool(np.all((x >= 0.0) & (x <= 1.0)))
        return bool(np.all(np.isin(x, self.values)))

    def to_dict(self) -> dict:
        if self.is_continuous:
            return {"variant": "uniform01"}
        return {"variant": "discrete", "values": list(self.values), "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, data: dict) -> DistributionSpec:
        if data.get("variant") == "uniform01":
            return cls.uniform01()
        if "values" in data:
            return cls.finite(data["values"], data.get("probs"))
        return cls.discrete(int(data["M"]), data.get("probs"))


def as_configuration(values, t: Topology, dist: DistributionSpec | None = None) -> np.ndarray:
    """Validate and copy ``values`` into a configuration array."""
    dtype = dist.dtype if dist is not None else None
    x = np.array(values, dtype=dtype)
    if dtype is None:
        x = x.astype(np.int64) if np.issubdtype(x.dtype, np.integer) else x.astype(np.float64)
    if x.ndim != 1 or x.shape[0] != t.node_count:
        raise ConfigurationError(f"configuration has shape {x.shape}, topology has {t.node_count} nodes")
    if dist is not None and not dist.contains(x):
        raise ConfigurationError("configuration has values outside the support of the distribution")
    return x


def initial_configuration(t: Topology, dist: DistributionSpec, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. draws from the replacement law at every node."""
    return dist.sample(rng, t.node_count)


def _is_exact(c) -> bool:
    return np.issubdtype(np.asarray(c).dtype, np.integer)


def nonconformity(c, t: Topology, v: int):
    """``|x_v - mean of neighbours|``: a Fraction for integer configs, else a float."""
    if not 0 <= v < t.node_count:
        raise NodeIndexError(f"node {v} out of range for N={t.node_count}")
    nb = t.adjacency[v]
    if _is_exact(c):
        s = sum(int(c[u]) for u in nb)
        return Fraction(abs(len(nb) * int(c[v]) - s), len(nb))
    s = float(c[nb[0]])
    for u in nb[1:]:
        s += float(c[u])
    return abs(float(c[v]) - s / len(nb))


def all_nonconformity(c, t: Topology) -> list:
    return [nonconformity(c, t, v) for v in range(t.node_count)]


def max_nonconformity(c, t: Topology):
    """Return ``(d, argmax_set)`` with exact comparison of the per-node values."""
    ds = all_nonconformity(c, t)
    d = max(ds)
    return d, [v for v, dv in enumerate(ds) if dv == d]


def _pick(argmax_set, u: float) -> int:
    k = min(int(u * len(argmax_set)), len(argmax_set) - 1)
    return argmax_set[k]


def select_worst(c, t: Topology, rng: np.random.Generator) -> int:
    """A uniformly chosen node among those attaining the maximal non-conformity."""
    _, argmax = max_nonconformity(c, t)
    return _pick(argmax, rng.random())


@dataclass(frozen=True)
class StepRecord:
    t: int
    replaced_node: int
    old_value: float | int
    new_value: float | int
    d_before: float | Fraction
    d_after: float | Fraction
    argmax_set_before: tuple[int, ...]
    absorbed: bool = False


def step(c, t: Topology, dist: DistributionSpec, rng: np.random.Generator,
         mode: str = "raw", time: int = 0):
    """One transition. Reference implementation; ``run`` uses the kernels."""
    if mode not in ("raw", "frozen"):
        raise ValueError(f"mode must be 'raw' or 'frozen', got {mode!r}")
    x = np.array(c, copy=True)
    d, argmax = max_nonconformity(x, t)
    if mode == "frozen" and d == 0:
        v = argmax[0]
        rec = StepRecord(time, v, x[v].item(), x[v].item(), d, d, tuple(argmax), absorbed=True)
        return x, rec
    u_tie, u_new = rng.random(2)
    v = _pick(argmax, u_tie)
    old = x[v].item()
    x[v] = dist.value_from_uniform(u_new)
    d_after, _ = max_nonconformity(x, t)
    return x, StepRecord(time, v, old, x[v].item(), d, d_after, tuple(argmax))


@dataclass(frozen=True)
class StopRule:
    """``max_steps(T)``, ``until_absorbed`` or ``until_d_below(eps)``.

    The two ``until`` rules accept an optional step cap ``limit``.
    """

    kind: str
    value: float | None = None
    limit: int | None = None

    def __post_init__(self):
        if self.kind not in ("max_steps", "until_absorbed", "until_d_below"):
            raise InvalidStopRuleError(f"unknown stop rule {self.kind!r}")
        if self.kind == "max_steps" and (self.value is None or self.value < 0):
            raise InvalidStopRuleError("max_steps needs a non-negative step count")
        if self.kind == "until_d_below" and (self.value is None or self.value <= 0):
            raise InvalidStopRuleError("until_d_below needs a positive threshold")

    @property
    def step_cap(self) -> int | None:
        return int(self.value) if self.kind == "max_steps" else self.limit

    def to_str(self) -> str:
        if self.kind == "max_steps":
            return str(int(self.value))
        if self.kind == "until_absorbed":
            return "until-absorbed"
        return f"d-below={self.value!r}"

    @classmethod
    def parse(cls, text: str) -> StopRule:
        text = str(text).strip()
        if text == "until-absorbed":
            return until_absorbed()
        if text.startswith("d-below="):
            return until_d_below(float(text.split("=", 1)[1]))
        try:
            return max_steps(int(text))
        except ValueError:
            raise InvalidStopRuleError(f"cannot parse stop rule {text!r}") from None


def max_steps(T: int) -> StopRule:
    return StopRule("max_steps", int(T))


def until_absorbed(limit: int | None = None) -> StopRule:
    return StopRule("until_absorbed", None, limit)


def until_d_below(eps: float, limit: int | None = None) -> StopRule:
    return StopRule("until_d_below", float(eps), limit)


@dataclass
class Trajectory:
    """A run stored column-wise; ``records`` materialises :class:`StepRecord` objects."""

    initial: np.ndarray
    nodes: np.ndarray
    old_values: np.ndarray
    new_values: np.ndarray
    d_before_raw: np.ndarray
    n_tied: np.ndarray
    final: np.ndarray
    topology: Topology
    dist: DistributionSpec
    mode: str
    stopped_by_rule: bool
    seed: int | None = None
    d_scale: int = 1
    _final_d: float | Fraction | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def exact(self) -> bool:
        return not self.dist.is_continuous

    def _d(self, raw):
        return Fraction(int(raw), self.d_scale) if self.exact else float(raw)

    @property
    def d_before(self) -> list:
        return [self._d(r) for r in self.d_before_raw]

    @property
    def final_d(self):
        if self._final_d is None:
            self._final_d = max_nonconformity(self.final, self.topology)[0]
        return self._final_d

    @property
    def d_after(self) -> list:
        before = self.d_before
        return before[1:] + [self.final_d]

    @property
    def absorbed(self) -> bool:
        return self.final_d == 0

    def states(self) -> np.ndarray:
        """All visited configurations, shape (T + 1, N)."""
        out = np.empty((len(self) + 1, self.initial.shape[0]), dtype=self.initial.dtype)
        out[0] = self.initial
        x = self.initial.copy()
        for k in range(len(self)):
            x[self.nodes[k]] = self.new_values[k]
            out[k + 1] = x
        return out

    def replay(self) -> np.ndarray:
        return self.states()[-1]

    @property
    def records(self) -> list[StepRecord]:
        states = self.states()
        after = self.d_after
        recs = []
        for k in range(len(self)):
            d, argmax = max_nonconformity(states[k], self.topology)
            recs.append(StepRecord(
                k, int(self.nodes[k]), self.old_values[k].item(), self.new_values[k].item(),
                d, after[k], tuple(argmax),
            ))
        return recs


def _kernel_graph(t: Topology, dist: DistributionSpec, x: np.ndarray):
    indptr, indices = t.csr
    if dist.is_continuous:
        return indptr, indices, t.degrees.astype(np.float64)
    lcm = t.degree_lcm
    bound = 2 * lcm * int(t.degrees.max()) * max(int(np.abs(x).max()), max(abs(v) for v in dist.values), 1)
    if bound >= _INT_LIMIT:
        raise ConfigurationError("degree lcm too large for exact int64 arithmetic on this graph")
    weight = (lcm // t.degrees).astype(np.int64)
    return indptr, indices, t.degrees, weight, lcm


class _BatchChain:
    """Drive the advance kernel for R independent chains, chunk by chunk."""

    def __init__(self, X, t: Topology, dist: DistributionSpec, rngs, stop: StopRule,
                 mode: str, record: bool):
        if stop.kind == "until_absorbed" and dist.is_continuous:
            raise InvalidStopRuleError("absorption has probability zero under a continuous law")
        if mode not in ("raw", "frozen"):
            raise ValueError(f"mode must be 'raw' or 'frozen', got {mode!r}")
        self.X = np.ascontiguousarray(X, dtype=dist.dtype).copy()
        self.t, self.dist, self.rngs, self.stop, self.record = t, dist, rngs, stop, record
        self.stop_on_zero = mode == "frozen" or stop.kind == "until_absorbed"
        graph = _kernel_graph(t, dist, self.X)
        if dist.is_continuous:
            self.graph = graph
            self.scale = 1
            self.d_stop = stop.value if stop.kind == "until_d_below" else -1.0
        else:
            *self.graph, self.scale = graph
            self.values = np.asarray(dist.values, dtype=np.int64)
            self.cdf = dist.cdf
            self.d_stop = math.ceil(stop.value * self.scale) if stop.kind == "until_d_below" else -1
        R = self.X.shape[0]
        self.steps = np.zeros(R, dtype=np.int64)
        self.stopped = np.zeros(R, dtype=bool)
        self.done = np.zeros(R, dtype=bool)
        self.chunks: list[list] = [[] for _ in range(R)]

    def _remaining(self, r):
        cap = self.stop.step_cap
        return CHUNK if cap is None else min(CHUNK, cap - int(self.steps[r]))

    def run(self):
        R, N = self.X.shape
        cap = self.stop.step_cap
        if cap is not None:
            self.done |= self.steps >= cap
        while True:
            rows = np.nonzero(~self.done)[0]
            if rows.size == 0:
                break
            limits = np.array([self._remaining(r) for r in rows], dtype=np.int64)
            C = int(limits.max())
            draws = np.zeros((rows.size, max(C, 1), 2))
            for i, r in enumerate(rows):
                draws[i, : limits[i]] = self.rngs[r].random((int(limits[i]), 2))
            xs = self.X[rows]
            odtype = self.X.dtype
            out = [np.zeros((rows.size, max(C, 1)), dtype=dt)
                   for dt in (np.int64, odtype, odtype, odtype, np.int64)]
            steps = np.zeros(rows.size, dtype=np.int64)
            status = np.zeros(rows.size, dtype=np.int64)
            if self.dist.is_continuous:
                kernels.continuous_advance(xs, *self.graph, draws, limits, self.stop_on_zero,
                                           self.d_stop, *out, steps, status)
            else:
                kernels.discrete_advance(xs, *self.graph, self.values, self.cdf, draws, limits,
                                         self.stop_on_zero, self.d_stop, *out, steps, status)
            self.X[rows] = xs
            for i, r in enumerate(rows):
                k = int(steps[i])
                self.steps[r] += k
                if self.record:
                    self.chunks[r].append([a[i, :k].copy() for a in out])
                if status[i] == 1:
                    self.stopped[r] = True
                    self.done[r] = True
                elif cap is not None and self.steps[r] >= cap:
                    self.done[r] = True
        return self

    def columns(self, r):
        parts = self.chunks[r]
        if not parts:
            odtype = self.X.dtype
            return [np.zeros(0, dtype=dt) for dt in (np.int64, odtype, odtype, odtype, np.int64)]
        return [np.concatenate([p[i] for p in parts]) for i in range(5)]


def run(c, t: Topology, dist: DistributionSpec, rng: np.random.Generator,
        stop: StopRule, mode: str = "raw", seed: int | None = None) -> Trajectory:
    """Iterate the chain from ``c`` until ``stop`` fires.

    In frozen mode (and under ``until_absorbed``) the run ends at the first
    configuration with d = 0, since every later step would be a no-op.
    """
    x0 = as_configuration(c, t, dist)
    chain = _BatchChain(x0[None, :], t, dist, [rng], stop, mode, record=True).run()
    nodes, old, new, d_raw, ntie = chain.columns(0)
    return Trajectory(
        initial=x0, nodes=nodes, old_values=old, new_values=new, d_before_raw=d_raw,
        n_tied=ntie, final=chain.X[0].copy(), topology=t, dist=dist, mode=mode,
        stopped_by_rule=bool(chain.stopped[0]), seed=seed, d_scale=chain.scale,
    )


def run_batch(X0, t: Topology, dist: DistributionSpec, rngs, stop: StopRule, mode: str = "raw"):
    """Advance many independent chains; returns ``(final_states, steps, stopped)``.

    Each row consumes only its own generator, so the result for a row does
    not depend on which other rows share the batch.
    """
    X0 = np.asarray(X0)
    for row in X0:
        as_configuration(row, t, dist)
    chain = _BatchChain(X0, t, dist, rngs, stop, mode, record=False).run()
    return chain.X, chain.steps, chain.stopped


def read_configuration(path, dist: DistributionSpec | None = None) -> np.ndarray:
    """One fitness per line, 1-based node order."""
    rows = [ln.strip() for ln in Path(path).read_text().splitlines()]
    rows = [r for r in rows if r and not r.startswith("#")]
    if not rows:
        raise ConfigurationError(f"{path}: empty configuration file")
    try:
        if dist is not None and not dist.is_continuous or all(_looks_int(r) for r in rows):
            return np.array([int(r) for r in rows], dtype=np.int64)
        return np.array([float(r) for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def _looks_int(text: str) -> bool:
    try:
        int(text)
        return True
    except ValueError:
        return False


def write_configuration(c, path) -> None:
    x = np.asarray(c)
    fmt = (lambda v: str(int(v))) if _is_exact(x) else (lambda v: repr(float(v)))
    Path(path).write_text("".join(fmt(v) + "\n" for v in x))
