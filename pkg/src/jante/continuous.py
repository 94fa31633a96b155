"""Uniform [0, 1] replacement: the potential h, the embedded chain, drift checks.

Local computations work on a five-node window ``x1..x5`` centred on the
current worst node. Windows where the centre sits below its neighbour mean
are mapped through ``x -> 1 - x`` first, so every formula below assumes
``x3 >= (x2 + x4) / 2``.

The embedded chain only moves when the worst node changes or ``d`` strictly
drops. Given the current state, the replacement values that move it form the
interval ``[a, b]`` with ``a = max(0, min(Q0..Q4))`` and ``b = x3``, and the
first such draw is uniform on it; :func:`simulate_embedded` samples that
draw directly instead of waiting through the rejected ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from jante import kernels
from jante.checks import CheckReport
from jante.errors import (
    DegenerateIntervalError,
    DomainError,
    UnsupportedTopologyError,
    VerificationError,
)
from jante.process import CHUNK, Trajectory

DRIFT_TOL = 1e-12
LOG_R = math.log(121.0)


def _cycle_values(c) -> np.ndarray:
    x = np.asarray(c, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 5:
        raise UnsupportedTopologyError(f"needs a cycle with N >= 5, got {x.shape}")
    return x


def lyapunov_h(c) -> float:
    """``2 * sum (x_i - x_{i+1})^2 + sum (x_i - x_{i+2})^2`` on a cycle, N >= 5."""
    x = _cycle_values(c)
    return float(2.0 * np.sum((x - np.roll(x, -1)) ** 2) + np.sum((x - np.roll(x, -2)) ** 2))


def lyapunov_h_expanded(c) -> float:
    """The same potential written as ``2 * sum (3 x_i^2 - 2 x_i x_{i+1} - x_i x_{i+2})``."""
    x = _cycle_values(c)
    return float(2.0 * np.sum(3.0 * x * x - 2.0 * x * np.roll(x, -1) - x * np.roll(x, -2)))


def cycle_d(c) -> np.ndarray:
    x = np.asarray(c, dtype=np.float64)
    return np.abs(x - (np.roll(x, 1) + np.roll(x, -1)) / 2.0)


@dataclass(frozen=True)
class LocalWindow:
    """Five consecutive fitnesses, oriented so the centre lies above its neighbour mean.

    ``values`` are the oriented coordinates; ``reflected`` records whether
    ``x -> 1 - x`` was applied to the raw values.
    """

    values: tuple[float, float, float, float, float]
    reflected: bool = False

    @classmethod
    def from_values(cls, raw) -> LocalWindow:
        raw = tuple(float(v) for v in raw)
        if len(raw) != 5:
            raise DomainError("a local window has exactly five values")
        if raw[2] < (raw[1] + raw[3]) / 2.0:
            return cls(tuple(1.0 - v for v in raw), True)
        return cls(raw, False)

    @property
    def raw(self) -> tuple[float, ...]:
        return tuple(1.0 - v for v in self.values) if self.reflected else self.values

    def reflect(self) -> LocalWindow:
        """Window of the mirrored configuration ``1 - x``, re-oriented."""
        return LocalWindow.from_values(tuple(1.0 - v for v in self.raw))

    def to_oriented(self, u: float) -> float:
        return 1.0 - u if self.reflected else u

    @property
    def mu(self) -> float:
        return (self.values[1] + self.values[3]) / 2.0

    @property
    def delta(self) -> float:
        return abs(self.values[2] - self.mu)

    def local_d(self) -> tuple[float, float, float]:
        x1, x2, x3, x4, x5 = self.values
        return (abs(x2 - (x1 + x3) / 2.0), abs(x3 - (x2 + x4) / 2.0), abs(x4 - (x3 + x5) / 2.0))


def local_window(c, j: int) -> LocalWindow:
    x = _cycle_values(c)
    n = x.shape[0]
    return LocalWindow.from_values([x[(j + k) % n] for k in range(-2, 3)])


def q_values(w: LocalWindow) -> tuple[float, float, float, float, float]:
    """The five thresholds; a draw above the smallest one moves the embedded chain."""
    x1, x2, x3, x4, x5 = w.values
    return (
        x2 + x4 - x3,
        x1 - x2 + x4,
        (-x1 + 3.0 * x2 + x4) / 3.0,
        x2 - x4 + x5,
        (x2 + 3.0 * x4 - x5) / 3.0,
    )


@dataclass(frozen=True)
class AcceptanceInterval:
    """Replacement values (oriented coordinates) that advance the embedded chain."""

    a: float
    b: float
    q_values: tuple[float, float, float, float, float]

    @property
    def length(self) -> float:
        return self.b - self.a


def _require_worst_centre(w: LocalWindow):
    x3 = w.values[2]
    if x3 < w.mu:
        raise DomainError(f"window not oriented: x3={x3!r} < mu={w.mu!r}")
    d2, d3, d4 = w.local_d()
    if d3 < max(d2, d4):
        raise DomainError(f"centre is not the worst node of the window: d={w.local_d()}")


def acceptance_interval(w: LocalWindow) -> AcceptanceInterval:
    _require_worst_centre(w)
    q = q_values(w)
    return AcceptanceInterval(max(0.0, min(q)), w.values[2], q)


def drift_full(x, a, b):
    """Expected change of h for a uniform replacement on [a, b] (any b)."""
    x1, x2, x3, x4, x5 = x
    return 2.0 * (a * a + b * b + a * b) + (2.0 * x3 - a - b) * (x1 + 2.0 * x2 + 2.0 * x4 + x5) - 6.0 * x3 * x3


def drift_reduced(x, a):
    """``drift_full`` with ``b = x3`` substituted."""
    x1, x2, x3, x4, x5 = x
    return (x3 - a) * (x1 + 2.0 * x2 - 4.0 * x3 + 2.0 * x4 + x5 - 2.0 * a)


def drift_closed_form(w: LocalWindow) -> float:
    iv = acceptance_interval(w)
    full = drift_full(w.values, iv.a, iv.b)
    reduced = drift_reduced(w.values, iv.a)
    if abs(full - reduced) > DRIFT_TOL:
        raise VerificationError(f"drift forms disagree: {full!r} vs {reduced!r}", {"window": w.values})
    return full


def _h_change(x, u):
    x1, x2, x3, x4, x5 = x

    def local(v):
        return 2.0 * (x2 - v) ** 2 + 2.0 * (v - x4) ** 2 + (x1 - v) ** 2 + (v - x5) ** 2

    return local(u) - local(x3)


def drift_monte_carlo(w: LocalWindow, n_samples: int, rng: np.random.Generator):
    """Monte-Carlo mean of the change in h over ``u ~ U[a, b]``: ``(estimate, std_error)``."""
    iv = acceptance_interval(w)
    if not iv.a < iv.b:
        raise DegenerateIntervalError(f"empty acceptance interval [{iv.a}, {iv.b}]")
    u = rng.uniform(iv.a, iv.b, int(n_samples))
    vals = _h_change(w.values, u)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))


# Vectorised window machinery for the sweeps.

def q_batch(W):
    x1, x2, x3, x4, x5 = W.T
    return np.stack([
        x2 + x4 - x3,
        x1 - x2 + x4,
        (-x1 + 3.0 * x2 + x4) / 3.0,
        x2 - x4 + x5,
        (x2 + 3.0 * x4 - x5) / 3.0,
    ], axis=1)


def drift_batch(W):
    """Closed-form drift for oriented windows, shape (n, 5) -> (n,)."""
    a = np.maximum(0.0, q_batch(W).min(axis=1))
    return drift_full(W.T, a, W[:, 2])


def orient_batch(W):
    W = np.asarray(W, dtype=np.float64)
    flip = W[:, 2] < (W[:, 1] + W[:, 3]) / 2.0
    out = W.copy()
    out[flip] = 1.0 - W[flip]
    return out, flip


def _window_d(W):
    x1, x2, x3, x4, x5 = W.T
    return (np.abs(x2 - (x1 + x3) / 2.0), np.abs(x3 - (x2 + x4) / 2.0), np.abs(x4 - (x3 + x5) / 2.0))


def feasible_mask(W):
    """Centre strictly worst in the window, in either orientation."""
    d2, d3, d4 = _window_d(W)
    return d3 > np.maximum(d2, d4)


def sample_feasible_windows(n: int, rng: np.random.Generator, both_orientations: bool = False):
    """Rejection-sample ``n`` windows from [0,1]^5 whose centre is the strict worst node.

    Unless ``both_orientations`` is set, only windows with ``x3 > mu`` are kept.
    """
    out = []
    have = 0
    while have < n:
        W = rng.random((max(4 * (n - have), 1024), 5))
        keep = feasible_mask(W)
        if not both_orientations:
            keep &= W[:, 2] > (W[:, 1] + W[:, 3]) / 2.0
        W = W[keep]
        out.append(W)
        have += len(W)
    return np.concatenate(out)[:n]


def boundary_windows(n: int, rng: np.random.Generator, jitter: float = 1e-9):
    """Feasible oriented windows with one of Q0..Q4 pinned to zero (within ``jitter``)."""
    out = []
    have = 0
    j = 0
    while have < n:
        W = rng.random((4096, 5))
        x1, x2, x3, x4, x5 = W.T.copy()
        eps = rng.uniform(-jitter, jitter, len(W))
        target = j % 5
        if target == 0:
            W[:, 2] = x2 + x4 + eps
        elif target == 1:
            W[:, 0] = x2 - x4 + eps
        elif target == 2:
            W[:, 0] = 3.0 * x2 + x4 + eps
        elif target == 3:
            W[:, 4] = x4 - x2 + eps
        else:
            W[:, 4] = x2 + 3.0 * x4 + eps
        keep = np.all((W >= 0.0) & (W <= 1.0), axis=1) & feasible_mask(W)
        keep &= W[:, 2] > (W[:, 1] + W[:, 3]) / 2.0
        out.append(W[keep])
        have += int(keep.sum())
        j += 1
    return np.concatenate(out)[:n]


def verify_drift_nonpositive(n_samples: int, rng: np.random.Generator, drift=drift_batch,
                             boundary_samples: int | None = None, tol: float = DRIFT_TOL) -> CheckReport:
    """Certify ``drift <= tol`` on random feasible windows plus boundary-pinned ones."""
    if boundary_samples is None:
        boundary_samples = max(n_samples // 10, 1)
    W = np.concatenate([sample_feasible_windows(n_samples, rng), boundary_windows(boundary_samples, rng)])
    D = drift(W)
    worst = int(np.argmax(D))
    passed = bool(D[worst] <= tol)
    return CheckReport(
        "drift_nonpositive", len(W), float(D[worst]), passed,
        witness=None if passed else {"window": W[worst].tolist(), "drift": float(D[worst])},
        details={"max_drift": float(D[worst]), "argmax_window": W[worst].tolist(),
                 "boundary_samples": boundary_samples},
    )


def drift_monte_carlo_batch(W, n_samples: int, rng: np.random.Generator):
    """Per-window Monte-Carlo drift estimates and standard errors."""
    a = np.maximum(0.0, q_batch(W).min(axis=1))
    b = W[:, 2]
    U = a[:, None] + (b - a)[:, None] * rng.random((len(W), n_samples))
    vals = _h_change(tuple(col[:, None] for col in W.T), U)
    return vals.mean(axis=1), vals.std(axis=1, ddof=1) / math.sqrt(n_samples)


def check_drift_oracle(n_windows: int, n_samples: int, rng: np.random.Generator,
                       z: float | None = None, drift=drift_batch, family_alpha: float = 1e-3) -> CheckReport:
    """Closed-form drift against its Monte-Carlo estimate on random feasible windows.

    Each window must agree within ``z`` standard errors. Without an explicit
    ``z`` the threshold is chosen so that a correct formula fails on any of
    the ``n_windows`` with probability about ``family_alpha``.
    """
    if z is None:
        z = float(stats.norm.isf(family_alpha / (2 * n_windows)))
    W = sample_feasible_windows(n_windows, rng)
    closed = drift(W)
    est, se = drift_monte_carlo_batch(W, n_samples, rng)
    score = np.abs(closed - est) / se
    worst = int(np.argmax(score))
    passed = bool(score[worst] <= z)
    return CheckReport(
        "drift_mc_oracle", n_windows, float(score[worst] - z), passed,
        witness=None if passed else {"window": W[worst].tolist(), "closed": float(closed[worst]),
                                     "mc": float(est[worst]), "se": float(se[worst])},
        details={"max_z": float(score[worst]), "z_tol": z, "mc_samples_per_window": n_samples},
    )


def check_reflection_invariance(n: int, rng: np.random.Generator, tol: float = DRIFT_TOL) -> CheckReport:
    """Drift of a window equals the drift of its mirror image ``1 - x``."""
    W = sample_feasible_windows(n, rng)
    mirrored, flip = orient_batch(1.0 - W)
    assert flip.all()
    gap = np.abs(drift_batch(W) - drift_batch(mirrored))
    return CheckReport("drift_reflection_invariance", n, float(gap.max() - tol), bool(gap.max() <= tol),
                       details={"max_gap": float(gap.max())})


# Metric equivalence.

def metric_quantities(c):
    x = _cycle_values(c)
    return float(cycle_d(x).max()), float(np.abs(x - np.roll(x, 1)).max()), lyapunov_h(x)


def check_metric_bounds(c, tol: float = 1e-12) -> dict:
    """``d <= max|x_i - x_{i-1}| <= N d`` and ``2 d^2 <= h <= 6 N^3 d^2``."""
    x = _cycle_values(c)
    n = x.shape[0]
    d, m, h = metric_quantities(x)
    checks = {
        "d_le_maxdiff": d <= m,
        "maxdiff_le_Nd": m <= n * d,
        "2d2_le_h": 2.0 * d * d <= h + tol,
        "h_le_6N3d2": h <= 6.0 * n**3 * d * d + tol,
    }
    report = {"N": n, "d": d, "max_diff": m, "h": h, **checks, "passed": all(checks.values())}
    if not report["passed"]:
        raise VerificationError("metric bounds violated", report)
    return report


def sweep_metric_bounds(n_samples: int, rng: np.random.Generator, sizes=range(5, 13),
                        tol: float = 1e-12) -> CheckReport:
    sizes = list(sizes)
    per = [n_samples // len(sizes) + (1 if i < n_samples % len(sizes) else 0) for i in range(len(sizes))]
    worst, witness, total = -math.inf, None, 0
    for n, k in zip(sizes, per):
        X = rng.random((k, n))
        d = np.abs(X - (np.roll(X, 1, axis=1) + np.roll(X, -1, axis=1)) / 2.0).max(axis=1)
        m = np.abs(X - np.roll(X, 1, axis=1)).max(axis=1)
        h = 2.0 * np.sum((X - np.roll(X, -1, axis=1)) ** 2, axis=1) + np.sum((X - np.roll(X, -2, axis=1)) ** 2, axis=1)
        viol = np.stack([d - m, m - n * d, 2 * d * d - h - tol, h - 6.0 * n**3 * d * d - tol], axis=1)
        vmax = viol.max(axis=1)
        i = int(np.argmax(vmax))
        if vmax[i] > worst:
            worst = float(vmax[i])
            witness = {"config": X[i].tolist(), "violations": viol[i].tolist()}
        total += k
    passed = worst <= 0.0
    return CheckReport("metric_bounds", total, worst, passed, witness=None if passed else witness)


# Local one-step properties.

def check_decrease_window(w: LocalWindow, u: float, tol: float = 1e-12) -> float:
    """Change of h when the centre moves to ``u`` within ``delta/6`` of the neighbour mean.

    ``u`` is given in raw coordinates. Returns the exact change and raises if
    it exceeds ``-(5/6) delta^2``.
    """
    d2, d3, d4 = w.local_d()
    if d3 < max(d2, d4):
        raise DomainError("centre is not the worst node of the window")
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"u={u!r} outside [0, 1]")
    uo = w.to_oriented(u)
    mu, delta = w.mu, w.delta
    slack = 4 * np.finfo(float).eps
    if not mu - delta / 6.0 - slack <= uo <= mu + delta / 6.0 + slack:
        raise DomainError(f"u={u!r} outside the window [mu - delta/6, mu + delta/6]")
    x1, x2, x3, x4, x5 = w.values
    A = 3.0 * x3 - x1 - 2.0 * x2 - 2.0 * x4 - x5
    change = -2.0 * (x3 - uo) * (3.0 * uo + A)
    if change > -(5.0 / 6.0) * delta * delta + tol:
        raise VerificationError("h decrease below the guaranteed amount",
                                {"window": w.values, "u": u, "change": change})
    return change


def _moved_d(x, u):
    x1, x2, x3, x4, x5 = x
    return abs(x2 - (x1 + u) / 2.0), abs(u - (x2 + x4) / 2.0), abs(x4 - (u + x5) / 2.0)


def check_rejection_region(w: LocalWindow, u: float) -> bool:
    """Whether moving the centre to ``u`` raises its d and keeps it the strict maximum.

    Must be true for every ``u`` outside ``[mu - 3 delta, x3]`` (oriented); a
    false answer there raises :class:`VerificationError`.
    """
    _require_worst_centre(w)
    uo = w.to_oriented(u)
    mu, delta, x3 = w.mu, w.delta, w.values[2]
    d2n, d3n, d4n = _moved_d(w.values, uo)
    holds = d3n > delta and d3n > d2n and d3n > d4n
    if not holds and not (mu - 3.0 * delta <= uo <= x3):
        raise VerificationError("replacement outside the rejection interval did not stay worst",
                                {"window": w.values, "u": u})
    return holds


def sweep_decrease_window(n: int, rng: np.random.Generator, tol: float = 1e-12) -> CheckReport:
    W = sample_feasible_windows(n, rng)
    x1, x2, x3, x4, x5 = W.T
    mu = (x2 + x4) / 2.0
    delta = x3 - mu
    lo = np.maximum(mu - delta / 6.0, 0.0)
    hi = np.minimum(mu + delta / 6.0, 1.0)
    u = lo + (hi - lo) * rng.random(n)
    A = 3.0 * x3 - x1 - 2.0 * x2 - 2.0 * x4 - x5
    change = -2.0 * (x3 - u) * (3.0 * u + A)
    viol = change + (5.0 / 6.0) * delta**2 - tol
    i = int(np.argmax(viol))
    passed = bool(viol[i] <= 0)
    return CheckReport("decrease_window", n, float(viol[i]), passed,
                       witness=None if passed else {"window": W[i].tolist(), "u": float(u[i])})


def sweep_rejection_region(n: int, rng: np.random.Generator) -> CheckReport:
    W = sample_feasible_windows(n, rng)
    x1, x2, x3, x4, x5 = W.T
    mu = (x2 + x4) / 2.0
    delta = x3 - mu
    lo = mu - 3.0 * delta
    # u uniform on [0, 1] minus [lo, x3]
    below = np.clip(lo, 0.0, 1.0)
    above = 1.0 - x3
    r = rng.random(n) * (below + above)
    u = np.where(r < below, r, x3 + (r - below))
    u = np.where(u == x3, np.nextafter(x3, 2.0), u)
    d2n = np.abs(x2 - (x1 + u) / 2.0)
    d3n = np.abs(u - mu)
    d4n = np.abs(x4 - (u + x5) / 2.0)
    margin = np.minimum(d3n - delta, np.minimum(d3n - d2n, d3n - d4n))
    ok = (d3n > delta) & (d3n > d2n) & (d3n > d4n)
    i = int(np.argmin(margin))
    passed = bool(ok.all())
    return CheckReport("rejection_region", n, float(max(-margin[i], 0.0)) if not passed else 0.0, passed,
                       witness=None if passed else {"window": W[i].tolist(), "u": float(u[i])},
                       details={"min_margin": float(margin[i])})


# Embedded chain.

@dataclass
class EmbeddedTrajectory:
    """Embedded-chain observations ``s = 0..S``.

    ``log_xi[s]`` and ``log_d[s]`` are logs of h and d at ``X(nu_s)``;
    ``nodes[s]`` is the worst node there; ``step_ratio[s]`` is the sup-norm
    move from s to s+1 divided by ``d(X(nu_s))``. ``times`` and ``states``
    are present only when extracted from a raw trajectory; a directly
    simulated chain instead keeps its final state as ``offset + 2**exponent * scaled``.
    """

    log_xi: np.ndarray
    log_d: np.ndarray
    nodes: np.ndarray
    step_ratio: np.ndarray
    times: np.ndarray | None = None
    states: np.ndarray | None = None
    final_scaled: np.ndarray | None = None
    final_offset: float = 0.0
    final_exponent: int = 0

    def __len__(self) -> int:
        return int(self.step_ratio.shape[0])

    @property
    def xi(self) -> np.ndarray:
        return np.exp(self.log_xi)

    @property
    def n_nodes(self) -> int:
        if self.states is not None:
            return self.states.shape[1]
        return self.final_scaled.shape[0]

    def final_state(self) -> np.ndarray:
        if self.states is not None:
            return self.states[-1]
        return self.final_offset + np.ldexp(self.final_scaled, self.final_exponent)


def embed(tr: Trajectory) -> EmbeddedTrajectory:
    """Extract the embedded chain ``X(nu_0), X(nu_1), ...`` from a raw uniform-law run on a cycle."""
    if not tr.dist.is_continuous:
        raise DomainError("embedding is defined for the uniform [0, 1] law")
    if not tr.topology.is_cycle or tr.topology.node_count < 5:
        raise UnsupportedTopologyError("embedding needs a cycle with N >= 5")
    T = len(tr)
    final_d = float(tr.final_d)
    final_nodes = [v for v, dv in enumerate(cycle_d(tr.final)) if dv == final_d]
    js = np.append(tr.nodes, final_nodes[0])
    ds = np.append(tr.d_before_raw, final_d)
    all_states = tr.states()
    times = [0]
    j, dref = js[0], ds[0]
    for t in range(1, T + 1):
        if js[t] != j or ds[t] < dref:
            times.append(t)
            j, dref = js[t], ds[t]
    times = np.array(times, dtype=np.int64)
    states = all_states[times]
    log_xi = np.log([lyapunov_h(s) for s in states])
    log_d = np.log(ds[times])
    moves = np.abs(np.diff(states, axis=0)).max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = moves / ds[times][:-1]
    return EmbeddedTrajectory(log_xi, log_d, js[times], ratio, times=times, states=states)


def _initial_logs(z):
    d = cycle_d(z)
    return math.log(lyapunov_h(z)), math.log(d.max()), int(np.argmax(d))


def simulate_embedded_batch(X0, n_steps: int, rngs) -> list[EmbeddedTrajectory]:
    """Run R embedded chains for ``n_steps`` embedded steps each.

    Draws are taken per run in chunks of at most ``CHUNK`` steps, two per
    step, so a row's result does not depend on the batch it runs in.
    """
    Z = np.array(X0, dtype=np.float64, copy=True)
    if Z.ndim != 2 or Z.shape[1] < 5:
        raise UnsupportedTopologyError("embedded simulation needs cycles with N >= 5")
    R, _ = Z.shape
    c = np.zeros(R)
    e = np.zeros(R, dtype=np.int64)
    first = [_initial_logs(z) for z in Z]
    lnxi = np.empty((R, n_steps + 1))
    lnd = np.empty((R, n_steps + 1))
    nodes = np.empty((R, n_steps + 1), dtype=np.int64)
    ratio = np.empty((R, n_steps))
    lnxi[:, 0] = [f[0] for f in first]
    done = 0
    while done < n_steps:
        C = min(CHUNK, n_steps - done)
        draws = np.stack([g.random((C, 2)) for g in rngs])
        o_xi = np.empty((R, C))
        o_d = np.empty((R, C))
        o_r = np.empty((R, C))
        o_n = np.empty((R, C), dtype=np.int64)
        kernels.embedded_advance(Z, c, e, draws, o_xi, o_d, o_r, o_n)
        lnxi[:, done + 1 : done + 1 + C] = o_xi
        lnd[:, done : done + C] = o_d
        nodes[:, done : done + C] = o_n
        ratio[:, done : done + C] = o_r
        done += C
    out = []
    for r in range(R):
        d = cycle_d(Z[r])
        lnd[r, n_steps] = math.log(d.max()) + e[r] * math.log(2.0)
        nodes[r, n_steps] = int(np.argmax(d))
        out.append(EmbeddedTrajectory(lnxi[r], lnd[r], nodes[r], ratio[r], final_scaled=Z[r].copy(),
                                      final_offset=float(c[r]), final_exponent=int(e[r])))
    return out


def simulate_embedded(x0, n_steps: int, rng: np.random.Generator) -> EmbeddedTrajectory:
    return simulate_embedded_batch(np.asarray(x0, dtype=np.float64)[None, :], n_steps, [rng])[0]


def decrease_factor(n: int) -> float:
    return 1.0 - 5.0 / (36.0 * n**3)


def check_step_bounds(e: EmbeddedTrajectory, n_nodes: int | None = None, confidence: float = 0.99,
                      rel_tol: float = 1e-9, raise_on_violation: bool = True) -> dict:
    """Per-transition hard bounds plus the empirical guaranteed-decrease frequency.

    Hard bounds: sup-norm move <= 4 d and xi(s+1) <= 121 xi(s). The frequency
    of ``xi(s+1) <= rho xi(s)``, ``rho = 1 - 5/(36 N^3)``, is reported with its
    one-sided Clopper-Pearson lower bound at ``confidence``.
    """
    n = n_nodes or e.n_nodes
    if len(e) < 1:
        raise DomainError("need at least two embedded states")
    ratio = e.step_ratio
    jumps = np.diff(e.log_xi)
    step_excess = ratio - 4.0 * (1.0 + rel_tol)
    jump_excess = jumps - (LOG_R + rel_tol)
    k = int(np.sum(jumps <= math.log(decrease_factor(n))))
    total = len(jumps)
    lower = float(stats.beta.ppf(1.0 - confidence, k, total - k + 1)) if k > 0 else 0.0
    report = {
        "transitions": total,
        "max_step_ratio": float(ratio.max()),
        "max_log_xi_jump": float(jumps.max()),
        "step_bound_ok": bool(np.all(step_excess <= 0)),
        "jump_bound_ok": bool(np.all(jump_excess <= 0)),
        "decrease_count": k,
        "decrease_frequency": k / total,
        "decrease_lower_bound": lower,
        "decrease_consistent": lower >= 1.0 / 48.0,
    }
    if raise_on_violation and not (report["step_bound_ok"] and report["jump_bound_ok"]):
        s = int(np.argmax(np.maximum(step_excess, jump_excess)))
        raise VerificationError("embedded step bound violated", {"s": s, **report})
    return report


def decay_slope(e: EmbeddedTrajectory, burn_in: float = 0.1, floor: float = 1e-300):
    """Least-squares slope of ``ln xi(s)`` against ``s`` after burn-in.

    Points from the first ``s`` with ``xi(s) < floor`` on are dropped.
    Returns ``(slope, n_points, r_squared)``.
    """
    y = e.log_xi
    low = np.nonzero(y < math.log(floor))[0]
    n = int(low[0]) if low.size else len(y)
    start = int(burn_in * n)
    s = np.arange(start, n, dtype=np.float64)
    yy = y[start:n]
    if len(s) < 2:
        return math.nan, len(s), math.nan
    fit = stats.linregress(s, yy)
    return float(fit.slope), len(s), float(fit.rvalue**2)


def embedded_transition(before, after) -> bool:
    """Whether ``after`` (one replacement past ``before``) is a new embedded time.

    True iff the worst node moved or ``d`` strictly dropped. Comparisons are
    exact; no tolerance is applied.
    """
    d0 = cycle_d(before)
    d1 = cycle_d(after)
    return int(np.argmax(d1)) != int(np.argmax(d0)) or d1.max() < d0.max()


def check_supermartingale_trend(trajectories, n_bins: int = 10, z: float = 3.0) -> CheckReport:
    """Binned means of ``xi(s+1) - xi(s)`` relative to ``xi(s)`` must not be significantly positive.

    Increments are pooled over trajectories, normalised by ``xi(s)`` so that
    the scale-free chain can be binned by ``ln xi(s)`` quantiles, and each
    bin mean is compared against ``z`` standard errors.
    """
    lx = np.concatenate([e.log_xi[:-1] for e in trajectories])
    rel = np.concatenate([np.expm1(np.diff(e.log_xi)) for e in trajectories])
    ok = np.isfinite(lx) & np.isfinite(rel)
    lx, rel = lx[ok], rel[ok]
    edges = np.quantile(lx, np.linspace(0.0, 1.0, n_bins + 1))
    which = np.clip(np.searchsorted(edges, lx, side="right") - 1, 0, n_bins - 1)
    worst = -math.inf
    means = []
    for b in range(n_bins):
        r = rel[which == b]
        if len(r) < 2:
            continue
        m = float(r.mean())
        se = float(r.std(ddof=1) / math.sqrt(len(r)))
        means.append(m)
        worst = max(worst, m - z * se)
    fit = stats.linregress(lx, rel)
    slope_hi = fit.slope + z * fit.stderr
    passed = worst <= 0.0
    return CheckReport("supermartingale_trend", len(rel), worst, bool(passed),
                       details={"bin_means": means, "slope": float(fit.slope),
                                "slope_upper": float(slope_hi), "intercept": float(fit.intercept)})


def check_limit_shape(x, rel_factor: float = 10.0) -> dict:
    """Spread of the non-worst nodes at the end of a run against ``sqrt(h)``.

    Returns the spread, the bound ``rel_factor * sqrt(h)`` and whether it holds.
    """
    x = _cycle_values(x)
    d = cycle_d(x)
    rest = np.delete(x, int(np.argmax(d)))
    spread = float(rest.max() - rest.min())
    bound = rel_factor * math.sqrt(lyapunov_h(x))
    return {"spread": spread, "bound": bound, "passed": spread <= bound}
