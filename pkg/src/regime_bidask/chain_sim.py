"""Exact event-driven simulation of (controlled) continuous-time Markov chains.

Holding times are exponential with rate ``-b_ii`` and destinations are drawn
proportionally to the off-diagonal entries of the current column, so no time
discretisation enters any path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .streams import BLOCK_SIZE, map_blocks

GeneratorFn = Callable[[float, int], NDArray[np.float64]]


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainPath:
    """One chain trajectory on ``[0, horizon]``.

    ``jump_times`` are strictly increasing in ``(0, horizon]``; ``to_states[k]``
    is the state entered at ``jump_times[k]``.
    """

    initial_state: int
    jump_times: NDArray[np.float64]
    to_states: NDArray[np.int_]
    horizon: float
    n_states: int

    def __post_init__(self) -> None:
        times = np.asarray(self.jump_times, dtype=float)
        states = np.asarray(self.to_states, dtype=int)
        if times.shape != states.shape:
            raise ValueError("jump_times and to_states differ in length")
        if times.size:
            if np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] > self.horizon:
                raise ValueError("jump times must be strictly increasing in (0, T]")
            prev = np.concatenate([[self.initial_state], states[:-1]])
            if np.any(prev == states):
                raise ValueError("a jump must change the state")
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "to_states", states)

    @property
    def n_events(self) -> int:
        return int(self.jump_times.size)

    @property
    def states(self) -> NDArray[np.int_]:
        """State on each holding interval, ``n_events + 1`` entries."""
        return np.concatenate([[self.initial_state], self.to_states]).astype(int)

    @property
    def knots(self) -> NDArray[np.float64]:
        return np.concatenate([[0.0], self.jump_times, [self.horizon]])

    def state_at(self, t: float | NDArray[np.float64]) -> NDArray[np.int_]:
        """Right-continuous state at ``t``."""
        k = np.searchsorted(self.jump_times, np.asarray(t), side="right")
        return self.states[k]

    def occupation(self, upto: float | None = None) -> NDArray[np.float64]:
        upto = self.horizon if upto is None else upto
        knots = np.clip(self.knots, 0.0, upto)
        occ = np.zeros(self.n_states)
        np.add.at(occ, self.states, np.diff(knots))
        return occ


@dataclass(frozen=True)
class CountingPath:
    """Jump counts ``J`` and the compensator ``int A_0 X ds`` at the path knots.

    Knots are ``0``, the jump times and the horizon.  ``J_bar = J - comp`` is
    linear between knots.
    """

    knots: NDArray[np.float64]
    counts: NDArray[np.float64]
    compensator: NDArray[np.float64]

    @property
    def jbar(self) -> NDArray[np.float64]:
        return self.counts - self.compensator

    def jbar_at(self, t: float) -> NDArray[np.float64]:
        k = int(np.searchsorted(self.knots, t, side="right")) - 1
        k = min(max(k, 0), len(self.knots) - 2)
        w = (t - self.knots[k]) / max(self.knots[k + 1] - self.knots[k], 1e-300)
        comp = self.compensator[k] + w * (self.compensator[k + 1] - self.compensator[k])
        return self.counts[k] - comp


def _as_generator_fn(generator: NDArray[np.float64] | GeneratorFn) -> GeneratorFn:
    if callable(generator):
        return generator
    G = np.asarray(generator, dtype=float)
    return lambda t, x: G


def simulate_chain(
    generator: NDArray[np.float64] | GeneratorFn,
    x0: int,
    T: float,
    seed: int | np.random.Generator = 0,
    refresh_grid: Sequence[float] | None = None,
) -> ChainPath:
    """Simulate one path exactly.

    ``generator`` is a matrix or ``(t, state) -> matrix``.  A callable is sampled
    at the left end of each holding interval and re-sampled at every point of
    ``refresh_grid``; by memorylessness this is exact for generators that are
    piecewise constant on that grid.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    gen = _as_generator_fn(generator)
    grid = np.unique(np.concatenate([np.asarray(refresh_grid or [], dtype=float), [T]]))
    grid = grid[(grid > 0) & (grid <= T)]
    t, state = 0.0, int(x0)
    times: list[float] = []
    states: list[int] = []
    n = None
    while t < T:
        B = np.asarray(gen(t, state), dtype=float)
        n = B.shape[0]
        col = B[:, state].copy()
        rate = -col[state]
        if not np.all(np.isfinite(col)):
            raise SimulationError(f"non-finite rates in column {state + 1} at t={t}")
        t_next = grid[np.searchsorted(grid, t, side="right")] if t < grid[-1] else T
        tau = rng.exponential(1.0 / rate) if rate > 0 else np.inf
        if t + tau < t_next:
            t += tau
            col[state] = 0.0
            state = int(rng.choice(n, p=col / col.sum()))
            times.append(t)
            states.append(state)
        else:
            t = t_next
    if n is None:
        n = np.asarray(gen(0.0, int(x0))).shape[0]
    return ChainPath(int(x0), np.array(times), np.array(states, dtype=int), float(T), n)


def counting_process(path: ChainPath) -> CountingPath:
    """``J_i(t)``: number of jumps into state ``i`` up to each knot."""
    n = path.n_states
    knots = path.knots
    counts = np.zeros((knots.size, n))
    for k, s in enumerate(path.to_states, start=1):
        counts[k:, s] += 1.0
    return CountingPath(knots, counts, np.zeros_like(counts))


def compensated_j(path: ChainPath, generator: NDArray[np.float64]) -> CountingPath:
    """Attach the compensator ``int_0^t A_0 X_s ds`` to the counting process."""
    A0 = np.asarray(generator, dtype=float)
    A0 = A0 - np.diag(np.diag(A0))
    cp = counting_process(path)
    dt = np.diff(cp.knots)
    incr = A0[:, path.states].T * dt[:, None]
    comp = np.vstack([np.zeros(path.n_states), np.cumsum(incr, axis=0)])
    return CountingPath(cp.knots, cp.counts, comp)


def martingale_increments(
    path: ChainPath, generator: NDArray[np.float64], grid: Iterable[float] | None = None
) -> list[tuple[float, NDArray[np.float64]]]:
    """``M_t = X_t - X_0 - int_0^t A X_s ds`` at jump times and at ``grid`` times."""
    A = np.asarray(generator, dtype=float)
    n = path.n_states
    eye = np.eye(n)
    times = np.unique(np.concatenate([[0.0], path.jump_times, list(grid or []), [path.horizon]]))
    times = times[(times >= 0) & (times <= path.horizon)]
    out = []
    x0 = eye[path.initial_state]
    for t in times:
        knots = np.clip(path.knots, 0.0, t)
        occ = np.zeros(n)
        np.add.at(occ, path.states, np.diff(knots))
        drift = A @ occ
        out.append((float(t), eye[int(path.state_at(t))] - x0 - drift))
    return out


def write_paths_csv(paths: Sequence[ChainPath], out: Path) -> None:
    """Dump ``(path_id, t, state)`` rows, one per knot; states are 1-based."""
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t", "state"])
        for pid, p in enumerate(paths):
            for t, s in zip(np.concatenate([[0.0], p.jump_times]), p.states):
                w.writerow([pid, repr(float(t)), int(s) + 1])


# ----------------------------------------------------------------------------
# Batched simulation
# ----------------------------------------------------------------------------

def advance_chains(
    states: NDArray[np.int_],
    horizon: float,
    columns: Callable[[NDArray[np.int_], NDArray[np.int_]], NDArray[np.float64]],
    rng: np.random.Generator,
    on_segment: Callable[[NDArray[np.int_], NDArray[np.int_], NDArray[np.float64]], None] | None = None,
    on_jump: Callable[[NDArray[np.int_], NDArray[np.int_], NDArray[np.int_], NDArray[np.float64]], None] | None = None,
) -> NDArray[np.int_]:
    """Advance every chain in ``states`` (modified in place) by ``horizon``.

    ``columns(idx, cur)`` returns, per path, the generator column of the current
    state (shape ``(k, N)``); it is queried at the start of every holding
    interval.  ``on_segment(idx, cur, length)`` sees each constant-state piece and
    ``on_jump(idx, src, dst, elapsed)`` each transition.
    """
    n = states.shape[0]
    remaining = np.full(n, float(horizon))
    active = np.arange(n)
    while active.size:
        cur = states[active]
        col = np.asarray(columns(active, cur), dtype=float)
        rows = np.arange(active.size)
        rate = -col[rows, cur]
        if not np.all(np.isfinite(rate)):
            raise SimulationError("non-finite exit rate")
        e = rng.standard_exponential(active.size)
        with np.errstate(divide="ignore"):
            tau = np.where(rate > 0, e / np.where(rate > 0, rate, 1.0), np.inf)
        seg = np.minimum(tau, remaining[active])
        if on_segment is not None:
            on_segment(active, cur, seg)
        jumped = tau < remaining[active]
        remaining[active] -= seg
        if np.any(jumped):
            idx = active[jumped]
            src = cur[jumped]
            probs = col[jumped].copy()
            probs[np.arange(idx.size), src] = 0.0
            cdf = np.cumsum(probs, axis=1) / rate[jumped][:, None]
            v = rng.random(idx.size)
            dst = np.sum(cdf < v[:, None], axis=1)
            last_pos = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
            dst = np.minimum(dst, last_pos)
            if on_jump is not None:
                on_jump(idx, src, dst, horizon - remaining[idx])
            states[idx] = dst
        active = active[jumped]
    return states


@dataclass(frozen=True)
class ChainBatch:
    """Sufficient statistics of many independent chain paths on ``[0, T]``.

    Attributes
    ----------
    occupation : (n, N)
        Time spent in each state.
    transitions : (n, N, N)
        ``transitions[p, i, j]`` counts jumps ``i -> j``.
    final_state : (n,)
    quad_var : (n, N, N)
        Realised covariation ``sum dX dX^T`` of the chain martingale.
    """

    x0: int
    horizon: float
    occupation: NDArray[np.float64]
    transitions: NDArray[np.int_]
    final_state: NDArray[np.int_]
    quad_var: NDArray[np.float64]

    @property
    def n_paths(self) -> int:
        return int(self.final_state.size)

    def counts(self) -> NDArray[np.float64]:
        """``J_i(T)`` per path."""
        return self.transitions.sum(axis=1).astype(float)

    def jbar(self, generator: NDArray[np.float64]) -> NDArray[np.float64]:
        A0 = np.asarray(generator, dtype=float)
        A0 = A0 - np.diag(np.diag(A0))
        return self.counts() - self.occupation @ A0.T

    def martingale(self, generator: NDArray[np.float64]) -> NDArray[np.float64]:
        """``M_T = X_T - X_0 - A int X ds`` per path."""
        n = self.occupation.shape[1]
        eye = np.eye(n)
        return eye[self.final_state] - eye[self.x0] - self.occupation @ np.asarray(generator).T


def simulate_chain_batch(
    generator: NDArray[np.float64],
    x0: int,
    T: float,
    n_paths: int,
    seed: int,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> ChainBatch:
    """Simulate ``n_paths`` chains with a constant generator, keeping statistics only."""
    G = np.asarray(generator, dtype=float)
    n = G.shape[0]
    eye = np.eye(n)

    def block(rng: np.random.Generator, m: int):
        states = np.full(m, int(x0))
        occ = np.zeros((m, n))
        trans = np.zeros((m, n, n), dtype=np.int64)
        qv = np.zeros((m, n, n))

        def seg(idx, cur, length):
            occ[idx, cur] += length

        def jump(idx, src, dst, _):
            np.add.at(trans, (idx, src, dst), 1)
            dx = eye[dst] - eye[src]
            qv[idx] += dx[:, :, None] * dx[:, None, :]

        advance_chains(states, T, lambda idx, cur: G[:, cur].T, rng, seg, jump)
        return occ, trans, states, qv

    parts = map_blocks(block, seed, n_paths, threads, block_size)
    return ChainBatch(
        x0=int(x0),
        horizon=float(T),
        occupation=np.concatenate([p[0] for p in parts]),
        transitions=np.concatenate([p[1] for p in parts]),
        final_state=np.concatenate([p[2] for p in parts]),
        quad_var=np.concatenate([p[3] for p in parts]),
    )
