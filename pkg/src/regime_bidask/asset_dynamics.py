"""Joint simulation of the chain and the regime-switching price.

Between chain jumps ``log S_bar`` is advanced by exact Gaussian increments with
the current regime's coefficients; ``S = S_bar * alpha[X]`` is formed from the
identity rather than by discretising its jump term.  Under ``P`` the chain runs
with ``A`` and ``S_bar`` has drift ``mu``; under ``Q^u`` the chain runs with
``B(u)`` and ``S_bar`` has drift ``r - u_i c_i`` (the risk-neutral drift
``mu + theta sigma``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .chain_sim import ChainPath, advance_chains
from .model_core import RegimeModel, esscher_theta, validate_model
from .streams import BLOCK_SIZE, map_blocks

# (t, s_current, states) -> controls, shape (k, N)
FeedbackControl = Callable[[float, NDArray[np.float64], NDArray[np.int_]], NDArray[np.float64]]


@dataclass(frozen=True)
class PricePath:
    """A single simulated trajectory on the time grid."""

    times: NDArray[np.float64]
    sbar: NDArray[np.float64]
    s: NDArray[np.float64]
    states: NDArray[np.int_]
    dW: NDArray[np.float64]
    chain: ChainPath | None
    measure: str

    @property
    def z(self) -> NDArray[np.float64]:
        return self.s


@dataclass(frozen=True)
class PricePaths:
    """A batch of trajectories plus the path functionals the solvers need.

    Grid arrays have shape ``(n_paths, n_steps + 1)``; per-step arrays
    ``(n_paths, n_steps)``.  ``occupation`` and ``w_by_state`` hold, per state,
    the time spent there and the Brownian increment accumulated there; they make
    regime-dependent stochastic integrals exact.
    """

    times: NDArray[np.float64]
    states: NDArray[np.int8]
    log_sbar: NDArray[np.float64]
    dW: NDArray[np.float64]
    occupation: NDArray[np.float64]
    w_by_state: NDArray[np.float64]
    transitions: NDArray[np.int32]
    alpha: NDArray[np.float64]
    rate: NDArray[np.float64]
    measure: str
    control: NDArray[np.float64] | None = None
    occ_steps: NDArray[np.float64] | None = field(default=None, repr=False)
    jumps_steps: NDArray[np.int8] | None = field(default=None, repr=False)
    events: tuple[NDArray, NDArray, NDArray] | None = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return int(self.states.shape[0])

    @property
    def sbar(self) -> NDArray[np.float64]:
        return np.exp(self.log_sbar)

    @property
    def s(self) -> NDArray[np.float64]:
        return np.exp(self.log_sbar) * self.alpha[self.states]

    @property
    def s_T(self) -> NDArray[np.float64]:
        return np.exp(self.log_sbar[:, -1]) * self.alpha[self.states[:, -1]]

    @property
    def rate_integral(self) -> NDArray[np.float64]:
        return self.occupation @ self.rate

    def chain_path(self, i: int) -> ChainPath:
        if self.events is None:
            raise ValueError("events were not recorded; simulate with record_events=True")
        pid, t, dst = self.events
        sel = pid == i
        order = np.argsort(t[sel], kind="stable")
        return ChainPath(int(self.states[i, 0]), t[sel][order], dst[sel][order],
                         float(self.times[-1]), self.alpha.shape[0])

    def path(self, i: int) -> PricePath:
        chain = self.chain_path(i) if self.events is not None else None
        sbar = np.exp(self.log_sbar[i])
        return PricePath(self.times, sbar, sbar * self.alpha[self.states[i]],
                         self.states[i].astype(int), self.dW[i], chain, self.measure)


def simulate_paths(
    model: RegimeModel,
    x0: int,
    s0: float,
    T: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    measure: str = "P",
    control: ArrayLike | FeedbackControl | None = None,
    threads: int = 1,
    record_steps: bool = False,
    record_events: bool = False,
    block_size: int = BLOCK_SIZE,
) -> PricePaths:
    """Simulate ``n_paths`` trajectories under ``P`` or ``Q^u``.

    ``control`` is ignored under ``P``.  Under ``Q`` it is a constant vector
    or a feedback map ``(t, s, states) -> u``; feedback values are sampled at the
    start of every holding interval and refreshed at every grid time.
    """
    validate_model(model)
    if measure not in ("P", "Q"):
        raise ValueError(f"unknown measure {measure!r}")
    n = model.n_states
    A = model.generator
    sig = model.sigma
    c = model.alpha_drift()
    dt = T / n_steps
    times = np.linspace(0.0, T, n_steps + 1)
    feedback = callable(control)
    u_const = None
    if measure == "Q" and not feedback:
        u_const = np.ones(n) if control is None else np.asarray(control, dtype=float)
        if u_const.shape != (n,):
            raise ValueError(f"control has length {u_const.shape}, expected {n}")

    def block(rng: np.random.Generator, m: int):
        states = np.full(m, int(x0), dtype=np.int64)
        grid_states = np.empty((m, n_steps + 1), dtype=np.int8)
        log_sbar = np.empty((m, n_steps + 1))
        dW = np.zeros((m, n_steps))
        occ = np.zeros((m, n))
        wst = np.zeros((m, n))
        trans = np.zeros((m, n, n), dtype=np.int32)
        occ_steps = np.zeros((m, n_steps, n)) if record_steps else None
        jumps_steps = np.zeros((m, n_steps, n), dtype=np.int8) if record_steps else None
        ev_pid: list[NDArray] = []
        ev_t: list[NDArray] = []
        ev_dst: list[NDArray] = []
        cur_log = np.full(m, np.log(s0))
        grid_states[:, 0] = states
        log_sbar[:, 0] = cur_log
        step = {"n": 0, "u": None}

        def columns(idx, cur):
            if measure == "P":
                step["u"] = None
                return A[:, cur].T
            if feedback:
                s_now = np.exp(cur_log[idx]) * model.alpha[cur]
                u = np.asarray(control(times[step["n"]], s_now, cur), dtype=float)
                uc = u[np.arange(idx.size), cur]
            else:
                uc = u_const[cur]
            step["u"] = uc
            return A[:, cur].T * uc[:, None]

        def seg(idx, cur, length):
            k = step["n"]
            if measure == "P":
                drift = model.mu[cur]
            else:
                drift = model.rate[cur] - step["u"] * c[cur]
            dw = np.sqrt(length) * rng.standard_normal(idx.size)
            cur_log[idx] += (drift - 0.5 * sig[cur] ** 2) * length + sig[cur] * dw
            dW[idx, k] += dw
            occ[idx, cur] += length
            wst[idx, cur] += dw
            if occ_steps is not None:
                occ_steps[idx, k, cur] += length

        def jump(idx, src, dst, elapsed):
            k = step["n"]
            trans[idx, src, dst] += 1
            if jumps_steps is not None:
                jumps_steps[idx, k, dst] += 1
            if record_events:
                ev_pid.append(idx.copy())
                ev_t.append(times[k] + elapsed)
                ev_dst.append(dst.copy())

        for k in range(n_steps):
            step["n"] = k
            advance_chains(states, dt, columns, rng, seg, jump)
            grid_states[:, k + 1] = states
            log_sbar[:, k + 1] = cur_log
        events = None
        if record_events:
            cat = (lambda xs, dt_: np.concatenate(xs) if xs else np.zeros(0, dtype=dt_))
            events = (cat(ev_pid, np.int64), cat(ev_t, float), cat(ev_dst, np.int64))
        return grid_states, log_sbar, dW, occ, wst, trans, occ_steps, jumps_steps, events

    parts = map_blocks(block, seed, n_paths, threads, block_size)
    offsets = np.cumsum([0] + [p[0].shape[0] for p in parts])

    def cat(i):
        if parts[0][i] is None:
            return None
        return np.concatenate([p[i] for p in parts])

    events = None
    if record_events:
        events = (
            np.concatenate([p[8][0] + off for p, off in zip(parts, offsets)]),
            np.concatenate([p[8][1] for p in parts]),
            np.concatenate([p[8][2] for p in parts]),
        )
    return PricePaths(
        times=times,
        states=cat(0),
        log_sbar=cat(1),
        dW=cat(2),
        occupation=cat(3),
        w_by_state=cat(4),
        transitions=cat(5),
        alpha=model.alpha.copy(),
        rate=model.rate.copy(),
        measure=measure,
        control=u_const,
        occ_steps=cat(6),
        jumps_steps=cat(7),
        events=events,
    )


def simulate_p_measure(model: RegimeModel, x0: int, s0: float, T: float, n_steps: int,
                       seed: int, n_paths: int = 1, **kw) -> PricePaths:
    return simulate_paths(model, x0, s0, T, n_steps, n_paths, seed, "P", **kw)


def simulate_q_measure(model: RegimeModel, u: ArrayLike | FeedbackControl, x0: int, s0: float,
                       T: float, n_steps: int, seed: int, n_paths: int = 1, **kw) -> PricePaths:
    return simulate_paths(model, x0, s0, T, n_steps, n_paths, seed, "Q", control=u, **kw)


def discount(paths: PricePaths) -> NDArray[np.float64]:
    """Discounted terminal price ``exp(-int_0^T r) S_T``; the integral is exact."""
    return np.exp(-paths.rate_integral) * paths.s_T


def discount_factor(paths: PricePaths) -> NDArray[np.float64]:
    return np.exp(-paths.rate_integral)


def risk_neutral_kernel(model: RegimeModel, u: ArrayLike) -> NDArray[np.float64]:
    """Brownian Girsanov kernel per regime (the Esscher parameter under ``u``)."""
    return esscher_theta(model, u)


def write_paths_csv(paths: PricePaths, out: Path, max_paths: int | None = None) -> None:
    """Dump ``(path_id, t, state, sbar, s)`` on the grid; states are 1-based."""
    m = paths.n_paths if max_paths is None else min(max_paths, paths.n_paths)
    sbar = paths.sbar
    s = paths.s
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t", "state", "sbar", "s"])
        for i in range(m):
            for k, t in enumerate(paths.times):
                w.writerow([i, repr(float(t)), int(paths.states[i, k]) + 1,
                            repr(float(sbar[i, k])), repr(float(s[i, k]))])
