"""Fixed-step simulation engine and experiment runners.

Two kinds of dynamics are stepped here:

* the nonlinear optimizer flow, integrated by classical RK4;
* the linear estimator cascade, advanced by its precomputed discrete maps
  (exact zero-order hold, or RK4 stage sampling of the continuous input).

When both run together they are stepped in lockstep on the same grid: at
each step the estimator emits its current derivative estimate, the estimate
is held constant over the optimizer's RK4 step, and both advance by h.

Derivative-only experiments are executed in batch form (precomputed input
grids plus a linear state scan); the result is identical to stepping the
estimator sample by sample, just considerably faster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import estimator as est_mod
from . import flows as flows_mod
from . import signals as sig_mod

STEADY_STATE_FRACTION = 0.2  # metrics use the final 20% of a run


class NonFiniteStateError(Exception):
    """Integration produced NaN or infinity; carries the offending time."""

    def __init__(self, t: float):
        super().__init__(f"state became non-finite at t = {t!r}")
        self.t = t


class InsufficientDataError(Exception):
    """Not enough points for the requested fit."""


@dataclass(frozen=True)
class SimConfig:
    """Fixed-step run description.

    ``seed`` is the run-level seed (the CLI wires it into the noise stream);
    ``record_stride`` keeps every N-th sample in the trajectory.
    """

    t0: float = 0.0
    tf: float = 10.0
    h: float = 1e-3
    seed: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError("tf must be greater than t0")
        if not self.h > 0.0:
            raise ValueError("step h must be > 0")
        if (self.tf - self.t0) / self.h < 10:
            raise ValueError("run must span at least 10 steps")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")

    @property
    def num_steps(self) -> int:
        return int(round((self.tf - self.t0) / self.h))

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.num_steps + 1)

    def record_indices(self) -> np.ndarray:
        return np.arange(0, self.num_steps + 1, self.record_stride)


class Trajectory:
    """Time-indexed record of named scalar columns (t first)."""

    def __init__(self, columns: dict):
        if "t" not in columns:
            raise ValueError("trajectory needs a 't' column")
        self.columns = {}
        length = None
        for name, values in columns.items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"column {name!r} is not one-dimensional")
            if length is None:
                length = arr.shape[0]
            elif arr.shape[0] != length:
                raise ValueError(f"column {name!r} has length {arr.shape[0]}, expected {length}")
            self.columns[name] = arr
        t = self.columns["t"]
        if len(t) >= 2 and not np.all(np.diff(t) > 0):
            raise ValueError("time column must be strictly increasing")

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def __len__(self) -> int:
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def column_group(self, prefix: str) -> np.ndarray:
        """Stack columns named ``<prefix>_0 .. <prefix>_{d-1}`` into (len, d)."""
        names = []
        i = 0
        while f"{prefix}_{i}" in self.columns:
            names.append(f"{prefix}_{i}")
            i += 1
        if not names:
            raise KeyError(f"no columns with prefix {prefix!r}")
        return np.column_stack([self.columns[n] for n in names])

    def check_finite(self) -> None:
        for name, arr in self.columns.items():
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr))[0])
                raise NonFiniteStateError(float(self.t[bad]))

    def window_mask(self, fraction: float = STEADY_STATE_FRACTION) -> np.ndarray:
        """Boolean mask selecting the final ``fraction`` of the run."""
        t = self.t
        return t >= t[0] + (1.0 - fraction) * (t[-1] - t[0])

    def to_csv(self, path) -> None:
        """Write all columns, 17 significant digits, LF line endings."""
        names = list(self.columns)
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(names) + "\n")
            data = [self.columns[n] for n in names]
            for row in zip(*data):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, "r", newline="") as fh:
            header = fh.readline().strip()
            names = header.split(",")
            rows = [line.strip().split(",") for line in fh if line.strip()]
        data = np.array([[float(v) for v in row] for row in rows])
        if data.size == 0 or data.shape[1] != len(names):
            raise ValueError(f"malformed trajectory CSV {path}")
        return cls({name: data[:, i] for i, name in enumerate(names)})


@dataclass(frozen=True)
class Metric:
    """Sup of |column| over the steady-state window, and the first time after
    which |column| stays below the threshold (None when no threshold given,
    inf when it never settles)."""

    steady_state_sup: float
    transient_time: float | None = None


def steady_state_metric(traj: Trajectory, column: str, threshold: float | None = None) -> Metric:
    values = np.abs(traj.column(column))
    mask = traj.window_mask()
    sup = float(np.max(values[mask]))
    transient = None
    if threshold is not None:
        below = values < threshold
        # last index where the column is at or above threshold
        above = np.flatnonzero(~below)
        if len(above) == 0:
            transient = float(traj.t[0])
        elif above[-1] == len(values) - 1:
            transient = math.inf
        else:
            transient = float(traj.t[above[-1] + 1])
    return Metric(sup, transient)


def slope_fit(points) -> float:
    """Least-squares slope of log(error) versus log(sigma).

    ``points`` is a sequence of (sigma, error) pairs, all positive; fewer
    than three raise :class:`InsufficientDataError`.
    """
    pts = list(points)
    if len(pts) < 3:
        raise InsufficientDataError(f"need at least 3 points, got {len(pts)}")
    sig = np.array([p[0] for p in pts], dtype=np.float64)
    err = np.array([p[1] for p in pts], dtype=np.float64)
    if np.any(sig <= 0.0) or np.any(err <= 0.0):
        raise ValueError("slope fit needs positive sigma and error values")
    x = np.log(sig)
    y = np.log(err)
    x = x - x.mean()
    return float(np.dot(x, y) / np.dot(x, x))


def integrate_rk4(rhs, x0, cfg: SimConfig) -> Trajectory:
    """Classical fixed-step RK4 for x' = rhs(t, x); records x columns only.

    Raises :class:`NonFiniteStateError` (with the failing time) instead of
    propagating NaNs.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    n = x.shape[0]
    h = cfg.h
    idx = cfg.record_indices()
    times = cfg.times()
    recorded = np.empty((len(idx), n))
    rec_pos = 0
    if idx[rec_pos] == 0:
        recorded[rec_pos] = x
        rec_pos += 1
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(cfg.num_steps):
            t = times[j]
            k1 = rhs(t, x)
            k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = rhs(t + h, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise NonFiniteStateError(float(times[j + 1]))
            if rec_pos < len(idx) and idx[rec_pos] == j + 1:
                recorded[rec_pos] = x
                rec_pos += 1
    cols = {"t": times[idx]}
    for i in range(n):
        cols[f"x_{i}"] = recorded[:, i]
    return Trajectory(cols)


def _scan_linear(T: np.ndarray, V: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """States of x[j+1] = T x[j] + V[j]; returns (N+1, n, m).

    Overflow is tolerated here (unstable gain/step combinations); callers
    surface it through the trajectory finiteness check.
    """
    N = V.shape[0]
    X = np.empty((N + 1,) + x0.shape)
    X[0] = x0
    x = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(N):
            x = T @ x + V[j]
            X[j + 1] = x
    return X


def _stage_times(cfg: SimConfig) -> np.ndarray:
    """Integer and half-step sample times, t0, t0+h/2, t0+h, ..., tf."""
    return cfg.t0 + 0.5 * cfg.h * np.arange(2 * cfg.num_steps + 1)


def simulate_realization(realization, input_values: np.ndarray, cfg: SimConfig,
                         x0: np.ndarray | None = None,
                         integrator: str = "rk4") -> tuple[np.ndarray, np.ndarray]:
    """Drive one LTI realization with a sampled input; returns (times, outputs).

    ``input_values`` holds the scalar input on the stage grid of
    :func:`_stage_times` for the rk4 integrator, or on the integer grid for
    zoh. Outputs are (N+1, q) at the integer sample times.
    """
    n = realization.state_dim
    N = cfg.num_steps
    if x0 is None:
        x0 = np.zeros(n)
    x0 = np.asarray(x0, dtype=np.float64).reshape(n, 1)
    u = np.asarray(input_values, dtype=np.float64)
    if integrator == "rk4":
        if u.shape[0] != 2 * N + 1:
            raise ValueError("rk4 input must be sampled on the stage grid")
        Phi, M0, M1, M2 = est_mod.rk4_step_maps(realization.A, realization.B, cfg.h)
        V = (M0[:, 0][None, :] * u[0:-2:2, None]
             + M1[:, 0][None, :] * u[1::2, None]
             + M2[:, 0][None, :] * u[2::2, None])[:, :, None]
        u_integer = u[0::2]
        X = _scan_linear(Phi, V, x0)
    elif integrator == "zoh":
        if u.shape[0] != N + 1:
            raise ValueError("zoh input must be sampled on the integer grid")
        Ad, Bd = est_mod.zoh_discretize(realization.A, realization.B, cfg.h)
        V = (Bd[:, 0][None, :] * u[:-1, None])[:, :, None]
        u_integer = u
        X = _scan_linear(Ad, V, x0)
    else:
        raise ValueError(f"unknown integrator {integrator!r}")
    Y = np.einsum("qn,jnm->jq", realization.C, X) + realization.D[:, 0][None, :] * u_integer[:, None]
    return cfg.times(), Y


def run_derivative_experiment(signal: sig_mod.AnalyticSignal, noise: sig_mod.NoiseSpec,
                              est_cfg: est_mod.DirtyDerivativeConfig, cfg: SimConfig,
                              integrator: str = "rk4") -> Trajectory:
    """Feed (possibly noisy) signal samples to the estimator over one run.

    Records the clean signal, the true derivatives, all k estimates, and the
    per-order estimation error norms. The first derivative uses the standard
    column names (thetadot_*, thetahat_*, est_error); higher orders get the
    order suffix (thetadot2_*, thetahat2_*, est_error2, ...).
    """
    if signal.dim != est_cfg.signal_dim:
        raise ValueError(f"signal dim {signal.dim} does not match estimator "
                         f"signal_dim {est_cfg.signal_dim}")
    estimator = est_mod.build_estimator(est_cfg, cfg.h)
    m = signal.dim
    N = cfg.num_steps
    rng = noise.make_rng()

    if integrator == "rk4":
        ts_all = _stage_times(cfg)
        W = sig_mod.sample_noisy_grid(signal, noise, ts_all, rng)  # (2N+1, m)
        Phi, M0, M1, M2 = estimator.rk4_maps
        V = (M0[:, 0][None, :, None] * W[0:-2:2, None, :]
             + M1[:, 0][None, :, None] * W[1::2, None, :]
             + M2[:, 0][None, :, None] * W[2::2, None, :])
        W_integer = W[0::2]
        X = _scan_linear(Phi, V, estimator.state)
    elif integrator == "zoh":
        W_integer = sig_mod.sample_noisy_grid(signal, noise, cfg.times(), rng)
        V = estimator.B_d[:, 0][None, :, None] * W_integer[:-1, None, :]
        X = _scan_linear(estimator.A_d, V, estimator.state)
    else:
        raise ValueError(f"unknown integrator {integrator!r}")

    C, D = estimator.continuous.C, estimator.continuous.D
    with np.errstate(over="ignore", invalid="ignore"):
        Y = np.einsum("qn,jnm->jqm", C, X) + D[:, 0][None, :, None] * W_integer[:, None, :]

    idx = cfg.record_indices()
    t_rec = cfg.times()[idx]
    cols = {"t": t_rec}
    clean = signal.eval_many(t_rec, 0)
    for c in range(m):
        cols[f"theta_{c}"] = clean[:, c]
    with np.errstate(over="ignore", invalid="ignore"):
        for order in range(1, est_cfg.order + 1):
            suffix = "" if order == 1 else str(order)
            true = signal.eval_many(t_rec, order)
            hat = Y[idx, order - 1, :]
            for c in range(m):
                cols[f"thetadot{suffix}_{c}"] = true[:, c]
            for c in range(m):
                cols[f"thetahat{suffix}_{c}"] = hat[:, c]
            cols[f"est_error{suffix}"] = np.linalg.norm(hat - true, axis=1)
    traj = Trajectory(cols)
    traj.check_finite()
    return traj


def run_interconnection(cost: flows_mod.CostModel, signal: sig_mod.AnalyticSignal,
                        mode: flows_mod.CorrectionMode, cfg: SimConfig,
                        est_cfg: est_mod.DirtyDerivativeConfig | None = None,
                        noise: sig_mod.NoiseSpec = sig_mod.NoiseSpec(),
                        x0: np.ndarray | None = None) -> Trajectory:
    """Newton flow tracking the moving minimizer, optionally closed over the
    derivative estimator.

    Per step: sample the parameter (noisy when configured), emit the current
    derivative estimate, hold it constant over the optimizer's RK4 step (the
    stages re-evaluate the cost at stage states and at the exact parameter
    path), then advance both systems by h. The recorded ``redesign_lhs``
    column is the Lyapunov redesign certificate for the correction in use;
    for the uncorrected flow it is the raw drift term, which no condition
    constrains.
    """
    if signal.dim != cost.p:
        raise ValueError(f"signal dim {signal.dim} does not match cost parameter dim {cost.p}")
    estimated = mode is flows_mod.CorrectionMode.ESTIMATED
    if estimated:
        if est_cfg is None:
            raise ValueError("estimated mode requires an estimator config")
        if est_cfg.signal_dim != signal.dim:
            raise ValueError("estimator signal_dim does not match signal dim")
        estimator = est_mod.build_estimator(est_cfg, cfg.h)
    else:
        estimator = None

    n, p = cost.n, cost.p
    N = cfg.num_steps
    h = cfg.h
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    if x.shape != (n,):
        raise ValueError(f"x0 shape {x.shape} does not match cost dimension {n}")

    ts_all = _stage_times(cfg)
    theta_all = signal.eval_many(ts_all, 0)        # exact path at stage times
    theta_dot_all = signal.eval_many(ts_all, 1)
    if estimated:
        rng = noise.make_rng()
        meas_all = sig_mod.sample_noisy_grid(signal, noise, ts_all, rng)

    idx = cfg.record_indices()
    n_rec = len(idx)
    rec_t = np.empty(n_rec)
    rec_loss = np.empty(n_rec)
    rec_track = np.empty(n_rec)
    rec_lhs = np.empty(n_rec)
    rec_theta = np.empty((n_rec, p))
    rec_thetadot = np.empty((n_rec, p))
    rec_x = np.empty((n_rec, n))
    rec_xstar = np.empty((n_rec, n))
    if estimated:
        rec_thetahat = np.empty((n_rec, p))
        rec_esterr = np.empty(n_rec)
    rec_pos = 0

    rhs = flows_mod.corrected_newton_rhs
    # Overflow from unstable gain/step combinations is surfaced as
    # NonFiniteStateError, not as numpy warnings mid-loop.
    old_err = np.seterr(over="ignore", invalid="ignore")
    try:
        for j in range(N + 1):
            t = cfg.t0 + j * h
            theta = theta_all[2 * j]
            theta_dot = theta_dot_all[2 * j]
            if estimated:
                theta_hat = estimator.output(meas_all[2 * j])[0]
            if rec_pos < n_rec and idx[rec_pos] == j:
                v_cert = theta_hat if estimated else theta_dot
                if mode is flows_mod.CorrectionMode.NONE:
                    u = np.zeros(n)
                else:
                    u = flows_mod.ideal_correction(cost, x, theta, v_cert)
                _, gxV, gtV = flows_mod.lyapunov_gradients(cost, x, theta)
                lhs, _ = flows_mod.check_redesign_condition(gxV, gtV, u, v_cert)
                xstar = cost.minimizer(theta)
                rec_t[rec_pos] = t
                rec_loss[rec_pos] = cost.value(x, theta)
                rec_track[rec_pos] = float(np.linalg.norm(x - xstar))
                rec_lhs[rec_pos] = lhs
                rec_theta[rec_pos] = theta
                rec_thetadot[rec_pos] = theta_dot
                rec_x[rec_pos] = x
                rec_xstar[rec_pos] = xstar
                if estimated:
                    rec_thetahat[rec_pos] = theta_hat
                    rec_esterr[rec_pos] = float(np.linalg.norm(theta_hat - theta_dot))
                rec_pos += 1
            if j == N:
                break
            # Stage parameter values; the velocity fed to the correction is the
            # exact one at the stage times (ideal) or the held estimate.
            if mode is flows_mod.CorrectionMode.IDEAL:
                v0, vm, v1 = theta_dot, theta_dot_all[2 * j + 1], theta_dot_all[2 * j + 2]
            elif estimated:
                v0 = vm = v1 = theta_hat
            else:
                v0 = vm = v1 = None
            th_m = theta_all[2 * j + 1]
            th_1 = theta_all[2 * j + 2]
            k1 = rhs(cost, x, theta, v0)
            k2 = rhs(cost, x + 0.5 * h * k1, th_m, vm)
            k3 = rhs(cost, x + 0.5 * h * k2, th_m, vm)
            k4 = rhs(cost, x + h * k3, th_1, v1)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise NonFiniteStateError(t + h)
            if estimated:
                estimator.state = (estimator.rk4_maps[0] @ estimator.state
                                   + estimator.rk4_maps[1] @ meas_all[2 * j][np.newaxis, :]
                                   + estimator.rk4_maps[2] @ meas_all[2 * j + 1][np.newaxis, :]
                                   + estimator.rk4_maps[3] @ meas_all[2 * j + 2][np.newaxis, :])
    finally:
        np.seterr(**old_err)

    cols = {"t": rec_t}
    for c in range(p):
        cols[f"theta_{c}"] = rec_theta[:, c]
    for c in range(p):
        cols[f"thetadot_{c}"] = rec_thetadot[:, c]
    if estimated:
        for c in range(p):
            cols[f"thetahat_{c}"] = rec_thetahat[:, c]
    for c in range(n):
        cols[f"x_{c}"] = rec_x[:, c]
    for c in range(n):
        cols[f"xstar_{c}"] = rec_xstar[:, c]
    cols["loss"] = rec_loss
    cols["tracking_error"] = rec_track
    if estimated:
        cols["est_error"] = rec_esterr
    cols["redesign_lhs"] = rec_lhs
    traj = Trajectory(cols)
    traj.check_finite()
    return traj
