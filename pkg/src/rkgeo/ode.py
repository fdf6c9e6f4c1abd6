"""Embedded Dormand-Prince 5(4) integrator with PI step control and
continuous (4th order) output.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Butcher tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_A = [np.asarray(row, dtype=float) for row in A]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between 5th and embedded 4th order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output polynomial coefficients (Shampine), y(t + th) = y + h K^T P [th, th^2, th^3, th^4]
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
# PI controller exponents (Gustafsson), for an order-4 error estimate
ALPHA = 0.7 / 5
BETA = 0.4 / 5


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    status: str  # "success" | "stopped" | "underflow" | "nonfinite"
    message: str = ""
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    step_t: list = field(default_factory=list)

    @property
    def success(self):
        return self.status == "success"


def _initial_step(f, t0, y0, f0, direction, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0 = np.linalg.norm(y0 / scale) / np.sqrt(y0.size)
    d1 = np.linalg.norm(f0 / scale) / np.sqrt(y0.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = f(t0 + direction * h0, y1)
    d2 = np.linalg.norm((f1 - f0) / scale) / np.sqrt(y0.size) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def dopri5(
    f: Callable[[float, np.ndarray], np.ndarray],
    t_span: tuple[float, float],
    y0,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-9,
    t_eval=None,
    max_step: float = np.inf,
    first_step: float | None = None,
    min_step: float = 1e-14,
    max_steps: int = 200_000,
    on_step: Callable[[float, np.ndarray], str | None] | None = None,
) -> Solution:
    """Integrate ``y' = f(t, y)`` over ``t_span``.

    Output is at ``t_eval`` (dense interpolation) or at every accepted step.
    ``on_step(t, y)`` is called after each accepted step; returning a string
    stops the integration with that message (status ``"stopped"``).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.array(y0, dtype=float)
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
    ts, ys = [t0], [y.copy()]
    if span == 0.0:
        return Solution(np.array(ts), np.array(ys), "success")

    fy = f(t0, y)
    n_rhs = 1
    h = first_step if first_step is not None else _initial_step(f, t0, y, fy, direction, rtol, atol)
    if first_step is None:
        n_rhs += 1
    h = min(h, max_step, span)
    t = t0
    err_prev = 1e-4
    n_steps = n_rej = 0
    eval_idx = 0
    out_t, out_y = [], []
    if t_eval is not None:
        while eval_idx < len(t_eval) and direction * (t_eval[eval_idx] - t0) <= 0:
            out_t.append(t_eval[eval_idx])
            out_y.append(y.copy())
            eval_idx += 1
    K = np.empty((7, y.size))
    status, message = "success", ""
    step_t = [t0]

    while direction * (t1 - t) > 0:
        if n_steps >= max_steps:
            status, message = "underflow", f"exceeded {max_steps} steps at t={t:.6g}"
            break
        if h < min_step * max(1.0, abs(t)):
            status, message = "underflow", f"step size underflow at t={t:.6g}"
            break
        last = False
        if h >= abs(t1 - t):
            h = abs(t1 - t)
            last = True
        hs = direction * h
        K[0] = fy
        for i in range(1, 7):
            K[i] = f(t + C[i] * hs, y + hs * (_A[i] @ K[:i]))
        n_rhs += 6
        y_new = y + hs * (B @ K)
        if not np.all(np.isfinite(y_new)):
            h *= 0.25
            n_rej += 1
            if h < min_step:
                status, message = "nonfinite", f"non-finite state at t={t:.6g}"
                break
            continue
        scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
        err = np.sqrt(np.mean((hs * (E @ K) / scale) ** 2))
        if err <= 1.0:
            err = max(err, 1e-10)
            factor = SAFETY * err ** -ALPHA * err_prev ** BETA
            factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            t_new = t1 if last else t + hs
            if t_eval is not None:
                while eval_idx < len(t_eval) and direction * (t_eval[eval_idx] - t_new) <= 0:
                    theta = (t_eval[eval_idx] - t) / hs
                    powers = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
                    out_t.append(t_eval[eval_idx])
                    out_y.append(y + hs * (K.T @ (P @ powers)))
                    eval_idx += 1
            t, y, fy = t_new, y_new, K[6].copy()
            n_steps += 1
            err_prev = err
            step_t.append(t)
            if t_eval is None:
                ts.append(t)
                ys.append(y.copy())
            if on_step is not None:
                msg = on_step(t, y)
                if msg:
                    status, message = "stopped", msg
                    break
            h = min(h * factor, max_step)
        else:
            n_rej += 1
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)

    if t_eval is not None:
        T, Y = np.array(out_t), np.array(out_y).reshape(len(out_t), y.size)
    else:
        T, Y = np.array(ts), np.array(ys)
    return Solution(T, Y, status, message, n_steps, n_rej, n_rhs, step_t)
