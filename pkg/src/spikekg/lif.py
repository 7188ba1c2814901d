"""Closed-form integrate-and-fire neuron with an exponential synaptic kernel.

The membrane obeys

    du/dt = (1/tau_s) * sum_j w_j * theta(t - t_j) * exp(-(t - t_j)/tau_s)

which integrates from u(-inf) = 0 to

    u(t) = sum_j w_j * theta(t - t_j) * (1 - exp(-(t - t_j)/tau_s)).

Between two consecutive input spikes u(t) = A_k - B_k * exp(-t/tau_s), so the
threshold crossing inside an interval has the closed form
t* = tau_s * ln(B_k / (A_k - u_th)).  Everything here is vectorised over rows:
``weights`` of shape (M, J) describe M neurons, ``input_times`` of shape (J,)
or (M, J) their presynaptic spikes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NeuronParams",
    "SpikeResult",
    "FirstSpikes",
    "membrane_potential",
    "first_spike_time",
    "first_spike_grad",
    "first_spikes",
    "first_spike_grads",
    "max_potential",
    "spike_train",
]

# above this input-time spread (in units of tau_s) the cumulative sums could
# underflow, and the solver falls back to a per-interval recurrence
_SPREAD_LIMIT = 500.0


@dataclass(frozen=True)
class NeuronParams:
    tau_s: float = 1.0
    u_th: float = 1.0
    tau_ref: float = 1.0
    # None means "latest input + 10 tau_s", resolved per call
    t_max: float | None = None

    def __post_init__(self):
        if not self.tau_s > 0:
            raise ValueError(f"tau_s must be > 0, got {self.tau_s}")
        if not self.u_th > 0:
            raise ValueError(f"u_th must be > 0, got {self.u_th}")
        if not self.tau_ref >= 0:
            raise ValueError(f"tau_ref must be >= 0, got {self.tau_ref}")

    def window(self, input_times) -> float:
        """End of the simulation window; crossings after it count as silent."""
        if self.t_max is not None:
            return float(self.t_max)
        finite = np.asarray(input_times, dtype=float)
        finite = finite[np.isfinite(finite)]
        latest = finite.max() if finite.size else 0.0
        return float(latest + 10.0 * self.tau_s)


@dataclass(frozen=True)
class SpikeResult:
    time: float
    causal_count: int
    crossed: bool


@dataclass
class FirstSpikes:
    """Batched solver output.

    ``times`` holds the sentinel ``t_max`` for silent rows.  ``causal`` is the
    number of (time-sorted) inputs at or before the crossing, 0 when silent.
    ``order`` is the per-row sort permutation used to build the causal sets.
    """

    times: np.ndarray
    causal: np.ndarray
    crossed: np.ndarray
    t_max: float
    order: np.ndarray


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("inputs contain NaN or Inf")


def membrane_potential(t, weights, input_times, params: NeuronParams):
    """Exact u(t); ``t`` may be a scalar or an array of query times."""
    w = np.asarray(weights, dtype=float)
    ti = np.asarray(input_times, dtype=float)
    if w.shape != ti.shape:
        raise ValueError(f"weights {w.shape} and input_times {ti.shape} differ in shape")
    t = np.asarray(t, dtype=float)
    lag = t[..., None] - ti
    active = lag >= 0
    # exponent is <= 0 wherever the Heaviside gate is open
    kern = np.where(active, -np.expm1(-np.where(active, lag, 0.0) / params.tau_s), 0.0)
    return (kern * w).sum(axis=-1)


def _sorted_inputs(weights, input_times):
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    ti = np.asarray(input_times, dtype=float)
    if ti.ndim == 1:
        if ti.shape[0] != w.shape[1]:
            raise ValueError(f"{w.shape[1]} weights per neuron but {ti.shape[0]} input times")
        order = np.broadcast_to(np.argsort(ti, kind="stable"), w.shape)
    else:
        ti = np.atleast_2d(ti)
        if ti.shape != w.shape:
            raise ValueError(f"weights {w.shape} and input_times {ti.shape} differ in shape")
        order = np.argsort(ti, axis=1, kind="stable")
    ti = np.broadcast_to(ti, w.shape)
    ts = np.take_along_axis(ti, order, axis=1)
    ws = np.take_along_axis(w, order, axis=1)
    return ws, ts, np.ascontiguousarray(order)


def first_spikes(weights, input_times, params: NeuronParams, t_max: float | None = None) -> FirstSpikes:
    """Earliest threshold crossing for every row of ``weights``.

    Input times may contain +inf as padding (with zero weight); such inputs
    never arrive.  ``t_max`` overrides the window from ``params``.
    """
    ws, ts, order = _sorted_inputs(weights, input_times)
    _check_finite(ws)
    if np.any(np.isnan(ts)) or np.any(ts == -np.inf):
        raise ValueError("inputs contain NaN or Inf")
    if t_max is None:
        t_max = params.window(ts)
    tau, u_th = params.tau_s, params.u_th
    M, J = ws.shape

    A = np.cumsum(ws, axis=1)
    finite = np.isfinite(ts)
    lo = np.where(finite, ts, np.inf).min(axis=1)
    hi = np.where(finite, ts, -np.inf).max(axis=1)
    spread = np.where(finite.any(axis=1), hi - lo, 0.0)
    if np.all(spread <= _SPREAD_LIMIT * tau):
        # one shift per row (its latest input); exponents stay in (-_SPREAD_LIMIT, 0]
        ref = np.where(finite.any(axis=1), hi, 0.0)[:, None]
        with np.errstate(invalid="ignore"):
            scaled = np.where(finite, ws * np.exp(np.where(finite, ts - ref, 0.0) / tau), 0.0)
        B = np.cumsum(scaled, axis=1)
        shift = np.broadcast_to(ref, ts.shape)
    else:
        # B_k shifted to the k-th input time: B_k = B_{k-1} exp(-(t_k - t_{k-1})/tau) + w_k
        B = np.empty_like(ws)
        B[:, 0] = ws[:, 0]
        with np.errstate(invalid="ignore"):
            gaps = np.diff(ts, axis=1)
            decay = np.exp(-np.where(np.isfinite(gaps), gaps, np.inf) / tau)
        for k in range(1, J):
            B[:, k] = B[:, k - 1] * decay[:, k - 1] + ws[:, k]
        shift = ts

    excess = A - u_th
    with np.errstate(divide="ignore", invalid="ignore"):
        cand = shift + tau * np.log(B / excess)
    upper = np.empty_like(ts)
    upper[:, :-1] = ts[:, 1:]
    upper[:, -1] = np.inf
    with np.errstate(invalid="ignore"):
        valid = (excess > 0) & (B > 0) & np.isfinite(ts) & (cand >= ts) & (cand <= upper)
    has = valid.any(axis=1)
    k = np.argmax(valid, axis=1)
    rows = np.arange(M)
    t_star = np.where(has, cand[rows, k], np.inf)
    crossed = has & (t_star <= t_max)
    times = np.where(crossed, t_star, t_max)
    causal = np.where(crossed, k + 1, 0)
    return FirstSpikes(times=times, causal=causal, crossed=crossed, t_max=float(t_max), order=order)


def first_spike_grads(weights, input_times, params: NeuronParams, result: FirstSpikes):
    """Exact d t*/d w and d t*/d t_in for a batched solve, in the caller's input order.

    Rows that did not cross, and inputs outside the causal set, get zero.
    """
    ws, ts, order = _sorted_inputs(weights, input_times)
    tau = params.tau_s
    M, J = ws.shape
    pos = np.arange(J)
    causal = (pos[None, :] < result.causal[:, None]) & result.crossed[:, None]
    t_star = result.times[:, None]
    excess = np.where(causal, ws, 0.0).sum(axis=1, keepdims=True) - params.u_th
    excess = np.where(result.crossed[:, None], excess, 1.0)
    with np.errstate(invalid="ignore", over="ignore"):
        e = np.where(causal, np.exp(np.where(causal, ts - t_star, 0.0) / tau), 0.0)
    dw_s = np.where(causal, tau * (e - 1.0) / excess, 0.0)
    dt_s = np.where(causal, ws * e / excess, 0.0)
    dw = np.empty_like(dw_s)
    dt = np.empty_like(dt_s)
    np.put_along_axis(dw, order, dw_s, axis=1)
    np.put_along_axis(dt, order, dt_s, axis=1)
    return dw, dt


def first_spike_time(weights, input_times, params: NeuronParams) -> SpikeResult:
    """Single-neuron convenience wrapper around :func:`first_spikes`."""
    w = np.asarray(weights, dtype=float)
    ti = np.asarray(input_times, dtype=float)
    if w.shape != ti.shape or w.ndim != 1:
        raise ValueError(f"weights {w.shape} and input_times {ti.shape} must be equal-length vectors")
    _check_finite(w, ti)
    r = first_spikes(w[None, :], ti, params)
    return SpikeResult(time=float(r.times[0]), causal_count=int(r.causal[0]), crossed=bool(r.crossed[0]))


def first_spike_grad(weights, input_times, params: NeuronParams):
    """Return (dt*/dw, dt*/dt_in) for one neuron; all zeros if it stays silent."""
    w = np.asarray(weights, dtype=float)
    ti = np.asarray(input_times, dtype=float)
    _check_finite(w, ti)
    r = first_spikes(w[None, :], ti, params)
    dw, dt = first_spike_grads(w[None, :], ti, params, r)
    return dw[0], dt[0]


def max_potential(weights, input_times, params: NeuronParams, t_max: float):
    """Maximum of u over [0, t_max] and its gradient with respect to the weights.

    u is monotone between inputs, so the maximum sits at an input arrival time
    or at the window end.  Used by the silent-neuron hinge penalty.
    """
    ws, ts, order = _sorted_inputs(weights, input_times)
    tau = params.tau_s
    probes = np.concatenate([ts, np.full((ts.shape[0], 1), t_max)], axis=1)
    probes = np.where(probes <= t_max, probes, t_max)
    lag = probes[:, :, None] - ts[:, None, :]
    active = lag >= 0
    with np.errstate(invalid="ignore"):
        kern = np.where(active, -np.expm1(-np.where(active, lag, 0.0) / tau), 0.0)
    u = (kern * ws[:, None, :]).sum(axis=2)
    best = np.argmax(u, axis=1)
    rows = np.arange(ws.shape[0])
    grad_s = kern[rows, best, :]
    grad = np.empty_like(grad_s)
    np.put_along_axis(grad, order, grad_s, axis=1)
    return u[rows, best], grad


def spike_train(cycle_weights, input_times, params: NeuronParams, K: int | None = None):
    """Spike train of one neuron that resets after each spike.

    Cycle ``i`` integrates the shared input pattern (restarted at the end of
    the previous refractory period) through its own weight row and produces
    the interval I_i.  Spike i then sits at sum_{j<=i} I_j + i * tau_ref.

    Returns ``(times, crossed)``.  Once a cycle stays silent, it and every
    later cycle are marked silent and use the window length as interval.
    """
    cw = np.atleast_2d(np.asarray(cycle_weights, dtype=float))
    if K is None:
        K = cw.shape[0]
    if K < 1:
        raise ValueError("K must be >= 1")
    if cw.shape[0] < K:
        raise ValueError(f"need {K} cycle weight rows, got {cw.shape[0]}")
    cw = cw[:K]
    r = first_spikes(cw, input_times, params)
    intervals, crossed = train_intervals(r)
    return intervals_to_train(intervals, params.tau_ref), crossed


def train_intervals(result: FirstSpikes):
    """Interspike intervals from per-cycle solves with silence propagated forward."""
    crossed = np.logical_and.accumulate(result.crossed, axis=-1)
    intervals = np.where(crossed, result.times, result.t_max)
    return intervals, crossed


def intervals_to_train(intervals, tau_ref: float):
    intervals = np.asarray(intervals, dtype=float)
    K = intervals.shape[-1]
    return np.cumsum(intervals, axis=-1) + np.arange(K) * tau_ref
