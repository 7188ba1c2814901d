"""Finite-difference verification of every analytic gradient in the package.

Each suite draws seeded random instances, rejects those sitting on a
non-differentiable point (a causal-set switch, an L1 or hinge kink, a neuron
going silent), and compares the analytic gradient with central differences.
The reported error for one instance is ||analytic - numeric|| / max(||analytic||, ||numeric||).
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from . import lif, sgnn, spiketrain, ttfs
from .kg import TripleStore, Vocabulary
from .lif import NeuronParams
from .sgnn import SgnnConfig, SgnnModel
from .spiketrain import SpikeTrainConfig, SpikeTrainModel
from .ttfs import TtfsConfig, TtfsModel

SOLVER_TOL = 1e-5
MODEL_TOL = 1e-4
EPS = 1e-5


@dataclass
class SuiteResult:
    name: str
    tolerance: float
    errors: list = field(default_factory=list)
    rejected: int = 0

    @property
    def worst(self) -> float:
        return max(self.errors) if self.errors else float("nan")

    @property
    def passed(self) -> bool:
        return bool(self.errors) and self.worst < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name:<18} {status}  instances={len(self.errors)} rejected={self.rejected} "
                f"worst_rel_err={self.worst:.3e} tol={self.tolerance:.0e}")


def relative_error(analytic, numeric) -> float:
    a = np.ravel(analytic)
    f = np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(f))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - f) / scale)


def _one_sided_agree(f, x, idx, eps, base):
    """Central difference at one coordinate, or None where the function kinks."""
    old = x[idx]
    x[idx] = old + eps
    fp = f()
    x[idx] = old - eps
    fm = f()
    x[idx] = old
    fwd = (fp - base) / eps
    bwd = (base - fm) / eps
    central = (fp - fm) / (2 * eps)
    if abs(fwd - bwd) > 1e-3 * max(1.0, abs(central)):
        return None
    return central


def numeric_gradient(f, x, eps=EPS, rows=None):
    """Central differences of scalar ``f()`` with respect to array ``x`` (restored after).

    Returns None if any probed coordinate sits on a kink.  ``rows`` limits the
    probe to a subset of the first axis.
    """
    base = f()
    g = np.zeros(x.shape)
    rows = range(x.shape[0]) if rows is None else rows
    for r in rows:
        for rest in np.ndindex(x.shape[1:]):
            idx = (r,) + rest
            c = _one_sided_agree(f, x, idx, eps, base)
            if c is None:
                return None
            g[idx] = c
    return g


def _dense(grad, shape):
    out = np.zeros(shape)
    if grad is None:
        return out
    if isinstance(grad, tuple):
        np.add.at(out, grad[0], grad[1])
    else:
        out += grad
    return out


# ------------------------------------------------------------------ solver
def _solver_instance(rng):
    J = int(rng.integers(2, 9))
    t_in = rng.uniform(0.0, 2.0, size=J)
    w = rng.normal(0.6, 0.8, size=J)
    return w, t_in


def solver_suite(n: int = 100, seed: int = 0, params: NeuronParams | None = None, eps: float = EPS) -> SuiteResult:
    params = params or NeuronParams()
    rng = np.random.default_rng(seed)
    out = SuiteResult("solver", SOLVER_TOL)
    while len(out.errors) < n:
        w, t_in = _solver_instance(rng)
        r = lif.first_spikes(w[None], t_in, params)
        if not r.crossed[0]:
            out.rejected += 1
            continue
        t_star = r.times[0]
        causal = np.sort(t_in)[: r.causal[0]]
        if np.min(np.abs(t_in - t_star)) < 1e-2 or w[t_in <= t_star].sum() - params.u_th < 1e-2 or len(causal) == 0:
            out.rejected += 1
            continue
        dw, dt = lif.first_spike_grads(w[None], t_in, params, r)

        def f():
            return lif.first_spikes(w[None], t_in, params).times[0]

        nw = numeric_gradient(f, w, eps)
        nt = numeric_gradient(f, t_in, eps)
        if nw is None or nt is None:
            out.rejected += 1
            continue
        out.errors.append(relative_error(np.concatenate([dw[0], dt[0]]), np.concatenate([nw, nt])))
    return out


# ------------------------------------------------------------------ models
def _toy_store(rng, num_entities=5, num_relations=2, num_triples=8):
    vocab = Vocabulary([f"e{i}" for i in range(num_entities)], [f"r{i}" for i in range(num_relations)]).freeze()
    triples = set()
    while len(triples) < num_triples:
        s, o = rng.choice(num_entities, size=2, replace=False)
        triples.add((int(s), int(rng.integers(num_relations)), int(o)))
    return TripleStore(vocab, sorted(triples))


def _model_instance(kind, rng, seed):
    store = _toy_store(rng)
    params = NeuronParams()
    if kind == "ttfs":
        model = TtfsModel(store.num_entities, store.num_relations, params,
                          TtfsConfig(dim=3, n_inputs=4, margin=2.0, negatives=2), seed=seed)
    elif kind == "spiketrain-direct":
        model = SpikeTrainModel(store.num_entities, store.num_relations, params,
                                SpikeTrainConfig(backend="direct", spikes=4, theta_std=1.0, margin=2.0, negatives=2), seed=seed)
    elif kind == "spiketrain-if":
        model = SpikeTrainModel(store.num_entities, store.num_relations, params,
                                SpikeTrainConfig(backend="if-cycles", spikes=3, n_inputs=4, margin=2.0, negatives=2), seed=seed)
    elif kind == "sgnn":
        model = SgnnModel(store, params, SgnnConfig(dim=3, n_inputs=4, margin=2.0, negatives=2, conv_scale=3.0), seed=seed)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    # spread the relation offsets so the L1 terms sit away from zero
    model.deltas[:] = rng.normal(0.0, 0.5, size=model.deltas.shape)
    pos = store.train[rng.choice(len(store.train), size=3, replace=False)]
    neg = model.sample_negatives(pos, store, rng)
    return model, pos, neg


def model_suite(kind: str, n: int = 100, seed: int = 0, eps: float = EPS) -> SuiteResult:
    rng = np.random.default_rng(seed)
    out = SuiteResult(kind, MODEL_TOL)
    trial = 0
    while len(out.errors) < n:
        trial += 1
        model, pos, neg = _model_instance(kind, rng, seed * 100003 + trial)
        _, grads = model.loss_batch(pos, negatives=neg)

        def f():
            return model.loss_batch(pos, negatives=neg)[0]

        analytic, numeric = [], []
        for name, arr in model.parameters().items():
            g = grads.get(name)
            rows = np.unique(g[0]) if isinstance(g, tuple) else None
            num = numeric_gradient(f, arr, eps, rows=rows)
            if num is None:
                break
            analytic.append(_dense(g, arr.shape).ravel())
            numeric.append(num.ravel())
        else:
            a = np.concatenate(analytic)
            if not np.any(a):
                out.rejected += 1
                continue
            out.errors.append(relative_error(a, np.concatenate(numeric)))
            continue
        out.rejected += 1
    return out


SUITES = ("solver", "ttfs", "spiketrain-direct", "spiketrain-if", "sgnn")


def run_all(seed: int = 0, n: int = 100) -> list[SuiteResult]:
    results = [solver_suite(n, seed)]
    results += [model_suite(kind, n, seed) for kind in SUITES[1:]]
    return results


def _broken_first_spike_grads(weights, input_times, params, result):
    dw, dt = _real_first_spike_grads(weights, input_times, params, result)
    # mis-scaled weight gradient
    return dw * 0.9, dt


_real_first_spike_grads = lif.first_spike_grads


@contextlib.contextmanager
def injected_fault():
    """Temporarily replace the spike-time gradient with a wrong formula."""
    modules = (lif, ttfs, spiketrain, sgnn)
    saved = [m.first_spike_grads for m in modules]
    try:
        for m in modules:
            m.first_spike_grads = _broken_first_spike_grads
        yield
    finally:
        for m, fn in zip(modules, saved):
            m.first_spike_grads = fn
