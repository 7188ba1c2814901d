"""Time-to-first-spike population embeddings.

Each entity owns a population of ``dim`` integrate-and-fire neurons driven by
one shared, fixed pattern of ``n_inputs`` input spikes.  The entity's
embedding is the vector of first-spike times; only the per-entity input
weights and the relation offsets are trained.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lif import NeuronParams, first_spike_grads, first_spikes, max_potential
from .model import EmbeddingModel


@dataclass
class TtfsConfig:
    dim: int = 40
    n_inputs: int = 64
    # initial weights ~ U[0, 2 * weight_scale * u_th / n_inputs]
    weight_scale: float = 2.0
    delta_std: float = 0.1
    margin: float = 1.0
    negatives: int = 8
    silent_penalty: float = 1.0


class TtfsModel(EmbeddingModel):
    model_type = "ttfs"

    def __init__(self, num_entities: int, num_relations: int, params: NeuronParams | None = None,
                 config: TtfsConfig | None = None, seed: int = 0):
        self.params = params or NeuronParams()
        self.config = config or TtfsConfig()
        self.num_entities = num_entities
        self.num_relations = num_relations
        rng = np.random.default_rng(seed)
        c, p = self.config, self.params
        self.input_times = rng.uniform(0.0, p.tau_s, size=c.n_inputs)
        hi = 2.0 * c.weight_scale * p.u_th / c.n_inputs
        self.weights = rng.uniform(0.0, hi, size=(num_entities, c.dim, c.n_inputs))
        self.deltas = rng.normal(0.0, c.delta_std, size=(num_relations, c.dim))

    @property
    def t_max(self) -> float:
        return self.params.window(self.input_times)

    def parameters(self) -> dict:
        return {"weights": self.weights, "deltas": self.deltas}

    def state(self) -> dict:
        return {"input_times": self.input_times, "weights": self.weights, "deltas": self.deltas}

    def load_state(self, state: dict) -> None:
        self.input_times = np.array(state["input_times"], dtype=float)
        self.weights = np.array(state["weights"], dtype=float)
        self.deltas = np.array(state["deltas"], dtype=float)

    def forward(self, ids):
        ids = np.asarray(ids)
        U, N, J = len(ids), self.config.dim, self.config.n_inputs
        w = self.weights[ids].reshape(U * N, J)
        res = first_spikes(w, self.input_times, self.params, t_max=self.t_max)
        return res.times.reshape(U, N), (w, res)

    def silent_fraction(self, cache) -> float:
        return float(1.0 - cache[1].crossed.mean())

    def raster_rows(self):
        """(entity, layer, neuron, time) for every emitted spike."""
        times, (_, res) = self.forward(np.arange(self.num_entities))
        ok = res.crossed.reshape(times.shape)
        return [(n, "initial", i, float(times[n, i])) for n, i in zip(*np.nonzero(ok))]

    def backward(self, ids, cache, grad_times):
        w, res = cache
        U, N, J = len(ids), self.config.dim, self.config.n_inputs
        dw, _ = first_spike_grads(w, self.input_times, self.params, res)
        grad = dw * grad_times.reshape(U * N, 1)
        penalty = 0.0
        lam = self.config.silent_penalty
        silent = ~res.crossed
        if lam > 0 and silent.any():
            umax, du = max_potential(w[silent], self.input_times, self.params, res.t_max)
            scale = lam / (U * N)
            penalty = scale * float((self.params.u_th - umax).sum())
            grad[silent] -= scale * du
        return {"weights": (np.asarray(ids), grad.reshape(U, N, J))}, penalty
