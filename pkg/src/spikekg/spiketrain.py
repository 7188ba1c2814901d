"""Single-neuron spike-train embeddings.

Entity n is one neuron whose i-th spike sits at

    t_{n,i} = sum_{j<=i} I_{n,j} + i * tau_ref

where I_{n,j} is the time the neuron needs to reach threshold again after
recovering from its previous refractory period.  Two backends produce the
intervals:

* ``if-cycles``: one weight row per cycle onto the shared input pattern,
  solved exactly with the integrate-and-fire closed form;
* ``direct``: I_{n,j} = softplus(theta_{n,j}), a fast abstract neuron.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lif import FirstSpikes, NeuronParams, first_spike_grads, first_spikes, intervals_to_train, max_potential, train_intervals
from .model import EmbeddingModel

BACKENDS = ("direct", "if-cycles")


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus_inverse(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def _reverse_cumsum(g):
    return np.cumsum(g[..., ::-1], axis=-1)[..., ::-1]


@dataclass
class SpikeTrainConfig:
    backend: str = "direct"
    spikes: int = 20
    n_inputs: int = 64
    weight_scale: float = 2.0
    # direct backend: theta ~ N(theta_mean, theta_std)
    theta_mean: float = -1.0
    theta_std: float = 0.5
    delta_std: float = 0.1
    margin: float = 1.0
    negatives: int = 8
    silent_penalty: float = 1.0


class SpikeTrainModel(EmbeddingModel):
    def __init__(self, num_entities: int, num_relations: int, params: NeuronParams | None = None,
                 config: SpikeTrainConfig | None = None, seed: int = 0):
        self.params = params or NeuronParams()
        self.config = config or SpikeTrainConfig()
        c, p = self.config, self.params
        if c.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {c.backend!r}")
        if c.spikes < 1:
            raise ValueError("a spike train needs at least one spike")
        self.num_entities = num_entities
        self.num_relations = num_relations
        rng = np.random.default_rng(seed)
        if c.backend == "direct":
            self.input_times = np.empty(0)
            self.theta = rng.normal(c.theta_mean, c.theta_std, size=(num_entities, c.spikes))
        else:
            self.input_times = rng.uniform(0.0, p.tau_s, size=c.n_inputs)
            hi = 2.0 * c.weight_scale * p.u_th / c.n_inputs
            self.weights = rng.uniform(0.0, hi, size=(num_entities, c.spikes, c.n_inputs))
        self.deltas = rng.normal(0.0, c.delta_std, size=(num_relations, c.spikes))

    @property
    def model_type(self) -> str:
        return "spiketrain-direct" if self.config.backend == "direct" else "spiketrain-if"

    @property
    def t_max(self) -> float:
        return self.params.window(self.input_times)

    def parameters(self) -> dict:
        key = "theta" if self.config.backend == "direct" else "weights"
        return {key: getattr(self, key), "deltas": self.deltas}

    def state(self) -> dict:
        out = {"input_times": self.input_times}
        out.update(self.parameters())
        return out

    def load_state(self, state: dict) -> None:
        self.input_times = np.array(state["input_times"], dtype=float)
        for key in ("theta", "weights", "deltas"):
            if key in state:
                setattr(self, key, np.array(state[key], dtype=float))

    def intervals(self, ids):
        """Interspike intervals (U, K) and the per-spike crossed mask."""
        ids = np.asarray(ids)
        if self.config.backend == "direct":
            th = self.theta[ids]
            return softplus(th), np.ones(th.shape, dtype=bool)
        U, K, J = len(ids), self.config.spikes, self.config.n_inputs
        res = first_spikes(self.weights[ids].reshape(U * K, J), self.input_times, self.params, t_max=self.t_max)
        return train_intervals(_reshaped(res, U, K))

    def forward(self, ids):
        ids = np.asarray(ids)
        if self.config.backend == "direct":
            th = self.theta[ids]
            return intervals_to_train(softplus(th), self.params.tau_ref), th
        U, K, J = len(ids), self.config.spikes, self.config.n_inputs
        w = self.weights[ids].reshape(U * K, J)
        res = first_spikes(w, self.input_times, self.params, t_max=self.t_max)
        iv, crossed = train_intervals(_reshaped(res, U, K))
        return intervals_to_train(iv, self.params.tau_ref), (w, res, crossed)

    def silent_fraction(self, cache) -> float:
        if self.config.backend == "direct":
            return 0.0
        return float(1.0 - cache[2].mean())

    def raster_rows(self):
        """(entity, layer, spike index, time) for every emitted spike."""
        ids = np.arange(self.num_entities)
        times = self.forward(ids)[0]
        _, ok = self.intervals(ids)
        return [(n, "train", i, float(times[n, i])) for n, i in zip(*np.nonzero(ok))]

    def backward(self, ids, cache, grad_times):
        ids = np.asarray(ids)
        # d t_i / d I_j = 1 for j <= i
        grad_iv = _reverse_cumsum(grad_times)
        if self.config.backend == "direct":
            return {"theta": (ids, grad_iv * sigmoid(cache))}, 0.0
        w, res, crossed = cache
        U, K, J = len(ids), self.config.spikes, self.config.n_inputs
        dw, _ = first_spike_grads(w, self.input_times, self.params, res)
        # a silent cycle freezes every later interval at the sentinel
        grad_iv = np.where(crossed, grad_iv, 0.0).reshape(U * K, 1)
        grad = dw * grad_iv
        penalty = 0.0
        lam = self.config.silent_penalty
        silent = ~res.crossed
        if lam > 0 and silent.any():
            umax, du = max_potential(w[silent], self.input_times, self.params, res.t_max)
            scale = lam / (U * K)
            penalty = scale * float((self.params.u_th - umax).sum())
            grad[silent] -= scale * du
        return {"weights": (ids, grad.reshape(U, K, J))}, penalty


def _reshaped(res, U, K):
    return FirstSpikes(times=res.times.reshape(U, K), causal=res.causal.reshape(U, K),
                       crossed=res.crossed.reshape(U, K), t_max=res.t_max, order=res.order)
