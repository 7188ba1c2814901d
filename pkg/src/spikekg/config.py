"""Flat ``key = value`` run configuration and model construction."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields

from .kg import TripleStore, load_dataset
from .lif import NeuronParams
from .sgnn import SgnnConfig, SgnnModel
from .spiketrain import SpikeTrainConfig, SpikeTrainModel
from .synth import family_tree, geography_graph, random_graph
from .training import Schedule
from .ttfs import TtfsConfig, TtfsModel

MODEL_TYPES = ("ttfs", "spiketrain-direct", "spiketrain-if", "sgnn")

# used when a config leaves lr / epochs unset
MODEL_DEFAULTS = {
    "ttfs": {"lr": 1e-3, "epochs": 60},
    "spiketrain-direct": {"lr": 1e-2, "epochs": 300},
    "spiketrain-if": {"lr": 1e-3, "epochs": 100},
    "sgnn": {"lr": 1e-2, "epochs": 2000},
}

# sizes of the public FB15k-237 release, used for the synthetic stand-in
FB15K237_SHAPE = {"entities": 14541, "relations": 237, "triples": 310116}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model_type: str = "ttfs"
    # directory with train/valid/test.txt, or synth:geography, synth:family,
    # synth:fb15k237-shape
    dataset: str = "data/umls"
    inverse: bool = True
    subsample: float = 1.0
    dim: int = 40
    n_inputs: int = 64
    spikes: int = 20
    tau_s: float = 1.0
    u_th: float = 1.0
    tau_ref: float = 1.0
    t_max: float | None = None
    weight_scale: float = 2.0
    delta_std: float = 0.1
    theta_mean: float = -1.0
    theta_std: float = 0.5
    silent_penalty: float = 1.0
    conv_scale: float = 10.0
    self_loop: bool = True
    freeze_conv: bool = True
    margin: float = 1.0
    negatives: int = 8
    lr: float | None = None
    batch: int = 256
    epochs: int | None = None
    grad_clip: float = 0.0
    seed: int = 0
    eval_mode: str = "filtered"
    eval_every: int = 1
    checkpoint: str = "model.skg"
    metrics: str = "metrics.csv"

    def __post_init__(self):
        if self.model_type not in MODEL_TYPES:
            raise ConfigError(f"model_type must be one of {MODEL_TYPES}, got {self.model_type!r}")
        if self.eval_mode not in ("raw", "filtered"):
            raise ConfigError(f"eval_mode must be raw or filtered, got {self.eval_mode!r}")
        if not 0 < self.subsample <= 1:
            raise ConfigError("subsample must lie in (0, 1]")

    @property
    def resolved_lr(self) -> float:
        return MODEL_DEFAULTS[self.model_type]["lr"] if self.lr is None else self.lr

    @property
    def resolved_epochs(self) -> int:
        return MODEL_DEFAULTS[self.model_type]["epochs"] if self.epochs is None else self.epochs

    def neuron_params(self) -> NeuronParams:
        return NeuronParams(tau_s=self.tau_s, u_th=self.u_th, tau_ref=self.tau_ref, t_max=self.t_max)

    def schedule(self, threads: int = 1) -> Schedule:
        return Schedule(epochs=self.resolved_epochs, batch_size=self.batch, lr=self.resolved_lr,
                        seed=self.seed, eval_every=self.eval_every, eval_mode=self.eval_mode,
                        grad_clip=self.grad_clip, threads=threads)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _convert(name, raw: str, annotation):
    text = raw.strip()
    kind = str(annotation)
    try:
        if "None" in kind and text.lower() in ("none", ""):
            return None
        if kind.startswith("bool"):
            if text.lower() in ("true", "yes", "1", "on"):
                return True
            if text.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, base_dir: str | None = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors.

    Relative ``dataset`` paths are resolved against ``base_dir``.
    """
    known = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = _convert(key, value, known[key])
    cfg = RunConfig(**values)
    if base_dir is not None and not cfg.dataset.startswith("synth:") and not os.path.isabs(cfg.dataset):
        cfg.dataset = os.path.normpath(os.path.join(base_dir, cfg.dataset))
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def build_store(cfg: RunConfig) -> TripleStore:
    name = cfg.dataset
    if name.startswith("synth:"):
        kind = name.split(":", 1)[1]
        if kind == "geography":
            store = geography_graph(cfg.seed, inverse=cfg.inverse)
        elif kind == "family":
            store = family_tree(3, cfg.seed, inverse=cfg.inverse)
        elif kind == "fb15k237-shape":
            shape = FB15K237_SHAPE
            store = random_graph(shape["entities"], shape["relations"], shape["triples"], cfg.seed, inverse=cfg.inverse)
        else:
            raise ConfigError(f"unknown synthetic dataset {name!r}")
    else:
        if not os.path.isdir(name):
            raise ConfigError(f"dataset directory not found: {name}")
        store = load_dataset(name, inverse=cfg.inverse)
    if cfg.subsample < 1.0:
        store = store.subsample(cfg.subsample, seed=cfg.seed)
    return store


def build_model(cfg: RunConfig, store: TripleStore):
    params = cfg.neuron_params()
    common = dict(margin=cfg.margin, negatives=cfg.negatives, delta_std=cfg.delta_std)
    if cfg.model_type == "ttfs":
        conf = TtfsConfig(dim=cfg.dim, n_inputs=cfg.n_inputs, weight_scale=cfg.weight_scale,
                          silent_penalty=cfg.silent_penalty, **common)
        return TtfsModel(store.num_entities, store.num_relations, params, conf, seed=cfg.seed)
    if cfg.model_type.startswith("spiketrain"):
        backend = "direct" if cfg.model_type == "spiketrain-direct" else "if-cycles"
        conf = SpikeTrainConfig(backend=backend, spikes=cfg.spikes, n_inputs=cfg.n_inputs,
                                weight_scale=cfg.weight_scale, theta_mean=cfg.theta_mean,
                                theta_std=cfg.theta_std, silent_penalty=cfg.silent_penalty, **common)
        return SpikeTrainModel(store.num_entities, store.num_relations, params, conf, seed=cfg.seed)
    conf = SgnnConfig(dim=cfg.dim, n_inputs=cfg.n_inputs, weight_scale=cfg.weight_scale,
                      silent_penalty=cfg.silent_penalty, self_loop=cfg.self_loop,
                      freeze_conv=cfg.freeze_conv, conv_scale=cfg.conv_scale, **common)
    return SgnnModel(store, params, conf, seed=cfg.seed)
