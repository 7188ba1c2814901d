"""Knowledge-graph embeddings built from integrate-and-fire spike times."""
from .kg import Triple, TripleStore, Vocabulary, load_dataset, load_triples
from .lif import NeuronParams, first_spike_grad, first_spike_time, membrane_potential, spike_train
from .model import score
from .evaluation import RankingReport, evaluate
from .ttfs import TtfsConfig, TtfsModel
from .spiketrain import SpikeTrainConfig, SpikeTrainModel
from .sgnn import SgnnConfig, SgnnModel

__version__ = "0.1.0"
