import numpy as np
import pytest

from spikekg import checkpoint as ckpt_io
from spikekg.cli import main
from spikekg.config import ConfigError, RunConfig, build_model, build_store, format_config, parse_config
from spikekg.evaluation import evaluate
from spikekg.kg import TripleStore, Vocabulary, save_dataset

from oracles import brute_force_rank

CHAIN = ["a", "b", "c", "d", "e"]


@pytest.fixture
def chain_dir(tmp_path):
    vocab = Vocabulary(CHAIN, ["next"]).freeze()
    train = [(i, 0, i + 1) for i in range(4)]
    store = TripleStore(vocab, train, valid=[(0, 0, 2)], test=[(1, 0, 3)])
    save_dataset(store, tmp_path / "chain")
    return tmp_path / "chain"


def write_cfg(tmp_path, name="run.cfg", **values):
    lines = [f"{k} = {v}" for k, v in values.items()]
    path = tmp_path / name
    path.write_text("# test run\n" + "\n".join(lines) + "\n")
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# ------------------------------------------------------------------ config
def test_config_defaults_and_comments():
    cfg = parse_config("model_type = sgnn  # trailing comment\n\n# full line\nfreeze_conv = false\nt_max = none\n")
    assert cfg.model_type == "sgnn" and cfg.freeze_conv is False and cfg.t_max is None
    assert cfg.resolved_lr == 1e-2 and cfg.dim == 40


def test_config_unknown_key():
    with pytest.raises(ConfigError, match="unknown key 'dimm'"):
        parse_config("dimm = 3\n")


@pytest.mark.parametrize("text", ["dim = three\n", "model_type = rnn\n", "dim 3\n", "dim = 3\ndim = 4\n",
                                  "self_loop = maybe\n", "subsample = 0\n"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_round_trip():
    cfg = RunConfig(model_type="spiketrain-if", lr=0.5, dim=7, t_max=12.0, self_loop=False)
    assert parse_config(format_config(cfg)) == cfg


def test_bad_config_exits_one(tmp_path, capsys):
    path = write_cfg(tmp_path, bogus=1)
    code, _, err = run(capsys, "train", "--config", path)
    assert code == 1 and "unknown key" in err


def test_missing_dataset_exits_one(tmp_path, capsys):
    path = write_cfg(tmp_path, dataset="nowhere")
    code, _, err = run(capsys, "train", "--config", path)
    assert code == 1 and "not found" in err


def test_bad_arguments_exit_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["eval"])
    assert info.value.code == 1


# ------------------------------------------------------------------ checkpoints
@pytest.mark.parametrize("model_type", ["ttfs", "spiketrain-direct", "spiketrain-if", "sgnn"])
def test_checkpoint_round_trip_is_bit_exact(tmp_path, model_type):
    cfg = RunConfig(model_type=model_type, dataset="synth:geography", dim=6, n_inputs=8, spikes=5, seed=3)
    store = build_store(cfg)
    model = build_model(cfg, store)
    for arr in model.parameters().values():
        arr += np.random.default_rng(0).normal(0, 0.01, size=arr.shape)
    path = tmp_path / "m.skg"
    ckpt_io.save(path, model, cfg, store.vocab)
    ck = ckpt_io.load(path)
    again = ck.build()
    assert ck.config == cfg and ck.vocab == store.vocab
    s, p, o = np.meshgrid(np.arange(20), np.arange(2), np.arange(20), indexing="ij")
    assert np.array_equal(model.scorer()(s, p, o), again.scorer()(s, p, o))
    for k, v in model.state().items():
        assert np.array_equal(v, again.state()[k])
    # saving the reloaded model reproduces the file byte for byte
    ckpt_io.save(tmp_path / "again.skg", again, ck.config, ck.vocab)
    assert (tmp_path / "again.skg").read_bytes() == path.read_bytes()


def test_checkpoint_layout(tmp_path):
    cfg = RunConfig(dataset="synth:geography", dim=2, n_inputs=3)
    store = build_store(cfg)
    data = ckpt_io.encode(cfg, store.vocab, build_model(cfg, store).state())
    assert data[:4] == b"SKG1"
    assert int.from_bytes(data[4:6], "little") == ckpt_io.VERSION


def test_corrupt_checkpoint_is_detected(tmp_path):
    cfg = RunConfig(dataset="synth:geography", dim=2, n_inputs=3)
    store = build_store(cfg)
    data = bytearray(ckpt_io.encode(cfg, store.vocab, build_model(cfg, store).state()))
    data[len(data) // 2] ^= 0x01
    with pytest.raises(ckpt_io.ChecksumError):
        ckpt_io.decode(bytes(data))
    with pytest.raises(ckpt_io.CheckpointError):
        ckpt_io.decode(b"NOPE" + bytes(data[4:]))


# ------------------------------------------------------------------ train
def test_zero_epochs_writes_initial_model(tmp_path, capsys, chain_dir, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = write_cfg(tmp_path, dataset=chain_dir, epochs=0, dim=4, n_inputs=6, checkpoint="m.skg", metrics="m.csv")
    code, out, _ = run(capsys, "train", "--config", path)
    assert code == 0 and out == "epoch,loss,valid_mrr\n"
    ck = ckpt_io.load(tmp_path / "m.skg")
    fresh = build_model(ck.config, build_store(ck.config))
    for k, v in fresh.state().items():
        assert np.array_equal(v, ck.arrays[k])


def test_training_runs_are_byte_identical(tmp_path, capsys, chain_dir, monkeypatch):
    path = write_cfg(tmp_path, dataset=chain_dir, epochs=4, dim=4, n_inputs=6, eval_every=2, seed=5)
    outputs = []
    for run_id in range(2):
        (tmp_path / f"run{run_id}").mkdir()
        monkeypatch.chdir(tmp_path / f"run{run_id}")
        code, out, _ = run(capsys, "train", "--config", path, "--threads", 1 + run_id)
        assert code == 0
        outputs.append(out)
    a, b = tmp_path / "run0", tmp_path / "run1"
    assert (a / "model.skg").read_bytes() == (b / "model.skg").read_bytes()
    assert (a / "metrics.csv").read_text() == (b / "metrics.csv").read_text()
    assert outputs[0] == outputs[1]
    lines = (a / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,valid_mrr" and len(lines) == 5
    assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2", "3", "4"]


def test_non_finite_training_exits_two(tmp_path, capsys, chain_dir, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = write_cfg(tmp_path, dataset=chain_dir, epochs=2, lr="nan", dim=4, n_inputs=6)
    code, _, err = run(capsys, "train", "--config", path)
    assert code == 2 and "error" in err


def test_bad_thread_env_exits_one(tmp_path, capsys, chain_dir, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("SKG_THREADS", "lots")
    path = write_cfg(tmp_path, dataset=chain_dir, epochs=0)
    code, _, err = run(capsys, "train", "--config", path)
    assert code == 1 and "SKG_THREADS" in err


# ------------------------------------------------------------------ eval / predict
@pytest.fixture
def trained(tmp_path, capsys, chain_dir, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = write_cfg(tmp_path, dataset=chain_dir, epochs=200, eval_every=0, checkpoint="chain.skg", metrics="chain.csv")
    code, _, _ = run(capsys, "train", "--config", path)
    assert code == 0
    return tmp_path / "chain.skg"


def test_eval_is_repeatable_and_matches_oracle(trained, capsys):
    a = run(capsys, "eval", "--ckpt", trained, "--split", "train")
    b = run(capsys, "eval", "--ckpt", trained, "--split", "train", "--threads", 3)
    assert a[0] == 0 and a[1] == b[1]
    ck = ckpt_io.load(trained)
    store = build_store(ck.config)
    scorer = ck.build().scorer()
    true = {tuple(t) for t in np.concatenate([store.train, store.valid, store.test]).tolist()}
    for mode in ("raw", "filtered"):
        report = evaluate(scorer, store, "train", mode)
        oracle = [[brute_force_rank(scorer, q, slot, store.num_entities, true, mode == "filtered")
                   for slot in ("subject", "object")] for q in store.train.tolist()]
        assert np.array_equal(report.ranks, np.array(oracle))
    assert "mrr = 1.000000" in a[1]


def test_eval_writes_rank_csv(trained, capsys, tmp_path):
    code, _, _ = run(capsys, "eval", "--ckpt", trained, "--mode", "raw", "--csv", tmp_path / "ranks.csv")
    assert code == 0
    assert (tmp_path / "ranks.csv").read_text().startswith("subject,predicate,object,slot,rank")


def test_corrupt_checkpoint_exits_two(trained, capsys):
    data = bytearray(trained.read_bytes())
    data[100] ^= 0xFF
    trained.write_bytes(bytes(data))
    code, _, err = run(capsys, "eval", "--ckpt", trained)
    assert code == 2 and "checksum" in err


def test_missing_checkpoint_exits_one(tmp_path, capsys):
    code, _, _ = run(capsys, "eval", "--ckpt", tmp_path / "absent.skg")
    assert code == 1


def test_predict_memorised_completion_first(trained, capsys):
    for i in range(4):
        code, out, _ = run(capsys, "predict", "--ckpt", trained, "--query", f"{CHAIN[i]} next ?", "--top", 3)
        assert code == 0
        assert out.splitlines()[0].split("\t")[1] == CHAIN[i + 1]
    code, out, _ = run(capsys, "predict", "--ckpt", trained, "--query", "? next e")
    assert out.splitlines()[0].split("\t")[1] == "d"


def test_predict_top_clamped(trained, capsys):
    code, out, _ = run(capsys, "predict", "--ckpt", trained, "--query", "a next ?", "--top", 50)
    lines = out.splitlines()
    assert code == 0 and len(lines) == len(CHAIN)
    assert sorted(ln.split("\t")[1] for ln in lines) == CHAIN
    scores = [float(ln.split("\t")[2]) for ln in lines]
    assert scores == sorted(scores)


def test_predict_label_and_id_forms_agree(trained, capsys):
    a = run(capsys, "predict", "--ckpt", trained, "--query", "b next ?")
    b = run(capsys, "predict", "--ckpt", trained, "--query", "1 0 ?")
    assert a == b


@pytest.mark.parametrize("query,fragment", [("b nxt ?", "did you mean: next"), ("zz next ?", "unknown entity"),
                                            ("a next b", "must look like"), ("? next ?", "must look like"),
                                            ("9 next ?", "out of range")])
def test_predict_bad_queries_exit_one(trained, capsys, query, fragment):
    code, _, err = run(capsys, "predict", "--ckpt", trained, "--query", query)
    assert code == 1 and fragment in err


# ------------------------------------------------------------------ raster / gradcheck
def test_export_raster(trained, capsys, tmp_path):
    code, _, _ = run(capsys, "export-raster", "--ckpt", trained, "--out", tmp_path / "raster")
    assert code == 0
    lines = (tmp_path / "raster" / "raster.csv").read_text().splitlines()
    assert lines[0] == "entity_id,layer,neuron,time"
    ent, layer, neuron, t = lines[1].split(",")
    assert layer == "initial" and 0 <= int(ent) < len(CHAIN) and float(t) > 0


def test_export_raster_sgnn_has_both_layers(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = write_cfg(tmp_path, model_type="sgnn", dataset="synth:geography", epochs=0, dim=4, checkpoint="g.skg")
    assert run(capsys, "train", "--config", path)[0] == 0
    assert run(capsys, "export-raster", "--ckpt", "g.skg", "--out", "r")[0] == 0
    layers = {ln.split(",")[1] for ln in (tmp_path / "r" / "raster.csv").read_text().splitlines()[1:]}
    assert layers == {"initial", "enriched"}


def test_gradcheck_passes_and_is_deterministic(capsys):
    a = run(capsys, "gradcheck", "--seed", 1, "--instances", 8)
    b = run(capsys, "gradcheck", "--seed", 1, "--instances", 8)
    assert a[0] == 0 and a == b
    assert a[1].strip().endswith("gradcheck PASS")


def test_gradcheck_catches_injected_fault(capsys):
    code, out, _ = run(capsys, "gradcheck", "--instances", 5, "--inject-fault")
    assert code == 2 and "FAIL" in out
