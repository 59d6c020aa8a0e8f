import numpy as np
import pytest

from softrankgbm.cli import build_parser, main
from softrankgbm.data import parse_letor
from softrankgbm.gbm import load_model, train, TrainConfig


@pytest.fixture
def synth_dir(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--queries", "15", "--valid-queries", "5",
                 "--docs", "8", "--features", "4", "--seed", "2"]) == 0
    return tmp_path


def _train(synth_dir, *extra):
    model = synth_dir / "model.txt"
    argv = ["train", "--train", str(synth_dir / "train.txt"), "--valid", str(synth_dir / "valid.txt"),
            "--model", str(model), "--iterations", "6", "--leaves", "4", "--epsilon", "0.1", *extra]
    return main(argv), model


def test_train_writes_model_and_curve(synth_dir, capsys):
    code, model = _train(synth_dir)
    assert code == 0
    curve = (synth_dir / "model.txt.curve.tsv").read_text().splitlines()
    assert curve[0].split("\t")[:2] == ["iteration", "train_loss"]
    assert [row.split("\t")[0] for row in curve[1:]] == [str(i) for i in range(1, 7)]
    assert "valid: ndcg@1=" in capsys.readouterr().out
    assert load_model(model).config["iterations"] == 6


def test_default_training_flags():
    args = build_parser().parse_args(["train", "--train", "x", "--model", "m"])
    assert (args.iterations, args.learning_rate, args.epsilon, args.leaves) == (1000, 0.1, 0.01, 255)


def test_missing_train_file_leaves_no_outputs(tmp_path, capsys):
    model = tmp_path / "m.txt"
    code = main(["train", "--train", str(tmp_path / "nope.txt"), "--model", str(model)])
    assert code != 0
    assert "nope.txt" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_invalid_config_is_reported(synth_dir, capsys):
    code, _ = _train(synth_dir, "--leaves", "1")
    assert code != 0 and "num_leaves" in capsys.readouterr().err


def test_predict_round_trip(synth_dir):
    _, model = _train(synth_dir)
    out = synth_dir / "scores.txt"
    assert main(["predict", "--model", str(model), "--test", str(synth_dir / "valid.txt"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    data = parse_letor(synth_dir / "valid.txt")
    assert len(lines) == data.num_docs
    expected = load_model(model).predict(data.features)
    assert np.array([float(x) for x in lines]).tobytes() == expected.tobytes()


def test_predict_dimension_mismatch(synth_dir, capsys):
    _, model = _train(synth_dir)
    wide = synth_dir / "wide.txt"
    wide.write_text("1 qid:1 1:0.5 9:1\n")
    assert main(["predict", "--model", str(model), "--test", str(wide), "--out", str(synth_dir / "s")]) != 0
    err = capsys.readouterr().err
    assert "expects 4" in err and "has 9" in err


def test_predict_pads_narrow_files(synth_dir):
    _, model = _train(synth_dir)
    narrow = synth_dir / "narrow.txt"
    narrow.write_text("1 qid:1 1:0.5\n0 qid:1 2:-1\n")
    assert main(["predict", "--model", str(model), "--test", str(narrow), "--out", str(synth_dir / "s")]) == 0
    assert len((synth_dir / "s").read_text().splitlines()) == 2


def test_evaluate_labels_as_scores(synth_dir):
    data = parse_letor(synth_dir / "valid.txt")
    scores = synth_dir / "labels.txt"
    scores.write_text("\n".join(repr(float(v)) for v in data.labels) + "\n")
    report = synth_dir / "report.tsv"
    assert main(["evaluate", "--test", str(synth_dir / "valid.txt"), "--scores", str(scores),
                 "--k", "1", "--k", "10", "--out", str(report)]) == 0
    rows = [line.split("\t") for line in report.read_text().splitlines()[1:]]
    assert [(r[0], r[1]) for r in rows] == [("ndcg", "1"), ("ndcg", "10"), ("map", "1"), ("map", "10")]
    nondegenerate = data.num_queries - int(rows[0][3])
    assert float(rows[0][2]) == pytest.approx(nondegenerate / data.num_queries)


def test_evaluate_degenerate_only(tmp_path, capsys):
    data = tmp_path / "d.txt"
    data.write_text("0 qid:1 1:1\n0 qid:1 1:2\n0 qid:2 1:1\n")
    scores = tmp_path / "s.txt"
    scores.write_text("1\n2\n3\n")
    assert main(["evaluate", "--test", str(data), "--scores", str(scores)]) == 0
    rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()[1:]]
    assert all(float(r[2]) == 0.0 and r[3] == "2" for r in rows)


def test_evaluate_count_mismatch(synth_dir, capsys):
    scores = synth_dir / "short.txt"
    scores.write_text("1\n")
    assert main(["evaluate", "--test", str(synth_dir / "valid.txt"), "--scores", str(scores)]) != 0
    assert "1 scores" in capsys.readouterr().err


def test_ablate_table_shape_and_determinism(synth_dir, capsys):
    argv = ["ablate", "--train", str(synth_dir / "train.txt"), "--valid", str(synth_dir / "valid.txt"),
            "--iterations", "5", "--leaves", "4", "--epsilon", "0.1"]
    tables = []
    for i in range(2):
        out = synth_dir / f"ablate{i}.tsv"
        assert main(argv + ["--out", str(out)]) == 0
        tables.append(out.read_text())
    assert tables[0] == tables[1]
    lines = tables[0].splitlines()
    assert lines[0].split("\t") == ["variant", "ndcg@1", "ndcg@10", "map@1", "map@10"]
    assert [line.split("\t")[0] for line in lines[1:]] == [
        "GBRT", "GBRT+SoftRankMSE", "GBRT (Listwise)", "SoftRankGBM"]


def test_stats(synth_dir, capsys):
    assert main(["stats", str(synth_dir / "train.txt")]) == 0
    out = capsys.readouterr().out
    assert '"queries": 15' in out and '"documents": 120' in out


def test_inputs_are_not_modified(synth_dir):
    before = (synth_dir / "train.txt").read_bytes()
    _train(synth_dir)
    assert (synth_dir / "train.txt").read_bytes() == before


def test_predict_interleaved_keeps_input_order(tmp_path):
    data = tmp_path / "d.txt"
    data.write_text("1 qid:1 1:0.1\n0 qid:2 1:0.9\n2 qid:1 1:0.5\n")
    ds = parse_letor(data, allow_interleaved=True)
    ens, _ = train(ds, TrainConfig(iterations=3, num_leaves=2, loss="mse"))
    from softrankgbm.gbm import save_model

    save_model(ens, tmp_path / "m.txt")
    out = tmp_path / "s.txt"
    assert main(["--allow-interleaved", "predict", "--model", str(tmp_path / "m.txt"),
                 "--test", str(data), "--out", str(out)]) == 0
    got = [float(x) for x in out.read_text().split()]
    expected = ens.predict(np.array([[0.1], [0.9], [0.5]]))
    assert got == expected.tolist()
