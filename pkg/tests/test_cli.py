import json

import numpy as np
import pytest

from metamks import cli, io
from metamks.cli import main


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """A small gen -> label -> features -> pca -> train chain shared by the tests."""
    d = tmp_path_factory.mktemp("chain")
    p = {k: str(d / v) for k, v in dict(cells="cells.mksd", labels="labels.csv", feat="features.mksm", pca="pca.mksm", model="model.mksm").items()}
    assert main(["gen", "--count", "16", "--seed", "3", "--out", p["cells"]]) == 0
    assert main(["label", "--cells", p["cells"], "--out", p["labels"]]) == 0
    assert main(["features", "--cells", p["cells"], "--combination", "si", "--out", p["feat"]]) == 0
    assert main(["pca", "--features", p["feat"], "--n-components", "4", "--out", p["pca"]]) == 0
    train = ["train", "--pca", p["pca"], "--labels", p["labels"], "--n-components", "3", "--restarts", "2", "--iters", "40"]
    assert main(train + ["--out", p["model"]]) == 0
    p["dir"] = d
    p["train"] = train
    return p


def test_gen_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.mksd", tmp_path / "b.mksd"
    assert main(["gen", "--count", "5", "--seed", "1", "--out", str(a)]) == 0
    assert main(["gen", "--count", "5", "--seed", "1", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["--seed", "1", "gen", "--count", "5", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    manifest = json.loads((tmp_path / "a.mksd.manifest.json").read_text())
    assert manifest["outputs"][str(a)] == io.sha256_file(a)
    assert manifest["seed"] == cli.pipeline.derive_seed(1, "gen")


def test_feature_width_for_si(chain):
    arrays, meta = io.read_mksm(chain["feat"])
    assert arrays["features"].shape == (16, 18432)
    assert meta["combination"] == "S+I"


def test_seeded_stages_reproduce(chain, tmp_path):
    again = tmp_path / "pca.mksm"
    assert main(["pca", "--features", chain["feat"], "--n-components", "4", "--out", str(again)]) == 0
    assert again.read_bytes() == open(chain["pca"], "rb").read()
    model = tmp_path / "model.mksm"
    assert main(chain["train"] + ["--out", str(model)]) == 0
    assert model.read_bytes() == open(chain["model"], "rb").read()


def test_eval_train_rows_interpolate(chain, tmp_path):
    out = tmp_path / "parity.csv"
    args = ["eval", "--model", chain["model"], "--pca", chain["pca"], "--labels", chain["labels"], "--out", str(out)]
    assert main(args + ["--on", "test"]) == 0
    assert main(args + ["--on", "train"]) == 0
    summary = json.loads((tmp_path / "parity.csv.metrics.json").read_text())
    assert summary["on"] == "train" and summary["n"] == 13


def test_eval_interpolates_with_tiny_noise(chain, tmp_path):
    # a fixed near-noiseless model evaluated on its own training rows
    model, arrays, meta = cli.load_model(chain["model"])
    theta = model.theta.copy()
    theta[1] = np.log(1e-6)
    arrays = dict(arrays, theta=theta)
    path = tmp_path / "noiseless.mksm"
    io.write_mksm(path, arrays, meta)
    out = tmp_path / "p.csv"
    rc = main(["eval", "--model", str(path), "--pca", chain["pca"], "--labels", chain["labels"], "--on", "train", "--out", str(out)])
    assert rc == 0
    assert json.loads((tmp_path / "p.csv.metrics.json").read_text())["mae"] <= 1e-6


def test_eval_refuses_mismatched_chain(chain, tmp_path):
    other = tmp_path / "labels.csv"
    text = open(chain["labels"]).read().replace(",1,", ",1,", 1)
    lines = text.splitlines()
    lines[1] = lines[1].replace(lines[1].split(",")[1], "0.5", 1)
    other.write_text("\n".join(lines) + "\n")
    rc = main(["eval", "--model", chain["model"], "--pca", chain["pca"], "--labels", str(other), "--out", str(tmp_path / "x.csv")])
    assert rc == cli.EXIT_DEPENDENCY


def test_exit_codes(tmp_path, capsys):
    assert main(["gen"]) == cli.EXIT_ARGUMENT
    assert main(["plot", "--kind", "pie", "--input", "x", "--out", "y.svg"]) == cli.EXIT_ARGUMENT
    assert main(["label", "--cells", str(tmp_path / "missing.mksd"), "--out", str(tmp_path / "l.csv")]) == cli.EXIT_DEPENDENCY
    assert "metamks gen" in capsys.readouterr().err
    bad = tmp_path / "bad.mksd"
    bad.write_bytes(b"NOPE" + bytes(10))
    assert main(["label", "--cells", str(bad), "--out", str(tmp_path / "l.csv")]) == cli.EXIT_FORMAT
    assert "byte offset 0" in capsys.readouterr().err
    assert main(["gen", "--count", "2", "--correlation-length", "-1", "--out", str(tmp_path / "c.mksd")]) == cli.EXIT_ARGUMENT


def test_import_npy_and_roundtrip(tmp_path):
    cells = np.zeros((3, 96, 96), np.uint8)
    cells[:, 10:50, 20:70] = 1
    npy = tmp_path / "cells.npy"
    np.save(npy, cells)
    out = tmp_path / "imp.mksd"
    assert main(["import", "--format", "npy-cells", "--input", str(npy), "--out", str(out)]) == 0
    assert np.array_equal(io.read_mksd(out), cells)
    again = tmp_path / "again.mksd"
    assert main(["import", "--format", "mksd", "--input", str(out), "--out", str(again)]) == 0
    assert again.read_bytes() == out.read_bytes()
    cells[1, 0, 0] = 2
    np.save(npy, cells)
    assert main(["import", "--format", "npy-cells", "--input", str(npy), "--out", str(out)]) == cli.EXIT_FORMAT


def test_import_csv_labels(tmp_path):
    src = tmp_path / "raw.csv"
    src.write_text("id,normalized_c11\n0,0.3\n1,0.005\n2,0.7\n")
    out = tmp_path / "labels.csv"
    assert main(["import", "--format", "csv-labels", "--input", str(src), "--out", str(out)]) == 0
    assert io.read_labels(out)["normalized_c11"].tolist() == [0.3, 0.005, 0.7]
    assert io.read_index_list(tmp_path / "labels.kept.csv").tolist() == [0, 2]
    src.write_text("id,normalized_c11\n0,-0.3\n")
    assert main(["import", "--format", "csv-labels", "--input", str(src), "--out", str(out)]) == cli.EXIT_FORMAT


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[global]\nseed = 1\n\n[gen]\ncount = 4\nout = %s\n" % (tmp_path / "from_cfg.mksd"))
    assert main(["--config", str(cfg), "gen"]) == 0
    assert io.read_mksd(tmp_path / "from_cfg.mksd").shape[0] == 4
    assert main(["--config", str(cfg), "gen", "--count", "2", "--out", str(tmp_path / "flag.mksd")]) == 0
    assert io.read_mksd(tmp_path / "flag.mksd").shape[0] == 2
    ref = tmp_path / "ref.mksd"
    assert main(["gen", "--count", "4", "--seed", "1", "--out", str(ref)]) == 0
    assert ref.read_bytes() == (tmp_path / "from_cfg.mksd").read_bytes()
    cfg.write_text("[gen]\nbogus = 1\n")
    assert main(["--config", str(cfg), "gen", "--count", "1"]) == cli.EXIT_ARGUMENT


def test_al_and_plots(chain, tmp_path):
    curves = tmp_path / "curves.csv"
    args = ["al", "--pca", chain["pca"], "--labels", chain["labels"], "--n-components", "2", "--n-init", "5",
            "--budget", "8", "--reps", "2", "--iters", "20", "--restarts", "1", "--out", str(curves)]
    assert main(args) == 0
    fields, rows = io.read_csv(curves)
    assert tuple(fields) == io.CURVE_FIELDS and len(rows) == 8
    for kind, src in (("learning-curve", curves), ("std-curve", curves), ("pc-scatter", chain["pca"])):
        svg = tmp_path / f"{kind}.svg"
        extra = ["--cells", chain["cells"]] if kind == "pc-scatter" else []
        assert main(["plot", "--kind", kind, "--input", str(src), "--out", str(svg)] + extra) == 0
        assert svg.read_text().startswith("<svg") and (tmp_path / f"{kind}.data.csv").is_file()
    fields, _ = io.read_csv(tmp_path / "pc-scatter.data.csv")
    assert fields == ["pc1", "pc2", "color_value"]


def test_parity_plot_of_perfect_model(tmp_path):
    src = tmp_path / "p.csv"
    io.write_csv(src, ("index", "y_true", "y_pred"), [(i, v, v) for i, v in enumerate([0.1, 0.4, 0.2])])
    assert main(["plot", "--kind", "parity", "--input", str(src), "--out", str(tmp_path / "par.svg")]) == 0
    _, rows = io.read_csv(tmp_path / "par.data.csv")
    assert all(a == b for a, b in rows)


def test_sweep_rows(chain, tmp_path):
    out = tmp_path / "sweep.csv"
    args = ["sweep", "--cells", chain["cells"], "--labels", chain["labels"], "--combinations", "s,si,six",
            "--components", "1-2", "--restarts", "1", "--iters", "10", "--out", str(out)]
    assert main(args) == 0
    _, rows = io.read_csv(out)
    assert [(r[0], r[1]) for r in rows] == [(c, str(k)) for c in ("S", "S+I", "S+I+X") for k in (1, 2)]
