import csv
import json

import numpy as np
import pytest

from dmhp.cli import main
from dmhp.io import load_model, read_cascades


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "c.jsonl"
    assert run("simulate", "--n-star", "0.3,0.8", "--kernel", "exp", "--theta", "0.5,3",
               "--num-cascades", 60, "--num-items", 3, "--start-mean", 5, "--seed", 1, "--out", path) == 0
    return path


def test_simulate_zero_branching(tmp_path):
    out = tmp_path / "c.jsonl"
    assert run("simulate", "--n-star", 0, "--kernel", "exp", "--theta", 1, "--num-cascades", 50,
               "--out", out) == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(lines) == 50 and all(l["times"] == [0.0] for l in lines)


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for p in (a, b):
        run("simulate", "--n-star", 0.6, "--kernel", "pl", "--theta", 1.2, "--c", 0.3,
            "--num-cascades", 200, "--seed", 7, "--out", p)
    assert a.read_bytes() == b.read_bytes()


def test_simulate_mean_size(tmp_path):
    out = tmp_path / "c.jsonl"
    run("simulate", "--n-star", 0.5, "--kernel", "exp", "--theta", 1, "--num-cascades", 10_000,
        "--seed", 3, "--out", out)
    sizes = np.array([r.cascade.size for r in read_cascades(out)])
    assert abs(sizes.mean() - 2) < 3 * np.sqrt(4 / sizes.size)


@pytest.mark.parametrize("args", [
    ["--n-star", 1.2, "--kernel", "exp", "--theta", 1],
    ["--n-star", 0.5, "--kernel", "exp", "--theta", -1],
    ["--n-star", 0.5, "--kernel", "pl", "--theta", 1],
    ["--n-star", "0.1,0.2", "--kernel", "exp", "--theta", "1,2,3"],
])
def test_simulate_rejects_bad_parameters(tmp_path, args, capsys):
    out = tmp_path / "c.jsonl"
    assert run("simulate", *args, "--num-cascades", 3, "--out", out) == 1
    assert "error" in capsys.readouterr().err
    assert not out.exists()


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as err:
        run("fit")
    assert err.value.code == 1


def test_fit_rejects_malformed_input_without_output(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"item_id": "a", "times": [0]}\n{"item_id": "a", "times": [0, -1]}\n')
    out = tmp_path / "m.json"
    assert run("fit", "--input", bad, "--kernel", "exp", "--k", 1, "--out", out) == 2
    assert "bad.jsonl:2:" in capsys.readouterr().err
    assert not out.exists()


def test_fit_flags_items_without_multi_event_cascades(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"item_id": "solo", "publisher_id": "p", "times": [0]}\n'
                    '{"item_id": "busy", "publisher_id": "p", "times": [0, 1, 1.5]}\n')
    out = tmp_path / "m.json"
    assert run("fit", "--input", path, "--kernel", "exp", "--k", 1, "--restarts", 1, "--out", out) == 0
    m = load_model(out)
    assert m.item("solo").kmm is None and any("bmm_only" in f for f in m.item("solo").flags)
    assert m.item("busy").kmm is not None


def test_fit_k1_single_item_reduces_to_mles(tmp_path):
    from dmhp.borel import fit_borel_mle
    from dmhp.likelihood import fit_kernel_mle
    path = tmp_path / "c.jsonl"
    run("simulate", "--n-star", 0.6, "--kernel", "exp", "--theta", 2, "--num-cascades", 150,
        "--seed", 2, "--out", path)
    out = tmp_path / "m.json"
    run("fit", "--input", path, "--kernel", "exp", "--k", 1, "--restarts", 1, "--out", out)
    item = load_model(out).items[0]
    cascades = [r.cascade for r in read_cascades(path)]
    assert item.bmm.components[0][0] == pytest.approx(fit_borel_mle([c.size for c in cascades]))
    assert item.kmm.components[0][0].theta == pytest.approx(fit_kernel_mle(cascades, "exp").theta, rel=1e-4)


def test_pipeline_outputs(corpus, tmp_path, capsys):
    model, emb, pred = tmp_path / "m.json", tmp_path / "e.csv", tmp_path / "p.csv"
    assert run("fit", "--input", corpus, "--kernel", "exp", "--k", 2, "--restarts", 1,
               "--out", model) == 0
    assert run("embed", "--model", model, "--bins", 4, "--out", emb) == 0
    rows = list(csv.reader(emb.open()))
    assert rows[0][0] == "item_id" and len(rows) == 4
    for row in rows[1:]:
        v = np.array(row[1:-1], dtype=float)
        assert np.allclose(v.reshape(3, 4).sum(axis=1), 1.0)

    pairs = tmp_path / "pairs.csv"
    pairs.write_text("item0,item0\nitem0,item1\nitem0,ghost\n")
    dist = tmp_path / "d.csv"
    assert run("dist", "--embeddings", emb, "--pairs", pairs, "--out", dist) == 0
    drows = list(csv.DictReader(dist.open()))
    assert float(drows[0]["distance"]) == 0.0
    assert float(drows[1]["distance"]) >= 0.0
    assert drows[2]["distance"] == "" and "ghost" in drows[2]["error"]

    assert run("predict", "--model", model, "--publisher", "p0", "--observed", corpus,
               "--at-time", 2.0, "--out", pred) == 0
    prow = list(csv.DictReader(pred.open()))
    assert [r["item_id"] for r in prow] == ["item0", "item1", "item2"]
    for r in prow:
        assert float(r["predicted_mean"]) >= int(r["observed_count"])
        assert float(r["predicted_variance"]) >= 0

    hold = tmp_path / "h.jsonl"
    assert run("eval-holdout", "--model", model, "--cascades", corpus, "--at-time", 0.5,
               "--out", hold) == 0
    for line in hold.read_text().splitlines():
        obj = json.loads(line)
        assert sum(obj["posterior"]) == pytest.approx(1.0, abs=1e-12)

    assert run("predict", "--model", model, "--publisher", "nobody", "--observed", corpus,
               "--at-time", 2.0, "--out", pred) == 2
    assert "known publishers: p0" in capsys.readouterr().err


def test_predict_without_residual_adds_future_term(tmp_path):
    # cascades long finished: the forecast is the observed count plus C/(1-n*)
    path = tmp_path / "c.jsonl"
    path.write_text("".join(json.dumps({"item_id": "a", "publisher_id": "p", "cascade_id": str(i),
                                        "times": [0, 1, 2]}) + "\n" for i in range(4)))
    model, pred = tmp_path / "m.json", tmp_path / "p.csv"
    run("fit", "--input", path, "--kernel", "exp", "--k", 1, "--restarts", 1, "--out", model)
    run("predict", "--model", model, "--publisher", "p", "--observed", path, "--at-time", 1e6,
        "--out", pred)
    row = next(csv.DictReader(pred.open()))
    m = load_model(model).items[0]
    n = m.bmm.components[0][0]
    assert float(row["predicted_mean"]) == pytest.approx(12 + 4 / (1 - n))


def test_env_override_reaches_fit(tmp_path, corpus, monkeypatch):
    monkeypatch.setenv("DMHP_BMM_MAX_ITER", "1")
    out = tmp_path / "m.json"
    assert run("fit", "--input", corpus, "--kernel", "exp", "--k", 2, "--restarts", 1, "--out", out) == 0
    assert all(it.bmm_report["iterations"] <= 1 for it in load_model(out).items)
    monkeypatch.setenv("DMHP_EM_TOL", "abc")
    assert run("fit", "--input", corpus, "--kernel", "exp", "--k", 1, "--out", out) == 1


def test_parallel_fit_matches_serial(tmp_path, corpus):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("fit", "--input", corpus, "--kernel", "exp", "--k", 1, "--restarts", 1, "--out", a)
    run("fit", "--input", corpus, "--kernel", "exp", "--k", 1, "--restarts", 1, "--jobs", 2, "--out", b)
    assert a.read_bytes() == b.read_bytes()
