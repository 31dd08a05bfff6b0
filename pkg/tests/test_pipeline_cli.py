import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from otfuse.cli import EXIT_DATA, EXIT_INVARIANT, EXIT_OK, EXIT_USAGE, main
from otfuse.metrics import EvalReport
from otfuse.pipeline import TraversabilityPipeline, load_heads, save_heads
from otfuse.report import delta_svg, samples_csv
from otfuse.scene_anchor import ATTRIBUTES
from otfuse.synthetic import generate_dataset
from otfuse.transport import load_plans


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, small_config):
    root = tmp_path_factory.mktemp("ds")
    cfg_path = root / "config.json"
    cfg_path.write_text(small_config.dumps())
    assert main(["generate", "--config", str(cfg_path), "--out", str(root / "data")]) == EXIT_OK
    assert main(["train-heads", "--dataset", str(root / "data"), "--out", str(root / "model"), "--steps", "200"]) == EXIT_OK
    return root


def test_pipeline_run_order_independent_of_workers(small_config):
    table, scenes = generate_dataset(small_config)
    pipe = TraversabilityPipeline(table, tuple(table.heads[a] for a in ATTRIBUTES), small_config.sinkhorn_config())
    serial = pipe.run_many(scenes, parallel=1)
    threaded = pipe.run_many(scenes, parallel=4)
    assert [r.sample_id for r in serial] == [r.sample_id for r in threaded]
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.soft, b.soft)
    rep = pipe.report(threaded[::-1], scenes, small_config.train_set())
    assert rep == pipe.report(serial, scenes, small_config.train_set())
    assert samples_csv(serial) == samples_csv(threaded[::-1])


def test_pipeline_error_names_sample(small_config):
    table, scenes = generate_dataset(small_config)
    pipe = TraversabilityPipeline(table, tuple(table.heads[a] for a in ATTRIBUTES))
    bad = scenes[2]
    bad.features_normal = bad.features_normal[:, :-1]
    with pytest.raises(ValueError, match=bad.sample_id):
        pipe.run(bad)


def test_heads_file_round_trip(tmp_path, small_config):
    table, _ = generate_dataset(small_config)
    heads = [table.heads[a] for a in ATTRIBUTES]
    save_heads(heads, tmp_path / "h.json")
    for a, b in zip(heads, load_heads(tmp_path / "h.json")):
        np.testing.assert_array_equal(a.text_embeddings, b.text_embeddings)


def test_svg_is_well_formed():
    m = {"mAcc": 90.0, "mRecall": 80.0, "mF1": 85.0, "mIoU": 75.0}
    rep = EvalReport(m, m, {k: v - 2 for k, v in m.items()}, (2, 1, 1))
    root = ET.fromstring(delta_svg(rep))
    assert root.tag.endswith("svg")
    titles = [t.text for t in root.iter("{http://www.w3.org/2000/svg}title")]
    assert "unknown mIoU 73.00" in titles and "delta mIoU -2.0000" in titles


def test_train_heads_outputs(dataset):
    model = dataset / "model"
    trace = (model / "loss_trace.csv").read_text().splitlines()
    assert trace[0] == "step,loss" and len(trace) == 202
    acc = dict(line.split(",") for line in (model / "head_accuracy.csv").read_text().splitlines()[1:])
    assert set(acc) == set(ATTRIBUTES) and all(float(v) >= 95 for v in acc.values())
    assert len(load_heads(model / "heads.json")) == 3


def test_run_outputs_and_parallel_determinism(dataset):
    args = ["run", "--dataset", str(dataset / "data"), "--heads", str(dataset / "model" / "heads.json")]
    assert main(args + ["--out", str(dataset / "r1")]) == EXIT_OK
    assert main(args + ["--out", str(dataset / "r4"), "--parallel", "4"]) == EXIT_OK
    for name in ("report.csv", "samples.csv", "report.svg"):
        assert (dataset / "r1" / name).read_bytes() == (dataset / "r4" / name).read_bytes()
    header = (dataset / "r1" / "report.csv").read_text().splitlines()[0]
    assert header.startswith("method,overall_mAcc") and header.endswith("n_overall,n_known,n_unknown")
    assert len((dataset / "r1" / "samples.csv").read_text().splitlines()) == 21


def test_run_format_and_plan_dump(dataset):
    out = dataset / "svgonly"
    assert main(["run", "--dataset", str(dataset / "data"), "--out", str(out), "--format", "svg", "--dump-plans"]) == EXIT_OK
    assert (out / "report.svg").exists() and not (out / "report.csv").exists()
    plans = load_plans(out / "plans.txt")
    assert len(plans) == 40 and plans[0].shape == (64, 2)


def test_lambda_endpoints_differ_on_asymmetric_inputs(dataset):
    reports = []
    for lam in ("0", "1"):
        out = dataset / f"lam{lam}"
        assert main(["run", "--dataset", str(dataset / "data"), "--out", str(out), "--lambda", lam, "--format", "csv"]) == EXIT_OK
        reports.append((out / "samples.csv").read_text())
    assert reports[0] != reports[1]


def test_dump_plan_stdout(dataset, capsys):
    assert main(["dump-plan", "--dataset", str(dataset / "data"), "--sample", "s00004"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("# s00004 img\nrows,cols,epsilon,violation\n64,2,0.05,")
    assert main(["dump-plan", "--dataset", str(dataset / "data"), "--sample", "nope"]) == EXIT_DATA


def test_verify_passes_and_detects_corruption(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "11/11 checks passed" in out
    sweep = (tmp_path / "eps_sweep.csv").read_text().splitlines()
    assert sweep[0] == "instance,eps_0.01,eps_0.05,eps_0.25,eps_1"
    for line in sweep[1:]:
        costs = [float(v) for v in line.split(",")[1:]]
        assert all(a <= b + 1e-8 for a, b in zip(costs, costs[1:]))
    assert main(["verify", "--inject-corruption"]) == EXIT_INVARIANT
    assert "FAIL cost_range" in capsys.readouterr().out


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == EXIT_USAGE
    assert main(["run", "--dataset", str(tmp_path / "missing")]) == EXIT_DATA
    assert main(["generate", "--config", str(tmp_path / "missing.json")]) == EXIT_DATA
    (tmp_path / "bad.json").write_text(json.dumps({"version": 1, "unknown": 1}))
    assert main(["generate", "--config", str(tmp_path / "bad.json")]) == EXIT_DATA
    (tmp_path / "eps.json").write_text(json.dumps({"version": 1, "epsilon": -1}))
    assert main(["generate", "--config", str(tmp_path / "eps.json")]) == EXIT_USAGE
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["generate", "--out", str(blocker / "sub")]) == EXIT_DATA


def test_train_heads_zero_steps_keeps_table_heads(dataset):
    out = dataset / "zero"
    assert main(["train-heads", "--dataset", str(dataset / "data"), "--out", str(out), "--steps", "0"]) == EXIT_OK
    from otfuse.synthetic import load_table

    table = load_table(dataset / "data")
    for a, h in zip(ATTRIBUTES, load_heads(out / "heads.json")):
        np.testing.assert_array_equal(h.text_embeddings, table.heads[a].text_embeddings)
