import io
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dipolegap.cli import (
    MANIFEST_NAME,
    config_from_dict,
    fmt,
    load_config,
    main,
    run_pipeline,
    spectrum_from_tower_csv,
)
from dipolegap.errors import ParseError, TaskFailed, ValidationError

BASE = {"physical": {"gamma": 1.0, "mass": 1.0, "x0": [1.0, 0.0]}}


def _cfg(tmp_path, tasks, **solver):
    doc = dict(BASE, tasks=tasks, solver=dict({"r_max": 1e6, "n_random": 4}, **solver))
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return path


def test_minimal_config_gets_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(BASE))
    cfg = load_config(path)
    assert cfg.tasks == ["mathieu", "towers", "moments"]
    assert cfg.solver.r_max == 1e8 and cfg.solver.coupling == "form"
    assert cfg.output.format == "csv" and cfg.seed == 0


@pytest.mark.parametrize(
    "doc,field",
    [
        ({"physical": {"gamma": -1.0, "mass": 1.0}}, "physical.gamma"),
        ({"physical": {"gama": 1.0, "mass": 1.0}}, "gama"),
        (dict(BASE, solver={"r_max": 0.5}), "solver.r_max"),
        (dict(BASE, tasks=["nope"]), "tasks"),
        (dict(BASE, solver={"delta0": 1.5}), "solver.delta0"),
        (dict(BASE, output={"format": "xml"}), "output.format"),
    ],
)
def test_validation_names_field(doc, field):
    with pytest.raises(ValidationError) as info:
        config_from_dict(doc)
    assert field in str(info.value)


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_config(bad)
    with pytest.raises(ParseError):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ParseError):
        spectrum_from_tower_csv(tmp_path / "missing.csv")


def test_mathieu_only_run(tmp_path):
    m = run_pipeline(load_config(_cfg(tmp_path, ["mathieu"])), tmp_path / "o")
    assert m.ok and m.files == ["mathieu.csv"]
    rows = (tmp_path / "o" / "mathieu.csv").read_text().splitlines()
    assert rows[0] == "n,lambda,convergence" and len(rows) == 9


def test_moments_consume_towers(tmp_path):
    out = tmp_path / "o"
    m = run_pipeline(load_config(_cfg(tmp_path, ["count", "towers", "moments"], r_max=1e8)), out)
    assert m.ok
    doc = json.loads((out / "moments.json").read_text())
    assert all(t < 1e-6 for t in doc["relative_tails"])
    assert m.tasks[2].decisions["spectrum"] == "towers.csv"
    on_disk = sorted(p.name for p in out.iterdir())
    assert on_disk == sorted(m.files + [MANIFEST_NAME])
    manifest = json.loads((out / MANIFEST_NAME).read_text())
    assert [t["name"] for t in manifest["tasks"]] == ["count", "towers", "moments"]


def test_empty_task_list(tmp_path):
    m = run_pipeline(load_config(_cfg(tmp_path, [])), tmp_path / "o")
    assert m.ok and m.tasks == [] and m.files == []
    assert (tmp_path / "o" / MANIFEST_NAME).is_file()


def test_runs_are_reproducible(tmp_path):
    cfg = load_config(_cfg(tmp_path, ["mathieu", "towers", "resolvent", "inequalities"]))
    run_pipeline(cfg, tmp_path / "a")
    run_pipeline(cfg, tmp_path / "b")
    for name in ("mathieu.csv", "towers.csv", "resolvent.csv", "inequalities.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_failure_is_isolated(tmp_path):
    cfg = load_config(_cfg(tmp_path, ["moments", "mathieu"]))
    m = run_pipeline(cfg, tmp_path / "o")
    assert not m.ok
    assert m.tasks[0].status == "failed" and "ParseError" in m.tasks[0].error
    assert m.tasks[1].status == "ok"
    assert (tmp_path / "o" / MANIFEST_NAME).is_file()
    with pytest.raises(TaskFailed):
        run_pipeline(cfg, tmp_path / "p", strict=True)
    assert (tmp_path / "p" / MANIFEST_NAME).is_file()


def test_json_output_format(tmp_path):
    doc = dict(BASE, tasks=["mathieu"], output={"format": "json"})
    m = run_pipeline(config_from_dict(doc), tmp_path / "o")
    rows = json.loads((tmp_path / "o" / m.files[0]).read_text())
    assert m.files == ["mathieu.json"] and len(rows) == 8


def test_main_exit_codes(tmp_path):
    out = io.StringIO()
    assert main(["mathieu", "--q", "1", "--levels", "3"], stdout=out) == 0
    first = out.getvalue().splitlines()[1].split(",")
    assert float(first[1]) == pytest.approx(-1.070129704575391, rel=1e-12)
    assert main(["mathieu", "--q", "-1"], stdout=io.StringIO()) == 2
    assert main(["towers", "--gamma", "1", "--nodes-per-decade", "oops"], stdout=io.StringIO()) == 2
    assert main(["run", "--config", str(tmp_path / "none.json")], stdout=io.StringIO()) == 2
    cfg = _cfg(tmp_path, ["mathieu"])
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r"), "--task", "moments"],
                stdout=io.StringIO()) == 3
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "s")], stdout=io.StringIO()) == 0


def test_towers_then_moments_subcommands(tmp_path):
    out = io.StringIO()
    assert main(["towers", "--gamma", "1", "--rmax", "1e6"], stdout=out) == 0
    csv_path = tmp_path / "t.csv"
    csv_path.write_text(out.getvalue())
    buf = io.StringIO()
    assert main(["bounds", "moments", "--spectrum", str(csv_path), "--gamma", "1"], stdout=buf) == 0
    assert json.loads(buf.getvalue())["levels"] > 0


def test_dirac_sidecar(tmp_path):
    target = tmp_path / "d.csv"
    assert main(["dirac", "--gamma", "0.75", "--J", "4", "--rmax", "1e3", "--out", str(target)]) == 0
    meta = json.loads(target.with_suffix(".json").read_text())
    assert meta["J"] >= 4 and target.read_text().startswith("index,E")


def test_resolvent_subcommand_rejects_short_separation():
    assert main(["bounds", "resolvent", "--x0", "2,0", "--sep-grid", "1"], stdout=io.StringIO()) == 2


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips_floats(x):
    assert float(fmt(x)) == x


def test_fmt_specials():
    assert fmt(True) == "true" and fmt(3) == "3"
    assert math.isnan(float(fmt(float("nan"))))
