import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from varriesz.cli import main
from varriesz.fields import make_grid, sample_field, save_field
from varriesz.report import Report, digest
from varriesz.verify import (EXPERIMENTS, ConfigError, defaults, load_config, parse_config,
                             parse_exponent, run_experiment)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
[experiment]
id = weak_type
resolution = 32
compare_resolution = 64

[battery]
size = 4
"""


def small(text=SMALL):
    return parse_config(text)


# ------------------------------------------------------------------ config

def test_defaults_cover_every_experiment():
    assert len(EXPERIMENTS) == 10
    for exp in EXPERIMENTS:
        cfg = defaults(exp)
        assert cfg["experiment"]["id"] == exp
        assert cfg["experiment"]["seed"] == 0


def test_shipped_configs_parse():
    files = sorted(CONFIGS.glob("*.ini"))
    assert {f.stem for f in files} >= set(EXPERIMENTS)
    for f in files:
        cfg = load_config(f)
        assert cfg["experiment"]["id"] in EXPERIMENTS


def test_overrides_and_coercion():
    cfg = small()
    assert cfg["experiment"]["resolution"] == 32
    assert cfg["battery"]["size"] == 4
    assert cfg["battery"]["kind"] == "mixed"
    assert cfg["_lines"]["experiment.resolution"] == 4


@pytest.mark.parametrize("text,line", [
    ("[experiment]\nid = weak_type\n\n[bogus]\nx = 1\n", 4),
    ("[experiment]\nid = nope\n", 2),
    ("[experiment]\nid = weak_type\nresolution = -3\n", 3),
    ("[experiment]\nid = weak_type\n[exponents]\nalpha = linear:1\n", 4),
    ("[experiment]\nid = weak_type\n[tolerance]\nstability = 0\n", 4),
    ("[experiment]\nid = exponential_decay\n[schedule]\nspan = wide\n", 4),
])
def test_errors_name_the_line(text, line):
    with pytest.raises(ConfigError, match=f"line {line}:"):
        parse_config(text)


def test_malformed_and_missing():
    with pytest.raises(ConfigError, match="line"):
        parse_config("[experiment]\nid = weak_type\nthis is not a key\n")
    with pytest.raises(ConfigError):
        parse_config("[battery]\nsize = 3\n")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.ini")
    with pytest.raises(ConfigError, match="unknown experiment"):
        defaults("nope")


def test_exponent_specs():
    g = make_grid(2, 16, (0.0, 1.0))
    e = parse_exponent("linear:1,0.5,0", g, None)
    assert e.lo == pytest.approx(1 + 0.25 / 16) and e.hi == pytest.approx(1 + 0.5 * 15.5 / 16)
    assert parse_exponent("const:1.5", g, None).is_constant
    assert parse_exponent("2", g, None).hi == 2.0
    for bad in ("linear:1,2", "foo:1", "const:a"):
        with pytest.raises(ValueError):
            parse_exponent(bad, g, None)
    with pytest.raises(ValueError, match="domain"):
        parse_exponent("domain_s", g, None)


# ---------------------------------------------------------------- reports

def test_report_json_safe():
    r = Report("x", inputs={"a": np.float64(1.5)})
    r.add_check("ok", True, value=np.float64(math.inf))
    d = r.to_dict(timing=False)
    assert d["checks"][0]["value"] == "inf" and "timing" not in d
    assert digest({"a": 1.5}) == d["inputs_digest"]
    json.dumps(d)


# -------------------------------------------------------------- experiments

def test_run_experiment_writes_outputs(tmp_path):
    rep = run_experiment(small(), tmp_path)
    doc = json.loads((tmp_path / "weak_type.json").read_text())
    assert doc["experiment"] == "weak_type"
    assert doc["passed"] == rep.passed
    assert {c["name"] for c in doc["checks"]} == {c.name for c in rep.checks}
    assert doc["timing"]["runtime_s"] > 0
    with (tmp_path / "weak_type.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert len(rows) > 1 and len(set(map(len, rows))) == 1


def test_run_is_deterministic():
    a = run_experiment(small()).to_dict(timing=False)
    b = run_experiment(small()).to_dict(timing=False)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_seed_changes_digest():
    a = run_experiment(small()).to_dict(timing=False)
    cfg = small()
    cfg["experiment"]["seed"] = 1
    b = run_experiment(cfg).to_dict(timing=False)
    assert a["inputs_digest"] != b["inputs_digest"]


# --------------------------------------------------------------------- CLI

def test_cli_unknown_experiment(capsys):
    assert main(["verify", "nope"]) == 2
    assert "unknown experiment" in capsys.readouterr().err


def test_cli_verify(tmp_path, capsys):
    cfg = tmp_path / "w.ini"
    cfg.write_text(SMALL)
    rc = main(["verify", "weak_type", "--config", str(cfg), "--out", str(tmp_path / "o")])
    line = capsys.readouterr().out.splitlines()[0]
    assert line.startswith("weak_type: PASS" if rc == 0 else "weak_type: FAIL")
    assert (tmp_path / "o" / "weak_type.json").exists()
    assert main(["verify", "hedberg", "--config", str(cfg)]) == 2


def test_cli_potential_and_norm(capsys):
    assert main(["potential", "--resolution", "32", "--eval-per-axis", "8"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["points"] == 64 and doc["max"] > doc["min"] >= 0
    assert main(["norm", "--resolution", "32", "--sample", "constant",
                 "--params", '{"value": 3.0}', "--p", "const:2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["norm"] == pytest.approx(3.0, rel=1e-12)


def test_cli_content_csv(tmp_path, capsys):
    assert main(["content", "--resolution", "32", "--beta", "const:2", "--format", "csv"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0][-1] == "term"
    assert sum(float(r[-1]) for r in rows[1:]) == pytest.approx(0.5, rel=1e-12)


def test_cli_field_input(tmp_path, capsys):
    g = make_grid(2, 32, (0.0, 1.0))
    path = save_field(sample_field(g, "constant", value=2.0), tmp_path / "f")
    assert main(["norm", "--field", str(path), "--p", "const:3"]) == 0
    assert json.loads(capsys.readouterr().out)["norm"] == pytest.approx(2.0, rel=1e-12)


def test_cli_maximal_writes_field(tmp_path):
    assert main(["maximal", "--resolution", "32", "--out", str(tmp_path)]) == 0
    assert any(p.name.startswith("maximal") for p in tmp_path.iterdir())


def test_cli_chain_and_domain(tmp_path, capsys):
    assert main(["chain", "--resolution", "64", "--point", "0.9", "0.1", "--through-base"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["report"]["passed"] and doc["chain"]["balls"] > 0
    assert main(["chain", "--point", "0.1"]) == 2
    assert main(["domain", "cusp", "--resolution", "64", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "geometry.json").read_text())["kind"] == "cusp"
    assert main(["domain", "blob"]) == 2
