import csv
import math
from pathlib import Path

import pytest

from netheat import __version__
from netheat.cli import Result, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOOD = sorted(p.name for p in CONFIGS.glob("*.cfg") if p.name != "bad.cfg")


def run(cfg, out, monkeypatch):
    monkeypatch.setenv("NETHEAT_OUT", str(out))
    return main(["run", str(cfg)])


def summary(out):
    with open(out / "summary.csv", newline="") as fh:
        return {row["quantity"]: row for row in csv.DictReader(fh)}


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize("name", GOOD)
def test_shipped_configs_pass(name, tmp_path, monkeypatch, capsys):
    assert run(CONFIGS / name, tmp_path / "out", monkeypatch) == 0
    text = (tmp_path / "out" / "summary.txt").read_text()
    assert text.endswith("verdict pass\n")
    assert "verdict pass" in capsys.readouterr().out
    header = (tmp_path / "out" / "summary.csv").read_text().splitlines()[0]
    assert header == "quantity,value,status"


def test_decay_summary(tmp_path, monkeypatch):
    assert run(CONFIGS / "decay.cfg", tmp_path, monkeypatch) == 0
    rows = summary(tmp_path)
    assert float(rows["l2_ratio"]["value"]) == pytest.approx(math.exp(-math.pi ** 2 * 0.1),
                                                             rel=1e-3)
    assert (tmp_path / "evolution.csv").read_text().startswith("t,min,max,l2,mass\n")


def test_check_h2_fits_log_two(tmp_path, monkeypatch):
    assert run(CONFIGS / "h2_tree.cfg", tmp_path, monkeypatch) == 0
    assert float(summary(tmp_path)["fitted_theta"]["value"]) == pytest.approx(math.log(2),
                                                                              rel=1e-6)


def test_monotone_schema(tmp_path, monkeypatch):
    assert run(CONFIGS / "monotone.cfg", tmp_path, monkeypatch) == 0
    with open(tmp_path / "monotone.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "min_u1", "max_u1", "min_u2", "max_u2", "gap"]
    last = [float(x) for x in rows[-1]]
    assert last[1] == pytest.approx(1.0, abs=1e-4) and last[4] == pytest.approx(1.0, abs=1e-4)
    for row in rows[1:]:
        t, lo1, hi1, lo2, hi2, gap = map(float, row)
        assert gap >= 0.0


def test_missing_T(tmp_path, monkeypatch, capsys):
    status = run(CONFIGS / "bad.cfg", tmp_path / "out", monkeypatch)
    assert status != 0
    assert "'T'" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("name", ["monotone.cfg", "tree_reduce.cfg", "compare.cfg"])
def test_rerun_is_byte_identical(name, tmp_path, monkeypatch):
    assert run(CONFIGS / name, tmp_path / "a", monkeypatch) == 0
    assert run(CONFIGS / name, tmp_path / "b", monkeypatch) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_random_data_seeded(tmp_path, monkeypatch):
    text = ("kind = evolve\ngraph = 0 1 1; 1 2 1; 1 3 0.5\nf = logistic\nu0 = random\n"
            "u0_range = 0 1\nh = 0.125\ndt = 0.01\nT = 0.1\nseed = {}\n")
    outs = []
    for k, seed in enumerate((1, 1, 2)):
        assert run(write_cfg(tmp_path, text.format(seed)), tmp_path / str(k), monkeypatch) == 0
        outs.append((tmp_path / str(k) / "trajectory.csv").read_bytes())
    assert outs[0] == outs[1] != outs[2]


def test_failing_precondition(tmp_path, monkeypatch, capsys):
    text = ("kind = monotone\ngraph = 0 1 1; 1 2 1\nf = bistable\nf_params = 0.3\n"
            "q_lower = 0.2\nq_upper = 1\nh = 0.125\ndt = 0.05\ntol = 1e-6\n")
    assert run(write_cfg(tmp_path, text), tmp_path / "out", monkeypatch) == 1
    err = capsys.readouterr().err
    assert "PreconditionError" in err and "interior" in err


def test_failed_assertion_exit(tmp_path, monkeypatch):
    text = ("kind = check-order\ngraph = 0 1 1; 1 2 1\nf = bistable\nf_params = 0.3\n"
            "u0 = 0.4\norder = super\nh = 0.125\ntol = 1e-6\n")
    assert run(write_cfg(tmp_path, text), tmp_path, monkeypatch) == 1
    assert (tmp_path / "order_report.txt").read_text().endswith("verdict fail\n")


def test_config_value_error(tmp_path, monkeypatch, capsys):
    text = (CONFIGS / "decay.cfg").read_text().replace("scheme = cn", "scheme = rk4")
    assert run(write_cfg(tmp_path, text), tmp_path / "out", monkeypatch) == 2
    assert "scheme" in capsys.readouterr().err


def test_unwritable_output(tmp_path, monkeypatch, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run(CONFIGS / "stationary.cfg", blocker / "sub", monkeypatch) == 1
    assert "cannot write" in capsys.readouterr().err


def test_out_key_relative_to_config(tmp_path, monkeypatch):
    monkeypatch.delenv("NETHEAT_OUT", raising=False)
    text = (CONFIGS / "stationary.cfg").read_text() + "out = results\n"
    assert main(["run", str(write_cfg(tmp_path, text))]) == 0
    assert (tmp_path / "results" / "summary.txt").exists()


class TestValidate:
    def test_graph_ok(self, tmp_path, capsys):
        p = write_cfg(tmp_path, "graph v1\nedge a 0 1 1\nedge b 1 2 2\n", "g.txt")
        assert main(["validate", str(p)]) == 0
        assert "2 edges" in capsys.readouterr().out

    def test_tree_ok(self, tmp_path, capsys):
        p = write_cfg(tmp_path, "tree v1\ngen 0 1 0\ngen 1 2 1\ngen 2 2 2\n", "t.txt")
        assert main(["validate", str(p)]) == 0
        assert "depth 2" in capsys.readouterr().out

    def test_invalid(self, tmp_path, capsys):
        p = write_cfg(tmp_path, "graph v1\nedge a 0 1 -1\n", "g.txt")
        assert main(["validate", str(p)]) == 1
        assert "invalid" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["validate", str(tmp_path / "none.txt")]) == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.strip() == f"netheat {__version__}"


def test_empty_result_is_header_only():
    res = Result("evolve")
    assert res.summary_csv() == "quantity,value,status\n"
    assert res.summary_text().endswith("verdict pass\n")
