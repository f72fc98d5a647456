import argparse
import json
import math

import numpy as np
import pytest

from lenmap.cli import _capture, _input_spec, _seed, main


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_capture_spec_parsing():
    assert _capture("2:all") == (2, "all")
    assert _capture("2") == (2, "all")
    assert _capture("1:0,3") == (1, (0, 3))
    assert _capture("3:0-2") == (3, (0, 1, 2))
    for bad in ("x:all", "2:a,b", "2:1-"):
        with pytest.raises(argparse.ArgumentTypeError):
            _capture(bad)


def test_input_spec_parsing():
    assert _input_spec("ones") == "ones"
    assert _input_spec("alternating") == "alternating"
    assert _input_spec("signs:12") == ("signs", 12)
    with pytest.raises(argparse.ArgumentTypeError):
        _input_spec("zeros")
    with pytest.raises(argparse.ArgumentTypeError):
        _input_spec("signs:x")


def test_seed_parsing():
    assert _seed("10") == 10
    assert _seed("0x10") == 16
    with pytest.raises(argparse.ArgumentTypeError):
        _seed(str(2**64))


def test_lengthmap_table(capsys):
    rc, out, _ = run(capsys, "lengthmap", "--act", "relu",
                     "--sw", "1.4142135623730951", "--depth", "3")
    assert rc == 0
    assert "qtilde" in out
    assert len([l for l in out.splitlines() if l.strip().startswith(("0", "1", "2", "3"))]) == 4


def test_lengthmap_json(capsys):
    rc, out, _ = run(capsys, "lengthmap", "--act", "relu",
                     "--sw", "1.4142135623730951", "--depth", "2", "--json")
    assert rc == 0
    doc = json.loads(out)
    assert doc["layers"][1]["qtilde"] == pytest.approx(2.0, abs=1e-7)
    assert doc["layers"][0] == {"layer": 0, "qtilde": 1.0, "trtilde": 1.0, "status": "finite"}


def test_lengthmap_reports_divergence_as_success(capsys):
    rc, out, _ = run(capsys, "lengthmap", "--act", "exp_square:1",
                     "--sw", "0.5", "--depth", "3", "--json")
    assert rc == 0
    doc = json.loads(out)
    assert doc["layers"][1]["qtilde"] == 0.25
    assert doc["layers"][1]["trtilde"] is None
    assert doc["layers"][1]["status"] == "diverged"
    assert doc["layers"][2]["qtilde"] is None


def test_missing_required_flag_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["lengthmap", "--sw", "1.0"])
    assert err.value.code == 2


def test_unknown_activation_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["lengthmap", "--act", "softplus", "--sw", "1.0"])
    assert err.value.code == 2


def test_invalid_width_reports_usage_error(capsys):
    rc, _, err = run(capsys, "converge", "--width", "0", "--trials", "4")
    assert rc == 2
    assert "error" in err


def test_converge_writes_artifacts(tmp_path, capsys):
    out_dir = tmp_path / "run"
    rc, out, _ = run(capsys, "converge", "--width", "16", "--width", "32",
                     "--trials", "8", "--depth", "2", "--out", str(out_dir),
                     "--no-plot")
    assert rc == 0
    csv = (out_dir / "converge.csv").read_text().splitlines()
    assert csv[0] == "width,layer,success_fraction,ci_lo,ci_hi"
    assert len(csv) == 1 + 2 * 3  # two widths x (2 layers + "all")
    assert csv[3].startswith("16,all,")
    assert not (out_dir / "converge.png").exists()

    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["command"] == "converge"
    assert manifest["master_seed"] == 0
    assert set(manifest["artifacts"]) == {"converge.csv", "converge.json"}
    assert manifest["config"]["widths"] == [16, 32]

    doc = json.loads((out_dir / "converge.json").read_text())
    all_rows = [l for l in csv[1:] if ",all," in l]
    for k, line in enumerate(all_rows):
        assert float(line.split(",")[2]) == doc["success_fraction"][k]


def test_converge_renders_figure_by_default(tmp_path, capsys):
    out_dir = tmp_path / "fig"
    rc, _, _ = run(capsys, "converge", "--width", "8", "--trials", "4",
                   "--depth", "2", "--out", str(out_dir))
    assert rc == 0
    assert (out_dir / "converge.png").stat().st_size > 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert "converge.png" in manifest["artifacts"]


def test_converge_json_stdout_matches_table_numbers(capsys):
    rc, table, _ = run(capsys, "converge", "--width", "16", "--trials", "8",
                       "--depth", "2")
    assert rc == 0
    rc, raw, _ = run(capsys, "converge", "--width", "16", "--trials", "8",
                     "--depth", "2", "--json")
    assert rc == 0
    doc = json.loads(raw)
    row = [l for l in table.splitlines() if l.strip().startswith("16")][0]
    assert float(row.split()[1]) == doc["success_fraction"][0]


def test_converge_diverged_reference_exits_3(capsys):
    rc, _, err = run(capsys, "converge", "--act", "exp_square:1", "--sw", "0.5",
                     "--width", "8", "--trials", "4")
    assert rc == 3
    assert "diverges" in err


def test_cauchy_artifacts(tmp_path, capsys):
    out_dir = tmp_path / "cauchy"
    rc, out, _ = run(capsys, "cauchy", "--width", "10", "--trials", "20",
                     "--bins", "16", "--out", str(out_dir), "--no-plot")
    assert rc == 0
    assert "gamma_fit" in out

    csv = (out_dir / "cauchy_hist_N10.csv").read_text().splitlines()
    assert csv[0] == "bin_lo,bin_hi,count,density"
    assert len(csv) == 1 + 16 + 2
    assert csv[1].startswith("-inf,")
    assert ",inf," in csv[-1]

    counts = [int(l.split(",")[2]) for l in csv[1:]]
    assert sum(counts) == 10 * 20  # every captured value lands in some bin

    fits = json.loads((out_dir / "cauchy_fit.json").read_text())
    assert len(fits) == 1
    assert fits[0]["width"] == 10
    assert fits[0]["sample_count"] == 200
    assert fits[0]["reference_gamma"] == pytest.approx(math.sqrt(10.0))

    # interior densities integrate to the in-range fraction
    in_range = sum(counts[1:-1])
    dens = [float(l.split(",")[3]) for l in csv[2:-1]]
    binw = 2 * 5 * math.sqrt(10) / 16
    assert sum(d * binw for d in dens) == pytest.approx(in_range / 200, rel=1e-9)


def test_cauchy_capture_subset(tmp_path, capsys):
    out_dir = tmp_path / "subset"
    rc, _, _ = run(capsys, "cauchy", "--width", "50", "--trials", "30",
                   "--capture", "2:0-4", "--out", str(out_dir), "--no-plot")
    assert rc == 0
    fits = json.loads((out_dir / "cauchy_fit.json").read_text())
    assert fits[0]["sample_count"] == 150


def test_cauchy_figures_rendered(tmp_path, capsys):
    out_dir = tmp_path / "figs"
    rc, _, _ = run(capsys, "cauchy", "--width", "10", "--trials", "12",
                   "--bins", "12", "--per-init", "--out", str(out_dir))
    assert rc == 0
    assert (out_dir / "cauchy_N10.png").stat().st_size > 0
    assert (out_dir / "cauchy_perinit_N10.png").stat().st_size > 0


def test_independence_json(capsys):
    rc, out, _ = run(capsys, "independence", "--trials", "2000", "--json")
    assert rc == 0
    doc = json.loads(out)
    assert doc["activation"] == "heaviside"
    assert doc["pair_count"] == 2000
    assert doc["theoretical_gap"] == pytest.approx(0.075)
    assert doc["captured_units"] == [0, 1]


def test_independence_unsupported_reference_is_null(capsys):
    rc, out, _ = run(capsys, "independence", "--act", "tanh",
                     "--trials", "1500", "--json")
    assert rc == 0
    assert json.loads(out)["theoretical_gap"] is None


def test_independence_requires_two_units(capsys):
    rc, _, err = run(capsys, "independence", "--trials", "1200",
                     "--capture", "2:0,1,2")
    assert rc == 2
    assert "two captured units" in err


@pytest.mark.parametrize(
    "act,verdict",
    [
        ("relu", "permissible-evidence"),
        ("exp_square:1", "violates-growth"),
        ("reciprocal", "violates-boundedness"),
    ],
)
def test_audit_verdicts(capsys, act, verdict):
    rc, out, _ = run(capsys, "audit", "--act", act, "--json")
    assert rc == 0
    assert json.loads(out)["verdict"] == verdict


def test_audit_artifact(tmp_path, capsys):
    out_dir = tmp_path / "audit"
    rc, _, _ = run(capsys, "audit", "--act", "tanh", "--out", str(out_dir))
    assert rc == 0
    doc = json.loads((out_dir / "audit.json").read_text())
    assert doc["activation"] == "tanh"
    assert json.loads((out_dir / "manifest.json").read_text())["command"] == "audit"


def test_repeat_runs_identical_csv(tmp_path, capsys):
    args = ("converge", "--width", "16", "--trials", "8", "--depth", "2", "--no-plot")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, *args, "--out", str(a))[0] == 0
    assert run(capsys, *args, "--out", str(b))[0] == 0
    assert (a / "converge.csv").read_bytes() == (b / "converge.csv").read_bytes()
    assert (a / "converge.json").read_bytes() == (b / "converge.json").read_bytes()
