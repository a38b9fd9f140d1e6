import csv
import io

import pytest

from csb_ewma.cli import build_parser, main, read_long_csv, InputError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def long_csv(rows):
    return "t,stream,value\n" + "".join(f"{t},{s},{v}\n" for t, s, v in rows)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_monitor_signals_at_first_period(tmp_path, capsys):
    src = write(tmp_path, "in.csv", long_csv([(1, "a", 1.0), (1, "b", 2.0), (2, "a", 3.0), (2, "b", 4.0)]))
    out = str(tmp_path / "out.csv")
    assert main(["monitor", src, "--lambda", "1", "--limit", "1.4", "-o", out]) == 0
    assert "signal at t=1" in capsys.readouterr().out
    rows = read_rows(out)
    assert list(rows[0]) == ["t", "c", "q", "w", "r", "var_r", "lcl", "ucl", "signal"]
    assert float(rows[0]["w"]) == pytest.approx(2 ** 0.5, rel=1e-5)
    assert rows[0]["signal"] == "1"


def test_monitor_balanced_counts_never_signal(tmp_path, capsys):
    data = []
    for t in range(1, 31):
        data += [(t, "m1", 1.5), (t, "m2", -0.5), (t, "m3", 0.2), (t, "m4", -3.0)]
    src = write(tmp_path, "in.csv", long_csv(data))
    out = str(tmp_path / "out.csv")
    assert main(["monitor", src, "-o", out]) == 0
    assert "no signal" in capsys.readouterr().out
    rows = read_rows(out)
    assert [int(r["t"]) for r in rows] == list(range(1, 31))
    for r in rows:
        assert float(r["r"]) == 0.0 and r["signal"] == "0"
        assert float(r["lcl"]) == -float(r["ucl"])


def test_monitor_missing_stream_is_rejected(tmp_path, capsys):
    rows = [(t, s, 0.3) for t in (1, 2) for s in "abc"] + [(3, "a", 1.0), (3, "c", 1.0)]
    rows += [(4, s, 0.3) for s in "abc"]
    src = write(tmp_path, "in.csv", long_csv(rows))
    out = tmp_path / "out.csv"
    assert main(["monitor", src, "-o", str(out)]) == 2
    err = capsys.readouterr().err
    assert "line 8" in err and "period 3" in err and "'b'" in err
    assert not out.exists()


@pytest.mark.parametrize(("text", "fragment"), [
    ("t,stream,value\n1,a,1\n1,a,2\n", "duplicate"),
    ("t,stream,value\n1,a,1\n1,b,nan\n", "non-finite"),
    ("t,stream,value\n1,a,1\n1,b,inf\n", "non-finite"),
    ("t,stream,value\n2,a,1\n1,a,1\n", "consecutive"),
    ("t,stream,value\n1,a,1\n2,a,1\n1,a,1\n", "after period"),
    ("time,stream,value\n1,a,1\n", "header"),
    ("t,stream,value\n1,a,x\n", "not a number"),
])
def test_read_long_csv_errors(text, fragment):
    with pytest.raises(InputError, match=fragment):
        read_long_csv(io.StringIO(text), 0.0)


def test_read_long_csv_stream_count_cross_check():
    text = long_csv([(1, "a", 1), (1, "b", -1)])
    assert read_long_csv(io.StringIO(text), 0.0) == ([1], 2)
    with pytest.raises(InputError, match="expected 3"):
        read_long_csv(io.StringIO(text), 0.0, streams=3)


def test_tie_counts_as_exceedance():
    text = long_csv([(1, "a", 0.5), (1, "b", 0.4)])
    assert read_long_csv(io.StringIO(text), 0.5) == ([1], 2)


def test_arl0_output_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["arl0", "--lambda", "0.2", "--limit", "1.4", "--reps", "300", "--cap", "2000", "--seed", "42"]
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    (row,) = read_rows(a)
    assert list(row) == ["lambda", "limit", "k", "delta", "family", "arl", "sd", "se",
                         "n_reps", "n_censored", "cap", "seed"]
    assert (row["n_reps"], row["cap"], row["seed"]) == ("300", "2000", "42")


def test_arl1_rejects_unreachable_shift(capsys):
    assert main(["arl1", "--family", "normal", "--delta", "0.5", "--reps", "10"]) == 2
    assert "direct" in capsys.readouterr().err


def test_arl1_rows_per_family_and_delta(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["arl1", "--family", "normal", "uniform", "--delta", "0.2", "0.4", "--reps", "200",
                 "-o", str(out)]) == 0
    rows = read_rows(out)
    assert [(r["family"], r["delta"]) for r in rows] == [
        ("normal", "0.2"), ("normal", "0.4"), ("uniform", "0.2"), ("uniform", "0.4")]


def test_target_500_defaults(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["arl1", "--target", "500", "--delta", "0.3", "--reps", "50", "-o", str(out)]) == 0
    (row,) = read_rows(out)
    assert (row["lambda"], row["limit"]) == ("0.15", "1.55")


def test_config_file_and_flag_precedence(tmp_path):
    cfg = write(tmp_path, "run.cfg", "# study\nlambda = 0.5\nlimit = 1.6\nreps = 40\ndelta = 0.3\n")
    out = tmp_path / "a.csv"
    assert main(["arl1", "--config", cfg, "--limit", "1.7", "-o", str(out)]) == 0
    (row,) = read_rows(out)
    assert (row["lambda"], row["limit"], row["n_reps"]) == ("0.5", "1.7", "40")


def test_raw_flag_keeps_full_precision(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["validate-variance", "--lambda", "0.5", "--t-max", "2", "--raw", "-o", str(out)]) == 0
    (row,) = read_rows(out)
    assert float(row["var_t_max"]) == pytest.approx(0.4892766952966369, abs=1e-15)
    assert len(row["var_t_max"]) > 10


def test_validate_variance_lambda_one(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["validate-variance", "--lambda", "1.0", "--t-max", "100", "-o", str(out)]) == 0
    (row,) = read_rows(out)
    assert row["var_t_max"] == "1" and row["pass"] == "1"


def test_validate_variance_default_sweep(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["validate-variance", "-o", str(out)]) == 0
    rows = read_rows(out)
    assert [r["lambda"] for r in rows] == ["0.1", "0.2", "0.5", "0.9", "1"]
    assert all(float(r["max_rel_err"]) < 1e-10 for r in rows)


def test_invalid_parameters_rejected_before_work(capsys):
    assert main(["arl0", "--lambda", "1.5", "--reps", "10"]) == 2
    assert main(["arl0", "--reps", "0"]) == 2
    assert main(["optimize", "--lambda-min", "0.5", "--lambda-max", "0.1"]) == 2


def test_optimize_and_cv_tables(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["optimize", "--lambda-min", "0.2", "--lambda-max", "0.2", "--limit-min", "1.2",
                 "--limit-max", "1.6", "--reps", "200", "--cap", "3000", "--target", "200",
                 "-o", str(out)]) == 0
    (row,) = read_rows(out)
    assert row["target"] == "200" and row["lambda"] == "0.2"
    out = tmp_path / "cv.csv"
    cells = tmp_path / "cells.csv"
    assert main(["cv", "--delta", "0.1", "0.5", "--reps", "200", "-o", str(out), "--cells", str(cells)]) == 0
    rows = read_rows(out)
    assert list(rows[0])[:4] == ["delta", "mean_arl1", "sd_arl1", "cv"]
    assert rows[1]["cv"] == "0"
    assert len(read_rows(cells)) == 8


def test_help_lists_defaults():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    text = " ".join(sub["arl0"].format_help().split())
    for fragment in ("0.2 for target 370", "1.4 for target 370", "0.15 for 500", "1.55 for 500",
                     "10000", "250000", "default: 10)", "default: 0)"):
        assert fragment in text
    text = " ".join(sub["optimize"].format_help().split())
    for fragment in ("(default: 0.1)", "(default: 0.9)", "(default: 0.025)", "(default: 2.5)"):
        assert fragment in text
