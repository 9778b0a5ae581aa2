import csv
import math

import numpy as np
import pytest

from raresir.cli import SWEEP_COLUMNS, main, parse_density
from raresir.rare import CAMPAIGN_COLUMNS
from raresir.scenario import load_scenario, read_ascii_grid


def run(*argv):
    return main([str(a) for a in argv])


def manifest(path):
    lines = open(str(path) + ".manifest").read().splitlines()
    return dict(line.split("=", 1) for line in lines)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def scn_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scn")
    assert run("scenario", "gen", "--cols", 12, "--rows", 10, "--cell", 2, "--alpha", 2.5,
               "--obstacle", "0,0,6,6", "--obstacle", "16,14,24,20", "--out", d) == 0
    return d


def test_parse_density():
    assert parse_density("2^-12") == 0.000244140625
    assert parse_density("2**-12") == 2.0**-12
    assert parse_density("0.5") == 0.5


def test_scenario_gen_writes_grids_and_manifests(tmp_path, capsys):
    out = tmp_path / "w"
    assert run("scenario", "gen", "--cols", 100, "--rows", 100, "--cell", 1, "--alpha", 3, "--out", out) == 0
    for name in ("pathloss.asc", "mask.asc"):
        assert (out / name).exists()
        m = manifest(out / name)
        assert m["command"] == "scenario gen" and m["param.alpha"] == "3.0"
    scn = load_scenario(out)
    assert scn.geometry.shape == (100, 100)
    assert not scn.mask.blocked.any()


def test_scenario_gen_obstacles(scn_dir):
    scn = load_scenario(scn_dir)
    assert scn.mask.blocked.sum() == 9 + 12
    assert np.all(np.isnan(scn.pathloss.values_db[scn.mask.blocked]))


def test_scenario_info_city_blocks(tmp_path, capsys):
    assert run("scenario", "gen", "--preset", "city-blocks", "--out", tmp_path) == 0
    capsys.readouterr()
    assert run("scenario", "info", "--scenario", tmp_path) == 0
    out = capsys.readouterr().out
    assert "window: 311 x 274 m" in out
    assert "free area: 56614 m^2" in out
    assert "(-47.53 dB)" in out


def test_simulate_auto_n_and_row(scn_dir, tmp_path):
    out = tmp_path / "c.csv"
    assert run("simulate", "--scenario", scn_dir, "--lambda", 0.5, "--auto-n", "--n-mean", 200,
               "--eps", 0.05, "--seed", 3, "--out", out) == 0
    r = rows(out)
    assert tuple(r[0]) == CAMPAIGN_COLUMNS
    rec = dict(zip(r[0], r[1]))
    assert rec["n"] == "1649"
    assert float(rec["b"]) == pytest.approx(float(rec["mean_L"]) * 1.05)
    assert manifest(out)["n_tail"] == "1649"


def test_simulate_records_rescaled_threshold(scn_dir, tmp_path):
    out = tmp_path / "c.csv"
    assert run("simulate", "--scenario", scn_dir, "--lambda", "2^-12", "--tau-db", -50, "--n-mean", 50,
               "--n-tail", 50, "--out", out) == 0
    m = manifest(out)
    assert float(m["tau_lambda_db"]) == pytest.approx(-13.88, abs=0.005)
    assert float(m["param.lam"]) == 0.000244140625
    assert m["master_seed"] == "0"
    assert m["input." + str(scn_dir / "pathloss.asc")].startswith("sha256:")


def test_simulate_appends_and_is_byte_identical(scn_dir, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ("simulate", "--scenario", scn_dir, "--lambda", 0.3, "--n-mean", 300, "--n-tail", 500, "--seed", 9)
    assert run(*args, "--out", a) == 0
    assert run(*args, "--out", a) == 0
    assert run(*args, "--threads", 4, "--out", b) == 0
    ra = rows(a)
    assert len(ra) == 3 and ra[1] == ra[2]
    assert a.read_text().splitlines()[1] == b.read_text().splitlines()[1]


def test_sweep_columns_and_fit(scn_dir, tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run("sweep", "--scenario", scn_dir, "--lambdas", "0.2,0.4,0.6", "--eps", 0.05, "--n-mean", 300,
               "--n-tail", 2000, "--seed", 2, "--out", out) == 0
    r = rows(out)
    assert tuple(r[0]) == SWEEP_COLUMNS
    assert {"lambda", "p_hat", "std_err", "log_p", "fitted"} <= set(r[0])
    assert len(r) == 4
    m = manifest(out)
    assert "p1" in m and "rate_estimate" in m
    assert "fit: log p" in capsys.readouterr().out


def test_sweep_larger_eps_steeper(scn_dir, tmp_path):
    slopes = []
    for eps in (0.02, 0.2):
        out = tmp_path / f"s{eps}.csv"
        assert run("sweep", "--scenario", scn_dir, "--lambdas", "0.2,0.5,0.8", "--eps", eps, "--n-mean", 2000,
                   "--n-tail", 20000, "--seed", 4, "--out", out) == 0
        slopes.append(float(manifest(out)["p1"]))
    assert slopes[1] < slopes[0] < 0


def test_sweep_unfittable_exits_3(scn_dir, tmp_path, capsys):
    out = tmp_path / "s.csv"
    code = run("sweep", "--scenario", scn_dir, "--lambdas", "5,6", "--eps", 3, "--n-mean", 50, "--n-tail", 20,
               "--out", out)
    assert code == 3
    assert "fit skipped" in capsys.readouterr().err
    assert out.exists()


def test_sweep_needs_two_lambdas(scn_dir, tmp_path):
    assert run("sweep", "--scenario", scn_dir, "--lambdas", "0.5", "--out", tmp_path / "x.csv") == 1


def test_heatmap_outputs(scn_dir, tmp_path, capsys):
    out = tmp_path / "h"
    assert run("heatmap", "--scenario", scn_dir, "--lambda", "2^-3", "--eps", 0.3, "--tau-db", -20,
               "--n", 4000, "--n-mean", 500, "--seed", 1, "--out-dir", out) == 0
    assert "atypical=" in capsys.readouterr().out
    blocked = load_scenario(scn_dir).mask.blocked
    for name in ("mean_counts.asc", "ratio.asc"):
        with open(out / name) as fh:
            _, values, nodata_value = read_ascii_grid(fh)
        nodata = values == nodata_value
        assert np.array_equal(nodata, blocked)
        assert np.all(values[~nodata] >= 0)
        m = manifest(out / name)
        assert float(m["param.lam"]) == 0.125 and m["param.eps"] == "0.3" and m["tau_db"] == "-20.0"


def test_heatmap_no_hits_exits_3(scn_dir, tmp_path, capsys):
    out = tmp_path / "h"
    assert run("heatmap", "--scenario", scn_dir, "--lambda", 5, "--eps", 5, "--n", 10, "--n-mean", 20,
               "--out-dir", out) == 3
    assert "no atypical" in capsys.readouterr().err
    assert not (out / "ratio.asc").exists()


def test_extremes_report_and_replay(scn_dir, tmp_path, capsys):
    out = tmp_path / "e"
    assert run("extremes", "--scenario", scn_dir, "--lambda", 0.05, "--tau-db", -25, "--n", 300, "--seed", 6,
               "--out-dir", out) == 0
    report = (out / "report.txt").read_text().splitlines()
    assert report[0].startswith("least: ") and "% connected, most: " in report[0]
    detail = dict(kv.split("=") for kv in report[2].split(": ", 1)[1].split())
    capsys.readouterr()
    assert run("extremes", "--scenario", scn_dir, "--lambda", 0.05, "--tau-db", -25, "--seed", 6,
               "--replay", detail["replicate"]) == 0
    assert f"fraction={detail['fraction']}" in capsys.readouterr().out
    pts = rows(out / "least_points.csv")
    assert len(pts) - 1 == int(detail["users"])


def test_extremes_single_replicate(scn_dir, tmp_path):
    out = tmp_path / "e"
    assert run("extremes", "--scenario", scn_dir, "--lambda", 0.5, "--n", 1, "--out-dir", out) == 0
    lines = (out / "report.txt").read_text().splitlines()
    assert lines[2].split("digest=")[1] == lines[3].split("digest=")[1]
    assert run("extremes", "--scenario", scn_dir, "--lambda", 0.5, "--n", 0, "--out-dir", out) == 1


@pytest.mark.parametrize("argv, rate", [
    (("--dist", "exp", "--m", 1, "--s", 1.5), 0.09453),
    (("--dist", "gauss", "--m", 0, "--sigma", 1, "--s", 1), 0.5),
])
def test_oracle_prints_analytic_rate(argv, rate, capsys, tmp_path):
    out = tmp_path / "o.csv"
    assert run("oracle", *argv, "--n-list", "2,4,6", "--reps", 200000, "--out", out) == 0
    text = capsys.readouterr().out
    assert f"analytic rate: {rate:.6g}" in text
    assert "estimated rate:" in text and "relative error:" in text
    assert rows(out)[0][:3] == ["n", "reps", "hits"]


def test_oracle_at_mean(capsys):
    assert run("oracle", "--dist", "gauss", "--s", 0, "--n-list", "5,10,20,40", "--reps", 100000, "--seed", 3) == 0
    text = capsys.readouterr().out
    assert "analytic rate: 0" in text
    est = float(text.split("estimated rate: ")[1].split()[0])
    assert abs(est) < 0.005


def test_oracle_bad_parameters():
    assert run("oracle", "--dist", "gauss", "--sigma", 0, "--s", 1, "--n-list", "1,2") == 1
    assert run("oracle", "--dist", "exp", "--m", -1, "--s", 1, "--n-list", "1,2") == 1


def test_exit_codes(tmp_path):
    assert run() == 1
    assert run("simulate", "--lambda", 0.5) == 1
    assert run("simulate", "--scenario", tmp_path / "missing.asc", "--lambda", 0.5) == 2
    bad = tmp_path / "bad.asc"
    bad.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n-1 -2\n-3\n")
    assert run("scenario", "info", "--scenario", bad) == 2
    assert run("simulate", "--scenario", bad, "--lambda", "abc") == 1


def test_nonpositive_lambda_rejected(scn_dir, tmp_path):
    assert run("simulate", "--scenario", scn_dir, "--lambda", 0, "--out", tmp_path / "x.csv") == 1
    assert run("simulate", "--scenario", scn_dir, "--lambda", -1, "--out", tmp_path / "x.csv") == 1


def test_config_file_defaults_and_flags_win(scn_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# campaign\nscenario = {scn_dir}\nlambda = 2^-2\nn-mean = 100\nn-tail = 77\nseed = 5\n")
    out = tmp_path / "c.csv"
    assert run("--config", cfg, "simulate", "--seed", 8, "--out", out) == 0
    m = manifest(out)
    assert float(m["param.lam"]) == 0.25 and m["param.n_tail"] == "77" and m["master_seed"] == "8"
    assert rows(out)[1][CAMPAIGN_COLUMNS.index("n")] == "77"
    assert math.isfinite(float(rows(out)[1][CAMPAIGN_COLUMNS.index("b")]))
