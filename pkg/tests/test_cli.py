import csv
import json
import os

import numpy as np
import pytest

import oracles
from helioseer import ssgf
from helioseer.cli import build_parser, main
from helioseer.geogrid import FieldStack, isoformat, to_epoch
from helioseer.pipeline import SynthConfig, load_dataset

# 16x16 cells; fewer, smaller blobs than the 64x64 defaults so the sky is not overcast
SMALL = SynthConfig(lat_min=30.0, lat_max=30.75, lon_min=-100.0, lon_max=-99.25, n_days=3,
                    blob_count=(1, 2), radius=(2.0, 4.0))


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "synth.cfg"
    cfg.write_text(SMALL.to_kv())
    data, ck = d / "data", d / "model.ssck"
    assert main(["synth", "--config", str(cfg), "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--steps", "5", "--out", str(ck)]) == 0
    ds = load_dataset(data)
    t0s = [isoformat(int(ds.times[k])) for k in (10, 20)]
    t0_args = sum((["--t0", t] for t in t0s), [])
    assert main(["forecast", "--ckpt", str(ck), "--input", str(data / "satellite.ssgf"),
                 *t0_args, "--out", str(d / "fc")]) == 0
    assert main(["baseline", "--data", str(data), *t0_args, "--out", str(d / "base")]) == 0
    return {"dir": d, "data": data, "ckpt": ck, "ds": ds, "t0s": t0s}


def test_help_for_every_subcommand(capsys):
    parser, subs = build_parser()
    assert main(["--help"]) == 0
    for name, sub in subs.items():
        assert main([name, "--help"]) == 0
        text = capsys.readouterr().out
        for action in sub._actions:
            for opt in action.option_strings:
                assert opt in text, f"{name}: {opt} missing from --help"


def test_usage_errors_exit_2():
    assert main([]) == 2
    assert main(["clearsky", "--lat", "0", "--lon", "0", "--start", "2023-03-20T12:07Z",
                 "--hours", "0"]) == 2
    assert main(["nonsense"]) == 2


def test_runtime_errors_exit_1(tmp_path):
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "m")]) == 1
    assert main(["plot", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "x.svg")]) == 1


def test_clearsky_point_mode(capsys):
    assert main(["clearsky", "--lat", "0", "--lon", "0", "--start", "2023-03-20T12:07Z",
                 "--hours", "1"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(rows) == 1
    ref = oracles.clearsky_point(0.0, 0.0, to_epoch("2023-03-20T12:07Z"), 0.0, 3.0)
    assert float(rows[0]["ghi_wm2"]) == pytest.approx(ref, abs=1e-5)


def test_clearsky_grid_mode_conus(tmp_path):
    out = tmp_path / "cs.ssgf"
    assert main(["clearsky", "--grid", "conus", "--start", "2023-06-01T00:00Z", "--hours", "24",
                 "--out", str(out)]) == 0
    assert ssgf.read(out).values.shape == (24, 480, 1150)


def test_pipeline_layout(work):
    fc = work["dir"] / "fc"
    inits = sorted(p for p in os.listdir(fc) if p.startswith("init_"))
    assert len(inits) == 2
    for name in inits:
        st = ssgf.read_stack(fc / name / "irradiance.ssgf")
        assert st.values.shape == (24, 16, 16) and np.all(st.values >= 0)
    assert (work["dir"] / "model.ssck.losses.csv").exists()
    assert json.loads((fc / "manifest.json").read_text())["subcommand"] == "forecast"


def test_evaluate_perfect_forecast_is_zero(work, tmp_path):
    ds = work["ds"]
    pred = tmp_path / "perfect"
    for t0 in work["t0s"]:
        k = int(np.searchsorted(ds.times, to_epoch(t0)))
        sub = pred / f"init_{isoformat(ds.times[k]).replace('-', '').replace(':', '')[:13]}Z"
        sub.mkdir(parents=True)
        ssgf.write(sub / "irradiance.ssgf",
                   FieldStack(ds.grid, ds.times[k + 1:k + 25], ds.irradiance[k + 1:k + 25], "W/m2"))
    out = tmp_path / "ev"
    assert main(["evaluate", "--truth", str(work["data"]), "--pred", str(pred), "--out", str(out)]) == 0
    rows = _rows(out / "metrics.csv")
    assert len(rows) == 26
    assert all(float(r["mae"]) == 0.0 and float(r["rmse"]) == 0.0 for r in rows)


def test_evaluate_improvement_table(work, tmp_path):
    out = tmp_path / "ev"
    assert main(["evaluate", "--truth", str(work["data"]), "--pred", str(work["dir"] / "fc"),
                 "--baseline", str(work["dir"] / "base"), "--daytime-only", "--out", str(out)]) == 0
    metrics = {r["lead"]: r for r in _rows(out / "metrics.csv")}
    for r in _rows(out / "improvement.csv"):
        m = metrics[r["lead"]]
        for kind in ("mae", "rmse"):
            base, model = float(m[f"base_{kind}"] or "nan"), float(m[kind] or "nan")
            got = r[f"{kind}_improvement_pct"]
            if not base > 0:    # clear sky all along (persistence exact) or no daytime samples
                assert got == ""
                continue
            got = float(got)
            expect = 100.0 * (base - model) / base
            assert got == pytest.approx(expect, rel=1e-6, abs=1e-6)
        assert float(m["rmse"]) >= float(m["mae"])
    assert (out / "improvement_map.ssgf").exists() and (out / "rmse_map.ssgf").exists()


def test_interpret(work, tmp_path):
    out = tmp_path / "interp"
    assert main(["interpret", "--data", str(work["data"]), "--out", str(out)]) == 0
    r = ssgf.read(out / "pearson_map.ssgf")
    assert r.values.shape[-2:] == (16, 16) and np.all(np.abs(r.values) <= 1)


def test_plot_deterministic_svg(work, tmp_path):
    ev = tmp_path / "ev"
    assert main(["evaluate", "--truth", str(work["data"]), "--pred", str(work["dir"] / "fc"),
                 "--baseline", str(work["dir"] / "base"), "--out", str(ev)]) == 0
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert main(["plot", "--in", str(ev / "metrics.csv"), "--out", str(a)]) == 0
    assert main(["plot", "--in", str(ev / "metrics.csv"), "--out", str(b)]) == 0
    svg = a.read_text()
    assert a.read_bytes() == b.read_bytes() and svg.lstrip().startswith("<?xml")
    assert "baseline" in svg.lower() or svg.count("<path") >= 2
    m = tmp_path / "map.svg"
    assert main(["plot", "--in", str(ev / "rmse_map.ssgf"), "--out", str(m)]) == 0
    assert main(["plot", "--in", str(ev / "rmse_map.ssgf"), "--out", str(tmp_path / "x.bmp")]) == 2


def test_rerun_reproduces_train(work, tmp_path):
    new = tmp_path / "again.ssck"
    assert main(["rerun", "--manifest", str(work["ckpt"]) + ".manifest.json", "--out", str(new)]) == 0
    assert new.read_bytes() == work["ckpt"].read_bytes()


def test_evaluate_single_lead_maps(work, tmp_path):
    out = tmp_path / "ev"
    assert main(["evaluate", "--truth", str(work["data"]), "--pred", str(work["dir"] / "fc"),
                 "--baseline", str(work["dir"] / "base"), "--map-lead", "3", "--out", str(out)]) == 0
    assert (out / "rmse_map_lead03.ssgf").exists() and (out / "improvement_map_lead03.ssgf").exists()
    assert not (out / "rmse_map.ssgf").exists()
    assert main(["evaluate", "--truth", str(work["data"]), "--pred", str(work["dir"] / "fc"),
                 "--map-lead", "30", "--out", str(tmp_path / "bad")]) == 2


def test_evaluate_stations_both_conventions(work, tmp_path):
    from helioseer.evaluate import StationRecord, write_stations
    from helioseer.geogrid import cell_coords
    ds = work["ds"]
    lat, lon = cell_coords(ds.grid, 4, 5)
    stations = [StationRecord("S1", lat, lon, ds.times, ds.irradiance[:, 4, 5]),
                StationRecord("FAR", 45.0, -80.0, ds.times, ds.irradiance[:, 0, 0])]
    write_stations(tmp_path / "st.csv", stations)
    out = tmp_path / "ev"
    assert main(["evaluate", "--truth", str(work["data"]), "--pred", str(work["dir"] / "fc"),
                 "--stations", str(tmp_path / "st.csv"), "--out", str(out)]) == 0
    rows = _rows(out / "stations.csv")
    assert [r["station_id"] for r in rows] == ["S1", "FAR"] and rows[1]["lat"] == "skipped"
    summary = {r["key"]: r for r in _rows(out / "station_summary.csv")}
    assert summary["n_stations"]["all_hours"] == "1" and summary["n_skipped"]["daytime"] == "1"
    assert float(summary["mean_rmse"]["all_hours"]) != float(summary["mean_rmse"]["daytime"])
