"""Command-line interface: ``helioseer <subcommand> ...``.

Exit codes: 0 success, 1 runtime/I-O failure, 2 usage error. Every
subcommand that writes files also writes a RunManifest beside them, and
``helioseer rerun --manifest M --out X`` replays it and checks that the
outputs are bit-identical.
"""

from __future__ import annotations

import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _apply_thread_cap() -> str | None:
    """Honour HELIOSEER_THREADS before numpy loads its BLAS; returns an error message."""
    n = os.environ.get("HELIOSEER_THREADS")
    if n is None:
        return None
    if not n.isdigit() or int(n) < 1:
        return f"HELIOSEER_THREADS must be a positive integer, got {n!r}"
    for var in _THREAD_VARS:
        os.environ[var] = n
    return None


_THREAD_ERROR = _apply_thread_cap()

import argparse  # noqa: E402
import csv  # noqa: E402
import io  # noqa: E402
import time  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__, ssgf  # noqa: E402
from .clearsky import (AIRMASS_MODELS, DEFAULT_TL, clearsky_stack, ineichen_perez,  # noqa: E402
                       solar_position, zenith_stack)
from .geogrid import (HOUR, UNITS_RAW, UNITS_WM2, Field, FieldStack, GridSpec, conus_grid,  # noqa: E402
                      isoformat, make_grid, to_datetime, to_epoch, toy_grid)
from .kvconfig import read_kv  # noqa: E402
from .manifest import (RunManifest, compare_outputs, file_digest, manifest_path_for)  # noqa: E402

PATH_ARGS = {"config", "out", "data", "model_cfg", "train_cfg", "ckpt", "input", "truth", "pred",
             "baseline", "stations", "manifest", "in_path"}


class UsageError(Exception):
    """Invalid arguments detected after parsing (exit code 2)."""


class CLIError(Exception):
    """Runtime failure with a message naming the offending file or field (exit code 1)."""


# --- argument helpers ---------------------------------------------------------

def parse_grid(text: str) -> GridSpec:
    key = text.strip().lower()
    if key == "conus":
        return conus_grid()
    if key.startswith("toy"):
        n = int(key[3:]) if key[3:] else 64
        return toy_grid(n)
    parts = text.split(",")
    if len(parts) != 5:
        raise UsageError(f"--grid must be 'conus', 'toy[N]' or 'lat_min,lat_max,lon_min,lon_max,res', "
                         f"got {text!r}")
    try:
        return make_grid(*(float(p) for p in parts))
    except ValueError as exc:
        raise UsageError(f"--grid: {exc}") from None


def _time(text: str) -> int:
    try:
        return to_epoch(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def init_name(t0: int) -> str:
    return "init_" + to_datetime(t0).strftime("%Y%m%dT%H%MZ")


def resolve_t0s(args) -> list[int]:
    t0s = list(args.t0 or [])
    if args.t0_range:
        start, end = (to_epoch(x) for x in args.t0_range)
        if end < start:
            raise UsageError("--t0-range END precedes START")
        t0s.extend(range(start, end + 1, args.stride * HOUR))
    if not t0s:
        raise UsageError("give at least one initialization via --t0 or --t0-range")
    return sorted(set(int(t) for t in t0s))


def _absolutize(args) -> None:
    for dest in PATH_ARGS:
        v = getattr(args, dest, None)
        if isinstance(v, str):
            setattr(args, dest, os.path.abspath(v))


def rebuild_argv(parser: argparse.ArgumentParser, args) -> list[str]:
    """Argument vector that reproduces ``args`` for the given subparser."""
    argv = []
    for action in parser._actions:
        if isinstance(action, argparse._HelpAction) or not action.option_strings:
            continue
        value = getattr(args, action.dest, None)
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif value is None:
            continue
        elif isinstance(value, (list, tuple)):
            if isinstance(action, argparse._AppendAction):
                for v in value:
                    argv += [flag, _fmt_arg(v, action)]
            else:
                argv += [flag] + [_fmt_arg(v, action) for v in value]
        else:
            argv += [flag, _fmt_arg(value, action)]
    return argv


def _fmt_arg(v, action) -> str:
    if action.type is _time:
        return isoformat(int(v))
    return repr(v) if isinstance(v, float) else str(v)


# --- output helpers -----------------------------------------------------------------

def _prepare_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)


def _finish(ctx, outputs: list[str], root: str, is_dir: bool, config: dict, inputs=None,
            seed=None, timings=None) -> RunManifest:
    m = RunManifest(ctx["subcommand"], ctx["argv"], config, dict(inputs or {}), {}, ctx["out"],
                    seed, __version__, dict(timings or {}))
    m.record_outputs(outputs, ctx["out"] if not is_dir else root, is_dir)
    m.write(manifest_path_for(ctx["out"], is_dir))
    return m


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x) -> str:
    return "" if x is None or not np.isfinite(x) else repr(float(x))


def _read_stack(path: str) -> FieldStack:
    if not os.path.exists(path):
        raise CLIError(f"{path}: file not found")
    return ssgf.read_stack(path)


# --- subcommands -----------------------------------------------------------------

def cmd_clearsky(args, ctx) -> int:
    if args.hours < 1:
        raise UsageError("--hours must be >= 1")
    config = {"start": isoformat(args.start), "hours": args.hours, "elevation": args.elev,
              "turbidity": args.tl, "airmass": args.airmass}
    if args.grid:
        if not args.out:
            raise UsageError("grid mode needs --out file.ssgf")
        grid = parse_grid(args.grid)
        config["grid"] = [grid.lat_min, grid.lat_max, grid.lon_min, grid.lon_max, grid.res]
        t = time.perf_counter()
        stack = clearsky_stack(grid, args.start, args.hours, elevation=args.elev, turbidity=args.tl,
                               first_lead=0, airmass_model=args.airmass)
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        ssgf.write(args.out, stack)
        _finish(ctx, [args.out], os.path.dirname(args.out), False, config,
                timings={"compute_s": time.perf_counter() - t})
        print(f"wrote {args.out} dims {stack.values.shape}")
        return 0
    if args.lat is None or args.lon is None:
        raise UsageError("point mode needs --lat and --lon (or use --grid)")
    if not -90 <= args.lat <= 90 or not -180 <= args.lon <= 180:
        raise UsageError("--lat must lie in [-90, 90] and --lon in [-180, 180]")
    config.update(lat=args.lat, lon=args.lon)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("timestamp", "zenith_deg", "ghi_wm2"))
    for k in range(args.hours):
        t = args.start + k * HOUR
        z = float(solar_position(args.lat, args.lon, t).zenith)
        ghi = ineichen_perez(args.lat, args.lon, t, args.elev, args.tl, args.airmass)
        w.writerow((isoformat(t), f"{z:.6f}", f"{ghi:.6f}"))
    sys.stdout.write(buf.getvalue())
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
        _finish(ctx, [args.out], os.path.dirname(args.out), False, config)
    return 0


def cmd_synth(args, ctx) -> int:
    from .pipeline import SynthConfig, save_dataset, synth_dataset
    overrides = {}
    if args.config:
        overrides.update(read_kv(args.config))
    for key in ("seed", "n_days", "alpha"):
        v = getattr(args, key)
        if v is not None:
            overrides[key] = v
    base = SynthConfig.toy() if args.config is None else SynthConfig()
    cfg = SynthConfig.from_dict({**base.to_dict(), **overrides})
    t = time.perf_counter()
    ds = synth_dataset(cfg)
    save_dataset(ds, args.out)
    outputs = [os.path.join(args.out, f) for f in sorted(os.listdir(args.out))
               if f.endswith(".ssgf") or f == "manifest.txt"]
    _finish(ctx, outputs, args.out, True, cfg.to_dict(),
            inputs={"config": args.config} if args.config else {}, seed=cfg.seed,
            timings={"synth_s": time.perf_counter() - t})
    print(f"wrote {len(ds)} hourly samples on a {ds.grid.n_lat}x{ds.grid.n_lon} grid to {args.out}")
    return 0


def _model_config(args):
    from .model import ModelConfig
    cfg = ModelConfig.toy() if args.preset == "toy" else ModelConfig.paper()
    if args.model_cfg:
        cfg = ModelConfig.from_dict({**{k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
                                     **read_kv(args.model_cfg)})
    return cfg


def cmd_train(args, ctx) -> int:
    from .pipeline import TrainConfig, load_dataset, train
    mcfg = _model_config(args)
    tcfg = TrainConfig.from_file(args.train_cfg) if args.train_cfg else TrainConfig()
    if args.steps is not None:
        tcfg = tcfg.replace(steps=args.steps)
    if args.seed is not None:
        tcfg = tcfg.replace(seed=args.seed)
    ds = load_dataset(args.data)
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    result = train(mcfg, tcfg, ds, log=log)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    result.checkpoint.save(args.out)
    loss_path = f"{args.out}.losses.csv"
    _write_csv(loss_path, ("step", "loss", "cloud_loss", "irr_loss"),
               [(k, repr(float(a)), repr(float(b)), repr(float(c)))
                for k, (a, b, c) in enumerate(zip(result.losses, result.cloud_losses,
                                                  result.irr_losses))])
    config = {"model": {k: getattr(mcfg, k) for k in mcfg.__dataclass_fields__},
              "train": tcfg.to_dict(), "preset": args.preset}
    _finish(ctx, [args.out, loss_path], os.path.dirname(args.out), False, config,
            inputs={"data": args.data, "model_cfg": args.model_cfg, "train_cfg": args.train_cfg},
            seed=tcfg.seed, timings={"train_s": result.seconds})
    print(f"trained {tcfg.steps} steps: final loss {result.losses[-1]:.6f}, "
          f"validation loss {result.val_loss:.6f}; wrote {args.out}")
    return 0


def _write_init(out_dir: str, name: str, stacks: dict) -> list[str]:
    d = os.path.join(out_dir, name)
    os.makedirs(d, exist_ok=True)
    paths = []
    for key, st in stacks.items():
        p = os.path.join(d, f"{key}.ssgf")
        ssgf.write(p, st)
        paths.append(p)
    return paths


def cmd_forecast(args, ctx) -> int:
    from .model import Checkpoint
    from .pipeline import forecast
    if not os.path.exists(args.ckpt):
        raise CLIError(f"{args.ckpt}: checkpoint not found")
    ck = Checkpoint.load(args.ckpt)
    sat = _read_stack(args.input)
    t0s = resolve_t0s(args)
    hours = ck.config.input_hours
    model = ck.build_model()
    _prepare_dir(args.out)
    outputs, timings = [], {}
    for t0 in t0s:
        try:
            hist = sat.window(t0 - (hours - 1) * HOUR, hours)
        except KeyError as exc:
            raise CLIError(f"{args.input}: satellite history gap for t0={isoformat(t0)} ({exc})") from None
        fc = forecast(ck, hist, t0, elevation=args.elev, turbidity=args.tl, model=model)
        outputs += _write_init(args.out, init_name(t0), {"cloud": fc.cloud, "irradiance": fc.irradiance})
        timings[isoformat(t0)] = fc.inference_seconds
    config = {"t0": [isoformat(t) for t in t0s], "elevation": args.elev, "turbidity": args.tl,
              "model": {k: getattr(ck.config, k) for k in ck.config.__dataclass_fields__}}
    _finish(ctx, outputs, args.out, True, config,
            inputs={"ckpt": args.ckpt, "input": args.input,
                    "ckpt_sha256": file_digest(args.ckpt)}, timings={"inference_s": timings})
    print(f"wrote {len(t0s)} forecast(s) to {args.out}; mean inference "
          f"{np.mean(list(timings.values())):.3f} s")
    return 0


def cmd_baseline(args, ctx) -> int:
    from .pipeline import SynthConfig, clearsky_baseline, persistence_baseline
    cfg_path = os.path.join(args.data, "manifest.txt")
    scfg = SynthConfig.from_file(cfg_path) if os.path.exists(cfg_path) else None
    alpha = args.alpha if args.alpha is not None else (scfg.alpha if scfg else None)
    elev = args.elev if args.elev is not None else (scfg.elevation if scfg else 0.0)
    tl = args.tl if args.tl is not None else (scfg.turbidity if scfg else DEFAULT_TL)
    if args.kind == "persistence" and alpha is None:
        raise UsageError("persistence needs --alpha (no dataset manifest found)")
    cloud = _read_stack(os.path.join(args.data, "cloud.ssgf")) if args.kind == "persistence" else None
    grid = (cloud.grid if cloud is not None
            else _read_stack(os.path.join(args.data, "irradiance.ssgf")).grid)
    _prepare_dir(args.out)
    outputs = []
    t0s = resolve_t0s(args)
    for t0 in t0s:
        cs = clearsky_stack(grid, t0, args.horizon, elevation=elev, turbidity=tl)
        if args.kind == "clearsky":
            irr = clearsky_baseline(cs)
        else:
            try:
                c0 = cloud.values[cloud.index_of(t0)]
            except KeyError:
                raise CLIError(f"{args.data}/cloud.ssgf: no cloud field at {isoformat(t0)}") from None
            irr = persistence_baseline(c0, cs, alpha)
        outputs += _write_init(args.out, init_name(t0), {"irradiance": irr})
    config = {"kind": args.kind, "alpha": alpha, "elevation": elev, "turbidity": tl,
              "horizon": args.horizon, "t0": [isoformat(t) for t in t0s]}
    _finish(ctx, outputs, args.out, True, config, inputs={"data": args.data})
    print(f"wrote {len(t0s)} {args.kind} baseline forecast(s) to {args.out}")
    return 0


def _init_dirs(path: str, what: str) -> list[str]:
    if not os.path.isdir(path):
        raise CLIError(f"{path}: {what} directory not found")
    names = sorted(d for d in os.listdir(path) if d.startswith("init_")
                   and os.path.isdir(os.path.join(path, d)))
    if not names:
        raise CLIError(f"{path}: no init_* forecast directories")
    return names


def cmd_evaluate(args, ctx) -> int:
    from .evaluate import (improvement, improvement_map, lead_report, read_stations,
                           spatial_error_map, station_verify, write_station_report)
    var = args.variable
    truth_all = _read_stack(os.path.join(args.truth, f"{var}.ssgf"))
    names = _init_dirs(args.pred, "prediction")
    preds, truths, masks = [], [], []
    for name in names:
        p = _read_stack(os.path.join(args.pred, name, f"{var}.ssgf"))
        if not p.grid.same_as(truth_all.grid):
            raise CLIError(f"{args.pred}/{name}/{var}.ssgf: grid differs from truth")
        try:
            truths.append(truth_all.window(int(p.times[0]), len(p.times)))
        except KeyError as exc:
            raise CLIError(f"{args.truth}/{var}.ssgf: truth does not cover {name} ({exc})") from None
        preds.append(p)
        if args.daytime_only:
            masks.append(zenith_stack(p.grid, p.times) < 90.0)
    mask = np.stack(masks) if args.daytime_only else None
    rep = lead_report(truths, preds, mask)
    base = None
    if args.baseline:
        bnames = _init_dirs(args.baseline, "baseline")
        if bnames != names:
            raise CLIError(f"{args.baseline}: initializations differ from {args.pred}")
        bstacks = [_read_stack(os.path.join(args.baseline, n, f"{var}.ssgf")) for n in names]
        for n, b, p in zip(names, bstacks, preds):
            if not np.array_equal(b.times, p.times):
                raise CLIError(f"{args.baseline}/{n}/{var}.ssgf: timestamps differ from prediction")
        base = lead_report(truths, bstacks, mask)

    _prepare_dir(args.out)
    outputs = []
    header = ["lead", "n", "mae", "rmse"] + (["base_mae", "base_rmse"] if base else [])
    rows = []
    for k in range(len(rep.leads)):
        row = [int(rep.leads[k]), int(rep.count[k]), _num(rep.mae[k]), _num(rep.rmse[k])]
        if base:
            row += [_num(base.mae[k]), _num(base.rmse[k])]
        rows.append(row)
    rows.append(["all", rep.total_count, _num(rep.total_mae), _num(rep.total_rmse)]
                + ([_num(base.total_mae), _num(base.total_rmse)] if base else []))
    rows.append(["diff", "", _num(rep.diff_mae), _num(rep.diff_rmse)]
                + ([_num(base.diff_mae), _num(base.diff_rmse)] if base else []))
    path = os.path.join(args.out, "metrics.csv")
    _write_csv(path, header, rows)
    outputs.append(path)

    units = UNITS_WM2 if var == "irradiance" else "percent"
    lead = None
    if args.map_lead is not None:
        if args.map_lead > len(rep.leads):
            raise UsageError(f"--map-lead {args.map_lead} exceeds the {len(rep.leads)}-hour horizon")
        lead = args.map_lead - 1
    suffix = "" if lead is None else f"_lead{args.map_lead:02d}"
    rmse_map, mae_map = spatial_error_map(truths, preds, mask, lead=lead)
    t_ref = int(preds[0].times[0])
    grid = preds[0].grid
    for nm, arr in (("rmse_map", rmse_map), ("mae_map", mae_map)):
        p = os.path.join(args.out, f"{nm}{suffix}.ssgf")
        ssgf.write(p, Field(grid, t_ref, np.nan_to_num(arr), units, ~np.isfinite(arr)))
        outputs.append(p)

    if base:
        imp_rows = []
        for k in range(len(rep.leads)):
            imp_rows.append([int(rep.leads[k]), _num(improvement(base.mae[k], rep.mae[k])),
                             _num(improvement(base.rmse[k], rep.rmse[k]))])
        imp_rows.append(["all", _num(improvement(base.total_mae, rep.total_mae)),
                         _num(improvement(base.total_rmse, rep.total_rmse))])
        imp_rows.append(["diff", _num(improvement(base.diff_mae, rep.diff_mae)),
                         _num(improvement(base.diff_rmse, rep.diff_rmse))])
        p = os.path.join(args.out, "improvement.csv")
        _write_csv(p, ["lead", "mae_improvement_pct", "rmse_improvement_pct"], imp_rows)
        outputs.append(p)
        base_rmse_map, _ = spatial_error_map(truths, bstacks, mask, lead=lead)
        imp = improvement_map(base_rmse_map, rmse_map)
        p = os.path.join(args.out, f"improvement_map{suffix}.ssgf")
        ssgf.write(p, Field(grid, t_ref, imp.filled(0.0), UNITS_RAW, np.ma.getmaskarray(imp)))
        outputs.append(p)

    if args.stations:
        if var != "irradiance":
            raise UsageError("--stations applies to --variable irradiance")
        stations = read_stations(args.stations)
        day = masks if args.daytime_only else [zenith_stack(p.grid, p.times) < 90.0 for p in preds]
        bl = bstacks if base else None
        # both night-hour conventions are summarized side by side
        rep_all = station_verify(preds, stations, bl, args.sampler)
        rep_day = station_verify(preds, stations, bl, args.sampler, day)
        srep = rep_day if args.daytime_only else rep_all
        p = os.path.join(args.out, "stations.csv")
        write_station_report(p, srep)
        outputs.append(p)
        s_all, s_day = rep_all.summary(), rep_day.summary()
        keys = sorted(set(s_all) | set(s_day))
        p = os.path.join(args.out, "station_summary.csv")
        _write_csv(p, ["key", "all_hours", "daytime"],
                   [(k, repr(s_all[k]) if k in s_all else "", repr(s_day[k]) if k in s_day else "")
                    for k in keys])
        outputs.append(p)
        if srep.skipped:
            print(f"skipped stations outside the grid or without data: {', '.join(srep.skipped)}",
                  file=sys.stderr)

    config = {"variable": var, "daytime_only": args.daytime_only, "sampler": args.sampler,
              "initializations": names}
    _finish(ctx, outputs, args.out, True, config,
            inputs={"truth": args.truth, "pred": args.pred, "baseline": args.baseline,
                    "stations": args.stations})
    msg = f"{var}: MAE {rep.total_mae:.3f}  RMSE {rep.total_rmse:.3f}"
    if base:
        msg += f"  (baseline RMSE {base.total_rmse:.3f}, " \
               f"improvement {improvement(base.total_rmse, rep.total_rmse):.2f}%)"
    print(msg)
    return 0


def cmd_interpret(args, ctx) -> int:
    from .evaluate import pearson_map
    cloud = _read_stack(os.path.join(args.data, "cloud.ssgf"))
    cs = _read_stack(os.path.join(args.data, "clearsky.ssgf"))
    irr = _read_stack(os.path.join(args.data, "irradiance.ssgf"))
    day = zenith_stack(cloud.grid, cloud.times) < 90.0
    res = pearson_map(cloud.values, cs.values, irr.values, day)
    _prepare_dir(args.out)
    p_map = os.path.join(args.out, "pearson_map.ssgf")
    ssgf.write(p_map, Field(cloud.grid, int(cloud.times[0]), res.r.filled(0.0), UNITS_RAW,
                            np.ma.getmaskarray(res.r)))
    frac = res.fraction_above(args.threshold)
    p_sum = os.path.join(args.out, "pearson_summary.csv")
    _write_csv(p_sum, ["key", "value"], [("threshold", repr(args.threshold)),
                                         ("fraction_above", repr(frac)),
                                         ("n_cells", res.r.size), ("n_masked", res.n_masked)])
    _finish(ctx, [p_map, p_sum], args.out, True, {"threshold": args.threshold},
            inputs={"data": args.data})
    print(f"{100 * frac:.2f}% of cells have r > {args.threshold}")
    return 0


def cmd_plot(args, ctx) -> int:
    from . import plotting
    src = args.in_path
    if not os.path.exists(src):
        raise CLIError(f"{src}: input not found")
    try:
        if src.endswith(".csv"):
            plotting.plot_metrics(src, args.out, args.title)
        else:
            data = ssgf.read(src)
            v = data.values
            m = data.mask
            if v.ndim == 4:
                raise CLIError(f"{src}: multi-channel stacks cannot be drawn as one map")
            if v.ndim == 3:
                if not 0 <= args.frame < v.shape[0]:
                    raise UsageError(f"--frame {args.frame} outside 0..{v.shape[0] - 1}")
                v = v[args.frame]
                m = None if m is None else m[args.frame]
            plotting.plot_map(v, data.grid, args.out, args.title or os.path.basename(src),
                              data.units, m)
    except (OSError, ValueError) as exc:
        if isinstance(exc, ValueError) and "unsupported plot format" in str(exc):
            raise UsageError(str(exc)) from None
        raise CLIError(f"{src}: {exc}") from None
    _finish(ctx, [args.out], os.path.dirname(args.out), False,
            {"frame": args.frame, "title": args.title}, inputs={"in": src})
    print(f"wrote {args.out}")
    return 0


def cmd_rerun(args, ctx) -> int:
    from .manifest import RunManifest as RM
    if not os.path.exists(args.manifest):
        raise CLIError(f"{args.manifest}: manifest not found")
    m = RM.read(args.manifest)
    if m.subcommand == "rerun":
        raise CLIError(f"{args.manifest}: cannot rerun a rerun manifest")
    argv = list(m.argv)
    if "--out" not in argv:
        raise CLIError(f"{args.manifest}: recorded argv lacks --out")
    k = argv.index("--out")
    new_out = args.out
    if os.path.abspath(new_out) == os.path.abspath(m.out_target):
        raise UsageError("--out must differ from the original output target")
    argv[k + 1] = new_out
    code = main([m.subcommand] + argv)
    if code != 0:
        return code
    is_dir = os.path.isdir(new_out)
    fresh = RM.read(manifest_path_for(new_out, is_dir))
    diffs = compare_outputs(m.outputs, fresh.outputs)
    if diffs:
        print(f"NOT reproduced: {len(diffs)} output(s) differ: {', '.join(diffs)}", file=sys.stderr)
        return 1
    print(f"reproduced {len(m.outputs)} output(s) bit-identically")
    return 0


# --- parser -------------------------------------------------------------------------

def _add_t0(p) -> None:
    p.add_argument("--t0", type=_time, action="append",
                   help="initialization time (ISO-8601 UTC); repeatable")
    p.add_argument("--t0-range", nargs=2, metavar=("START", "END"),
                   help="initializations from START to END inclusive")
    p.add_argument("--stride", type=_positive_int, default=24,
                   help="hours between initializations in --t0-range (default 24)")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="helioseer",
        description="Gridded 24-hour solar irradiance forecasting from satellite imagery.")
    parser.add_argument("--version", action="version", version=f"helioseer {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs = {}

    p = sub.add_parser("clearsky", help="clear-sky GHI at a point (CSV) or on a grid (SSGF)",
                       description="Ineichen-Perez clear-sky GHI. Point mode prints "
                                   "timestamp,zenith_deg,ghi_wm2 rows; grid mode writes an SSGF stack.")
    p.add_argument("--lat", type=float, help="latitude in degrees (point mode)")
    p.add_argument("--lon", type=float, help="longitude in degrees east (point mode)")
    p.add_argument("--start", type=_time, required=True, help="first timestamp, ISO-8601 UTC")
    p.add_argument("--hours", type=int, default=1, help="number of hourly timestamps (>= 1)")
    p.add_argument("--elev", type=float, default=0.0, help="site elevation in metres (default 0)")
    p.add_argument("--tl", type=float, default=DEFAULT_TL, help="Linke turbidity (default 3.0)")
    p.add_argument("--airmass", choices=AIRMASS_MODELS, default="secant",
                   help="air-mass formula (default secant, 1/cos z)")
    p.add_argument("--grid", help="grid mode: 'conus', 'toy[N]' or 'lat_min,lat_max,lon_min,lon_max,res'")
    p.add_argument("--out", help="output file (.ssgf in grid mode, optional CSV copy in point mode)")
    subs["clearsky"] = p

    p = sub.add_parser("synth", help="generate a synthetic cloud/irradiance/satellite dataset",
                       description="Writes satellite/cloud/irradiance/clearsky SSGF stacks and a "
                                   "key=value manifest. Without --config the 64x64 toy grid is used.")
    p.add_argument("--config", help="key=value SynthConfig file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--days", dest="n_days", type=_positive_int, help="override n_days")
    p.add_argument("--alpha", type=float, help="override the cloud absorption alpha")
    p.add_argument("--out", required=True, help="output directory")
    subs["synth"] = p

    p = sub.add_parser("train", help="train a model on a synthetic dataset",
                       description="Joint cloud/irradiance training with Adam; writes a checkpoint, "
                                   "a per-step loss table (<out>.losses.csv) and a manifest.")
    p.add_argument("--data", required=True, help="dataset directory written by 'synth'")
    p.add_argument("--preset", choices=("toy", "paper"), default="toy",
                   help="base model configuration (default toy)")
    p.add_argument("--model-cfg", help="key=value ModelConfig overrides")
    p.add_argument("--train-cfg", help="key=value TrainConfig file")
    p.add_argument("--steps", type=_positive_int, help="override training steps")
    p.add_argument("--seed", type=int, help="override training seed")
    p.add_argument("--verbose", action="store_true", help="log losses to stderr")
    p.add_argument("--out", required=True, help="checkpoint path (.ssck)")
    subs["train"] = p

    p = sub.add_parser("forecast", help="produce 24-hour forecasts from a checkpoint",
                       description="For each t0, reads the 6-hour satellite history ending at t0 "
                                   "and writes <out>/init_<t0>/{cloud,irradiance}.ssgf.")
    p.add_argument("--ckpt", required=True, help="checkpoint written by 'train'")
    p.add_argument("--input", required=True, help="raw satellite SSGF stack (T, 4, H, W)")
    _add_t0(p)
    p.add_argument("--elev", type=float, default=0.0, help="elevation in metres for clear-sky")
    p.add_argument("--tl", type=float, default=DEFAULT_TL, help="Linke turbidity for clear-sky")
    p.add_argument("--out", required=True, help="output directory")
    subs["forecast"] = p

    p = sub.add_parser("baseline", help="clear-sky or cloud-persistence reference forecasts",
                       description="Writes <out>/init_<t0>/irradiance.ssgf in the forecast layout.")
    p.add_argument("--data", required=True, help="dataset directory written by 'synth'")
    p.add_argument("--kind", choices=("persistence", "clearsky"), default="persistence",
                   help="baseline type (default persistence)")
    _add_t0(p)
    p.add_argument("--horizon", type=_positive_int, default=24, help="lead hours (default 24)")
    p.add_argument("--alpha", type=float, help="cloud absorption (default: dataset manifest)")
    p.add_argument("--elev", type=float, help="elevation (default: dataset manifest)")
    p.add_argument("--tl", type=float, help="Linke turbidity (default: dataset manifest)")
    p.add_argument("--out", required=True, help="output directory")
    subs["baseline"] = p

    p = sub.add_parser("evaluate", help="score forecasts against truth",
                       description="Writes metrics.csv (per lead, 'all', 'diff'), rmse/mae maps as "
                                   "SSGF, improvement.csv and improvement_map.ssgf with --baseline, and "
                                   "stations.csv with --stations.")
    p.add_argument("--truth", required=True, help="dataset directory holding the truth stacks")
    p.add_argument("--pred", required=True, help="forecast directory (init_* subdirectories)")
    p.add_argument("--baseline", help="baseline forecast directory in the same layout")
    p.add_argument("--stations", help="station CSV (station_id,lat,lon,timestamp,ghi_wm2)")
    p.add_argument("--sampler", choices=("bilinear", "nearest"), default="bilinear",
                   help="station sampling (default bilinear)")
    p.add_argument("--variable", choices=("irradiance", "cloud"), default="irradiance",
                   help="variable to score (default irradiance)")
    p.add_argument("--map-lead", type=_positive_int,
                   help="error maps for this lead hour only (default: pooled over all leads)")
    p.add_argument("--daytime-only", action="store_true",
                   help="score only hours with solar zenith < 90 degrees at the cell")
    p.add_argument("--out", required=True, help="output directory")
    subs["evaluate"] = p

    p = sub.add_parser("interpret", help="per-cell correlation of the uncertain component with cloud",
                       description="Pearson r between |clearsky - irradiance| and cloud cover over "
                                   "daytime hours; writes pearson_map.ssgf and pearson_summary.csv.")
    p.add_argument("--data", required=True, help="dataset directory written by 'synth'")
    p.add_argument("--threshold", type=float, default=0.5, help="r threshold (default 0.5)")
    p.add_argument("--out", required=True, help="output directory")
    subs["interpret"] = p

    p = sub.add_parser("plot", help="render metrics.csv or an SSGF map as SVG/PNG",
                       description="Line chart of metric columns vs lead time, or a heatmap of one "
                                   "SSGF frame with colour bar and value bounds.")
    p.add_argument("--in", dest="in_path", required=True, help="metrics.csv or .ssgf file")
    p.add_argument("--frame", type=int, default=0, help="frame index for multi-time SSGF (default 0)")
    p.add_argument("--title", help="plot title")
    p.add_argument("--out", required=True, help="output .svg or .png")
    subs["plot"] = p

    p = sub.add_parser("rerun", help="replay a run manifest and verify bit-identical outputs",
                       description="Re-executes the recorded subcommand into a new --out target and "
                                   "compares output digests; exit 1 when any output differs.")
    p.add_argument("--manifest", required=True, help="manifest JSON written by a previous run")
    p.add_argument("--out", required=True, help="new output target")
    subs["rerun"] = p
    return parser, subs


COMMANDS = {"clearsky": cmd_clearsky, "synth": cmd_synth, "train": cmd_train,
            "forecast": cmd_forecast, "baseline": cmd_baseline, "evaluate": cmd_evaluate,
            "interpret": cmd_interpret, "plot": cmd_plot, "rerun": cmd_rerun}


def main(argv=None) -> int:
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if _THREAD_ERROR:
        print(f"helioseer: error: {_THREAD_ERROR}", file=sys.stderr)
        return 2
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    _absolutize(args)
    ctx = {"subcommand": args.command, "argv": rebuild_argv(subs[args.command], args),
           "out": getattr(args, "out", None) or ""}
    try:
        return COMMANDS[args.command](args, ctx)
    except UsageError as exc:
        subs[args.command].print_usage(sys.stderr)
        print(f"helioseer {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (CLIError, OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"helioseer {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
