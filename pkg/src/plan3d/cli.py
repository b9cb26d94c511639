"""plan3d command line: plan, sweep, search, scale, calibrate, replay."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .comm import collective_rows
from .config import load_hardware, load_model, load_parallel, load_yaml, write_csv, write_json
from .errors import CalibrationFailed, ConfigError, OutOfMemory, PlannerError
from .hardware import effective_peak
from .memory import ParallelConfig, memory_breakdown, usable_bytes, validate
from .model import param_count
from .perf import EfficiencyParams, step_time
from .scaling import DEFAULT_TARGETS, ScalingSetup, Target, calibrate
from .search import NoFeasibleConfiguration, SearchSpace, bo_search, exhaustive_search

OUTPUT_ENV = "PLAN3D_OUTPUT_DIR"
DEFAULT_OUTPUT = "plan3d-out"

PLAN_COLUMNS = (
    "tp", "pp", "dp", "mbs", "gas", "zero", "compute_s", "tp_comm_s", "pp_bubble_s",
    "pp_p2p_s", "dp_comm_s", "total_s", "tflops_per_tile", "mfu", "feasible",
)
MEMORY_COLUMNS = ("param_bytes", "grad_bytes", "optim_bytes", "activation_bytes", "total_bytes")
SCALE_COLUMNS = ("Number of tiles", "Weak Scaling Efficiency", "Strong Scaling Efficiency")
SWEEP_FILES = {"tp": "tp_results.csv", "pp1": "exp1.csv", "pp2": "exp2.csv", "pp3": "exp3.csv"}
SWEEP_MODELS = {"tp": "gpt-3.6b", "pp1": "gpt-20b", "pp2": "gpt-20b", "pp3": "gpt-20b"}


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser, model: str | None = "gpt-175b") -> None:
    p.add_argument("--model", default=model, help="preset name or YAML model file")
    p.add_argument("--hardware", default="smng-p2", help="preset name or YAML hardware file")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")


def _efficiency_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", help="JSON file written by `calibrate`")
    p.add_argument("--eta", type=float, help="compute efficiency override")
    p.add_argument("--dp-bw-scale", type=float, help="DP communication scale override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plan3d", description=__doc__)
    parser.add_argument("--version", action="version", version=f"plan3d {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="memory and step-time breakdown of one configuration")
    _common(p)
    _efficiency_flags(p)
    p.add_argument("--config", help="YAML file with a `parallel` section; flags override it")
    for name in ("tp", "pp", "dp", "mbs", "gas"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--zero", type=int, dest="zero_stage")
    p.add_argument("--strict-layers", action="store_true")
    p.add_argument("--recompute", choices=("selective", "none"), default="selective")

    p = sub.add_parser("sweep", help="reproduce a TP or PP experiment grid")
    p.add_argument("experiment", choices=sorted(SWEEP_FILES))
    _common(p, model=None)
    _efficiency_flags(p)
    p.add_argument("--tp-grid", type=_int_list, default=[4, 8, 16])
    p.add_argument("--pp-grid", type=_int_list, default=[4, 8, 16])
    p.add_argument("--m-grid", type=_int_list, default=[4, 8, 16, 32, 64, 128, 256, 512])
    p.add_argument("--tp", type=int, default=4, help="TP degree for PP experiments")
    p.add_argument("--pp", type=int, default=4, help="fixed PP for pp1")
    p.add_argument("--m", type=int, default=64, help="fixed M for pp2 (and gas for tp)")
    p.add_argument("--ratio", type=int, default=16, help="M per pipeline stage for pp3")
    p.add_argument("--mbs", type=int, default=2)
    p.add_argument("--collectives", action="store_true", help="also write collectives.csv")

    p = sub.add_parser("search", help="BO or exhaustive search over (PP, TP, MBS, GAS)")
    _common(p)
    _efficiency_flags(p)
    p.add_argument("--space", help="YAML search-space file")
    p.add_argument("--budget", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=1, help="proposals evaluated per round")
    p.add_argument("--exhaustive", action="store_true", help="evaluate the whole space")

    p = sub.add_parser("scale", help="weak and strong scaling efficiencies")
    _common(p)
    _efficiency_flags(p)
    p.add_argument("--multipliers", type=_int_list, default=[1, 2, 4, 8])

    p = sub.add_parser("calibrate", help="fit compute efficiency and DP scale to measurements")
    _common(p)
    p.add_argument("--targets", help="YAML list of {mode, value, tiles, tolerance}")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the manifest's)")
    return parser


# -- helpers --------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: str) -> str | None:
    p = Path(path)
    if not p.is_file():
        return None
    return hashlib.sha256(p.read_bytes()).hexdigest()


def _write_manifest(out: Path, args, argv: list[str], outputs: list[str]) -> None:
    inputs = {}
    for key in ("model", "hardware", "config", "params", "space", "targets"):
        ref = getattr(args, key, None)
        if ref:
            inputs[key] = {"ref": ref, "sha256": _sha256(ref)}
    write_json(out / "manifest.json", {
        "tool": "plan3d",
        "version": __version__,
        "command": args.command,
        "argv": argv,
        "seed": getattr(args, "seed", None),
        "inputs": inputs,
        "output_dir": str(out),
        "outputs": sorted(outputs),
    })


def _efficiency(args) -> tuple[EfficiencyParams, bool]:
    """Params from --params/--eta/--dp-bw-scale; second item says whether any were given."""
    kw = {}
    if args.params:
        try:
            data = json.loads(Path(args.params).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{args.params}: {exc}") from None
        data = data.get("params", data)
        kw = {k: float(data[k]) for k in ("compute_efficiency", "dp_bw_scale") if k in data}
    if args.eta is not None:
        kw["compute_efficiency"] = args.eta
    if args.dp_bw_scale is not None:
        kw["dp_bw_scale"] = args.dp_bw_scale
    return EfficiencyParams(**kw), bool(kw)


def _note_uncalibrated(hw, calibrated: bool) -> None:
    fields = hw.uncalibrated_fields()
    if fields:
        print(f"note: placeholder (uncalibrated) hardware values: {', '.join(fields)}", file=sys.stderr)
    if not calibrated:
        print("note: efficiency parameters are defaults (uncalibrated)", file=sys.stderr)


def _plan_row(pc: ParallelConfig, st, feasible: bool) -> list:
    base = [pc.tp, pc.pp, pc.dp, pc.mbs, pc.gas, pc.zero_stage]
    if st is None:
        return base + [""] * 8 + [feasible]
    return base + [st.compute, st.tp_comm, st.pp_bubble, st.pp_p2p, st.dp_comm, st.total,
                   st.achieved_flops_per_tile / 1e12, st.mfu, feasible]


def _gb(n: float) -> str:
    return f"{n / 1e9:10.3f} GB"


# -- commands -------------------------------------------------------------


def cmd_plan(args, out: Path) -> tuple[int, list[str]]:
    m = load_model(args.model)
    hw = load_hardware(args.hardware)
    e, calibrated = _efficiency(args)
    pc = load_parallel(args.config, {k: getattr(args, k) for k in ("tp", "pp", "dp", "mbs", "gas", "zero_stage")})
    validate(m, pc, args.strict_layers)
    mem = memory_breakdown(m, pc, recompute=args.recompute)
    print(f"model {m.name}: {param_count(m):,} parameters; hardware {hw.name}")
    print(f"parallel: tp={pc.tp} pp={pc.pp} dp={pc.dp} mbs={pc.mbs} gas={pc.gas} zero={pc.zero_stage} "
          f"({pc.world_tiles} tiles, global batch {pc.global_batch})")
    print("memory per tile:")
    for name in MEMORY_COLUMNS:
        print(f"  {name:<18}{_gb(getattr(mem, name))}")
    print(f"  {'usable':<18}{_gb(usable_bytes(hw))}")
    write_csv(out / "memory.csv", MEMORY_COLUMNS, [[getattr(mem, c) for c in MEMORY_COLUMNS]])
    outputs = ["memory.csv", "plan.csv"]
    try:
        st = step_time(m, pc, hw, e, strict_layers=args.strict_layers, recompute=args.recompute)
    except OutOfMemory:
        write_csv(out / "plan.csv", PLAN_COLUMNS, [_plan_row(pc, None, False)])
        print("infeasible: out of memory")
        return OutOfMemory.exit_code, outputs
    print("step time:")
    for name in ("compute", "tp_comm", "pp_bubble", "pp_p2p", "dp_comm", "total"):
        print(f"  {name:<18}{getattr(st, name):12.4f} s")
    print(f"  throughput        {st.achieved_flops_per_tile / 1e12:12.2f} TFLOP/s per tile")
    print(f"  mfu               {st.mfu:12.4f} (of {effective_peak(hw) / 1e12:.1f} TFLOP/s capped peak)")
    _note_uncalibrated(hw, calibrated)
    write_csv(out / "plan.csv", PLAN_COLUMNS, [_plan_row(pc, st, True)])
    return 0, outputs


def _sweep_configs(args) -> list[tuple[int, ParallelConfig]]:
    exp = args.experiment
    if exp == "tp":
        grid = args.tp_grid
        return [(tp, ParallelConfig(tp=tp, pp=1, dp=1, mbs=args.mbs, gas=args.m)) for tp in grid]
    if exp == "pp1":
        return [(m, ParallelConfig(tp=args.tp, pp=args.pp, mbs=args.mbs, gas=m)) for m in args.m_grid]
    if exp == "pp2":
        return [(pp, ParallelConfig(tp=args.tp, pp=pp, mbs=args.mbs, gas=args.m)) for pp in args.pp_grid]
    return [(pp, ParallelConfig(tp=args.tp, pp=pp, mbs=args.mbs, gas=args.ratio * pp)) for pp in args.pp_grid]


def cmd_sweep(args, out: Path) -> tuple[int, list[str]]:
    m = load_model(args.model or SWEEP_MODELS[args.experiment])
    hw = load_hardware(args.hardware)
    e, calibrated = _efficiency(args)
    points = _sweep_configs(args)
    if not points:
        raise ConfigError(f"empty grid for sweep {args.experiment}")
    rows, coll = [], []
    for x, pc in points:
        t = step_time(m, pc, hw, e).achieved_flops_per_tile / 1e12
        rows.append([x, t])
        if args.collectives:
            coll.extend([x, *r] for r in collective_rows(m, pc, hw, param_count(m)))
    exp = args.experiment
    if exp == "tp":
        header = ("Tensor Parallel Degree", "Throughput")
    elif exp == "pp1":
        header = ("M", "Throughput", "Gain")
        rows = [[x, t, t / rows[0][1]] for x, t in rows]
    else:
        header = ("PP", "Throughput")
    name = SWEEP_FILES[exp]
    write_csv(out / name, header, rows)
    outputs = [name]
    if args.collectives:
        write_csv(out / "collectives.csv",
                  ("point", "group", "kind", "group_size", "spans_nodes", "bytes", "seconds"), coll)
        outputs.append("collectives.csv")
    for row in rows:
        print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    _note_uncalibrated(hw, calibrated)
    return 0, outputs


def _load_space(args, m, hw, e) -> SearchSpace:
    kw = {}
    if args.space:
        data = dict(load_yaml(args.space).get("space", load_yaml(args.space)))
        if "model" in data:
            m = load_model(str(data.pop("model")))
        if "hardware" in data:
            hw = load_hardware(str(data.pop("hardware")))
        rename = {"pp": "pp_choices", "tp": "tp_choices", "gas": "gas_choices", "mbs": "mbs_range"}
        for k, v in data.items():
            key = rename.get(k, k)
            if key not in SearchSpace.__dataclass_fields__ or key in ("model", "hardware", "efficiency"):
                raise ConfigError(f"{args.space}: unknown search-space field {k!r}")
            kw[key] = tuple(v) if isinstance(v, list) else v
    try:
        return SearchSpace(m, hw, efficiency=e, **kw)
    except TypeError as exc:
        raise ConfigError(f"{args.space}: {exc}") from None


def _config_dict(pc: ParallelConfig) -> dict:
    return {"pp": pc.pp, "tp": pc.tp, "mbs": pc.mbs, "gas": pc.gas, "dp": pc.dp, "zero_stage": pc.zero_stage}


def cmd_search(args, out: Path) -> tuple[int, list[str]]:
    m = load_model(args.model)
    hw = load_hardware(args.hardware)
    e, _ = _efficiency(args)
    space = _load_space(args, m, hw, e)
    if args.exhaustive:
        try:
            best, trials = exhaustive_search(space)
        except NoFeasibleConfiguration as exc:
            best, trials = None, exc.trials
    else:
        traj = bo_search(space, args.budget, args.seed, batch_size=args.batch_size)
        best, trials = traj.best, traj.trials
    ok = [[t.eval_index, t.objective / 1e12] for t in trials if t.ok]
    bad = [[t.eval_index, t.objective] for t in trials if not t.ok]
    write_csv(out / "success_data.csv", ("job_id", "objective"), ok)
    write_csv(out / "error_data.csv", ("job_id", "objective"), bad)
    write_csv(out / "trials.csv", ("job_id", "pp", "tp", "mbs", "gas", "status", "objective"),
              [[t.eval_index, t.config.pp, t.config.tp, t.config.mbs, t.config.gas, t.status,
                t.objective / 1e12 if t.ok else t.objective] for t in trials])
    summary = {
        "evaluations": len(trials),
        "failures": {s: sum(t.status == s for t in trials) for s in ("oom", "invalid", "timeout")},
        "best": None if best is None else {
            "config": _config_dict(best.config),
            "job_id": best.eval_index,
            "tflops_per_tile": best.objective / 1e12,
        },
    }
    write_json(out / "best.json", summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    outputs = ["success_data.csv", "error_data.csv", "trials.csv", "best.json"]
    return (0 if best is not None else 3), outputs


def _load_targets(path: str | None) -> tuple[Target, ...]:
    if not path:
        return DEFAULT_TARGETS
    data = load_yaml(path).get("targets")
    if not isinstance(data, list) or not data:
        raise ConfigError(f"{path}: expected a non-empty `targets` list")
    try:
        return tuple(Target(**item) for item in data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _calibration_json(res) -> dict:
    return {
        "params": asdict(res.params),
        "converged": res.converged,
        "evaluations": res.evaluations,
        "targets": [
            {"mode": t.mode, "tiles": t.tiles, "value": t.value, "tolerance": t.tolerance,
             "predicted": t.value + r, "residual": r}
            for t, r in zip(res.targets, res.residuals)
        ],
    }


def cmd_calibrate(args, out: Path) -> tuple[int, list[str]]:
    setup = ScalingSetup(load_model(args.model), load_hardware(args.hardware))
    res = calibrate(_load_targets(args.targets), setup)
    write_json(out / "params.json", _calibration_json(res))
    for t, r in zip(res.targets, res.residuals):
        where = f"@{t.tiles} tiles" if t.tiles else ""
        print(f"{t.mode:<10}{where:<14} target {t.value:8.3f} predicted {t.value + r:8.3f} residual {r:+.3f}")
    p = res.params
    print(f"compute_efficiency={p.compute_efficiency!r} dp_bw_scale={p.dp_bw_scale!r}")
    if not res.converged:
        print("calibration failed: residuals exceed tolerance (parameters are uncalibrated)", file=sys.stderr)
        return CalibrationFailed.exit_code, ["params.json"]
    return 0, ["params.json"]


def cmd_scale(args, out: Path) -> tuple[int, list[str]]:
    m = load_model(args.model)
    hw = load_hardware(args.hardware)
    setup = ScalingSetup(m, hw, multipliers=tuple(args.multipliers))
    e, given = _efficiency(args)
    code = 0
    if not given:
        res = calibrate(DEFAULT_TARGETS, setup)
        e = res.params
        if not res.converged:
            print("note: calibration failed; scaling report is uncalibrated", file=sys.stderr)
            code = CalibrationFailed.exit_code
    weak, strong = setup.weak(e), setup.strong(e)
    rows = [[w.tiles, w.efficiency, s.efficiency] for w, s in zip(weak.points, strong.points)]
    write_csv(out / "scaling_efficiency.csv", SCALE_COLUMNS, rows)
    print(",".join(SCALE_COLUMNS))
    for tiles, w, s in rows:
        print(f"{tiles},{w:.2f},{s:.2f}")
    return code, ["scaling_efficiency.csv"]


COMMANDS = {
    "plan": cmd_plan,
    "sweep": cmd_sweep,
    "search": cmd_search,
    "scale": cmd_scale,
    "calibrate": cmd_calibrate,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        try:
            manifest = json.loads(Path(args.manifest).read_text())
            replay_argv = list(manifest["argv"])
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            print(f"error: cannot read manifest {args.manifest}: {exc}", file=sys.stderr)
            return ConfigError.exit_code
        out = args.out or manifest.get("output_dir")
        return run(replay_argv + (["--out", out] if out else []))
    # Manifest argv excludes --out so replays can redirect output.
    clean = _strip_out(argv)
    try:
        out = _out_dir(args)
        code, outputs = COMMANDS[args.command](args, out)
    except PlannerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    _write_manifest(out, args, clean, outputs)
    return code


def _strip_out(argv: list[str]) -> list[str]:
    clean, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        clean.append(a)
    return clean


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
