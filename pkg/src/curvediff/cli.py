"""Command line interface.

Subcommands: simulate, ensemble, check, triangle, geodesic, probe-volume.
Flags use long names only.  A JSON config file may supply any flag's value;
explicit flags win, and the CURVEDIFF_SEED environment variable overrides
the seed from either source.  Exit codes: 0 success, 1 failed checks,
2 configuration errors, 3 numerical failures (the manifest is still
written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, brownian, calculus, checks, curves, reporting, triangle
from .errors import CurveError

#: simulate/ensemble runs larger than this need --extended.
EXTENDED_VERTEX_LIMIT = 50
EXTENDED_STEP_LIMIT = 50_000


class ConfigError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvediff",
        description="Brownian motion on discrete closed curves with "
        "Sobolev-type metrics, plus the normalized-triangle toy geometry.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shape_flags(p):
        p.add_argument("--shape", choices=("circle", "square", "file"), default=None)
        p.add_argument("--n", type=int, default=None, help="vertices for --shape circle")
        p.add_argument("--radius", type=float, default=None)
        p.add_argument("--d", type=int, default=None, help="ambient dimension")
        p.add_argument("--curve-file", default=None, help="JSON curve for --shape file")

    def add_common(p):
        p.add_argument("--m", type=int, default=None, help="metric order")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--config", default=None, help="JSON config merged under flags")
        p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("simulate", help="one Brownian trajectory on curve space")
    add_shape_flags(p)
    add_common(p)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--t-end", type=float, default=None, help="horizon (alternative to --steps)")
    p.add_argument("--record-every", type=int, default=None)
    p.add_argument("--edge-floor", type=float, default=None)
    p.add_argument("--svg-snapshots", action="store_true")
    p.add_argument("--extended", action="store_true", help="allow paper-scale runs")

    p = sub.add_parser("ensemble", help="independent runs with aggregate statistics")
    add_shape_flags(p)
    add_common(p)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--record-every", type=int, default=None)
    p.add_argument("--edge-floor", type=float, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--extended", action="store_true")

    p = sub.add_parser("check", help="run the numerical property suites")
    p.add_argument("--property", action="append", choices=sorted(checks.PROPERTIES))
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--config", default=None)

    p = sub.add_parser("triangle", help="normalized-triangle conformal geometry")
    add_common(p)
    p.add_argument("--grid", action="store_true", help="export the conformal factor grid")
    p.add_argument("--fit", action="store_true", help="fit the blow-up exponent")
    p.add_argument("--radial", action="store_true", help="classify the radial length")
    p.add_argument("--bm", action="store_true", help="simulate apex Brownian motion")
    p.add_argument("--grid-n", type=int, default=None)
    p.add_argument("--clamp", type=float, default=None)
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--fit-rmin", type=float, default=None)
    p.add_argument("--fit-rmax", type=float, default=None)
    p.add_argument("--fit-count", type=int, default=None)
    p.add_argument("--v0", default=None, help="apex start, e.g. '0.0,1.0'")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--record-every", type=int, default=None)
    p.add_argument("--edge-floor", type=float, default=None)

    p = sub.add_parser("geodesic", help="shoot one geodesic and report diagnostics")
    add_shape_flags(p)
    add_common(p)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("probe-volume", help="volume growth probe along geodesics")
    add_shape_flags(p)
    add_common(p)
    p.add_argument("--radii", default=None, help="comma list, e.g. '0.5,1,1.5,2'")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    return parser


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the JSON config file, if one was given."""
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    for key, value in data.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(f"config file {path}: unknown key {key!r}")
        if getattr(args, attr) is None:
            setattr(args, attr, value)
    return args


def _resolve_seed(args) -> int:
    env = os.environ.get("CURVEDIFF_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"CURVEDIFF_SEED must be an integer, got {env!r}") from exc
    seed = getattr(args, "seed", None)
    return 0 if seed is None else int(seed)


def _initial_curve(args) -> curves.DiscreteCurve:
    shape = args.shape or "circle"
    if shape == "circle":
        return curves.make_circle(
            args.n if args.n is not None else 12,
            args.radius if args.radius is not None else 1.0,
            args.d if args.d is not None else 2,
        )
    if shape == "square":
        return curves.make_square()
    if not args.curve_file:
        raise ConfigError("--shape file requires --curve-file")
    return curves.load_curve(args.curve_file)


def _steps_from(args, dt: float) -> int:
    if args.steps is not None and args.t_end is not None:
        raise ConfigError("give either --steps or --t-end, not both")
    if args.t_end is not None:
        return max(0, int(round(args.t_end / dt)))
    return args.steps if args.steps is not None else 1000


def _outdir(args, default_name: str) -> Path:
    out = Path(args.out) if args.out else Path("curvediff-out") / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gate_extended(args, n: int, steps: int) -> None:
    if getattr(args, "extended", False):
        return
    if n > EXTENDED_VERTEX_LIMIT or steps > EXTENDED_STEP_LIMIT:
        raise ConfigError(
            f"run of n={n}, steps={steps} exceeds the desk-scale limits "
            f"(n <= {EXTENDED_VERTEX_LIMIT}, steps <= {EXTENDED_STEP_LIMIT}); "
            "pass --extended to confirm"
        )


def _make_sim_config(args, initial, seed) -> brownian.SimulationConfig:
    dt = args.dt if args.dt is not None else 0.01
    steps = _steps_from(args, dt)
    _gate_extended(args, initial.n, steps)
    return brownian.SimulationConfig(
        initial=initial,
        m=args.m if args.m is not None else 2,
        dt=dt,
        n_steps=steps,
        seed=seed,
        record_every=args.record_every if args.record_every is not None else 10,
        edge_floor=args.edge_floor if args.edge_floor is not None else 1e-8,
    )


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    initial = _initial_curve(args)
    config = _make_sim_config(args, initial, seed)
    out = _outdir(args, "simulate")
    manifest = reporting.RunManifest(
        command=sys.argv[1:],
        config=reporting.config_dict(config),
        seed=seed,
        generator=brownian.GENERATOR_ID,
    )
    try:
        record = brownian.simulate(config)
        manifest.events.extend(record.events)
        traj_path = out / "trajectory.jsonl"
        stats_path = out / "stats.csv"
        reporting.write_trajectory_jsonl(record, traj_path)
        reporting.write_stats_csv(record, stats_path)
        manifest.add_output("trajectory", traj_path)
        manifest.add_output("stats", stats_path)
        if not args.no_figures:
            from . import figures

            fig_path = out / "trajectory.png"
            figures.save(figures.trajectory_figure(record), fig_path)
            manifest.add_output("figure", fig_path)
        if args.svg_snapshots:
            from . import figures

            svg_path = out / "snapshots.svg"
            figures.save(figures.snapshots_figure(record), svg_path)
            manifest.add_output("snapshots", svg_path)
        ok = record.completed
        manifest.finalize("ok" if ok else "numerical-failure")
        return 0 if ok else 3
    except CurveError as exc:
        manifest.events.append({"type": "fatal", "detail": str(exc)})
        manifest.finalize("numerical-failure")
        print(f"error: {exc}", file=sys.stderr)
        return 3
    finally:
        manifest.write(out / "manifest.json")


def cmd_ensemble(args) -> int:
    seed = _resolve_seed(args)
    initial = _initial_curve(args)
    config = _make_sim_config(args, initial, seed)
    n_runs = args.runs if args.runs is not None else 10
    workers = args.workers if args.workers is not None else 1
    out = _outdir(args, "ensemble")
    manifest = reporting.RunManifest(
        command=sys.argv[1:],
        config={**reporting.config_dict(config), "runs": n_runs},
        seed=seed,
        generator=brownian.GENERATOR_ID,
    )
    try:
        stats = brownian.ensemble(config, n_runs, workers=workers)
        manifest.events.extend(stats.events)
        csv_path = out / "ensemble.csv"
        reporting.write_ensemble_csv(stats, csv_path)
        manifest.add_output("ensemble", csv_path)
        if not args.no_figures:
            from . import figures

            fig_path = out / "ensemble.png"
            figures.save(figures.ensemble_figure(stats), fig_path)
            manifest.add_output("figure", fig_path)
        ok = stats.all_completed
        manifest.finalize("ok" if ok else "numerical-failure")
        return 0 if ok else 3
    except CurveError as exc:
        manifest.events.append({"type": "fatal", "detail": str(exc)})
        manifest.finalize("numerical-failure")
        print(f"error: {exc}", file=sys.stderr)
        return 3
    finally:
        manifest.write(out / "manifest.json")


def cmd_check(args) -> int:
    seed = _resolve_seed(args)
    names = args.property or None
    results = checks.run_checks(names, seed=seed, samples=args.samples, m=args.m)
    report = {
        "seed": seed,
        "samples": args.samples,
        "m": args.m,
        "all_passed": all(r.passed for r in results),
        "properties": [r.to_json_dict() for r in results],
    }
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        reporting.dump_json(report, args.out)
    else:
        print(json.dumps(reporting._to_jsonable(report), indent=2, sort_keys=True))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed properties: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _parse_v0(text) -> np.ndarray:
    if text is None:
        return np.array([0.0, 1.0])
    try:
        x, y = (float(part) for part in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"--v0 expects 'x,y', got {text!r}") from exc
    return np.array([x, y])


def cmd_triangle(args) -> int:
    if not (args.grid or args.fit or args.radial or args.bm):
        raise ConfigError("pick at least one of --grid, --fit, --radial, --bm")
    seed = _resolve_seed(args)
    m = args.m if args.m is not None else 1
    out = _outdir(args, "triangle")
    manifest = reporting.RunManifest(
        command=sys.argv[1:],
        config={"m": m, "seed": seed},
        seed=seed,
        generator=brownian.GENERATOR_ID,
    )
    status = "ok"
    code = 0
    try:
        if args.grid:
            grid_n = args.grid_n if args.grid_n is not None else 400
            clamp = args.clamp if args.clamp is not None else 1e6
            xs = np.linspace(-2.0, 2.0, grid_n)
            ys = np.linspace(-2.0, 2.0, grid_n)
            values = triangle.conformal_factor_grid(m, xs[:, None], ys[None, :])
            clipped = np.minimum(values, clamp)
            grid_path = out / f"grid_m{m}.csv"
            reporting.write_grid_csv(xs, ys, clipped, grid_path)
            meta_path = out / f"grid_m{m}_meta.json"
            reporting.dump_json(
                {
                    "m": m,
                    "nx": grid_n,
                    "ny": grid_n,
                    "xmin": -2.0,
                    "xmax": 2.0,
                    "ymin": -2.0,
                    "ymax": 2.0,
                    "clamp": clamp,
                },
                meta_path,
            )
            manifest.add_output("grid", grid_path)
            manifest.add_output("grid_meta", meta_path)
            if not args.no_figures:
                from . import figures

                fig_path = out / f"grid_m{m}.png"
                figures.save(
                    figures.conformal_grid_figure(xs, ys, values, clamp), fig_path
                )
                manifest.add_output("grid_figure", fig_path)
        if args.fit:
            rmin = args.fit_rmin if args.fit_rmin is not None else 1e-5
            rmax = args.fit_rmax if args.fit_rmax is not None else 1e-2
            count = args.fit_count if args.fit_count is not None else 20
            fit = triangle.estimate_blowup_exponent(
                m, np.geomspace(rmin, rmax, count)
            )
            fit_path = out / f"fit_m{m}.json"
            reporting.dump_json(
                {
                    "m": m,
                    "exponent": fit.exponent,
                    "constant": fit.constant,
                    "max_residual": fit.max_residual,
                    "anisotropy": fit.anisotropy,
                    "estimate_only": fit.is_estimate_only(),
                },
                fit_path,
            )
            manifest.add_output("fit", fit_path)
        if args.radial:
            r0 = args.r0 if args.r0 is not None else 0.5
            res = triangle.radial_length(m, r0)
            radial_path = out / f"radial_m{m}.json"
            reporting.dump_json(
                {
                    "m": m,
                    "r0": r0,
                    "classification": res.classification,
                    "value": res.value,
                    "partial_sum": res.partial_sum,
                    "levels": res.levels,
                },
                radial_path,
            )
            manifest.add_output("radial", radial_path)
        if args.bm:
            dt = args.dt if args.dt is not None else 0.01
            steps = _steps_from(args, dt)
            runs = args.runs if args.runs is not None else 1
            record_every = args.record_every if args.record_every is not None else 10
            edge_floor = args.edge_floor if args.edge_floor is not None else 1e-8
            v0 = _parse_v0(args.v0)
            if runs == 1:
                traj = triangle.simulate_triangle_bm(
                    m, v0, dt, steps, seed,
                    record_every=record_every, edge_floor=edge_floor,
                )
                manifest.events.extend(traj.events)
                bm_path = out / f"triangle_bm_m{m}.jsonl"
                reporting.write_triangle_jsonl(traj, bm_path)
                manifest.add_output("trajectory", bm_path)
                if not args.no_figures:
                    from . import figures

                    fig_path = out / f"triangle_bm_m{m}.png"
                    figures.save(figures.triangle_trajectory_figure(traj), fig_path)
                    manifest.add_output("bm_figure", fig_path)
                if not traj.completed:
                    status, code = "numerical-failure", 3
            else:
                report = triangle.triangle_bm_report(
                    m, v0, dt, steps, runs, seed, edge_floor=edge_floor
                )
                rep_path = out / f"triangle_bm_report_m{m}.json"
                reporting.dump_json(report.to_json_dict(), rep_path)
                manifest.add_output("bm_report", rep_path)
        manifest.finalize(status)
        return code
    except CurveError as exc:
        manifest.events.append({"type": "fatal", "detail": str(exc)})
        manifest.finalize("numerical-failure")
        print(f"error: {exc}", file=sys.stderr)
        return 3
    finally:
        manifest.write(out / "manifest.json")


def cmd_geodesic(args) -> int:
    seed = _resolve_seed(args)
    m = args.m if args.m is not None else 2
    initial = _initial_curve(args)
    t_end = args.t_end if args.t_end is not None else 1.0
    steps = args.steps if args.steps is not None else max(1, int(round(t_end / 1e-3)))
    out = _outdir(args, "geodesic")
    manifest = reporting.RunManifest(
        command=sys.argv[1:],
        config={"m": m, "t_end": t_end, "steps": steps, "seed": seed,
                "n": initial.n, "d": initial.d},
        seed=seed,
        generator=brownian.GENERATOR_ID,
    )
    try:
        rng = np.random.Generator(np.random.Philox(key=seed))
        h = calculus.unit_speed_velocity(
            initial, rng.standard_normal((initial.n, initial.d)), m
        )
        states = calculus.geodesic_shoot(initial, h, t_end, steps, m)
        lines = []
        for s in states:
            lines.append(
                '{"step": %d, "t": %s, "vertices": %s, "energy": %s}'
                % (
                    int(round(s.t / (t_end / steps))),
                    reporting.fmt(s.t),
                    reporting._vertices_json(s.position.vertices),
                    reporting.fmt(s.energy),
                )
            )
        geo_path = out / "geodesic.jsonl"
        geo_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        manifest.add_output("geodesic", geo_path)
        H = np.array([s.energy for s in states])
        e0 = states[0].position.edge_lengths()
        worst_ratio = max(
            float(np.abs(np.log(s.position.edge_lengths() / e0)).max())
            for s in states[1:]
        )
        summary = {
            "energy_rel_drift": float(np.abs(H / H[0] - 1.0).max()),
            "max_log_edge_ratio": worst_ratio,
            "edge_ratio_bound": t_end / 2.0 ** (m - 1),
        }
        sum_path = out / "geodesic_summary.json"
        reporting.dump_json(summary, sum_path)
        manifest.add_output("summary", sum_path)
        if not args.no_figures:
            from . import figures

            fig_path = out / "geodesic.png"
            figures.save(figures.geodesic_figure(states), fig_path)
            manifest.add_output("figure", fig_path)
        manifest.finalize("ok")
        return 0
    except CurveError as exc:
        manifest.events.append({"type": "fatal", "detail": str(exc)})
        manifest.finalize("numerical-failure")
        print(f"error: {exc}", file=sys.stderr)
        return 3
    finally:
        manifest.write(out / "manifest.json")


def cmd_probe_volume(args) -> int:
    seed = _resolve_seed(args)
    m = args.m if args.m is not None else 2
    initial = _initial_curve(args)
    if args.radii:
        radii = [float(part) for part in str(args.radii).split(",")]
    else:
        radii = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    samples = args.samples if args.samples is not None else 8
    workers = args.workers if args.workers is not None else 1
    out = _outdir(args, "probe-volume")
    manifest = reporting.RunManifest(
        command=sys.argv[1:],
        config={"m": m, "radii": radii, "samples": samples, "seed": seed,
                "n": initial.n, "d": initial.d},
        seed=seed,
        generator=brownian.GENERATOR_ID,
    )
    try:
        report = calculus.probe_volume_growth(
            initial, m, radii, samples, seed, workers=workers
        )
        rep_path = out / "growth_report.json"
        reporting.dump_json(report.to_json_dict(), rep_path)
        manifest.add_output("growth_report", rep_path)
        if not args.no_figures:
            from . import figures

            fig_path = out / "growth.png"
            figures.save(figures.growth_figure(report), fig_path)
            manifest.add_output("figure", fig_path)
        manifest.finalize("ok")
        return 0
    except CurveError as exc:
        manifest.events.append({"type": "fatal", "detail": str(exc)})
        manifest.finalize("numerical-failure")
        print(f"error: {exc}", file=sys.stderr)
        return 3
    finally:
        manifest.write(out / "manifest.json")


_HANDLERS = {
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "check": cmd_check,
    "triangle": cmd_triangle,
    "geodesic": cmd_geodesic,
    "probe-volume": cmd_probe_volume,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        return _HANDLERS[args.command](args)
    except (ConfigError, CurveError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
