"""Command-line driver: ``wulfflab <subcommand> [--config FILE] [flags]``.

Each run writes ``record.json`` plus CSV tables, SVG plots and OFF meshes to
the output directory.  Exit codes: 0 success, 1 domain or configuration
error, 2 numerical non-convergence.
"""

import argparse
import csv
import datetime
import glob
import io
import json
import logging
import os
import sys

import numpy as np

from . import __version__, graphpde, svgplot
from .anisotropy import tension_from_config, wulff_shape
from .config import (CONFIG_VERSION, SUBCOMMANDS, ConfigError, config_hash, parse_config,
                     parse_masses)
from .energy import surface_energy
from .errors import NonConvergenceError, WulffLabError
from .optimizer import MinimizeOptions, minimize_at_mass
from .potential import potential_from_config
from .shapes import align, load_shape, read_off, shape_to_dict, star_from_mesh, write_off
from .stability import mass_sweep, modulus_estimate, modulus_mass_exponent

log = logging.getLogger("wulfflab")

EXIT_OK, EXIT_DOMAIN, EXIT_NONCONVERGENCE = 0, 1, 2


class Writer:
    """Single funnel for every file a run produces."""

    def __init__(self, directory):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self.outputs = []

    def path(self, name):
        return os.path.join(self.directory, name)

    def text(self, name, content):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(content)
        self.outputs.append(name)

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
        self.text(name, buf.getvalue())

    def off(self, name, shape):
        write_off(shape, self.path(name))
        self.outputs.append(name)

    def shape(self, name, shape):
        self.text(name, json.dumps(shape_to_dict(shape)) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


# -- argument parsing ----------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="wulfflab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="strict JSON run configuration")
        s.add_argument("--out", dest="output_dir", help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("-v", "--verbose", action="store_true")
        if name in ("wulff", "minimize", "sweep", "modulus"):
            s.add_argument("--tension", help="tension kind, e.g. euclidean, ellipsoidal, smoothed_lp")
            s.add_argument("--tension-params", help="JSON object of tension parameters")
            s.add_argument("--potential", help="potential kind, e.g. zero, radial-quadratic")
            s.add_argument("--potential-params", help="JSON object of potential parameters")
            s.add_argument("--dim", type=int)
            s.add_argument("--resolution", help="N (plane) or NTxNP (space)")
        if name in ("wulff", "minimize"):
            s.add_argument("--mass", type=float)
        if name in ("minimize", "sweep", "modulus"):
            s.add_argument("--starts", help="comma-separated starts, e.g. wulff,ball,random_3")
            s.add_argument("--residual-tol", type=float)
            s.add_argument("--max-iters", type=int)
        if name in ("sweep", "modulus"):
            s.add_argument("--masses", help="comma list or a:b:k (k geometric points)")
            s.add_argument("--epsilon", type=float)
        if name == "sweep":
            s.add_argument("--defect-tol", type=float)
        if name == "modulus":
            s.add_argument("--budget", type=int)
        if name == "graphpde":
            s.add_argument("--case")
            s.add_argument("--h", type=float)
            s.add_argument("--levels", type=int)
            s.add_argument("--mu", type=float)
        if name == "align":
            s.add_argument("--shape-a")
            s.add_argument("--shape-b")
            s.add_argument("--group")
        if name == "report":
            s.add_argument("run_dir", nargs="?")
    return p


def _json_arg(text, flag):
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{flag}: {exc.msg}"]) from exc
    if not isinstance(value, dict):
        raise ConfigError([f"{flag}: expected a JSON object"])
    return value


def config_from_args(args):
    """Merge a config file (if any) with command-line flags, then validate."""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{args.config}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from exc
        if isinstance(data, dict) and data.get("subcommand", args.subcommand) != args.subcommand:
            raise ConfigError([f"{args.config}: subcommand {data.get('subcommand')!r} does not match "
                               f"{args.subcommand!r}"])
        source = args.config
    else:
        data, text, source = {"version": CONFIG_VERSION, "subcommand": args.subcommand}, None, "flags"
    if not isinstance(data, dict):
        raise ConfigError([f"{source}: top level must be a JSON object"])
    v = vars(args)
    if v.get("tension"):
        data["tension"] = {"kind": v["tension"], "params": {}}
    if v.get("tension_params"):
        data.setdefault("tension", {"kind": "euclidean"})["params"] = _json_arg(v["tension_params"], "--tension-params")
    if v.get("potential"):
        data["potential"] = {"kind": v["potential"], "params": {}}
    if v.get("potential_params"):
        data.setdefault("potential", {"kind": "zero"})["params"] = _json_arg(v["potential_params"], "--potential-params")
    if v.get("resolution"):
        parts = v["resolution"].lower().split("x")
        try:
            data["resolution"] = int(parts[0]) if len(parts) == 1 else [int(x) for x in parts]
        except ValueError as exc:
            raise ConfigError([f"--resolution: cannot parse {v['resolution']!r}"]) from exc
    if v.get("masses"):
        m = v["masses"]
        data["masses"] = m if ":" in m else [float(x) for x in m.split(",")]
    if v.get("starts"):
        data["starts"] = [s.strip() for s in v["starts"].split(",") if s.strip()]
    for key in ("residual_tol", "max_iters", "defect_tol"):
        if v.get(key) is not None:
            data.setdefault("tolerances", {})[key] = v[key]
    for key in ("output_dir", "seed", "dim", "mass", "epsilon", "budget", "case", "h", "levels", "mu",
                "shape_a", "shape_b", "group", "run_dir"):
        if v.get(key) is not None:
            data[key] = v[key]
    return parse_config(data, text=text, name=source)


# -- helpers ---------------------------------------------------------------------------


def _models(cfg):
    f = tension_from_config(cfg["tension"])
    g = potential_from_config(cfg["potential"])
    dim = f.dimension
    if cfg.get("dim", dim) != dim:
        # tensions default to 3-d; rebuild with the requested dimension when possible
        params = dict(cfg["tension"]["params"])
        if cfg["tension"]["kind"] in ("euclidean", "smoothed_lp"):
            params["dim"] = cfg["dim"]
            f = tension_from_config({"kind": cfg["tension"]["kind"], "params": params})
    return f, g


def _default_mass(dim):
    return 4 * np.pi / 3 if dim == 3 else np.pi


def _resolution(cfg, dim):
    r = cfg.get("resolution")
    if r is None:
        return None
    if dim == 3 and isinstance(r, int):
        raise ConfigError([f"resolution {r} needs the form [n_theta, n_phi] in space"])
    if dim == 2 and not isinstance(r, int):
        raise ConfigError([f"resolution {r} needs a single ray count in the plane"])
    return tuple(r) if dim == 3 else r


def _options_kw(cfg, dim):
    tol = cfg["tolerances"]
    kw = {"dim": dim, "starts": list(cfg["starts"]), "seed": cfg["seed"],
          "residual_tol": tol["residual_tol"], "max_iters": tol["max_iters"], "threads": None}
    res = _resolution(cfg, dim)
    if res is not None:
        kw["resolution"] = res
    return kw


def _shape_outputs(w, shape, stem, title):
    w.shape(f"{stem}.json", shape)
    if shape.dim == 3:
        w.off(f"{stem}.off", shape)
        # meridian cross-section through the x-z plane
        P = shape.vertices - shape.center
        sel = np.abs(P[:, 1]) < 1e-9 * (1 + np.abs(P).max())
        Q = P[sel][:, [0, 2]]
        Q = Q[np.argsort(np.arctan2(Q[:, 1], Q[:, 0]))]
        w.text(f"{stem}.svg", svgplot.outline({"x-z section": Q}, title))
    else:
        V = shape.clip_vertices() if hasattr(shape, "clip_vertices") else shape.vertices
        w.csv(f"{stem}.csv", ["x", "y"], V.tolist())
        w.text(f"{stem}.svg", svgplot.outline({stem: V}, title))


# -- subcommands -----------------------------------------------------------------------


def cmd_wulff(cfg, w):
    f, _ = _models(cfg)
    n = f.dimension
    mass = cfg.get("mass", _default_mass(n))
    W = wulff_shape(f, mass=mass, resolution=_resolution(cfg, n))
    F = surface_energy(W.body, f)
    vol = W.body.volume()
    # F(s K) = s^(n-1) n |K| = n |sK| / s
    predicted = n * vol / W.scale
    rows = [["surface_energy", F], ["volume", vol], ["scale", W.scale], ["n_volume_over_scale", predicted],
            ["identity_ratio", F / predicted]]
    w.csv("report.csv", ["quantity", "value"], rows)
    _shape_outputs(w, W.body, "wulff", f"Wulff shape ({f.name})")
    return EXIT_OK, {"surface_energy": F, "volume": vol, "scale": W.scale, "identity_ratio": F / predicted}


def cmd_minimize(cfg, w):
    f, g = _models(cfg)
    n = f.dimension
    mass = cfg.get("mass", _default_mass(n))
    opts = MinimizeOptions(mass=mass, **_options_kw(cfg, n))
    results = minimize_at_mass(f, g, opts)
    rows = []
    series = {}
    for r in results:
        rows.append([r.start_label, r.report.total, r.report.relative_residual, r.defect, r.mass_error,
                     r.converged, r.iterations, r.stop_reason])
        w.csv(f"history_{r.start_label}.csv", ["iter", "energy", "residual", "defect"],
              [[it, e, res, d] for it, e, res, d in r.history])
        series[r.start_label] = ([h[0] for h in r.history], [h[1] for h in r.history])
    w.csv("results.csv", ["start", "energy", "relative_residual", "defect", "mass_error", "converged",
                          "iterations", "stop_reason"], rows)
    w.text("energy.svg", svgplot.line_chart(series, "energy by iteration", "iteration", "energy"))
    _shape_outputs(w, results[0].shape, "best", f"best minimizer ({results[0].start_label})")
    payload = {"mass": mass, "results": [r.to_dict() for r in results]}
    code = EXIT_OK if any(r.converged for r in results) else EXIT_NONCONVERGENCE
    return code, payload


def cmd_sweep(cfg, w):
    f, g = _models(cfg)
    n = f.dimension
    if "masses" not in cfg:
        raise ConfigError(["sweep needs masses"])
    masses = parse_masses(cfg["masses"])
    tol = cfg["tolerances"]
    res = mass_sweep(f, g, masses, epsilon=cfg.get("epsilon"), defect_tol=tol["defect_tol"],
                     agreement_tol=tol["agreement_tol"], options=_options_kw(cfg, n),
                     budget=min(cfg["budget"], 50), seed=cfg["seed"])
    keys = ["mass", "energy", "defect", "residual", "spread", "alignment_to_previous", "converged_starts"]
    w.csv("sweep.csv", keys, [[row.get(k) for k in keys] for row in res.rows])
    ok = [row for row in res.rows if row["defect"] is not None]
    w.text("defect.svg", svgplot.line_chart({"defect": ([r["mass"] for r in ok], [r["defect"] for r in ok])},
                                            "convexity defect", "mass", "defect", logx=True))
    if res.ratio_series:
        w.csv("ratio_series.csv", ["mass", "ratio"], [[r["mass"], r["ratio"]] for r in res.ratio_series])
    code = EXIT_NONCONVERGENCE if len(res.flagged) == len(masses) else EXIT_OK
    return code, res.to_dict()


def cmd_modulus(cfg, w):
    f, g = _models(cfg)
    n = f.dimension
    masses = parse_masses(cfg["masses"]) if "masses" in cfg else [_default_mass(n)]
    eps, budget = cfg["epsilon"], cfg["budget"]
    opts = _options_kw(cfg, n)
    if len(masses) >= 4:
        fit = modulus_mass_exponent(f, g, eps, masses, budget=budget, options=opts, seed=cfg["seed"])
        estimates = fit["estimates"]
    else:
        fit = None
        estimates = [modulus_estimate(f, g, m, eps, budget, options=opts, seed=cfg["seed"]).to_dict()
                     for m in masses]
    keys = ["mass", "epsilon", "value", "competitor_count", "checked_count", "best_family", "best_asymmetry",
            "minimizer_energy"]
    w.csv("modulus.csv", keys, [[e[k] for k in keys] for e in estimates])
    w.text("modulus.svg", svgplot.line_chart({"w_m": ([e["mass"] for e in estimates], [e["value"] for e in estimates])},
                                             "modulus estimate", "mass", "gap", logx=True, logy=True))
    return EXIT_OK, {"estimates": estimates, "fit": fit}


def cmd_graphpde(cfg, w):
    case, h = cfg["case"], float(cfg["h"])
    payload = {"case": case}
    if case in ("manufactured-paraboloid", "manufactured-ruled"):
        make = graphpde.manufactured_paraboloid if case == "manufactured-paraboloid" else graphpde.manufactured_ruled
        spacings = [h / 2 ** k for k in range(cfg["levels"])]
        study = graphpde.convergence_study(make, spacings)
        w.csv("convergence.csv", ["h", "error", "order", "newton_steps"],
              [[r["h"], r["error"], r.get("order"), r["newton_steps"]] for r in study["rows"]])
        payload["convergence"] = {"order": study["order"],
                                  "rows": [{k: v for k, v in r.items() if k != "seconds"} for r in study["rows"]]}
        prob, _ = make(h)
    else:
        prob = graphpde.cap_problem(h, mu=cfg.get("mu", 1.5))
    u = graphpde.solve_graph_equation(prob)
    wf = graphpde.gauss_curvature_field(u)
    delta = 10 * h * h
    verdict = graphpde.min_principle_diagnostic(wf, delta)
    audit = graphpde.uniform_convexity_audit(u, 0.05)
    w.csv("u.csv", ["x", "y", "u"], u.to_rows().tolist())
    w.csv("w.csv", ["x", "y", "w"], wf.to_rows().tolist())
    w.text("u.svg", svgplot.heatmap(u.values, u.mask, "u"))
    w.text("w.svg", svgplot.heatmap(wf.values, wf.mask, "det D^2 u"))
    payload.update({"newton_steps": u.meta["newton_steps"], "residual": u.meta["residual"],
                    "diagnostic": verdict.to_dict(),
                    "convexity_audit": {k: v for k, v in audit.items() if k != "eq_delta_sites"}})
    return EXIT_OK, payload


def _load_any(path):
    if not str(path).lower().endswith(".off"):
        return load_shape(path)
    # resample meshes radially; occupancy of a general mesh is far too slow to align
    return star_from_mesh(read_off(path))


def cmd_align(cfg, w):
    if "shape_a" not in cfg or "shape_b" not in cfg:
        raise ConfigError(["align needs shape_a and shape_b"])
    A, B = _load_any(cfg["shape_a"]), _load_any(cfg["shape_b"])
    # near-perfect matches need no further refinement
    amap, residual = align(A, B, group=cfg["group"], stop_below=1e-4 * A.volume())
    rel = residual / A.volume()
    w.csv("align.csv", ["quantity", "value"], [["residual", residual], ["relative_residual", rel],
                                                ["reflection", amap.is_reflection]])
    return EXIT_OK, {"map": amap.to_dict(), "residual": residual, "relative_residual": rel}


def _summary_line(rec):
    res = rec.get("results") or {}
    sub = rec.get("subcommand")
    if sub == "wulff":
        return f"identity ratio {res.get('identity_ratio'):.6f}"
    if sub == "minimize":
        best = (res.get("results") or [{}])[0]
        return f"best energy {best.get('energy')}, converged {best.get('converged')}"
    if sub == "sweep":
        return f"threshold {res.get('detected_threshold')}"
    if sub == "modulus":
        fit = res.get("fit")
        return f"slope {fit['slope']:.4f}" if fit else f"{len(res.get('estimates', []))} estimates"
    if sub == "graphpde":
        conv = res.get("convergence")
        verdict = res.get("diagnostic", {}).get("kind")
        return f"order {conv['order']:.3f}, {verdict}" if conv else f"{verdict}"
    if sub == "align":
        return f"relative residual {res.get('relative_residual'):.4g}"
    return ""


def cmd_report(cfg, w):
    run_dir = cfg.get("run_dir") or cfg["output_dir"]
    paths = sorted(set(glob.glob(os.path.join(run_dir, "record.json")) +
                       glob.glob(os.path.join(run_dir, "*", "record.json"))))
    records, warnings = [], []
    for p in paths:
        try:
            with open(p) as fh:
                rec = json.load(fh)
            if rec.get("subcommand") == "report":
                continue
            records.append((p, rec))
        except (OSError, json.JSONDecodeError) as exc:
            warnings.append(f"skipped {p}: {exc}")
    if not records:
        raise ConfigError([f"{run_dir}: no run records found"])
    lines = ["# wulfflab run summary", "", "| run | subcommand | status | result |", "|---|---|---|---|"]
    slopes = []
    for p, rec in records:
        name = os.path.basename(os.path.dirname(p)) or "."
        status = "ok" if rec.get("exit_code") == 0 else f"exit {rec.get('exit_code')}"
        try:
            line = _summary_line(rec)
        except (TypeError, KeyError, ValueError):
            line = "unreadable results"
            warnings.append(f"results of {p} could not be summarized")
        lines.append(f"| {name} | {rec.get('subcommand')} | {status} | {line} |")
        fit = (rec.get("results") or {}).get("fit") if rec.get("subcommand") == "modulus" else None
        if fit:
            slopes.append((name, fit["slope"], fit["expected"], fit["r2"]))
    if slopes:
        lines += ["", "## Mass exponents", "", "| run | slope | expected | r2 |", "|---|---|---|---|"]
        lines += [f"| {n} | {s:.4f} | {e:.4f} | {r:.4f} |" for n, s, e, r in slopes]
        w.text("slopes.svg", svgplot.line_chart(
            {"measured": (list(range(len(slopes))), [s[1] for s in slopes]),
             "expected": (list(range(len(slopes))), [s[2] for s in slopes])}, "mass exponents", "run", "slope"))
    if warnings:
        lines += ["", "## Warnings", ""] + [f"- {m}" for m in warnings]
    w.text("summary.md", "\n".join(lines) + "\n")
    return EXIT_OK, {"runs": len(records), "warnings": warnings}


COMMANDS = {"wulff": cmd_wulff, "minimize": cmd_minimize, "sweep": cmd_sweep, "modulus": cmd_modulus,
            "graphpde": cmd_graphpde, "align": cmd_align, "report": cmd_report}


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def run(argv=None):
    """Parse ``argv``, run the pipeline and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_DOMAIN if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(line, file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    out = cfg["run_dir"] if args.subcommand == "report" and cfg.get("run_dir") and not args.output_dir else cfg["output_dir"]
    writer = Writer(out)
    started = _now()
    warnings = []
    try:
        with warnings_captured(warnings):
            code, payload = COMMANDS[args.subcommand](cfg, writer)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(line, file=sys.stderr)
        return EXIT_DOMAIN
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        code, payload = EXIT_NONCONVERGENCE, {"error": str(exc)}
    except (WulffLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code, payload = EXIT_DOMAIN, {"error": str(exc)}
    record = {"version": CONFIG_VERSION, "tool_version": __version__, "subcommand": args.subcommand,
              "config": cfg, "input_hash": config_hash(cfg), "started": started, "finished": _now(),
              "exit_code": code, "results": _jsonable(payload), "warnings": warnings,
              "outputs": sorted(writer.outputs)}
    writer.text("record.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    return code


class warnings_captured:
    """Collect Python warnings raised during a run into ``sink``."""

    def __init__(self, sink):
        self.sink = sink

    def __enter__(self):
        import warnings

        self._ctx = warnings.catch_warnings(record=True)
        self._list = self._ctx.__enter__()
        warnings.simplefilter("always")
        return self

    def __exit__(self, *exc):
        self.sink.extend(str(w.message) for w in self._list)
        return self._ctx.__exit__(*exc)


def main(argv=None):
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
