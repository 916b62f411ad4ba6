"""``countsplit`` command-line interface.

Subcommands: ``split``, ``de``, ``simulate`` and ``report``. Exit codes are
0 on success, 2 for configuration errors, 3 for unreadable or malformed
files and 4 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__, pipelines, simulation
from .count_matrix import SizeFactors, load_matrix, save_matrix
from .errors import ConfigError, InvalidConfigError, MatrixIOError, MatrixParseError, NumericalError
from .pipelines import SCHEMA_VERSION, MethodConfig
from .splitting import count_split

log = logging.getLogger("countsplit")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

METHOD_ALIASES = {
    "countsplit": "count_split",
    "doubledip": "double_dip",
    "testdoubledip": "test_double_dip",
    "cellsplit": "cell_split",
    "genesplit": "gene_split",
    "jackstraw": "jackstraw_efficient",
    "jackstrawfull": "jackstraw_full",
    "jackstrawefficient": "jackstraw_efficient",
    "pseudotimede": "pseudotime_de",
    "clustermeannaive": "cluster_mean_naive",
    "clustermeancountsplit": "cluster_mean_countsplit",
    "compare": "compare",
}
ESTIMATOR_ALIASES = {"pc1": "pc1_trajectory", "pc1trajectory": "pc1_trajectory", "kmeans": "kmeans2", "kmeans2": "kmeans2"}
SUMMARY_COLUMNS = ("schema_version", "scenario", "method", "epsilon", "group", "metric", "value")
QQ_COLUMNS = ("schema_version", "scenario", "method", "epsilon", "group", "theoretical", "empirical")


@dataclass
class RunManifest:
    command: str
    config_echo: dict
    seed: int
    artifact_paths: list = field(default_factory=list)
    wall_time_seconds: float = 0.0
    schema_version: int = SCHEMA_VERSION
    version: str = __version__

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _canon(name: str, aliases: dict, valid, what: str) -> str:
    key = name.lower().replace("-", "").replace("_", "")
    if key in aliases:
        return aliases[key]
    if name in valid:
        return name
    raise InvalidConfigError(f"unknown {what} {name!r}; valid: {', '.join(sorted(set(valid) | set(aliases)))}")


# --------------------------------------------------------------------------
# option handling: built-in defaults < --config file < explicit flags
# --------------------------------------------------------------------------

DEFAULTS = {
    "split": {"epsilon": 0.5, "seed": 0, "format": None, "out_prefix": "countsplit"},
    "de": {"method": "countsplit", "estimator": "pc1", "family": "poisson", "gamma": "estimated",
           "epsilon": 0.5, "fraction": None, "B": 100, "s": 10, "seed": 0, "plus_one": False,
           "pseudocount": 1.0, "allow_singletons": False, "format": None, "size_factors": None,
           "out_prefix": "countsplit"},
    "simulate": {"preset": None, "replicates": None, "resampling_replicates": None, "seed": 0,
                 "threads": None, "B": 100, "s": 10, "epsilons": None, "out_prefix": "countsplit"},
    "report": {"inputs": None, "out": "report.csv"},
}


def _effective(args: argparse.Namespace, command: str) -> dict:
    opts = dict(DEFAULTS[command])
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise MatrixIOError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise InvalidConfigError("config file must hold a JSON object")
    for key, val in file_cfg.items():
        k = key.replace("-", "_")
        if k in opts or k in ("input", "scenario", "method_config", "groups", "gamma_policy"):
            opts[k] = val
        else:
            raise InvalidConfigError(f"unknown config key {key!r}")
    for key, val in vars(args).items():
        if key in ("func", "config", "command", "verbose") or val is None:
            continue
        opts[key] = val
    return opts


# --------------------------------------------------------------------------
# split
# --------------------------------------------------------------------------


def _ext(fmt: str) -> str:
    return ".mtx" if fmt == "matrix_market" else ".csv"


def cmd_split(args) -> int:
    t0 = time.perf_counter()
    o = _effective(args, "split")
    if not o.get("input"):
        raise InvalidConfigError("--input is required")
    X = load_matrix(o["input"], o["format"])
    fmt = o["format"] or ("matrix_market" if str(o["input"]).lower().endswith(".mtx") else "csv_dense")
    pair = count_split(X, float(o["epsilon"]), int(o["seed"]))
    prefix = o["out_prefix"]
    paths = [prefix + ".train" + _ext(fmt), prefix + ".test" + _ext(fmt)]
    save_matrix(pair.train, paths[0], fmt)
    save_matrix(pair.test, paths[1], fmt)
    _finish("split", o, paths, prefix, t0)
    return EXIT_OK


def _finish(command, opts, paths, prefix, t0) -> None:
    manifest_path = prefix + ".manifest.json"
    echo = {k: v for k, v in sorted(opts.items())}
    RunManifest(command, echo, int(opts.get("seed", 0) or 0), paths + [manifest_path],
                round(time.perf_counter() - t0, 6)).write(manifest_path)
    for p in paths:
        print(p)


# --------------------------------------------------------------------------
# de
# --------------------------------------------------------------------------


def _load_size_factors(path: str, n: int) -> SizeFactors:
    try:
        vals = np.loadtxt(path, delimiter=",", ndmin=1, dtype=np.float64)
    except OSError as exc:
        raise MatrixIOError(f"cannot read size factors {path}: {exc}") from exc
    except ValueError as exc:
        raise MatrixParseError(f"cannot parse size factors {path}: {exc}") from exc
    vals = vals.ravel()
    if vals.size != n:
        raise InvalidConfigError(f"{vals.size} size factors for {n} cells")
    return SizeFactors(vals)


def _method_config(o: dict, method: str) -> MethodConfig:
    est = _canon(o["estimator"], ESTIMATOR_ALIASES, pipelines.ESTIMATORS, "estimator")
    return MethodConfig(method=method, estimator=est, family=o["family"].replace("-", "_"),
                        epsilon=float(o["epsilon"]), fraction=None if o["fraction"] is None else float(o["fraction"]),
                        B=int(o["B"]), s=int(o["s"]), seed=int(o["seed"]), plus_one=bool(o["plus_one"]),
                        pseudocount=float(o["pseudocount"]))


def cmd_de(args) -> int:
    t0 = time.perf_counter()
    o = _effective(args, "de")
    method = _canon(o["method"], METHOD_ALIASES, pipelines.METHODS + ("compare",), "method")
    o["method"] = method
    if o["gamma"] not in pipelines.GAMMA_POLICIES:
        raise InvalidConfigError(f"unknown gamma policy {o['gamma']!r}; valid: {', '.join(pipelines.GAMMA_POLICIES)}")
    if o["gamma"] == "known" and not o["size_factors"]:
        raise InvalidConfigError("--gamma known needs --size-factors")
    cfg = _method_config(o, "count_split" if method == "compare" else method)
    if method != "compare":
        cfg.validate()
    if not o.get("input"):
        raise InvalidConfigError("--input is required")
    X = load_matrix(o["input"], o["format"])
    gamma = _load_size_factors(o["size_factors"], X.n_cells) if o["size_factors"] else None
    prefix = o["out_prefix"]
    paths = []
    if method.startswith("cluster_mean"):
        variant = "naive" if method == "cluster_mean_naive" else "count_split"
        res = pipelines.cluster_mean_test(X, cfg, variant, allow_singletons=bool(o["allow_singletons"]))
        path = prefix + ".csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "statistic", "p_value", "sigma", "size_1", "size_2", "df"])
            w.writerow([method, repr(res.statistic), repr(res.p_value), repr(res.sigma), *res.sizes, res.df])
        paths.append(path)
    elif method == "compare":
        reports = pipelines.compare(X, cfg, o["gamma"], gamma)
        for name, rep in reports.items():
            rep.to_csv(prefix + f".{name}.csv")
            rep.to_json(prefix + f".{name}.json")
            paths += [prefix + f".{name}.csv", prefix + f".{name}.json"]
        merged = prefix + ".compare.csv"
        with open(merged, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            names = list(reports)
            w.writerow(["gene_index", "gene_name"] + [f"p_{n}" for n in names])
            for j in range(X.n_genes):
                gname = "" if X.gene_names is None else X.gene_names[j]
                w.writerow([j, gname] + [pipelines._fmt(reports[n].results[j].p_value) for n in names])
        paths.append(merged)
    else:
        report = pipelines.run_method(X, cfg, o["gamma"], gamma)
        report.to_csv(prefix + ".csv")
        report.to_json(prefix + ".json")
        paths += [prefix + ".csv", prefix + ".json"]
    _finish("de", o, paths, prefix, t0)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _write_rows(path: str, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="raise")
        w.writeheader()
        for row in rows:
            w.writerow({c: _cell(row.get(c, "")) for c in columns})


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _calibration_rows(res: simulation.CalibrationResult, scenario, method, eps):
    keys = dict(schema_version=SCHEMA_VERSION, scenario=scenario, method=method, epsilon=eps)
    summary = res.to_rows(**keys)
    qq = []
    for group, s in [("all", res.overall)] + list(res.groups.items()):
        for t, e in s.qq_points:
            qq.append(dict(keys, group=group, theoretical=t, empirical=e))
    return summary, qq


def _sim_calibration(o, preset, threads):
    reps = int(o["replicates"] if o["replicates"] is not None else 2000)
    rs_reps = int(o["resampling_replicates"] if o["resampling_replicates"] is not None else reps)
    summary, qq = [], []
    if preset == "fig2a":
        scen = simulation.scenario_null_two_levels(seed=int(o["seed"]))
        for k, m in enumerate(simulation.FIG2A_METHODS):
            cfg = MethodConfig(method=m, B=int(o["B"]), s=int(o["s"]), seed=pipelines.subseed(int(o["seed"]), 100 + k))
            n = rs_reps if m in pipelines.RESAMPLING_METHODS else reps
            res = simulation.run_calibration(scen, cfg, n, simulation.NULL_TWO_LEVEL_GROUPS, "known", threads)
            s, q = _calibration_rows(res, "fig2a", m, 0.5)
            summary += s
            qq += q
    elif preset == "fig2b":
        base = simulation.scenario_overdispersed(seed=int(o["seed"]))
        cfg = MethodConfig(seed=pipelines.subseed(int(o["seed"]), 200))
        sweep = simulation.run_overdispersion_sweep(simulation.SWEEP_B_VALUES, base, cfg, reps, "known", threads)
        for b, res in sweep.items():
            s, q = _calibration_rows(res, f"fig2b_lambda_over_b_{5.0 / b:g}", "count_split", 0.5)
            summary += s
            qq += q
    return summary, qq


def _sim_power(o, preset, threads):
    reps = int(o["replicates"] if o["replicates"] is not None else 200)
    eps_list = [float(e) for e in (o["epsilons"] or ([0.2, 0.5, 0.8]))]
    summary, qq = [], []
    for kind in ("trajectory", "clusters"):
        scen, nonnull = simulation.scenario_simulation_study(kind, seed=pipelines.subseed(int(o["seed"]), 300))
        pc = simulation.run_power_coverage(scen, eps_list, reps, simulation.beta1_grid(), nonnull,
                                           method_seed=pipelines.subseed(int(o["seed"]), 301), threads=threads)
        groups = {"low_intercept": float(np.log(3.0)), "high_intercept": float(np.log(25.0))}
        name = f"{preset}_{kind}"
        for eps in eps_list + [None]:
            epslab = "all" if eps is None else eps
            for gname, b0 in groups.items():
                for nul, nlabel in ((True, "null"), (False, "nonnull")):
                    summary.append(dict(schema_version=SCHEMA_VERSION, scenario=name, method="count_split",
                                        epsilon=epslab, group=f"{gname}_{nlabel}", metric="coverage",
                                        value=pc.coverage(epsilon=eps, null=nul, beta0=b0)))
                    summary.append(dict(schema_version=SCHEMA_VERSION, scenario=name, method="count_split",
                                        epsilon=epslab, group=f"{gname}_{nlabel}", metric="rejection_rate",
                                        value=pc.rejection_rate(epsilon=eps, null=nul, beta0=b0)))
            if eps is None:
                continue
            summary.append(dict(schema_version=SCHEMA_VERSION, scenario=name, method="count_split", epsilon=eps,
                                group="all", metric="latent_quality", value=pc.mean_quality(eps)))
            cal = pc.null_calibration(eps)
            for row in cal.to_rows(schema_version=SCHEMA_VERSION, scenario=name, method="count_split",
                                   epsilon=eps, group="null_genes"):
                summary.append(row)
            for t, e in cal.qq_points:
                qq.append(dict(schema_version=SCHEMA_VERSION, scenario=name, method="count_split", epsilon=eps,
                               group="null_genes", theoretical=t, empirical=e))
            edges = np.quantile(np.abs(pc.target[~pc.is_null & pc.converged]), np.linspace(0, 1, 7))
            edges[-1] *= 1 + 1e-9
            for gname, b0 in groups.items():
                rates, _ = pc.power_curve(edges, eps, beta0=b0)
                for k in range(len(rates)):
                    summary.append(dict(schema_version=SCHEMA_VERSION, scenario=name, method="count_split",
                                        epsilon=eps, group=f"{gname}_target_{edges[k]:.4g}_{edges[k + 1]:.4g}",
                                        metric="power", value=rates[k]))
    return summary, qq


def _sim_cluster(o, threads):
    reps = int(o["replicates"] if o["replicates"] is not None else 1000)
    scen = simulation.scenario_cluster_test(seed=int(o["seed"]))
    cfg = MethodConfig(method="cluster_mean_countsplit", seed=pipelines.subseed(int(o["seed"]), 400))
    res = simulation.run_cluster_calibration(scen, reps, cfg, threads=threads)
    summary, qq = [], []
    for variant, s in res.summaries.items():
        keys = dict(schema_version=SCHEMA_VERSION, scenario="appendixC", method=f"cluster_mean_{variant}", epsilon=0.5)
        summary += s.to_rows(**keys, group="all")
        for t, e in s.qq_points:
            qq.append(dict(keys, group="all", theoretical=t, empirical=e))
    return summary, qq


def _sim_free_form(o, threads):
    if "scenario" not in o:
        raise InvalidConfigError("simulate needs --preset or a config file with a 'scenario' entry")
    scen = simulation.ScenarioConfig.from_dict(o["scenario"])
    mcfg = o.get("method_config") or {}
    try:
        method = MethodConfig(**mcfg)
    except TypeError as exc:
        raise InvalidConfigError(f"bad method_config: {exc}") from exc
    reps = int(o["replicates"] if o["replicates"] is not None else 100)
    groups = o.get("groups")
    res = simulation.run_calibration(scen, method, reps, groups, o.get("gamma_policy", "known"), threads)
    return _calibration_rows(res, "custom", method.method, method.epsilon)


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    o = _effective(args, "simulate")
    if o["replicates"] is not None and int(o["replicates"]) < 1:
        raise InvalidConfigError("--replicates must be at least 1")
    if o["resampling_replicates"] is not None and int(o["resampling_replicates"]) < 1:
        raise InvalidConfigError("--resampling-replicates must be at least 1")
    threads = simulation.resolve_threads(o["threads"])
    o["threads"] = threads
    preset = o["preset"]
    if preset is not None and preset not in simulation.PRESETS:
        raise InvalidConfigError(f"unknown preset {preset!r}; valid: {', '.join(simulation.PRESETS)}")
    if preset in ("fig2a", "fig2b"):
        summary, qq = _sim_calibration(o, preset, threads)
    elif preset in ("fig3", "table1"):
        summary, qq = _sim_power(o, preset, threads)
    elif preset == "appendixC":
        summary, qq = _sim_cluster(o, threads)
    else:
        summary, qq = _sim_free_form(o, threads)
    prefix = o["out_prefix"]
    paths = [prefix + ".summary.csv", prefix + ".qq.csv"]
    _write_rows(paths[0], SUMMARY_COLUMNS, summary)
    _write_rows(paths[1], QQ_COLUMNS, qq)
    _finish("simulate", o, paths, prefix, t0)
    return EXIT_OK


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


def cmd_report(args) -> int:
    o = _effective(args, "report")
    inputs = o["inputs"] or []
    if not inputs:
        raise InvalidConfigError("report needs at least one input summary")
    rows = []
    versions = set()
    for path in inputs:
        try:
            with open(path, encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or ())
                if missing:
                    raise InvalidConfigError(f"{path} is not a summary CSV (missing {sorted(missing)})")
                for row in reader:
                    versions.add(row["schema_version"])
                    rows.append(dict(row, source=os.path.basename(path)))
        except OSError as exc:
            raise MatrixIOError(f"cannot read {path}: {exc}") from exc
    if len(versions) > 1:
        raise InvalidConfigError(f"conflicting schema versions: {sorted(versions)}")
    rows.sort(key=lambda r: (r["method"], r["scenario"], r["epsilon"], r["group"]))
    _write_rows(o["out"], SUMMARY_COLUMNS + ("source",), rows)
    print(o["out"])
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="countsplit", description="Count splitting for inference after latent variable estimation.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("split", help="split a count matrix into train and test matrices")
    sp.add_argument("--input")
    sp.add_argument("--format", choices=("csv_dense", "matrix_market"))
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-prefix", dest="out_prefix")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_split)

    de = sub.add_parser("de", help="per-gene differential expression against an estimated latent variable")
    de.add_argument("--input")
    de.add_argument("--format", choices=("csv_dense", "matrix_market"))
    de.add_argument("--method", help="countsplit, doubledip, testdoubledip, cellsplit, genesplit, jackstraw_full, "
                    "jackstraw_efficient, pseudotime_de, cluster_mean_naive, cluster_mean_countsplit, compare")
    de.add_argument("--estimator", help="pc1 or kmeans")
    de.add_argument("--family", choices=("poisson", "negative_binomial"))
    de.add_argument("--gamma", help="size factors: estimated, known (needs --size-factors) or unit")
    de.add_argument("--size-factors", dest="size_factors")
    de.add_argument("--epsilon", type=float)
    de.add_argument("--fraction", type=float)
    de.add_argument("--B", type=int)
    de.add_argument("--s", type=int)
    de.add_argument("--seed", type=int)
    de.add_argument("--pseudocount", type=float)
    de.add_argument("--plus-one", dest="plus_one", action="store_true", default=None)
    de.add_argument("--allow-singletons", dest="allow_singletons", action="store_true", default=None,
                    help="cluster tests: test a singleton cluster under the pooled variance instead of failing")
    de.add_argument("--out-prefix", dest="out_prefix")
    de.add_argument("--config")
    de.set_defaults(func=cmd_de)

    sm = sub.add_parser("simulate", help="run a preset or configured simulation")
    sm.add_argument("--preset")
    sm.add_argument("--replicates", type=int)
    sm.add_argument("--resampling-replicates", dest="resampling_replicates", type=int)
    sm.add_argument("--epsilons", type=float, nargs="+")
    sm.add_argument("--B", type=int)
    sm.add_argument("--s", type=int)
    sm.add_argument("--seed", type=int)
    sm.add_argument("--threads", type=int)
    sm.add_argument("--out-prefix", dest="out_prefix")
    sm.add_argument("--config")
    sm.set_defaults(func=cmd_simulate)

    rp = sub.add_parser("report", help="merge summary CSVs")
    rp.add_argument("--inputs", nargs="*")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MatrixIOError, MatrixParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
