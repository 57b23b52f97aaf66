"""Command-line harness: config-driven runs of either solver, run comparison and
plot-data export.

Exit codes: 0 success, 2 configuration (or input) error, 3 run finished
without convergence (artifacts are still written).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import inspect
import json
import logging
import re
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .core import PopulationDistribution, StateGrid, joint_w1
from .envs import ENVIRONMENTS, make_env
from .exact import FixedPointMMFE, sample_populations
from .learner import RHPGMMFE
from .trace import RunTrace, fmt, read_csv, write_csv

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_CAP = 0, 2, 3

EXACT_DEFAULTS = {
    "eps": 1e-8,
    "max_outer": 200,
    "bellman_tol": 1e-10,
    "soften_tau": 0.0,
    "contraction_samples": 10,
}
RHPG_DEFAULTS = {k: v for k, v in RHPGMMFE().get_params().items()
                 if k not in ("random_state", "n_jobs")}
TOP_LEVEL = {"environment", "solver", "seed", "exact", "rhpg", "out"}
_POSITIVE = {"eps", "bellman_tol", "inner_tol", "outer_tol", "max_outer", "max_inner",
             "inner_patience", "outer_patience", "trace_every", "step_scale"}


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def bundled_configs() -> dict:
    """Names and paths of the configs shipped with the package."""
    root = resources.files("mmfe") / "configs"
    return {p.name[:-5]: p for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".yaml")}


def load_config(source) -> dict:
    """Parse a bundled config name or a YAML file path into a raw mapping."""
    bundled = bundled_configs()
    if str(source) in bundled:
        text = bundled[str(source)].read_text(encoding="utf-8")
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError("config", f"no bundled config or file named {str(source)!r}")
        text = path.read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"YAML parse error: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")
    return raw


def _check_section(section: dict, defaults: dict, prefix: str) -> dict:
    if section is None:
        section = {}
    if not isinstance(section, dict):
        raise ConfigError(prefix, "must be a mapping")
    unknown = sorted(set(section) - set(defaults))
    if unknown:
        raise ConfigError(f"{prefix}.{unknown[0]}", "unknown key")
    out = {**defaults, **section}
    for key, value in out.items():
        if key in _POSITIVE and (isinstance(value, bool) or not isinstance(value, (int, float))
                                 or not value > 0):
            raise ConfigError(f"{prefix}.{key}", f"must be a positive number, got {value!r}")
    return out


def validate_config(raw: dict, seed=None) -> dict:
    """Fill defaults and check every key; returns the effective config.

    The environment is instantiated once so invalid parameters are reported
    here rather than mid-run.
    """
    raw = copy.deepcopy(raw)
    unknown = sorted(set(raw) - TOP_LEVEL)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    env = raw.get("environment")
    if not isinstance(env, dict) or "name" not in env:
        raise ConfigError("environment.name", "missing")
    bad = sorted(set(env) - {"name", "params"})
    if bad:
        raise ConfigError(f"environment.{bad[0]}", "unknown key")
    if env["name"] not in ENVIRONMENTS:
        raise ConfigError("environment.name",
                          f"unknown environment {env['name']!r}; registered: {sorted(ENVIRONMENTS)}")
    params = env.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("environment.params", "must be a mapping")
    accepted = inspect.signature(ENVIRONMENTS[env["name"]][0]).parameters
    if not any(p.kind is p.VAR_KEYWORD for p in accepted.values()):
        for key in params:
            if key not in accepted:
                raise ConfigError(f"environment.params.{key}", "unknown parameter")
    try:
        make_env(env["name"], params)
    except TypeError as exc:
        match = re.search(r"keyword argument '(\w+)'", str(exc))
        key = f"environment.params.{match.group(1)}" if match else "environment.params"
        raise ConfigError(key, "unknown parameter" if match else str(exc)) from None
    except ValueError as exc:
        raise ConfigError("environment.params", str(exc)) from None

    solver = raw.get("solver")
    if solver not in ("exact", "rhpg"):
        raise ConfigError("solver", f"must be 'exact' or 'rhpg', got {solver!r}")
    if seed is None:
        seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"must be a non-negative integer, got {seed!r}")
    other = "rhpg" if solver == "exact" else "exact"
    if raw.get(other) is not None:
        raise ConfigError(other, f"section does not apply to solver {solver!r}")
    defaults = EXACT_DEFAULTS if solver == "exact" else RHPG_DEFAULTS
    section = _check_section(raw.get(solver), defaults, solver)
    cfg = {"environment": {"name": env["name"], "params": params},
           "solver": solver, "seed": seed, solver: section}
    if "out" in raw:
        cfg["out"] = raw["out"]
    if solver == "rhpg":
        a = section["a_exponent"]
        if not isinstance(a, (int, float)) or not 0.5 < a < 1.0:
            raise ConfigError("rhpg.a_exponent", f"must lie in (1/2, 1), got {a!r}")
        if not isinstance(section["damping"], (int, float)) or not 0 <= section["damping"] < 1:
            raise ConfigError("rhpg.damping", f"must lie in [0, 1), got {section['damping']!r}")
        try:
            RHPGMMFE(**section, random_state=seed).to_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError("rhpg", str(exc)) from None
    return cfg


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k != "out"}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _policy_rows(model, policies):
    actions = sorted({a for s in model.action_sets for a in s.actions})
    rows = []
    for j, table in enumerate(policies):
        acts = model.action_sets[j].actions
        for i, x in enumerate(model.grids[j].points):
            probs = {a: table[i, acts.index(a)] for a in acts}
            rows.append([j, model.type_names[j], x] + [probs.get(a) for a in actions])
    return ["type", "type_name", "state"] + [f"p_action_{a}" for a in actions], rows


def _population_rows(model, populations):
    rows = [[j, model.type_names[j], x, m]
            for j, z in enumerate(populations)
            for x, m in zip(z.grid.points, z.mass)]
    return ["type", "type_name", "state", "mass"], rows


def residual_series(trace: RunTrace) -> list:
    """``(iteration, residual)`` pairs, one per outer iteration."""
    it_col = "outer_iter" if "outer_iter" in trace.columns else "m"
    seen, out = set(), []
    for it, r in zip(trace.column(it_col), trace.column("residual")):
        if r is None or it in seen:
            continue
        seen.add(it)
        out.append((it, r))
    return out


def _mean_series(trace: RunTrace) -> list:
    it_col = "outer_iter" if "outer_iter" in trace.columns else "m"
    names = [c[len("mean_"):] for c in trace.columns if c.startswith("mean_")]
    idx = {c: trace.columns.index(c) for c in trace.columns}
    seen, out = set(), []
    for row in trace.rows:
        it = row[idx[it_col]]
        if row[idx["residual"]] is None or it in seen:
            continue
        seen.add(it)
        out.extend((it, n, row[idx[f"mean_{n}"]]) for n in names)
    return out


def run_config(cfg: dict, out_dir, threads=None) -> int:
    """Execute a validated config and write all artifacts to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = cfg["environment"]
    model = make_env(env["name"], env["params"])
    solver, seed = cfg["solver"], cfg["seed"]
    digest = config_hash(cfg)
    start = time.perf_counter()
    report = {"solver": solver, "environment": env["name"], "seed": seed,
              "config_hash": digest, "version": __version__}
    if solver == "exact":
        opts = cfg["exact"]
        est = FixedPointMMFE(opts["eps"], opts["max_outer"], opts["bellman_tol"],
                             opts["soften_tau"], threads).fit(model)
        profile = est.profile_
        samples = sample_populations(model, opts["contraction_samples"], seed)
        report["contraction"] = est.contraction_report(samples).to_dict()
    else:
        est = RHPGMMFE(**cfg["rhpg"], random_state=seed, n_jobs=threads).fit(model)
        profile = est.profile_
        report["inner_capped"] = profile.inner_capped
        report["thetas"] = [p.theta.tolist() for p in profile.thetas]
    wall = time.perf_counter() - start

    trace = profile.trace
    trace.metadata = {"config_hash": digest, "seed": seed, "version": __version__,
                      "solver": solver, "environment": env["name"]}
    trace.to_csv(out / "trace.csv")
    write_csv(out / "policy.csv", *_policy_rows(model, profile.policies))
    write_csv(out / "populations.csv", *_population_rows(model, profile.populations))
    report.update(
        status=profile.status,
        residual=profile.residual,
        iterations=profile.iterations,
        residuals=[r for _, r in residual_series(trace)],
        means=dict(zip(model.type_names, profile.means())),
        wall_time_s=wall,
        threads=threads,
        config=cfg,
    )
    (out / "report.json").write_text(json.dumps(report, indent=2, default=float) + "\n",
                                     encoding="utf-8")
    return EXIT_OK if profile.converged else EXIT_CAP


def _run_dir(path) -> Path:
    path = Path(path)
    return path.parent if path.is_file() else path


def _load_populations(run_dir: Path) -> tuple:
    _, cols, rows = read_csv(run_dir / "populations.csv")
    by_type = {}
    for row in rows:
        rec = dict(zip(cols, row))
        by_type.setdefault(int(rec["type"]), []).append((float(rec["state"]), float(rec["mass"])))
    out = []
    for j in sorted(by_type):
        states, mass = zip(*by_type[j])
        out.append(PopulationDistribution.from_unnormalized(mass, StateGrid(len(states) - 1)))
    return tuple(out)


def _load_policies(run_dir: Path):
    _, cols, rows = read_csv(run_dir / "policy.csv")
    pcols = [c for c in cols if c.startswith("p_action_")]
    keys = [(int(r[0]), float(r[2])) for r in rows]
    table = np.array([[float(r[cols.index(c)]) if r[cols.index(c)] else 0.0 for c in pcols]
                      for r in rows])
    return keys, pcols, table


def compare_runs(a, b) -> dict:
    """Distances between the final outputs of two runs on the same game."""
    da, db = _run_dir(a), _run_dir(b)
    za, zb = _load_populations(da), _load_populations(db)
    if [z.grid for z in za] != [z.grid for z in zb]:
        raise ValueError("grid mismatch between runs")
    ka, ca, pa = _load_policies(da)
    kb, cb, pb = _load_policies(db)
    if ka != kb or ca != cb:
        raise ValueError("grid mismatch between runs")
    ra = dict(residual_series(RunTrace.from_csv(da / "trace.csv")))
    rb = dict(residual_series(RunTrace.from_csv(db / "trace.csv")))
    table = [[it, ra.get(it), rb.get(it)] for it in sorted(set(ra) | set(rb))]
    return {
        "population_joint_w1": joint_w1(za, zb),
        "policy_sup_norm": float(np.abs(pa - pb).max()),
        "residuals": {"columns": ["iteration", "residual_a", "residual_b"], "rows": table},
    }


PLOT_KINDS = ("policy", "residual", "mean_state")


def plot_rows(run, kind: str) -> list:
    """Tidy ``(x, series, value)`` rows for one plot kind."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    run_dir = _run_dir(run)
    if kind == "policy":
        # state vs probability of the first (reference) action, per type
        _, cols, rows = read_csv(run_dir / "policy.csv")
        pcols = [c for c in cols if c.startswith("p_action_")]
        out = []
        for row in rows:
            rec = dict(zip(cols, row))
            first = next(rec[c] for c in pcols if rec[c] != "")
            out.append((float(rec["state"]), rec["type_name"], float(first)))
        return out
    trace = RunTrace.from_csv(run_dir / "trace.csv")
    if kind == "residual":
        return [(it, "residual", r) for it, r in residual_series(trace)]
    return _mean_series(trace)


def _cmd_run(args) -> int:
    try:
        cfg = validate_config(load_config(args.config), seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.get("out") or f"runs/{Path(str(args.config)).stem}"
    code = run_config(cfg, out, threads=args.threads)
    report = json.loads((Path(out) / "report.json").read_text(encoding="utf-8"))
    print(f"{report['status']}: {report['iterations']} outer iterations, "
          f"residual {fmt(report['residual'])}, artifacts in {out}")
    return code


def _cmd_compare(args) -> int:
    try:
        result = compare_runs(args.a, args.b)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = json.dumps(result, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def _cmd_plotdata(args) -> int:
    try:
        rows = plot_rows(args.run, args.kind)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    output = args.output or str(_run_dir(args.run) / f"plot_{args.kind}.csv")
    write_csv(output, ["x", "series", "value"], rows)
    print(output)
    return EXIT_OK


def _cmd_envs(args) -> int:
    for name in sorted(ENVIRONMENTS):
        print(f"{name}: {ENVIRONMENTS[name][1]}")
    print("bundled configs: " + ", ".join(bundled_configs()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a solver from a config")
    run.add_argument("--config", required=True, help="bundled config name or YAML path")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--threads", type=int, default=None,
                     help="worker threads; 1 forces the sequential path")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="compare two run directories")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    cmp_.add_argument("-o", "--output", help="also write the JSON report here")
    cmp_.set_defaults(func=_cmd_compare)

    plot = sub.add_parser("plotdata", help="export tidy (x, series, value) CSV")
    plot.add_argument("run", help="run directory or its trace.csv")
    plot.add_argument("--kind", required=True, help="policy, residual or mean_state")
    plot.add_argument("-o", "--output")
    plot.set_defaults(func=_cmd_plotdata)

    envs = sub.add_parser("envs", help="environment registry")
    envs.add_argument("action", choices=["list"])
    envs.set_defaults(func=_cmd_envs)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
