"""Command-line driver: ``distmoments {run,exact,verify,gen-instance,pb-build}``.

Exit codes: 0 success, 1 a verification property failed, 2 bad configuration
or arguments, 3 any other package error (message printed verbatim).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .adversarial import PROFILES, make_random_euclidean, make_two_point
from .distortion import (
    DEFAULT_EXACT_CAP,
    DEFAULT_TAIL_GRID,
    DistortionReport,
    default_workers,
    estimate_moments,
    exact_moments,
)
from .errors import ConfigError, DistMomentsError
from .mechanisms import MechanismSpec
from .metric import load_instance, save_instance
from .pb import BUDGET_MODES, DISTANCES, build_instance, load_election, save_election, synth_election

SUMMARY_COLUMNS = ("mechanism", "s", "k", "moment", "stderr", "min", "q1", "median", "q3", "max")
DEFAULT_MECHANISMS = ("RD", "PRC_3", "PRC_5", "FRC_3", "FRC_5")


@dataclass
class ExperimentConfig:
    """Resolved experiment settings; ``instance`` holds exactly one source key."""

    instance: dict
    seed: int
    mechanisms: list = field(default_factory=lambda: list(DEFAULT_MECHANISMS))
    k: int = 2
    trials: int = 1000
    out: str = "out"
    tail_grid: list = field(default_factory=lambda: list(DEFAULT_TAIL_GRID))
    distances: list = field(default_factory=lambda: ["budget"])
    budget_mode: str = "raw"
    tie_break: str = "index"
    cap: int = DEFAULT_EXACT_CAP
    method: str = "auto"

    @property
    def specs(self) -> list[MechanismSpec]:
        return [MechanismSpec.parse(m, self.tie_break) for m in self.mechanisms]

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# config parsing

_INSTANCE_KINDS = ("path", "generator", "two_point", "pb")


def _int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    try:
        as_int = int(value)
    except ValueError:
        raise ConfigError(path, f"expected an integer, got {value!r}") from None
    if isinstance(value, float) and as_int != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and as_int < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {as_int}")
    return as_int


def _float_list(value, path):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(path, "expected a non-empty list of numbers")
    out = []
    for i, v in enumerate(value):
        try:
            x = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}[{i}]", f"not a number: {v!r}") from None
        if not math.isfinite(x) or x <= 0:
            raise ConfigError(f"{path}[{i}]", f"must be a positive finite number, got {v!r}")
        out.append(x)
    return out


def _check_instance(inst, path="instance") -> dict:
    if not isinstance(inst, dict):
        raise ConfigError(path, "expected an object")
    kinds = [k for k in _INSTANCE_KINDS if k in inst]
    if len(kinds) != 1:
        raise ConfigError(path, f"give exactly one of {', '.join(_INSTANCE_KINDS)}")
    kind = kinds[0]
    body = inst[kind]
    if kind == "path":
        if not isinstance(body, str) or not body:
            raise ConfigError(f"{path}.path", "expected a file path")
        return {"path": body}
    if not isinstance(body, dict):
        raise ConfigError(f"{path}.{kind}", "expected an object")
    p = f"{path}.{kind}"
    if kind == "generator":
        gen = {
            "n": _int(body.get("n", 100), f"{p}.n", 1),
            "m": _int(body.get("m", 10), f"{p}.m", 1),
            "dim": _int(body.get("dim", 2), f"{p}.dim", 1),
            "profile": body.get("profile", "uniform"),
            "seed": _int(body.get("seed", 0), f"{p}.seed", 0),
        }
        prof = gen["profile"]
        prof_kind = prof.get("kind", "uniform") if isinstance(prof, dict) else prof
        if prof_kind not in PROFILES:
            raise ConfigError(f"{p}.profile", f"unknown profile {prof_kind!r}; choose from {PROFILES}")
        return {"generator": gen}
    if kind == "two_point":
        n = _int(body.get("n"), f"{p}.n", 1)
        alpha = body.get("alpha")
        try:
            make_two_point(n, alpha, bool(body.get("b_first", False)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{p}.alpha", str(exc)) from None
        return {"two_point": {"n": n, "alpha": alpha, "b_first": bool(body.get("b_first", False))}}
    # pb: files or a synthetic election
    if "synthetic" in body:
        syn = body["synthetic"]
        if not isinstance(syn, dict):
            raise ConfigError(f"{p}.synthetic", "expected an object")
        return {
            "pb": {
                "synthetic": {
                    "n_voters": _int(syn.get("n_voters", 945), f"{p}.synthetic.n_voters", 1),
                    "n_projects": _int(syn.get("n_projects", 23), f"{p}.synthetic.n_projects", 1),
                    "budget": float(syn.get("budget", 600_000)),
                    "seed": _int(syn.get("seed", 0), f"{p}.synthetic.seed", 0),
                }
            }
        }
    for key in ("projects", "ballots"):
        if not isinstance(body.get(key), str):
            raise ConfigError(f"{p}.{key}", "expected a file path")
    out = {"projects": body["projects"], "ballots": body["ballots"]}
    for key in ("budget", "meta"):
        if body.get(key) is not None:
            out[key] = body[key]
    return {"pb": out}


def resolve_config(file_data: dict | None, overrides: dict) -> ExperimentConfig:
    """Merge config sources with precedence flag > file > default and validate."""
    data = dict(file_data or {})
    unknown = set(data) - {f for f in ExperimentConfig.__dataclass_fields__} - {"distance"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config field")
    if "distance" in data:
        data.setdefault("distances", data.pop("distance"))
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    if "instance" not in data:
        raise ConfigError("instance", "no instance source given (use --config or --instance)")
    if data.get("seed") is None:
        raise ConfigError("seed", "a master seed is required (use --seed or the config file)")
    cfg = ExperimentConfig(instance=_check_instance(data["instance"]), seed=_int(data["seed"], "seed", 0))
    if "mechanisms" in data:
        mechs = data["mechanisms"]
        if isinstance(mechs, str):
            mechs = [m for m in mechs.split(",") if m.strip()]
        if not isinstance(mechs, list) or not mechs:
            raise ConfigError("mechanisms", "expected a non-empty list of mechanism labels")
        cfg.mechanisms = []
        for i, m in enumerate(mechs):
            try:
                cfg.mechanisms.append(MechanismSpec.parse(str(m).strip()).label)
            except ValueError as exc:
                raise ConfigError(f"mechanisms[{i}]", str(exc)) from None
    if "k" in data:
        cfg.k = _int(data["k"], "k", 1)
    if "trials" in data:
        cfg.trials = _int(data["trials"], "trials", 1)
    if "out" in data:
        cfg.out = str(data["out"])
    if "tail_grid" in data:
        cfg.tail_grid = _float_list(data["tail_grid"], "tail_grid")
    if "distances" in data:
        dists = data["distances"]
        dists = [dists] if isinstance(dists, str) else dists
        if not isinstance(dists, list) or not dists:
            raise ConfigError("distances", "expected a distance name or a list of them")
        for i, d in enumerate(dists):
            if d not in DISTANCES:
                raise ConfigError(f"distances[{i}]", f"unknown distance {d!r}; choose from {DISTANCES}")
        cfg.distances = list(dict.fromkeys(dists))
    if "budget_mode" in data:
        if data["budget_mode"] not in BUDGET_MODES:
            raise ConfigError("budget_mode", f"choose from {BUDGET_MODES}")
        cfg.budget_mode = data["budget_mode"]
    if "tie_break" in data:
        if data["tie_break"] not in ("index", "random"):
            raise ConfigError("tie_break", "choose from ('index', 'random')")
        cfg.tie_break = data["tie_break"]
    if "cap" in data:
        cfg.cap = _int(data["cap"], "cap", 1)
    if "method" in data:
        if data["method"] not in ("auto", "tuples", "types"):
            raise ConfigError("method", "choose from ('auto', 'tuples', 'types')")
        cfg.method = data["method"]
    return cfg


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path}: top level must be an object")
    return data


# ---------------------------------------------------------------------------
# instance sources


def _election(body: dict):
    if "synthetic" in body:
        syn = body["synthetic"]
        return synth_election(syn["n_voters"], syn["n_projects"], syn["budget"], rng=syn["seed"])
    return load_election(body["projects"], body["ballots"], body.get("budget"), body.get("meta"))


def materialize(cfg: ExperimentConfig) -> list[tuple[str | None, object]]:
    """(subdirectory, MetricInstance) pairs; PB sources give one per distance."""
    src = cfg.instance
    if "path" in src:
        return [(None, load_instance(src["path"]))]
    if "generator" in src:
        g = src["generator"]
        return [(None, make_random_euclidean(g["n"], g["m"], g["dim"], g["profile"], rng=g["seed"]))]
    if "two_point" in src:
        t = src["two_point"]
        return [(None, make_two_point(t["n"], t["alpha"], t["b_first"]).instance)]
    election = _election(src["pb"])
    return [(d, build_instance(election, d, cfg.budget_mode).instance) for d in cfg.distances]


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_summary(reports: list[DistortionReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for rep in reports:
            box = rep.box_stats() if rep.ratios is not None else (None,) * 5
            for k in range(1, rep.max_moment + 1):
                w.writerow(
                    [rep.mechanism.label, rep.mechanism.s, k, _fmt(rep.moment(k)), _fmt(rep.stderr(k))]
                    + [_fmt(b) for b in box]
                )


def read_summary(path) -> list[dict]:
    """Parse a summary CSV back into typed rows (blank box cells become None)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            typed = {"mechanism": row["mechanism"], "s": int(row["s"]), "k": int(row["k"])}
            for col in SUMMARY_COLUMNS[3:]:
                typed[col] = float(row[col]) if row[col] != "" else None
            rows.append(typed)
    return rows


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def execute(cfg: ExperimentConfig, mode: str, workers: int = 1, log=None) -> list[Path]:
    """Run every mechanism on every instance and write the report files."""
    out_root = Path(cfg.out)
    written = []
    for sub, inst in materialize(cfg):
        out = out_root / sub if sub else out_root
        out.mkdir(parents=True, exist_ok=True)
        reports = []
        for spec in cfg.specs:
            if mode == "exact":
                rep = exact_moments(inst, spec, cfg.k, cap=cfg.cap, method=cfg.method,
                                    tail_grid=cfg.tail_grid, workers=workers)
            else:
                rep = estimate_moments(inst, spec, cfg.k, cfg.trials, cfg.seed,
                                       tail_grid=cfg.tail_grid, workers=workers)
            reports.append(rep)
            path = out / f"report_{spec.label}.json"
            _write_text(path, rep.to_json() + "\n")
            written.append(path)
            if rep.ratios is not None:
                path = out / f"trials_{spec.label}.csv"
                rep.write_trials_csv(path)
                written.append(path)
            if log:
                moments = ", ".join(f"{m:.6g}" for m in rep.moments)
                log(f"{sub + ': ' if sub else ''}{spec.label} moments k=1..{cfg.k}: {moments}")
        path = out / "summary.csv"
        write_summary(reports, path)
        written.append(path)
    # workers and the output path are left out so the tree depends only on the experiment
    resolved = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    _write_text(out_root / "config.json", json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    return written


# ---------------------------------------------------------------------------
# subcommands


def _instance_from_flag(value: str) -> dict:
    if value.startswith("{"):
        try:
            return json.loads(value)
        except json.JSONDecodeError as exc:
            raise ConfigError("instance", f"invalid inline JSON ({exc.msg})") from None
    return {"path": value}


def _config_from_args(args) -> ExperimentConfig:
    file_data = load_config_file(args.config) if args.config else None
    overrides = {
        "seed": args.seed,
        "trials": getattr(args, "trials", None),
        "k": args.k,
        "out": args.out,
        "tail_grid": args.tail_grid,
        "distances": args.distance,
        "mechanisms": args.mechanisms,
        "budget_mode": args.budget_mode,
        "tie_break": args.tie_break,
        "cap": getattr(args, "cap", None),
        "method": getattr(args, "method", None),
        "instance": _instance_from_flag(args.instance) if args.instance else None,
    }
    return resolve_config(file_data, overrides)


def _workers(args) -> int:
    w = default_workers() if args.workers is None else args.workers
    if w < 1:
        raise ConfigError("workers", f"must be >= 1, got {w}")
    return w


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    execute(cfg, "mc", _workers(args), log=_stderr)
    return 0


def cmd_exact(args) -> int:
    cfg = _config_from_args(args)
    execute(cfg, "exact", _workers(args), log=_stderr)
    return 0


def cmd_verify(args) -> int:
    from .verify import SUITES

    names = list(SUITES) if args.suite == "all" else [args.suite]
    seed = 0 if args.seed is None else args.seed
    report = {"seed": seed, "suites": {}}
    ok = True
    for name in names:
        kw = {}
        if name == "bounds":
            kw["workers"] = _workers(args)
            if args.instances is not None:
                kw["n_instances"] = args.instances
            if args.trials is not None:
                kw["trials"] = args.trials
            if args.k is not None:
                kw["k_max"] = args.k
        elif name == "lemmas":
            if args.instances is not None:
                kw["n_dists"] = args.instances
            if args.k is not None:
                kw["k_max"] = args.k
        elif name == "pb" and args.trials is not None:
            kw["runs"] = args.trials
        results = SUITES[name](seed, **kw)
        report["suites"][name] = [r.to_dict() for r in results]
        for r in results:
            ok &= r.passed
            _stderr(f"{'PASS' if r.passed else 'FAIL'} {name}/{r.name} "
                    f"checked={r.checked} worst_slack={r.to_dict()['worst_slack']}")
    report["passed"] = ok
    text = json.dumps(report, indent=2, sort_keys=True, default=str) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


def cmd_gen_instance(args) -> int:
    if args.two_point:
        n, alpha = args.two_point
        try:
            inst = make_two_point(int(n), alpha, args.b_first).instance
        except ValueError as exc:
            raise ConfigError("two_point", str(exc)) from None
    else:
        if min(args.n, args.m, args.dim) < 1:
            raise ConfigError("n", "n, m and dim must be >= 1")
        seed = 0 if args.seed is None else args.seed
        inst = make_random_euclidean(args.n, args.m, args.dim, args.profile, rng=seed)
    if args.out is None:
        raise ConfigError("out", "an output file is required")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_instance(inst, args.out)
    _stderr(f"wrote {inst.n_voters} voters x {inst.n_alternatives} alternatives to {args.out}")
    return 0


def cmd_pb_build(args) -> int:
    if args.synthetic:
        n_voters, n_projects, budget = args.synthetic
        seed = 0 if args.seed is None else args.seed
        election = synth_election(int(n_voters), int(n_projects), float(budget), rng=seed)
    elif args.projects and args.ballots:
        election = load_election(args.projects, args.ballots, args.budget, args.meta)
    else:
        raise ConfigError("pb", "give --projects and --ballots, or --synthetic N P B")
    out = Path(args.out or "pb_out")
    out.mkdir(parents=True, exist_ok=True)
    if args.synthetic:
        save_election(election, out)
    summaries = {}
    for dist in args.distance or ["budget", "jaccard"]:
        built = build_instance(election, dist, args.budget_mode or "raw")
        save_instance(built.instance, out / f"instance_{dist}.json")
        summaries[dist] = built.summary()
        _stderr(f"{dist}: {built.instance.n_voters} voters, {built.instance.n_alternatives} distinct ballots")
    _write_text(out / "build_summary.json", json.dumps(summaries, indent=2, sort_keys=True, default=str) + "\n")
    return 0


def _stderr(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# argument parsing


def _add_experiment_flags(p, with_trials=True, with_exact=False):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--instance", help="instance JSON file, or an inline instance-source object")
    p.add_argument("--seed", type=int, help="master seed (u64)")
    if with_trials:
        p.add_argument("--trials", type=int, help="Monte Carlo trials per mechanism")
    p.add_argument("--k", type=int, help="largest moment K")
    p.add_argument("--mechanisms", help="comma-separated labels, e.g. RD,PRC_3,FRC_5")
    p.add_argument("--out", help="output directory")
    p.add_argument("--tail-grid", dest="tail_grid", help="comma-separated c values")
    p.add_argument("--distance", action="append", choices=DISTANCES,
                   help="PB distance (repeatable)")
    p.add_argument("--budget-mode", dest="budget_mode", choices=BUDGET_MODES)
    p.add_argument("--tie-break", dest="tie_break", choices=("index", "random"))
    p.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    if with_exact:
        p.add_argument("--cap", type=int, help="largest enumeration allowed")
        p.add_argument("--method", choices=("auto", "tuples", "types"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distmoments",
        description="Moments of distortion for sampling-based Copeland mechanisms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Monte Carlo estimation with per-trial output")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("exact", help="exact moments by enumerating all samples")
    _add_experiment_flags(p, with_trials=False, with_exact=True)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("verify", help="run property suites")
    p.add_argument("suite", choices=("lemmas", "bounds", "lowerbounds", "pb", "all"))
    p.add_argument("--seed", type=int)
    p.add_argument("--instances", type=int, help="instances per profile or distributions")
    p.add_argument("--trials", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-instance", help="write a random or two-point instance")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--profile", choices=PROFILES, default="uniform")
    p.add_argument("--two-point", dest="two_point", nargs=2, metavar=("N", "ALPHA"))
    p.add_argument("--b-first", dest="b_first", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_instance)

    p = sub.add_parser("pb-build", help="build metric instances from a PB election")
    p.add_argument("--projects")
    p.add_argument("--ballots")
    p.add_argument("--budget", type=float)
    p.add_argument("--meta")
    p.add_argument("--synthetic", nargs=3, metavar=("VOTERS", "PROJECTS", "BUDGET"))
    p.add_argument("--distance", action="append", choices=DISTANCES)
    p.add_argument("--budget-mode", dest="budget_mode", choices=BUDGET_MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pb_build)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        _stderr(f"config error: {exc}")
        return 2
    except DistMomentsError as exc:
        _stderr(f"error: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
