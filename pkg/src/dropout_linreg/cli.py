"""Command-line runner: ``dropout-linreg <command> --config PATH [options]``.

Exit codes: 0 all checks pass, 1 a verification failed (or a step size
violates the stability gate), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import FORMATS, SUITES, ConfigError, parse_config
from .errors import BudgetExceeded, DropoutLinregError, StepSizeViolation, TheoremGateWarning
from .suites import COMMAND_SUITES, Context, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

# Row labels of the aggregated bound table, keyed by BoundReport name.
TABLE_ROWS = {
    "mean_convergence": "mean-convergence",
    "limit_formula": "limit-formula",
    "small_alpha_gap_vs_cov_beta_tilde": "small-αp",
    "small_alpha_gap_vs_diag_sandwich": "small-αp",
    "suboptimality": "sub-optimality",
    "ruppert_polyak": "RP",
    "simplified_convergence": "simplified",
    "simplified_convergence_mc": "simplified",
    "singular_floor": "singular-floor",
    "s_lin_operator_norm": "s-lin-norm",
    "fixed_point_distance": "fixed-point",
    "gauss_markov_defect": "gauss-markov",
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n")


def _parse_suites(text: str | None):
    if text is None:
        return None
    names = [s.strip() for s in text.split(",") if s.strip()]
    for i, s in enumerate(names):
        if s not in SUITES:
            raise ConfigError(f"--suites[{i}]", f"unknown suite {s!r}; known: {', '.join(SUITES)}")
    return names


def _load(args):
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError("--config", f"file not found: {path}")
    text = path.read_bytes()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    if args.seed_override is not None:
        raw["master_seed"] = args.seed_override
    if args.format is not None:
        raw["format"] = args.format
    if args.parallel is not None:
        raw["parallel"] = args.parallel
    cfg = parse_config(raw, path.parent, path)
    out = Path(args.out) if args.out else cfg.output_dir
    return cfg, out, hashlib.sha256(text).hexdigest()


def _manifest(command, args, cfg, file_hash, out: Path, files) -> dict:
    return {
        "command": command,
        "config_path": str(Path(args.config)),
        "config_file_sha256": file_hash,
        "effective_config_sha256": cfg.digest,
        "effective_config": cfg.raw,
        "master_seed": cfg.master_seed,
        "seed_override": args.seed_override,
        "scheme_seeds": {s.scheme: s.seed for s in cfg.schemes},
        "parallel": cfg.parallel,
        "format": cfg.format,
        "versions": {"package": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "outputs": {f: _sha256(out / f) for f in sorted(files)},
    }


def _write_report_csv(sections, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["suite", "kind", "name", "passed", "theoretical", "observed", "margin", "tolerance"])
        for sec in sections:
            for c in sec["checks"]:
                w.writerow([sec["suite"], "check", c["name"], c["passed"], "", c.get("value", ""), "",
                            c.get("tolerance", "")])
            for b in sec["bounds"]:
                w.writerow([sec["suite"], "bound", b["name"], b["satisfied"], b["theoretical"], b["observed"],
                            b["margin"], b["tolerance"]])


def run_command(command: str, args) -> int:
    cfg, out, file_hash = _load(args)
    wanted = _parse_suites(args.suites)
    suites = [s for s in COMMAND_SUITES[command] if s in (wanted if wanted is not None else cfg.suites)]
    if wanted is not None:
        extra = [s for s in wanted if s not in COMMAND_SUITES[command]]
        if extra:
            raise ConfigError("--suites", f"{extra} do not belong to the {command!r} command")
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out)
    sections, files = [], []
    for name in suites:
        sec = run_suite(name, ctx)
        files.extend(sec.pop("files", []))
        sections.append(sec)
    passed = all(s["passed"] for s in sections)
    report = {"command": command, "passed": passed, "master_seed": cfg.master_seed, "sections": sections}
    stem = f"report_{command.replace('-', '_')}"
    _dump(report, out / f"{stem}.json")
    files.append(f"{stem}.json")
    if cfg.format in ("csv", "both"):
        _write_report_csv(sections, out / f"{stem}.csv")
        files.append(f"{stem}.csv")
    if (out / "fixed_point.csv").exists() and "fixed_point" in suites:
        files.append("fixed_point.csv")
    _dump(_manifest(command, args, cfg, file_hash, out, files), out / f"manifest_{stem[7:]}.json")
    for sec in sections:
        status = "PASS" if sec["passed"] else "FAIL"
        print(f"[{status}] {sec['suite']}")
        for c in sec["checks"]:
            if not c["passed"]:
                print(f"    check failed: {c['name']} {c.get('value', '')}")
        for b in sec["bounds"]:
            if b["satisfied"] is False:
                print(f"    bound failed: {b['name']} observed={b['observed']} theoretical={b['theoretical']}")
    print(f"report: {out / (stem + '.json')}")
    return EXIT_OK if passed else EXIT_FAIL


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.6g}"


def run_report(args) -> int:
    cfg, out, file_hash = _load(args)
    paths = sorted(out.glob("report_*.json")) if out.is_dir() else []
    if not paths:
        print(f"error: no report_*.json files in {out}", file=sys.stderr)
        return EXIT_CONFIG
    rows = []
    for path in paths:
        doc = json.loads(path.read_text())
        for sec in doc.get("sections", []):
            for b in sec.get("bounds", []):
                rows.append({"row": TABLE_ROWS.get(b["name"], b["name"]), "name": b["name"], "suite": sec["suite"],
                             "k": b.get("details", {}).get("k"), "theoretical": b["theoretical"],
                             "observed": b["observed"], "margin": b["margin"], "satisfied": b["satisfied"],
                             "source": path.name})
    passed = all(r["satisfied"] is not False for r in rows)
    _dump({"passed": passed, "rows": rows}, out / "bounds_summary.json")
    files = ["bounds_summary.json"]

    head = f"{'theorem':<18} {'bound':<36} {'k':>5} {'theoretical':>12} {'observed':>12} {'margin':>12}  ok"
    lines = [head, "-" * len(head)]
    for r in rows:
        ok = {True: "yes", False: "NO", None: "n/a"}[r["satisfied"]]
        k = "" if r["k"] is None else str(r["k"])
        lines.append(f"{r['row']:<18} {r['name']:<36} {k:>5} {_fmt(r['theoretical']):>12} "
                     f"{_fmt(r['observed']):>12} {_fmt(r['margin']):>12}  {ok}")
    table = "\n".join(lines) + "\n"
    (out / "bounds_table.txt").write_text(table)
    files.append("bounds_table.txt")
    if cfg.format in ("csv", "both"):
        with open(out / "bounds_table.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["row"])
            w.writeheader()
            w.writerows(rows)
        files.append("bounds_table.csv")
    _dump(_manifest("report", args, cfg, file_hash, out, files), out / "manifest_report.json")
    print(table, end="")
    return EXIT_OK if passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dropout-linreg", description="Dropout gradient descent verification runner")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*COMMAND_SUITES, "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--suites", help="comma-separated subset of suites to run")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--format", choices=FORMATS)
        p.add_argument("--parallel", type=int)
        p.add_argument("--seed-override", type=int, dest="seed_override")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.seed_override is not None and not 0 <= args.seed_override < 2**64:
        print("error: --seed-override must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    # Gate warnings are recorded as notes in the report instead.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TheoremGateWarning)
        return _dispatch(args)


def _dispatch(args) -> int:
    try:
        if args.command == "report":
            return run_report(args)
        return run_command(args.command, args)
    except (ConfigError, BudgetExceeded) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepSizeViolation as exc:
        print(f"error: StepSizeViolation: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except DropoutLinregError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

if __name__ == "__main__":
    sys.exit(main())
