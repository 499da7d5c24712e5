"""Configuration-driven command line front end.

One JSON configuration file describes an experiment; the only flag
overrides allowed are the master seed and the output directory, so a config
file plus a seed fully determines every output byte.  Commands:

    critgw validate PROCESS.json
    critgw sample CONFIG.json
    critgw estimate CONFIG.json
    critgw verify-thm1 CONFIG.json     (likewise thm2, thm3, thm4)
    critgw all-checks CONFIG.json

Exit codes: 0 success, 2 validation failure, 3 tolerance failure,
4 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .estimators import EstimateReport
from .process import ProcessError, ProcessSpec, validate_spec
from .sampler import SamplerConfig, sample_batch
from .verify import (
    verify_theorem1,
    verify_theorem2,
    verify_theorem3,
    verify_theorem4,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TOLERANCE = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


def _canonical(config):
    return json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_sha256(config):
    return hashlib.sha256(_canonical(config).encode("utf-8")).hexdigest()


def _header_comment(config):
    return f"config_sha256={config_sha256(config)} master_seed={config['master_seed']}"


def _header_dict(config):
    return {"config_sha256": config_sha256(config), "master_seed_echo": config["master_seed"]}


def _load_config(path, seed_override=None, outdir_override=None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if seed_override is not None:
        config["master_seed"] = int(seed_override)
    if outdir_override is not None:
        config["output_dir"] = str(outdir_override)
    if "master_seed" not in config:
        raise ConfigError("config must set master_seed (wall-clock seeding is not allowed)")
    config.setdefault("output_dir", "out")
    config.setdefault("node_cap", 10**7)
    config.setdefault("workers", 1)
    base = Path(path).parent
    if "process" not in config:
        raise ConfigError("config must name a process file")
    proc_path = Path(config["process"])
    if not proc_path.is_absolute():
        proc_path = base / proc_path
    config["process"] = str(proc_path)
    return config


def _load_spec(config):
    try:
        return ProcessSpec.from_file(config["process"])
    except OSError as exc:
        raise ConfigError(f"cannot read process file: {exc}") from exc


def _root_type(config):
    root = int(config.get("root_type", 1))
    return root - 1  # configs are 1-based like the process file format


def _outdir(config):
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tracked_rules(spec, entries):
    rules = []
    for entry in entries:
        rules.append((int(entry["type"]) - 1, tuple(int(x) for x in entry["offspring"])))
    return tuple(rules)


def cmd_validate(process_file):
    try:
        spec = ProcessSpec.from_file(process_file)
    except (OSError, json.JSONDecodeError, ProcessError) as exc:
        print(f"PARSE FAIL {process_file}: {exc}")
        return EXIT_IO if not isinstance(exc, ProcessError) else EXIT_VALIDATION
    report = validate_spec(spec)
    print(f"types: {report.num_types}")
    print(f"spectral radius: {report.rho!r}")
    if report.eigen is not None:
        np.set_printoptions(precision=12)
        print(f"left eigenvector v:  {report.eigen.v}")
        print(f"right eigenvector u: {report.eigen.u}")
        print(f"fluctuation form at u: {report.quad_form_at_u!r}")
        print(f"centering matrix:\n{report.eigen.centering}")
    if report.ok:
        print("VALID critical process")
        return EXIT_OK
    for problem in report.problems():
        print(f"INVALID: {problem}")
    return EXIT_VALIDATION


def _sampler_config(config, spec, block):
    return SamplerConfig(
        root_type=_root_type(config),
        master_seed=int(config["master_seed"]),
        node_cap=int(config.get("node_cap", 10**7)),
        cap_policy=block.get("cap_policy", "censor"),
        lambdas=tuple(block.get("lambdas", ())),
        tracked_rules=_tracked_rules(spec, block.get("tracked_rules", ())),
        keep_depth_histogram=bool(block.get("keep_depth_histogram", True)),
    )


def cmd_sample(config):
    spec = _load_spec(config)
    validate_spec(spec).raise_if_invalid()
    block = config.get("sample", {})
    num_trees = int(block.get("num_trees", 1000))
    cfg = _sampler_config(config, spec, block)
    batch = sample_batch(spec, cfg, num_trees, workers=int(config["workers"]))
    out = _outdir(config) / "trees.csv"
    batch.to_csv(out, header_comment=_header_comment(config))
    print(f"wrote {out} ({batch.n_trees} trees, {batch.censored_count} censored)")
    return EXIT_OK


def cmd_estimate(config):
    spec = _load_spec(config)
    validate_spec(spec).raise_if_invalid()
    block = config.get("estimate", {})
    num_trees = int(block.get("num_trees", 1000))
    cfg = _sampler_config(config, spec, block)
    if not cfg.tracked_rules and block.get("offspring_types"):
        # default: track every rule of the requested types
        rules = []
        for j1 in block["offspring_types"]:
            j = int(j1) - 1
            for n in spec.counts[j]:
                rules.append((j, tuple(int(x) for x in n)))
        cfg = SamplerConfig(
            root_type=cfg.root_type,
            master_seed=cfg.master_seed,
            node_cap=cfg.node_cap,
            cap_policy=cfg.cap_policy,
            lambdas=cfg.lambdas,
            tracked_rules=tuple(rules),
            keep_depth_histogram=True,
        )
    batch = sample_batch(spec, cfg, num_trees, workers=int(config["workers"]))
    offspring_types = [int(j) - 1 for j in block.get("offspring_types", [])]
    beta = block.get("beta")
    report = EstimateReport.from_batch(
        batch, offspring_types=offspring_types, beta=None if beta is None else float(beta)
    )
    out = _outdir(config)
    truth = {str(k): v for k, v in block.get("truth", {}).items()}
    report.to_csv(out / "estimates.csv", truth=truth, header_comment=_header_comment(config))
    report.to_json(out / "estimates.json", header=_header_dict(config))
    print(f"wrote {out / 'estimates.csv'} and estimates.json")
    return EXIT_OK


def _verify_common(config, suffix):
    spec = _load_spec(config)
    validate_spec(spec).raise_if_invalid()
    block = config.get(f"verify_{suffix}", {})
    return spec, block


def _emit_report(config, report, name):
    out = _outdir(config)
    report.to_json(out / f"{name}.json", header=_header_dict(config))
    report.to_csv(out / f"{name}.csv", header_comment=_header_comment(config))
    status = "PASS" if report.passed else "FAIL"
    sup = "-" if report.sup_cf_distance is None else f"{report.sup_cf_distance:.4f}"
    ks = "-" if report.ks_statistic is None else f"{report.ks_statistic:.4f}"
    print(f"{status} {report.experiment}: sup_cf={sup} ks={ks} censored={report.censored_fraction:.2e}")
    return EXIT_OK if report.passed else EXIT_TOLERANCE


def cmd_verify_thm1(config):
    spec, block = _verify_common(config, "thm1")
    report = verify_theorem1(
        spec,
        _root_type(config),
        num_trees=int(block.get("num_trees", 2000)),
        replicates=int(block.get("replicates", 500)),
        t_grid=block.get("t_grid"),
        c=block.get("direction"),
        master_seed=int(config["master_seed"]),
        node_cap=int(config["node_cap"]),
        workers=int(config["workers"]),
        cf_tol=float(block.get("cf_tol", 0.08)),
        ks_tol=float(block.get("ks_tol", 0.08)),
    )
    return _emit_report(config, report, "verify_thm1")


def cmd_verify_thm2(config):
    spec, block = _verify_common(config, "thm2")
    grid = None
    if "grid" in block:
        grid = [(np.asarray(pt["direction"], dtype=float), float(pt["K"])) for pt in block["grid"]]
    report = verify_theorem2(
        spec,
        _root_type(config),
        num_trees=int(block.get("num_trees", 5000)),
        replicates=int(block.get("replicates", 400)),
        ck_grid=grid,
        master_seed=int(config["master_seed"]),
        node_cap=int(config["node_cap"]),
        workers=int(config["workers"]),
        cf_tol=float(block.get("cf_tol", 0.1)),
    )
    return _emit_report(config, report, "verify_thm2")


def cmd_verify_thm3(config):
    spec, block = _verify_common(config, "thm3")
    if "type" not in block or "rules" not in block:
        raise ConfigError("verify_thm3 block needs 'type' and 'rules'")
    grid = None
    if "grid" in block:
        grid = [(np.asarray(pt["direction"], dtype=float), float(pt["K"])) for pt in block["grid"]]
    report = verify_theorem3(
        spec,
        _root_type(config),
        rule_type=int(block["type"]) - 1,
        rules=[tuple(int(x) for x in n) for n in block["rules"]],
        num_trees=int(block.get("num_trees", 5000)),
        replicates=int(block.get("replicates", 400)),
        ck_grid=grid,
        master_seed=int(config["master_seed"]),
        node_cap=int(config["node_cap"]),
        workers=int(config["workers"]),
        cf_tol=float(block.get("cf_tol", 0.1)),
    )
    return _emit_report(config, report, "verify_thm3")


def cmd_verify_thm4(config):
    spec, block = _verify_common(config, "thm4")
    report = verify_theorem4(
        spec,
        _root_type(config),
        n_grid=[int(n) for n in block.get("n_grid", (1000, 10000, 100000))],
        beta=float(block.get("beta", 0.25)),
        seed_chains=int(block.get("seed_chains", 10)),
        master_seed=int(config["master_seed"]),
        node_cap=int(config["node_cap"]),
        workers=int(config["workers"]),
        final_tol=float(block.get("final_tol", 0.05)),
    )
    code = _emit_report(config, report, "verify_thm4")
    exact = report.extra["exact_expectation_errors"]
    print(f"  exact expectation errors per N: {['%.3e' % e for e in exact]}")
    return code


def cmd_all_checks(config):
    worst = EXIT_OK
    for fn in (cmd_verify_thm1, cmd_verify_thm2, cmd_verify_thm3, cmd_verify_thm4):
        code = fn(config)
        worst = max(worst, code)
    return worst


def build_parser():
    parser = argparse.ArgumentParser(
        prog="critgw",
        description="Sample critical branching trees, estimate process parameters, "
        "and verify the limit laws of the estimators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a process file and print its constants")
    p.add_argument("process_file")

    for name, help_text in [
        ("sample", "sample trees and dump per-tree records"),
        ("estimate", "run the estimators on a sampled batch"),
        ("verify-thm1", "verify the stable limit of scaled type-frequency sums"),
        ("verify-thm2", "verify the joint type-frequency fluctuation limit"),
        ("verify-thm3", "verify the joint rule-frequency fluctuation limit"),
        ("verify-thm4", "verify the right-eigenvector estimator error decay"),
        ("all-checks", "run every verifier in sequence"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--output-dir", default=None, help="override output directory")
    return parser


_DISPATCH = {
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "verify-thm1": cmd_verify_thm1,
    "verify-thm2": cmd_verify_thm2,
    "verify-thm3": cmd_verify_thm3,
    "verify-thm4": cmd_verify_thm4,
    "all-checks": cmd_all_checks,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            return cmd_validate(args.process_file)
        except ProcessError as exc:
            print(f"INVALID: {exc}")
            return EXIT_VALIDATION
    try:
        config = _load_config(args.config, args.seed, args.output_dir)
        return _DISPATCH[args.command](config)
    except ConfigError as exc:
        print(f"CONFIG ERROR: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProcessError as exc:
        print(f"VALIDATION ERROR: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O ERROR: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
