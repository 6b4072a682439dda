"""Command-line runner: ``wienerchannel {sweep|verify|convergence} --config FILE``.

Exit codes: 0 success, 1 some identity failed (reports are still written),
2 invalid configuration or arguments, 3 computation failure.

Outputs are byte-identical for a given configuration and seed whatever
``--threads`` is: floats are written with 17 significant digits and no
timing or host information is recorded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, env_default_seed, load_config
from .identities import (
    IdentityReport,
    convergence_study,
    immse_reports,
    monotonicity_reports,
    snr_curve,
    verify_battery,
)
from .oracle import QuadratureBudgetExceeded, quadrature_scalar, tensor_quadrature
from .priors import Atomic, AtomicLaw, GaussianLaw, ScaledShape, reduce

SCHEMA_VERSION = 1

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_COMPUTE = 0, 1, 2, 3

SWEEP_COLUMNS = (
    "schema_version", "rho", "I_direct", "I_direct_se", "I_immse", "I_immse_se",
    "I_duncan", "I_duncan_se", "mmse_nc", "mmse_nc_se", "mmse_c", "mmse_c_se",
    "relent", "relent_se",
)
VERIFY_COLUMNS = (
    "schema_version", "identity", "rho", "n", "N", "lhs", "rhs", "stderr_lhs",
    "stderr_rhs", "residual", "tolerance", "pass",
)
CONVERGENCE_COLUMNS = (
    "schema_version", "rho", "n", "I_direct", "I_direct_se", "I_duncan", "I_duncan_se",
    "duncan_residual", "duncan_residual_se", "relent", "relent_causal",
    "causal_residual", "causal_residual_se", "disc_tolerance",
)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _write_csv(path: Path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_json(path: Path, payload):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def _out_dir(cfg: ExperimentConfig, override) -> Path:
    out = Path(override or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _positive_grid(cfg):
    return [r for r in cfg.rho_grid if r > 0]


# -- subcommands ------------------------------------------------------------------


def cmd_sweep(cfg: ExperimentConfig, out=None) -> int:
    """Mutual information and MMSE along the rho grid; writes sweep.csv/json."""
    prior = cfg.build_prior()
    curve = snr_curve(prior, cfg.rho_grid, cfg.mc, cfg.max_spacing)
    rows = [{"schema_version": SCHEMA_VERSION, **r} for r in curve.rows()]
    d = _out_dir(cfg, out)
    _write_csv(d / "sweep.csv", SWEEP_COLUMNS, rows)
    _write_json(d / "sweep.json", {
        "schema_version": SCHEMA_VERSION, "config": cfg.echo(), "rows": rows,
        "metadata": curve.metadata,
    })
    return EXIT_OK


def _scalar_law(prior):
    """Equivalent scalar amplitude law when the signal is one random multiple of a fixed shape."""
    if not isinstance(prior, ScaledShape):
        return None
    norm = math.sqrt(float(prior.shape @ prior.shape))
    amp = prior.amplitude
    if isinstance(amp, AtomicLaw):
        return AtomicLaw(amp.values * norm, amp.weights)
    return GaussianLaw(amp.mean * norm, amp.var * norm**2)


def _oracle_reports(prior, curve, tol):
    """Compare Monte-Carlo estimates with quadrature where a reference exists."""
    law = _scalar_law(prior)
    red = reduce(prior)
    out = []
    for j, rho in enumerate(curve.rho):
        ref = None
        if law is not None:
            o = quadrature_scalar(law, float(rho))
            ref = (o.I, o.mmse_nc, o.E_log_ell)
        elif isinstance(red, Atomic) and red.n <= 3:
            try:
                o = tensor_quadrature(red, float(rho))
                ref = (o.I, o.mmse_nc, o.rel_ent)
            except QuadratureBudgetExceeded:
                ref = None
        if ref is None:
            continue
        for name, key, value in zip(("oracle_mutual_info", "oracle_mmse", "oracle_relative_entropy"),
                                    ("I_direct", "mmse_nc", "relent"), ref):
            est = float(getattr(curve, key)[j])
            se = float(getattr(curve, key + "_se")[j])
            out.append(IdentityReport(
                name, est, float(value), se, 0.0, tol.sigmas * se + tol.analytic * max(1.0, abs(value)),
                f"{tol.sigmas:g}*se+analytic_floor",
                metadata={"rho": float(rho), **curve.metadata},
            ))
    return out


def run_verify(cfg: ExperimentConfig):
    """All reports of the verification battery, in a fixed order."""
    prior = cfg.build_prior()
    reports = []
    for rho in cfg.rho_grid:
        reports += verify_battery(prior, rho, cfg.mc, cfg.tolerance, cfg.fd_step,
                                  cfg.analytic_samples)
    grid = _positive_grid(cfg)
    if grid:
        curve = snr_curve(prior, grid, cfg.mc, cfg.max_spacing)
        reports += immse_reports(curve, cfg.tolerance)
        reports += monotonicity_reports(curve, cfg.tolerance)
        reports += _oracle_reports(prior, curve, cfg.tolerance)
    return reports


def cmd_verify(cfg: ExperimentConfig, out=None) -> int:
    """Run the identity battery; writes verify.csv/json. Exit 1 if any report fails."""
    reports = run_verify(cfg)
    rows = []
    for r in reports:
        d = r.as_dict()
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "identity": r.name,
            "rho": d.get("rho", float("nan")),
            "n": d.get("n", cfg.basis.n),
            "N": d.get("N", 0),
            **{k: d[k] for k in ("lhs", "rhs", "stderr_lhs", "stderr_rhs", "residual",
                                 "tolerance", "pass")},
        })
    d = _out_dir(cfg, out)
    _write_csv(d / "verify.csv", VERIFY_COLUMNS, rows)
    _write_json(d / "verify.json", {
        "schema_version": SCHEMA_VERSION, "config": cfg.echo(),
        "reports": [r.as_dict() for r in reports],
        "all_passed": all(r.passed for r in reports),
    })
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def cmd_convergence(cfg: ExperimentConfig, out=None) -> int:
    """Causal identities across the resolutions of ``convergence.n_list``."""
    n_list = cfg.n_list or (cfg.basis.n,)
    prior = cfg.build_prior(n_list[-1])
    rows, studies = [], []
    for rho in _positive_grid(cfg):
        st = convergence_study(prior, rho, cfg.mc, n_list, cfg.tolerance)
        studies.append({"rho": rho, "order": st.order, "decreasing": st.decreasing})
        for r in st.rows:
            rows.append({"schema_version": SCHEMA_VERSION, "rho": rho, **r.__dict__})
    d = _out_dir(cfg, out)
    _write_csv(d / "convergence.csv", CONVERGENCE_COLUMNS, rows)
    _write_json(d / "convergence.json", {
        "schema_version": SCHEMA_VERSION, "config": cfg.echo(), "rows": rows,
        "fits": studies,
    })
    return EXIT_OK


COMMANDS = {"sweep": cmd_sweep, "verify": cmd_verify, "convergence": cmd_convergence}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wienerchannel",
        description="Verify likelihood-ratio, MMSE and mutual-information identities "
                    "of the additive Gaussian channel.",
    )
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML experiment file")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; affects speed only, never results")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError(["--threads: must be >= 1"])
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError(["--seed: must be an unsigned 64-bit integer"])
        cfg = load_config(args.config, env_default_seed())
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        cfg = replace(cfg, mc=cfg.mc.with_threads(args.threads))
    except ConfigError as e:
        for line in e.problems:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = COMMANDS[args.command](cfg, args.out)
    except ConfigError as e:
        for line in e.problems:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - any compute failure maps to exit 3
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_COMPUTE
    if code == EXIT_FAILED:
        print("some identities failed; see verify.csv", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
