"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data validation error,
4 numerical error. Every command writes ``run.json`` with the resolved
configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import baseline, diagnostics, evaluation, hits, results, synth
from .errors import BHTSError, ConfigError, ValidationError
from .hyper import ChainConfig, Hyperparameters, default_hyperparameters
from .plate import compound_stats, parse_campaign_csv, write_campaign_csv
from .sampler import CompoundData, run_chain

log = logging.getLogger("bhts")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _dump(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_run(out: Path, command: str, resolved: dict, raw: dict | None = None) -> None:
    """``config`` is the fully resolved setup; ``input_config`` echoes the --config file."""
    _dump({"command": command, "config": resolved, "input_config": raw or {}}, out / "run.json")


def _require(path, what):
    if path is None:
        raise ConfigError(f"--{what} is required")
    if not Path(path).exists():
        raise ValidationError(f"{what} file not found: {path}")
    return Path(path)


# --- simulate ----------------------------------------------------------------


def _mixture(d: dict | None, default: synth.MixtureSpec) -> synth.MixtureSpec:
    if d is None:
        return default
    return synth.MixtureSpec(d["means"], d["variances"], d.get("weights"))


def _spec_from_config(cfg: dict, seed) -> synth.CampaignSpec:
    cfg = dict(cfg)
    noise_cfg = cfg.pop("noise", {}) or {}
    hit = _mixture(cfg.pop("hit_mixture", None), synth.MixtureSpec(synth.HIT_MEANS, synth.HIT_VARIANCES))
    non = _mixture(cfg.pop("nonhit_mixture", None),
                   synth.MixtureSpec(synth.NONHIT_MEANS, synth.NONHIT_VARIANCES))
    if seed is not None:
        cfg["seed"] = seed
    n_rows, n_cols = cfg.get("n_rows", 8), cfg.get("n_cols", 10)
    params = cfg.get("lognormal_params", "moments")
    if "row_scale_csv" in noise_cfg or "col_scale_csv" in noise_cfg:
        row = np.loadtxt(noise_cfg["row_scale_csv"], delimiter=",", ndmin=2)
        col = np.loadtxt(noise_cfg["col_scale_csv"], delimiter=",", ndmin=2)
        noise = synth.PlateNoiseSpec(row, col, noise_cfg.get("amplitude", 1.0))
    else:
        noise = synth.default_noise(
            n_rows, n_cols, non, params,
            rho_row=noise_cfg.get("rho_row", 0.6), rho_col=noise_cfg.get("rho_col", 0.2),
            fraction=noise_cfg.get("fraction", synth.DEFAULT_NOISE_FRACTION))
        if "amplitude" in noise_cfg:
            noise.amplitude = float(noise_cfg["amplitude"])
    known = {"n_plates", "n_rows", "n_cols", "n_compounds", "active_fraction", "seed", "lognormal_params"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown simulate keys: {sorted(unknown)}")
    if "n_compounds" not in cfg:
        cfg["n_compounds"] = cfg.get("n_plates", 1000) * n_rows * n_cols
    try:
        return synth.CampaignSpec(hit_mixture=hit, nonhit_mixture=non, noise=noise, **cfg)
    except (TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(args) -> None:
    cfg = _load_config(args.config)
    for key in ("n_plates", "active_fraction"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    spec = _spec_from_config(cfg, args.seed)
    campaign, truth = synth.build_campaign(spec)
    out = args.output_dir
    write_campaign_csv(campaign, out / "campaign.csv")
    with open(out / "truth.csv", "w", encoding="utf-8") as fh:
        fh.write("plate_id,row,col,label\n")
        for (pid, r, c), lab in truth.items():
            fh.write(f"{pid},{r},{c},{lab}\n")
    _dump(spec.to_dict(), out / "spec.json")
    _write_run(out, "simulate", spec.to_dict(), cfg)


# --- fit -------------------------------------------------------------------


def _fit_setup(args, cfg: dict, data: CompoundData):
    hp_over = dict(cfg.get("hyperparameters", {}))
    hp = default_hyperparameters(
        data.z, mu_gap=cfg.get("mu_gap"),
        target_prior_variance=cfg.get("target_prior_variance", 1e-4), **hp_over)
    chain = dict(cfg.get("chain", {}))
    if args.seed is not None:
        chain["seed"] = args.seed
    for key in ("n_iter", "burn_in", "thin"):
        if getattr(args, key, None) is not None:
            chain[key] = getattr(args, key)
    if getattr(args, "no_traces", False):
        chain["record_traces"] = False
    return hp, ChainConfig.from_dict(chain)


def cmd_fit(args) -> None:
    cfg = _load_config(args.config)
    campaign = parse_campaign_csv(_require(args.campaign, "campaign"))
    data = CompoundData.from_campaign(campaign)
    hp, chain = _fit_setup(args, cfg, data)
    res = run_chain(data, hp, chain, threads=args.threads)
    out = args.output_dir
    resolved = {"hyperparameters": hp.to_dict(), "chain": chain.to_dict(),
                "campaign": str(args.campaign)}
    res.extra["config_echo"] = {"campaign": str(args.campaign)}
    results.write_chain_json(res, out / "chain.json")
    table = baseline.ScoreTable(baseline.ScoreMethod.POSTERIOR, list(results.posterior_rows(res)))
    baseline.write_score_table(table, out / "posterior.csv")
    if chain.record_traces:
        results.write_trace_csv(res, out / "traces.csv")
    _write_run(out, "fit", resolved, cfg)
    log.info("fit done: pi=%.4f, %d underflowed wells", res.means["pi"], res.underflow)


# --- score -------------------------------------------------------------------


def cmd_score(args) -> None:
    cfg = _load_config(args.config)
    method = args.method or cfg.get("method")
    if method not in ("npi", "z", "b"):
        raise ConfigError("--method must be one of npi, z, b")
    opts = {}
    if method == "npi":
        opts["reducer"] = args.reducer or cfg.get("reducer", "median")
    elif method == "b":
        opts["mad_scale"] = args.mad_scale if args.mad_scale is not None else cfg.get("mad_scale", baseline.MAD_NORMAL)
        opts["max_iter"] = cfg.get("max_iter", 100)
        opts["tol"] = cfg.get("tol", 1e-6)
    campaign = parse_campaign_csv(_require(args.campaign, "campaign"))
    table = baseline.score_campaign(campaign, method, **opts)
    baseline.write_score_table(table, args.output_dir / f"scores_{method}.csv")
    _write_run(args.output_dir, "score", {"method": method, **opts, "campaign": str(args.campaign)}, cfg)


# --- call-hits -----------------------------------------------------------------


def cmd_call_hits(args) -> None:
    cfg = _load_config(args.config)
    doc = results.read_chain_json(_require(args.chain, "chain"))
    wells = doc["wells"]
    post = np.array([w[3] for w in wells])
    target = args.fdr if args.fdr is not None else cfg.get("fdr")
    r = args.threshold if args.threshold is not None else cfg.get("threshold")
    if (target is None) == (r is None):
        raise ConfigError("give exactly one of --fdr or --threshold")
    if target is not None:
        r = hits.threshold_for_fdr(post, float(target))
    r = float(r)
    calls = hits.call_hits(wells, r)
    out = args.output_dir
    hits.write_hits_csv(calls, out / "hits.csv")
    hits.write_fdr_table_csv(post, out / "fdr_table.csv")
    n_hit = sum(c.is_hit for c in calls)
    fdr = hits.estimate_fdr(post, r) if n_hit else None
    _write_run(out, "call-hits", {"chain": str(args.chain), "fdr_target": target, "threshold": r,
                                  "hits_selected": n_hit, "estimated_fdr": fdr}, cfg)


# --- evaluate ------------------------------------------------------------------


def _grid(spec):
    if spec is None:
        return None
    if isinstance(spec, list):
        return np.array(spec, dtype=float)
    parts = str(spec).split(":")
    try:
        if len(parts) == 3:
            return np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
        return np.array([float(x) for x in str(spec).split(",")])
    except ValueError:
        raise ConfigError(f"bad threshold grid {spec!r}; use lo:hi:n or a comma list") from None


def cmd_evaluate(args) -> None:
    cfg = _load_config(args.config)
    truth = results.read_truth_csv(_require(args.truth, "truth"))
    out = args.output_dir
    resolved = {"truth": str(args.truth)}
    if args.scores is not None:
        table = baseline.read_score_table(_require(args.scores, "scores"))
        try:
            y = np.array([truth[k] for k in table.keys()])
        except KeyError as exc:
            raise ValidationError(f"no truth label for well {exc.args[0]}") from None
        curve = evaluation.roc_auc(table.scores, y)
        evaluation.write_roc_csv(curve, out / "roc.csv")
        sidedness = args.sidedness or cfg.get("sidedness", "greater")
        scan = evaluation.bscore_threshold_auc(table.scores, y, _grid(args.thresholds or cfg.get("thresholds")),
                                               sidedness)
        evaluation.write_threshold_scan_csv(scan, out / "auc_vs_threshold.csv")
        resolved.update(scores=str(args.scores), method=table.method.value, sidedness=sidedness)
        _dump({"config": resolved, "auc": curve.auc, "best_threshold": scan.best_threshold,
               "best_threshold_auc": scan.best_auc, "n_wells": int(y.size), "n_hits": int(y.sum())},
              out / "auc.json")
    deltas = args.deltas or cfg.get("deltas")
    if deltas is not None:
        campaign = parse_campaign_csv(_require(args.campaign, "campaign"))
        data = CompoundData.from_campaign(campaign)
        hp, chain = _fit_setup(args, cfg, data)
        deltas = [float(d) for d in (deltas.split(",") if isinstance(deltas, str) else deltas)]
        rows = evaluation.sensitivity_scan(campaign, truth, hp, deltas, chain, threads=args.threads)
        evaluation.write_sensitivity_csv(rows, out / "sensitivity.csv")
        mean, v = compound_stats(campaign)
        resolved.update(campaign=str(args.campaign), deltas=deltas, compound_mean=mean,
                        hyperparameters=hp.to_dict(), chain=chain.to_dict())
    if args.scores is None and deltas is None:
        raise ConfigError("evaluate needs --scores and/or --deltas")
    _write_run(out, "evaluate", resolved, cfg)


# --- diagnostics ---------------------------------------------------------------


def cmd_diagnostics(args) -> None:
    traces = diagnostics.read_trace_csv(_require(args.traces, "traces"))
    summary = diagnostics.summarize_traces(traces)
    resolved = {"traces": str(args.traces)}
    diagnostics.write_summary_json(summary, args.output_dir / "mixing.json", resolved)
    _write_run(args.output_dir, "diagnostics", resolved)


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", type=Path, default=None, help="JSON config file")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--output-dir", type=Path, default=Path("."))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bhts", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic campaign")
    p.add_argument("--n-plates", dest="n_plates", type=int)
    p.add_argument("--active-fraction", dest="active_fraction", type=float)
    p.set_defaults(func=cmd_simulate)

    def chain_flags(p):
        p.add_argument("--n-iter", dest="n_iter", type=int)
        p.add_argument("--burn-in", dest="burn_in", type=int)
        p.add_argument("--thin", type=int)

    p = sub.add_parser("fit", parents=[common], help="run the Gibbs sampler")
    p.add_argument("--campaign", type=Path)
    chain_flags(p)
    p.add_argument("--no-traces", dest="no_traces", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", parents=[common], help="classical per-plate scores")
    p.add_argument("--campaign", type=Path)
    p.add_argument("--method", choices=("npi", "z", "b"))
    p.add_argument("--reducer", choices=("median", "mean"))
    p.add_argument("--mad-scale", dest="mad_scale", type=float)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("call-hits", parents=[common], help="hit list and FDR table")
    p.add_argument("--chain", type=Path)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fdr", type=float)
    g.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_call_hits)

    p = sub.add_parser("evaluate", parents=[common], help="ROC/AUC and sensitivity scan")
    p.add_argument("--scores", type=Path)
    p.add_argument("--truth", type=Path)
    p.add_argument("--thresholds", help="lo:hi:n or comma list (default: every distinct score)")
    p.add_argument("--sidedness", choices=("greater", "absolute"))
    p.add_argument("--campaign", type=Path)
    p.add_argument("--deltas", help="comma list of mu10 - mu00 gaps")
    chain_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnostics", parents=[common], help="mixing summaries of a trace CSV")
    p.add_argument("--traces", type=Path)
    p.set_defaults(func=cmd_diagnostics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        args.output_dir.mkdir(parents=True, exist_ok=True)
        args.func(args)
    except BHTSError as exc:
        print(f"bhts {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (KeyError, TypeError) as exc:
        print(f"bhts {args.command}: bad configuration: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as exc:
        print(f"bhts {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
