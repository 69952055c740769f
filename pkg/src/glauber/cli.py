"""Command line entry point: ``glauber {simulate,sample,verify,oracle-compare,gap}``.

Exit codes: 0 all checks pass, 1 a check failed, 2 bad input, 3 internal or
estimation error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, calculus, estimators, oracle
from .config import RunConfig
from .dynamics import ChainState, cftp_sample, run, sample_equilibrium
from .errors import (AccuracyError, CapacityError, CoalescenceError, ConfigError, DomainError,
                     EstimationError, ModelError, NumericalError, ParameterError)
from .geometry import ModelParams
from .quadrature import QuadratureSpec
from .reports import Check, Report, at_least, within
from .stats import SampleSet, batch_mean

log = logging.getLogger("glauber")

OUT_DIR_ENV = "GLAUBER_OUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
INPUT_ERRORS = (ConfigError, ModelError, ParameterError, CapacityError, DomainError)


# -- chain-level parallelism --------------------------------------------------

def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, *zip(*items)))


def _default_threads() -> int:
    return max(1, (os.cpu_count() or 2) // 2)


def _mcmc_chain(params, run_cfg, chain):
    return sample_equilibrium(params, run_cfg["burn_in"], run_cfg["samples"], run_cfg["spacing"],
                              run_cfg["seed"], chain, run_cfg["initial"])


def _cftp_chain(params, run_cfg, chain):
    n = run_cfg["samples"]
    # every draw has its own stream: index chain * n + k
    return [cftp_sample(params, run_cfg["seed"], chain * n + k) for k in range(n)]


def draw_samples(cfg: RunConfig, threads: int = 1, params: ModelParams | None = None) -> list:
    """Per-chain sample lists as configured (MCMC after burn-in or exact CFTP draws)."""
    r = cfg["run"]
    if r["samples"] < 1:
        raise ParameterError(f"run.samples must be positive, got {r['samples']}")
    if r["sampler"] == "mcmc" and not (r["burn_in"] > 0 and r["spacing"] > 0):
        raise ParameterError("run.burn_in and run.spacing must be positive")
    params = params or cfg.params()
    fn = _cftp_chain if r["sampler"] == "cftp" else _mcmc_chain
    return _map(fn, [(params, r, c) for c in range(r["chains"])], threads)


# -- simulate ---------------------------------------------------------------

def _simulate_chain(params, r, chain, out_dir, formats):
    state = ChainState.start(params, r["seed"], chain, r["initial"])
    horizon = dict(events=int(r["events"])) if r["events"] is not None else dict(until=float(r["horizon"]))
    if r["events"] is None and not r["horizon"] > 0:
        raise ParameterError("run.horizon must be positive")
    if r["events"] is None:
        snaps = np.arange(1, int(math.floor(r["horizon"] / r["snapshot_every"])) + 1) * r["snapshot_every"]
    else:
        snaps = ()
    t0 = time.perf_counter()
    traj = run(state, params, snapshots=snaps, **horizon)
    wall = time.perf_counter() - t0
    if "jsonl" in formats:
        traj.write_jsonl(Path(out_dir) / f"events_chain{chain}.jsonl")
    if "csv" in formats:
        traj.write_snapshots_csv(Path(out_dir) / f"snapshots_chain{chain}.csv")
    sizes = np.array([len(s) for s in traj.snapshots[1:]] or [len(traj.snapshots[0])], dtype=float)
    return {"chain": chain, "births": traj.counts[0], "deaths": traj.counts[1], "rejected": traj.counts[2],
            "final_time": traj.final_time, "mean_count": float(sizes.mean()), "wall": wall}


def cmd_simulate(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    params = cfg.params()
    r = cfg["run"]
    fmts = cfg["output"]["formats"]
    rows = _map(_simulate_chain, [(params, r, c, str(out_dir), fmts) for c in range(r["chains"])], threads)
    births = sum(x["births"] for x in rows)
    rejected = sum(x["rejected"] for x in rows)
    events = sum(x["births"] + x["deaths"] + x["rejected"] for x in rows)
    means = np.array([x["mean_count"] for x in rows])
    est = batch_mean(means, np.arange(len(means)), min_batches=len(means))
    wall = sum(x["wall"] for x in rows)
    summary = {
        "command": "simulate", "version": __version__, "config_hash": cfg.hash,
        "mean_count": est.estimate, "mean_count_stderr": est.stderr,
        "expected_count_free": params.z * params.box.volume,
        "acceptance_ratio": births / (births + rejected) if births + rejected else None,
        "events": events, "events_per_second": events / wall if wall > 0 else None,
        "chains": [{k: v for k, v in x.items() if k != "wall"} for x in rows],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"mean |gamma| = {est.estimate:.4f} +- {est.stderr:.4f}; acceptance {summary['acceptance_ratio']}")
    return EXIT_OK


# -- sample -----------------------------------------------------------------

def write_samples_csv(path, chains) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        d = None
        for c, samples in enumerate(chains):
            for k, conf in enumerate(samples):
                if d is None:
                    d = conf.box.dim
                    w.writerow(["chain", "sample", "t"] + [f"x{j}" for j in range(d)])
                for p in conf.points:
                    w.writerow([c, k, repr(float(conf.time))] + [repr(float(v)) for v in p])


def cmd_sample(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    params = cfg.params()
    chains = draw_samples(cfg, threads, params)
    ss = SampleSet(chains)
    write_samples_csv(out_dir / "samples.csv", chains)
    counts = np.array([len(c) for c in ss], dtype=float)
    est = batch_mean(counts, ss.chain)
    summary = {"command": "sample", "version": __version__, "config_hash": cfg.hash,
               "samples": len(ss), "mean_count": est.estimate, "mean_count_stderr": est.stderr}
    if len(ss) >= estimators.MIN_CORRELATION_SAMPLES and "csv" in cfg["output"]["formats"]:
        v = cfg["verify"]
        corr = estimators.estimate_correlations(ss, params, v["k1_bins"], v["r_bins"])
        corr.write_csv(out_dir / "k1.csv", out_dir / "k2.csv")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{len(ss)} samples; mean |gamma| = {est.estimate:.4f} +- {est.stderr:.4f}")
    return EXIT_OK


# -- verify -----------------------------------------------------------------

def _autocorr_cfg(cfg: RunConfig) -> estimators.AutocorrConfig:
    a = cfg["verify"]["autocorr"]
    return estimators.AutocorrConfig(chains=a["chains"], burn_in=a["burn_in"], horizon=a["horizon"],
                                     dt=a["dt"], max_lag=a["max_lag"], seed=cfg["run"]["seed"],
                                     initial=cfg["run"]["initial"])


def _gap_series(params, observables, acfg, chain):
    return estimators.chain_series(observables, params, acfg, chain)


def gap_checks(cfg: RunConfig, params: ModelParams, report: Report, threads: int = 1,
               out_dir: Path | None = None) -> None:
    obs = calculus.battery(params.box)
    acfg = _autocorr_cfg(cfg)
    series = _map(_gap_series, [(params, obs, acfg, c) for c in range(acfg.chains)], threads)
    ests = [estimators.autocorrelation_from_series([s[:, j] for s in series], acfg) for j in range(len(obs))]
    for F, e in zip(obs, ests):
        report.add(Check(f"decay_rate[{F.name}]", e.rate, e.ci / 1.96, "informational", True,
                         {"ci_halfwidth": e.ci, "fit_range": list(e.fit_range)}))
        report.add(Check(f"acf_monotone[{F.name}]", float(np.max(np.diff(e.values))), None,
                         "no increase beyond 3 stderr", e.monotone(3.0)))
        if out_dir is not None and "csv" in cfg["output"]["formats"]:
            e.write_csv(out_dir / f"acf_{len(report.checks)}.csv")
    j = int(np.argmin([e.rate for e in ests]))
    slow = ests[j]
    interval = cfg["verify"].get("gap_interval")
    if interval is not None:
        lo, hi = interval
        report.add(Check("min_decay_rate", slow.rate, slow.ci / 1.96, f"within [{lo:g}, {hi:g}]",
                         lo <= slow.rate <= hi, {"ci_halfwidth": slow.ci}))
    if params.potential.positive and params.delta < 1:
        bound = 1.0 - params.delta
        report.add(Check("min_decay_rate_vs_gap_bound", slow.rate, slow.ci / 1.96,
                         f"estimate >= {bound:.6f} - CI half-width", slow.rate >= bound - slow.ci,
                         {"ci_halfwidth": slow.ci, "bound": bound}))


def run_verify(cfg: RunConfig, threads: int = 1, out_dir: Path | None = None,
               samples=None) -> Report:
    """All configured checks; returns the report (does not decide the exit code)."""
    params = cfg.params()
    v = cfg["verify"]
    checks = set(v["checks"])
    sigma = float(v["sigma"])
    report = Report("verify", cfg.hash)
    report.info["delta"] = params.delta
    quad = QuadratureSpec(tol=float(v["quad_tol"]))
    needs_samples = checks - {"gap", "oracle-compare"}
    if needs_samples:
        chains = samples if samples is not None else draw_samples(cfg, threads, params)
        ss = SampleSet(chains)
        report.info["samples"] = len(ss)
        obs = calculus.battery(params.box)
        need_hf = bool(checks & {"stationarity", "dirichlet", "symmetry", "coercivity", "gap_inequality"})
        need_coer = "coercivity" in checks and params.potential.positive
        terms = None
        if checks & {"stationarity", "dirichlet", "symmetry", "coercivity", "gap_inequality", "poincare"}:
            terms = calculus.SampleTerms(obs, ss, params, quad, need_b="dirichlet" in checks,
                                         need_coercivity=need_coer, need_hf=need_hf)
            report.info["max_quadrature_error"] = float(terms.quad_err.max())
        ch = ss.chain
        if "gnz" in checks:
            for T in estimators.gnz_battery(params.box):
                g = estimators.gnz_defect(T, ss, params, quad)
                report.add(within(f"gnz_defect[{T.name}]", g.defect, sigma, lhs=g.lhs.estimate, rhs=g.rhs.estimate))
        if "stationarity" in checks:
            for j, F in enumerate(obs):
                report.add(within(f"generator_mean[{F.name}]", batch_mean(terms.HF[:, j], ch), sigma))
        if "dirichlet" in checks:
            for j, F in enumerate(obs):
                report.add(within(f"dirichlet_a_minus_b[{F.name}]",
                                  batch_mean(terms.dir_a[:, j, j] - terms.dir_b[:, j, j], ch), sigma))
        if "symmetry" in checks:
            pairs = [(j, j) for j in range(len(obs))] + [(0, 4), (4, 0)]
            for i, j in pairs:
                report.add(within(f"symmetry_defect[{obs[i].name},{obs[j].name}]",
                                  calculus.symmetry_from_terms(terms, i, j), sigma))
        if "coercivity" in checks:
            if not params.potential.positive:
                raise ModelError("coercivity check needs a nonnegative potential")
            for j, F in enumerate(obs):
                c = calculus.coercivity_from_terms(terms, j)
                report.add(within(f"coercivity_defect[{F.name}]", c.defect, sigma,
                                  lhs=c.lhs.estimate, trace=c.trace.estimate, cross=c.cross.estimate))
                if params.potential.kind == "zero":
                    report.add(Check(f"coercivity_cross_zero[{F.name}]", c.cross.estimate, 0.0,
                                     "exactly 0", bool(np.all(terms.cross[:, j] == 0.0))))
        if "gap_inequality" in checks:
            delta = params.delta
            for j, F in enumerate(obs):
                report.add(at_least(f"gap_inequality[{F.name}]",
                                    calculus.gap_inequality_from_terms(terms, j, delta), sigma))
        if "poincare" in checks:
            for j, F in enumerate(obs):
                p = estimators.poincare_from_terms(terms, j, params, sigma)
                report.add(Check(f"poincare_margin[{F.name}]", p.margin.estimate, p.margin.stderr,
                                 f"dirichlet - {p.bound:.6f} variance >= -{sigma:g} stderr", p.passed,
                                 {"variance": p.variance.estimate, "dirichlet": p.dirichlet.estimate}))
        if "ruelle" in checks:
            corr = estimators.estimate_correlations(ss, params, v["k1_bins"], v["r_bins"])
            rr = estimators.ruelle_check(corr, params, sigma)
            report.add(Check("ruelle_k1_max_excess", rr.k1_max_excess, None, f"k1 <= z + {sigma:g} stderr", rr.k1_pass))
            report.add(Check("ruelle_k2_max_excess", rr.k2_max_excess, None, f"k2 <= z^2 + {sigma:g} stderr", rr.k2_pass))
            report.add(Check("k1_total_vs_mean_count", corr.total(), None, "informational", True))
            if out_dir is not None and "csv" in cfg["output"]["formats"]:
                corr.write_csv(out_dir / "k1.csv", out_dir / "k2.csv")
    if "gap" in checks:
        gap_checks(cfg, params, report, threads, out_dir)
    if "oracle-compare" in checks:
        oracle_checks(cfg, report, threads)
    return report


def cmd_verify(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    report = run_verify(cfg, threads, out_dir)
    report.write(out_dir / "verify_report.json")
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.statistic}: {c.estimate:.6g}"
              + (f" +- {c.stderr:.3g}" if c.stderr is not None and np.isfinite(c.stderr) else ""))
    return EXIT_OK if report.passed else EXIT_FAIL


# -- oracle-compare ---------------------------------------------------------

def _oracle_chain(params, ocfg, seed, chain, n):
    return sample_equilibrium(params, ocfg["burn_in"], n, ocfg["spacing"], seed, chain)


def oracle_checks(cfg: RunConfig, report: Report, threads: int = 1) -> oracle.OracleReport:
    params = cfg.params()
    if params.lattice is None:
        raise ConfigError(f"{cfg.source}: oracle-compare needs model.lattice")
    model = oracle.DiscreteModel(params)
    rm = oracle.build_rate_matrix(model)
    pi = oracle.stationary_distribution(rm)
    gibbs = oracle.gibbs_weights(model)
    gv = np.array([gibbs[int(s)] for s in rm.states])
    report.add(Check("stationary_vs_gibbs_enumeration", float(np.max(np.abs(pi - gv))), None, "<= 1e-10",
                     bool(np.max(np.abs(pi - gv)) <= 1e-10)))
    report.add(Check("detailed_balance_defect", oracle.detailed_balance_defect(rm, pi), None, "< 1e-10",
                     oracle.detailed_balance_defect(rm, pi) < 1e-10))
    gap = None
    dd = oracle.delta_discrete(model)
    if int(np.sum(pi > 0)) <= oracle.MAX_DENSE_STATES and np.sum(pi > 0) > 1:
        gap = oracle.spectral_gap_eig(rm, pi)
        if dd < 1:
            report.add(Check("discrete_gap_vs_bound", gap, None, f">= 1 - delta_discrete = {1 - dd:.6f}",
                             gap >= 1 - dd - 1e-12))
        else:
            report.add(Check("discrete_gap", gap, None, "informational (delta_discrete >= 1)", True))
    o = cfg["oracle"]
    chains = cfg["run"]["chains"]
    n_per = -(-o["samples"] // chains)
    per_chain = _map(_oracle_chain, [(params, o, cfg["run"]["seed"], c, n_per) for c in range(chains)], threads)
    samples = [s for ch in per_chain for s in ch][: o["samples"]]
    emp = oracle.empirical_law(rm, samples)
    tv = oracle.tv_distance(emp, pi)
    report.add(Check("tv_distance_vs_mc", tv, None, f"< {o['tv_threshold']:g}", tv < o["tv_threshold"],
                     {"samples": len(samples)}))
    # generator rows: continuum HF on cell-center configurations against -(Q F)
    cont = dataclasses.replace(params, lattice=None)
    box = params.box
    window = calculus.Window(tuple([0.0] * box.dim), tuple(np.asarray(box.sides) * np.r_[0.5, [1.0] * (box.dim - 1)]))
    F = calculus.linear(window)
    fvec = oracle.observable_vector(rm, F.values)
    disc = oracle.discrete_generator(rm, fvec)
    diffs = []
    for i in range(min(rm.size, 16)):
        pts = model.configuration(int(rm.states[i]))
        hf, _ = calculus.apply_generator(F, cont.configuration(pts), cont)
        diffs.append(abs(hf - disc[i]))
    worst = float(max(diffs))
    report.add(Check("generator_row_difference", worst, None, "informational (discretization)", True,
                     {"cell_volume": model.a, "difference_over_cell_volume": worst / model.a}))
    out = oracle.OracleReport(rm.size, gap, dd, tv)
    report.info["oracle"] = out.to_record()
    return out


def cmd_oracle_compare(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    report = Report("oracle-compare", cfg.hash)
    oracle_checks(cfg, report, threads)
    report.write(out_dir / "oracle_report.json")
    print(json.dumps(report.info["oracle"]))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_gap(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    params = cfg.params()
    report = Report("gap", cfg.hash)
    report.info["delta"] = params.delta
    gap_checks(cfg, params, report, threads, out_dir)
    report.write(out_dir / "gap_report.json")
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.statistic}: {c.estimate:.6g}")
    return EXIT_OK if report.passed else EXIT_FAIL


COMMANDS = {"simulate": cmd_simulate, "sample": cmd_sample, "verify": cmd_verify,
            "oracle-compare": cmd_oracle_compare, "gap": cmd_gap}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glauber", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides run.seed)")
        p.add_argument("--threads", type=int, default=None, help="worker processes (default: physical cores)")
        p.add_argument("--out", default=None, help=f"output directory (overrides ${OUT_DIR_ENV} and output.dir)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
            cfg = cfg.with_seed(args.seed)
        out_dir = Path(args.out or os.environ.get(OUT_DIR_ENV) or cfg["output"]["dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg.write_resolved(out_dir)
        threads = args.threads if args.threads is not None else _default_threads()
        if threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {threads}")
        return COMMANDS[args.command](cfg, out_dir, threads)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EstimationError, AccuracyError, NumericalError, CoalescenceError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
