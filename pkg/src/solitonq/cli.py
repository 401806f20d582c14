"""solitonq <kind> --config FILE [--seed INT] [--out DIR]

Every run writes results.json (sorted keys, each number tagged with its
provenance: analytic, sampled or model), data/*.csv, log.txt and the resolved
config. Exit codes: 0 success, 2 invalid configuration, 3 numerical
diagnostic failure.
"""
import argparse
import csv
import json
import logging
import math
import os
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from . import _accel
from .bethe import (Configuration, NormalizationUnknownError, PulseCenterState, energy,
                    eval_eigenamplitude, eval_time_amplitude, norm_constant, pairwise_potential)
from .classical import (FitError, PropagationError, StepPlan, default_dt, fit_soliton_width,
                        propagate, ramp_stability_probe, soliton_period, vector_soliton,
                        write_profile_csv, write_snapshot)
from .config import KINDS, ExperimentConfig
from .eigencheck import GridSpec, residual
from .epr import epr_metrics_analytic, epr_witness
from .model import AdiabaticSchedule, NoBoundStateError, SolitonParams, derive_scales, shot_noise_dp
from .protocol import (apply_adiabatic, apply_dispersion_management, compensation_time,
                       enhancement, enhancement_cap, enhancement_report)
from .sampler import (McmcConfig, QConvergenceError, SamplerError, estimate_q, momentum_quadratics,
                      run_chains, moments_from_samples, _check_diagnostics)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("solitonq")


class ConfigError(ValueError):
    pass


def num(value, provenance, se=None):
    out = {"value": float(value), "provenance": provenance}
    if se is not None:
        out["se"] = float(se)
    return out


def est(e, provenance="sampled"):
    return {"value": e.value, "se": e.se, "ess": e.ess, "provenance": provenance}


class Run:
    """One experiment: resolved config plus a staging directory for outputs."""

    def __init__(self, cfg: ExperimentConfig, stage: Path):
        self.cfg = cfg
        self.stage = stage
        self.data = stage / "data"
        self.data.mkdir(parents=True, exist_ok=True)
        p = cfg.params
        self.params = SolitonParams(p.b, p.c, p.B, p.n, p.m)
        m = cfg.mcmc
        self.mcmc = McmcConfig(m.chains, m.samples_per_chain, m.burn_in, m.proposal_stddev,
                               cfg.seed, m.tune)

    def write_csv(self, name, header, rows):
        with open(self.data / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])

    def resolve_q(self, q, params=None):
        params = params or self.params
        if q != "auto":
            return float(q), "model", None
        if params.N == 2:
            return 2.0, "analytic", None
        qe = estimate_q(replace(params, B=1.0), self.mcmc)
        return qe.q.value, "sampled", qe.q.se


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


# ------------------------------------------------------------------ kinds

def run_bethe_eval(run: Run):
    params, blk = run.params, run.cfg.bethe
    out = {"N": params.N, "eigenstate_valid": params.eigenstate_valid}
    if params.eigenstate_valid:
        out["energy"] = num(energy(params, blk.p), "analytic")
        try:
            out["norm_constant"] = num(norm_constant(params), "analytic")
        except NormalizationUnknownError:
            pass
    rows, evals = [], []
    state = PulseCenterState(blk.dp, blk.phase_accum, params.N) if blk.dp else None
    for pt in blk.configs:
        cfg = Configuration(pt.xs, pt.ys)
        a = eval_eigenamplitude(cfg, params, blk.p)
        rec = {"xs": list(cfg.xs), "ys": list(cfg.ys),
               "S": num(pairwise_potential(cfg, params.B), "analytic"),
               "log_modulus": num(a.log_modulus, "analytic"), "phase": num(a.phase, "analytic"),
               "eigenstate": a.eigenstate}
        row = [" ".join(map(repr, cfg.xs)), " ".join(map(repr, cfg.ys)), a.log_modulus, a.phase]
        if state is not None:
            ta = eval_time_amplitude(cfg, params, state)
            rec["time_log_modulus"] = num(ta.log_modulus, "analytic")
            rec["time_phase"] = num(ta.phase, "analytic")
            row += [ta.log_modulus, ta.phase]
        evals.append(rec)
        rows.append(row)
    header = ["xs", "ys", "log_modulus", "phase"] + (["time_log_modulus", "time_phase"] if state else [])
    run.write_csv("amplitudes.csv", header, rows)
    out["amplitudes"] = evals
    return out


def run_eigencheck(run: Run):
    params, blk = run.params, run.cfg.grid
    reports = []
    for M in blk.points_per_axis:
        t0 = time.perf_counter()
        rep = residual(params, GridSpec(M, blk.box_halfwidth), blk.p)
        log.info("eigencheck M=%d residual=%.4g (%.2fs)", M, rep.global_residual, time.perf_counter() - t0)
        reports.append(rep)
    run.write_csv("convergence.csv",
                  ["points_per_axis", "dz", "global_residual", "offdiagonal_residual", "rayleigh_energy"],
                  [[r.points_per_axis, r.dz, r.global_residual, r.offdiagonal_residual, r.rayleigh_energy]
                   for r in reports])
    analytic = reports[-1].region_energies_analytic
    spread = max(analytic.values()) - min(analytic.values())
    return {
        "B": params.B,
        "region_energies_analytic": {k: num(v, "analytic") for k, v in sorted(analytic.items())},
        "analytic_spread": num(spread, "analytic"),
        "grids": [{k: v if not isinstance(v, float) else num(v, "analytic")
                   for k, v in r.as_dict().items() if k not in ("region_energies", "region_energies_analytic")}
                  | {"region_energies": {k: num(v, "analytic") for k, v in sorted(r.region_energies.items())}}
                  for r in reports],
    }


def _sample_state(run: Run):
    params, blk = run.params, run.cfg.sample
    dp = blk.dp if blk.dp is not None else shot_noise_dp(params, blk.q)
    return PulseCenterState(dp, 0.0, params.N)


def run_sample(run: Run):
    params = run.params
    params.require_bound()
    state = _sample_state(run)
    chains = run_chains(params, state, run.mcmc)
    moments = moments_from_samples(chains, params, state)
    _check_diagnostics(chains, moments)
    trace = chains.samples[:, ::max(1, chains.samples.shape[1] // 1000), :]
    rows = []
    for c in range(trace.shape[0]):
        for s in range(trace.shape[1]):
            rows.append([c, s] + [float(x) for x in trace[c, s]])
    run.write_csv("trace.csv", ["chain", "index"] + [f"z{j + 1}" for j in range(params.N)], rows)
    out = {k: est(v) for k, v in moments.scalars().items()}
    out.update({
        "dp": num(state.dp, "analytic"),
        "ess": num(moments.ess, "sampled"),
        "acceptance_rate": num(moments.acceptance_rate, "sampled"),
        "n_samples": moments.n_samples,
        "exploratory": moments.exploratory,
        "predicted_mean_abs_distance": num(derive_scales(params).W0, "analytic"),
    })
    return out


def run_q_table(run: Run):
    blk = run.cfg.qtable
    rows, table = [], []
    for N in blk.Ns:
        n = (N + 1) // 2
        params = replace(run.params, B=1.0, n=n, m=N - n)
        try:
            qe = estimate_q(params, run.mcmc, tol=blk.tol, max_iter=blk.max_iter)
        except (SamplerError, ValueError) as exc:
            log.warning("q-table row N=%d failed: %s", N, exc)
            table.append({"N": N, "error": str(exc)})
            continue
        rows.append([N, qe.q.value, qe.q.se, qe.q.ess])
        table.append({"N": N, "q": est(qe.q), "dp": num(qe.dp, "sampled"), "iterations": len(qe.trace)})
    run.write_csv("q_table.csv", ["N", "q", "se", "ess"], rows)
    return {"rows": table}


def _expand_and_compensate(params, state, gamma, duration, b_prime):
    sched = AdiabaticSchedule.linear(params.c, params.c / gamma, duration)
    p1, s1, margin = apply_adiabatic(params, sched, state)
    if b_prime is None:
        b_prime = -params.b
    t_prime = compensation_time(s1, b_prime) if s1.phase_accum != 0 else 0.0
    s2 = apply_dispersion_management(s1, b_prime, t_prime)
    return p1, s1, s2, margin, b_prime, t_prime


def run_protocol(run: Run):
    params, blk = run.params, run.cfg.protocol
    params.require_bound()
    q, q_prov, q_se = run.resolve_q(blk.q)
    state = PulseCenterState(shot_noise_dp(params, q), 0.0, params.N)
    p1, s1, s2, margin, b_prime, t_prime = _expand_and_compensate(params, state, blk.gamma,
                                                                   blk.duration, b_prime=blk.b_prime)
    rep = enhancement_report(params, p1, s2, q, margin)
    scan = np.linspace(0.0, 2.0 * t_prime, blk.scan_points) if t_prime > 0 else np.zeros(1)
    run.write_csv("compensation_scan.csv", ["t_prime", "dz2"],
                  [[float(t), s1.advanced(b_prime * t).dz2] for t in scan])
    gammas = np.geomspace(1.0, 1000.0, 61)
    run.write_csv("enhancement_curve.csv", ["gamma", "enhancement"],
                  [[float(g), enhancement(float(g), params.N, q)] for g in gammas])
    d = rep.as_dict()
    prov = d.pop("provenance")
    out = {k: (num(v, prov[k]) if isinstance(v, float) else v) for k, v in d.items()}
    out["regime"] = {"value": rep.regime, "provenance": "model"}
    out["q"] = num(q, q_prov, q_se)
    out["b_prime"] = num(b_prime, "analytic")
    out["t_prime"] = num(t_prime, "analytic")
    out["phase_accum_after_expansion"] = num(s1.phase_accum, "analytic")
    return out


def _epr_record(params, state, q, p_diff=None, p_diff_se=None):
    met = epr_metrics_analytic(params, state, q, p_diff)
    wit = epr_witness(met)
    md = met.as_dict()
    src = md.pop("p_diff_source")
    out = {}
    for k, v in md.items():
        prov = "analytic"
        if k in ("p_diff_var", "product_dd", "product_ds") and src == "sampled":
            prov = "sampled"
        out[k] = num(v, prov, p_diff_se if k == "p_diff_var" else None)
    out["witness"] = {"entangled": wit.entangled, "ratio": num(wit.ratio, "analytic"), "pair": wit.pair}
    return out, met, wit


def run_epr(run: Run):
    params, blk = run.params, run.cfg.epr
    params.require_bound()
    q, q_prov, q_se = run.resolve_q(blk.q)
    state0 = PulseCenterState(shot_noise_dp(params, q), 0.0, params.N)
    recs, rows = [], []
    for g in blk.gammas:
        p1, _, s2, *_ = _expand_and_compensate(params, state0, g, 200.0, None)
        p_diff = p_se = None
        if blk.sample_p_diff:
            v = np.concatenate([np.ones(params.n), -np.ones(params.m)])
            e = momentum_quadratics(p1, s2, run.mcmc, v)
            p_diff, p_se = e.value, e.se
        rec, met, wit = _epr_record(p1, s2, q, p_diff, p_se)
        rec["gamma"] = num(g, "analytic")
        recs.append(rec)
        rows.append([g, met.var_sum_half, met.var_diff_half, met.p_sum_var, met.p_diff_var,
                     met.product_dd, met.product_ds, met.product_sd, int(wit.entangled)])
    run.write_csv("epr_vs_gamma.csv", ["gamma", "var_sum_half", "var_diff_half", "p_sum_var",
                                       "p_diff_var", "product_dd", "product_ds", "product_sd",
                                       "entangled"], rows)
    return {"q": num(q, q_prov, q_se), "conventions": "P_X, P_Y are total mode momenta; [X, P_X] = i",
            "by_gamma": recs}


def run_classical(run: Run):
    params, blk = run.params, run.cfg.classical
    params.require_bound()
    W = blk.width
    field = vector_soliton(params, W, M=blk.M, halfwidth=blk.halfwidth_widths * W)
    T = blk.periods * soliton_period(W, params.b)
    dt = blk.dt or default_dt(field, params, W)
    steps = int(math.ceil(T / dt))
    dt = T / steps
    out_field = propagate(field, params, StepPlan(dt, steps))
    ref = vector_soliton(params, W, M=blk.M, halfwidth=blk.halfwidth_widths * W, t=out_field.t)
    linf = float(max(np.max(np.abs(out_field.u - ref.u)), np.max(np.abs(out_field.v - ref.v))))
    write_profile_csv(run.data / "profile_initial.csv", field)
    write_profile_csv(run.data / "profile_final.csv", out_field)
    if blk.snapshot:
        write_snapshot(run.data / "field_final.bin", out_field)
    out = {
        "steps": steps,
        "dt": num(dt, "analytic"),
        "linf_error": num(linf, "analytic"),
        "power_drift": num(abs(out_field.power() - field.power()) / field.power(), "analytic"),
        "fitted_width": num(fit_soliton_width(out_field), "analytic"),
        "amplitude": num(float(np.abs(field.u).max()), "analytic"),
    }
    if blk.ramp_gamma is not None:
        W0 = 4.0 * abs(params.b) / ((1.0 + params.B) * abs(params.c) * params.N)
        probe = ramp_stability_probe(params, blk.ramp_gamma, blk.ramp_periods * soliton_period(W0, params.b))
        write_profile_csv(run.data / "profile_ramp_final.csv", probe.pop("final_field"))
        out["ramp"] = {k: (num(v, "analytic") if isinstance(v, float) else v) for k, v in probe.items()}
    return out


def run_full_pipeline(run: Run):
    params = run.params
    params.require_bound()
    pblk = run.cfg.protocol
    q, q_prov, q_se = run.resolve_q(pblk.q)
    state = PulseCenterState(shot_noise_dp(params, q), 0.0, params.N)
    stages, cur_p, cur_s = [], params, state
    margin = math.nan
    for stage in run.cfg.pipeline.stages:
        if stage == "adiabatic":
            sched = AdiabaticSchedule.linear(cur_p.c, cur_p.c / pblk.gamma, pblk.duration)
            cur_p, cur_s, margin = apply_adiabatic(cur_p, sched, cur_s)
            stages.append({"stage": stage, "c": num(cur_p.c, "analytic"),
                           "phase_accum": num(cur_s.phase_accum, "analytic"),
                           "margin": num(margin, "analytic")})
        elif stage == "dispersion-management":
            b_prime = pblk.b_prime if pblk.b_prime is not None else -params.b
            t_prime = compensation_time(cur_s, b_prime) if cur_s.phase_accum != 0 else 0.0
            cur_s = apply_dispersion_management(cur_s, b_prime, t_prime)
            stages.append({"stage": stage, "b_prime": num(b_prime, "analytic"),
                           "t_prime": num(t_prime, "analytic"), "dz2": num(cur_s.dz2, "analytic")})
        elif stage == "epr":
            rec, _, _ = _epr_record(cur_p, cur_s, q)
            stages.append({"stage": stage} | rec)
    out = {"q": num(q, q_prov, q_se), "stages": stages}
    rep = enhancement_report(params, cur_p, cur_s, q, margin)
    out["enhancement"] = num(rep.enhancement, "model")
    out["gamma"] = num(rep.gamma, "analytic")
    out["cap"] = num(rep.cap, "model")
    out["regime"] = {"value": rep.regime, "provenance": "model"}
    epr = [s for s in stages if s["stage"] == "epr"]
    if epr:
        out["epr_witness"] = epr[-1]["witness"]
    return out


RUNNERS = {
    "bethe-eval": run_bethe_eval,
    "eigencheck": run_eigencheck,
    "sample": run_sample,
    "q-table": run_q_table,
    "protocol": run_protocol,
    "epr": run_epr,
    "classical": run_classical,
    "full-pipeline": run_full_pipeline,
}


# ------------------------------------------------------------------ driver

def load_config(path, kind, seed=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.kind is not None and cfg.kind != kind:
        raise ConfigError(f"config kind {cfg.kind!r} does not match command {kind!r}")
    updates = {"kind": kind}
    if seed is not None:
        updates["seed"] = seed
    return cfg.model_copy(update=updates)


def _validate_domain(cfg: ExperimentConfig):
    p = cfg.params
    params = SolitonParams(p.b, p.c, p.B, p.n, p.m)
    m = cfg.mcmc
    McmcConfig(m.chains, m.samples_per_chain, m.burn_in, m.proposal_stddev, cfg.seed, m.tune)
    if cfg.kind in ("sample", "q-table", "protocol", "epr", "classical", "full-pipeline"):
        params.require_bound()
    if cfg.kind in ("epr", "full-pipeline") and "epr" in (cfg.pipeline.stages if cfg.kind == "full-pipeline" else ["epr"]):
        if params.n != params.m or params.B != 1:
            raise ConfigError("EPR metrics need n = m and B = 1")
    if cfg.kind == "eigencheck":
        for M in cfg.grid.points_per_axis:
            GridSpec(M, cfg.grid.box_halfwidth)
        if params.N > 3:
            raise ConfigError("eigencheck supports n + m <= 3")


def execute(kind, config_path, seed=None, out=None) -> int:
    try:
        cfg = load_config(config_path, kind, seed)
        _validate_domain(cfg)
    except (ConfigError, NoBoundStateError, ValueError) as exc:
        print(f"solitonq: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = Path(out or cfg.output or f"solitonq-{kind}")
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        print(f"solitonq: {out_dir} is locked by another run", file=sys.stderr)
        return EXIT_INVALID
    os.close(fd)
    stage = out_dir / f".staging-{os.getpid()}"
    if stage.exists():
        shutil.rmtree(stage)
    stage.mkdir()
    handler = logging.FileHandler(stage / "log.txt")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    code = EXIT_OK
    try:
        log.info("kind=%s seed=%d backend=%s workers=%d", kind, cfg.seed, _accel.backend(),
                 _accel.worker_count())
        t0 = time.perf_counter()
        run = Run(cfg, stage)
        results = RUNNERS[kind](run)
        log.info("finished in %.2fs", time.perf_counter() - t0)
        doc = {"kind": kind, "seed": cfg.seed, "params": cfg.params.model_dump(), "results": results}
        (stage / "results.json").write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n",
                                            encoding="utf-8")
        (stage / "config.resolved.json").write_text(
            json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except (SamplerError, QConvergenceError, PropagationError, FitError) as exc:
        log.error("numerical diagnostic failure: %s", exc)
        print(f"solitonq: numerical diagnostic failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except (ConfigError, NoBoundStateError, ValueError) as exc:
        log.error("invalid configuration: %s", exc)
        print(f"solitonq: invalid configuration: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    finally:
        log.removeHandler(handler)
        handler.close()
        try:
            if code == EXIT_OK:
                for item in stage.iterdir():
                    dest = out_dir / item.name
                    if dest.is_dir():
                        shutil.rmtree(dest)
                    elif dest.exists():
                        dest.unlink()
                    shutil.move(str(item), str(dest))
            shutil.rmtree(stage, ignore_errors=True)
        finally:
            lock.unlink(missing_ok=True)
    return code


def main(argv=None):
    ap = argparse.ArgumentParser(prog="solitonq", description="Quantum vector soliton experiments")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True, help="YAML experiment configuration")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None, help="output directory")
    args = ap.parse_args(argv)
    return execute(args.kind, args.config, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
