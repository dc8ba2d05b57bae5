"""Batch experiment runner.

Reads a strict JSON configuration (unknown keys are errors), executes the
requested pipeline or study, and writes machine-readable results: a
``solution.csv`` with classical and lifted-evolution solutions side by
side, a versioned ``report.json`` with every metric tagged by the
operation that produced it, and ``bounds.csv`` for benchmark kinds.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .allatonce import assemble_block_system, decay_certificate, embed_homogeneous, steady_state
from .bounds import bound_curve
from .complexity import complexity_report, telegraph_branch
from .frontends import (
    HeatConfig,
    TelegraphConfig,
    dissipative_order_study,
    heat_build,
    heat_grid,
    heat_problem,
    steps_for_dt,
    telegraph_build,
    telegraph_chi,
)
from .imex import classical_imex_solve
from .schrodingerize import run_pipeline

KINDS = (
    "heat1d",
    "heat2d",
    "telegraph",
    "evoltime-bench",
    "complexity-report",
    "epsilon-sweep",
    "order-study",
)


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _check_keys(obj: dict, allowed, where: str):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _profile(spec, where: str):
    """Scalar time profile from a config dict."""
    if isinstance(spec, (int, float)):
        v = float(spec)
        return lambda t: v
    _check_keys(spec, {"type", "value", "c0", "c1", "scale", "shift"}, where)
    kind = spec.get("type")
    if kind == "constant":
        v = float(spec["value"])
        return lambda t: v
    if kind == "affine":
        c0, c1 = float(spec["c0"]), float(spec["c1"])
        return lambda t: c0 + c1 * t
    if kind == "inverse_linear":
        s, c = float(spec["scale"]), float(spec.get("shift", 1.0))
        return lambda t: s / (t + c)
    raise ConfigError(f"unknown profile type {kind!r} in {where}")


def _field1d(spec, where: str):
    _check_keys(spec, {"type", "value", "k", "amplitude"}, where)
    kind = spec.get("type")
    amp = float(spec.get("amplitude", 1.0))
    if kind == "constant":
        v = float(spec["value"])
        return lambda x: v * np.ones_like(np.atleast_1d(x))
    if kind == "sin":
        k = float(spec.get("k", 1))
        return lambda x: amp * np.sin(k * np.pi * np.asarray(x))
    if kind == "cos":
        k = float(spec.get("k", 1))
        return lambda x: amp * np.cos(k * np.pi * np.asarray(x))
    raise ConfigError(f"unknown field type {kind!r} in {where}")


def _atomic_write(path: str, text: str):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _pipeline_knobs(cfg: dict):
    return {
        "method": cfg.get("method", "single-point"),
        "dp_target": float(cfg.get("dp_target", 0.3)),
        "np_cap": int(cfg.get("np_cap", 2 ** 12)),
    }


_HEAT_KEYS = {
    "kind", "schema", "Nx", "a", "epsilon", "u0", "T", "delta", "Nt", "dt_rule",
    "K", "method", "np_cap", "dp_target", "seed",
}


def _heat_config(cfg: dict, d: int) -> HeatConfig:
    _check_keys(cfg, _HEAT_KEYS, "heat config")
    a_spec = cfg["a"]
    if not isinstance(a_spec, list):
        a_spec = [a_spec] * d
    if len(a_spec) != d:
        raise ConfigError("need one diffusivity profile per dimension")
    a_funcs = [_profile(s, f"a[{k}]") for k, s in enumerate(a_spec)]
    u0_spec = cfg.get("u0", {"type": "constant", "value": 1.0})
    f1 = _field1d(u0_spec, "u0")
    u0 = lambda x: float(np.prod([f1(np.atleast_1d(xi))[0] for xi in np.atleast_1d(x)]))
    return HeatConfig(
        d=d,
        Nx=int(cfg["Nx"]),
        a_funcs=a_funcs,
        u0_func=u0,
        T=float(cfg["T"]),
        delta=float(cfg["delta"]),
        epsilon=float(cfg.get("epsilon", 1.0)),
    )


def _heat_nt(cfg: dict, hc: HeatConfig) -> int:
    if "Nt" in cfg:
        return int(cfg["Nt"])
    rule = cfg.get("dt_rule", {"type": "dx2_over", "factor": 2.0})
    _check_keys(rule, {"type", "factor"}, "dt_rule")
    if rule.get("type") != "dx2_over":
        raise ConfigError("heat dt_rule must be of type 'dx2_over'")
    dt = hc.h ** 2 / float(rule.get("factor", 2.0))
    return steps_for_dt(hc.T, dt)


def _run_heat(cfg: dict, d: int, outdir: str) -> dict:
    hc = _heat_config(cfg, d)
    Nt = _heat_nt(cfg, hc)
    prob = heat_problem(hc)
    sysm = heat_build(hc, Nt)
    bs = assemble_block_system(sysm, prob.u0)
    ss = steady_state(bs)
    cert = decay_certificate(bs, delta_ss=hc.delta / 3.0)
    emb = embed_homogeneous(bs, K=float(cfg.get("K", 1.0)))
    res = run_pipeline(emb, cert, delta_fourier=hc.delta / 3.0, **_pipeline_knobs(cfg))
    traj = classical_imex_solve(sysm, prob.u0)
    stacked_classical = np.concatenate(traj[1:][::-1])
    err_stacked = float(
        np.linalg.norm(res.u_stacked - stacked_classical) / np.linalg.norm(stacked_classical)
    )
    final_c = traj[-1]
    final_q = res.slices[-1]
    nfc = float(np.linalg.norm(final_c))
    err_final = float(np.linalg.norm(final_q - final_c) / nfc) if nfc > 0 else float("nan")
    grid = heat_grid(hc)
    header = [f"x{k+1}" for k in range(d)] + ["u_classical", "u_quantum"]
    rows = [list(grid[i]) + [final_c[i], final_q[i]] for i in range(grid.shape[0])]
    _write_csv(os.path.join(outdir, "solution.csv"), header, rows)

    crep = complexity_report(
        sysm, prob.u0, Np=res.grid.Np, T=hc.T, T_evol=cert.T_evol, delta=hc.delta,
        b1_max=float(max(np.linalg.norm(prob.b1(t)) for t in np.linspace(0, hc.T, 9))),
        u_min=float(min(np.linalg.norm(u) for u in traj)),
        w0_norm=float(np.linalg.norm(emb.init)),
        b_norm=float(np.linalg.norm(bs.F)),
        wT_norm=float(np.linalg.norm(np.concatenate([ss, emb.K * np.ones(emb.n_aux)]))),
        K=emb.K,
    )
    return {
        "metrics": {
            "error_rel_l2_stacked": err_stacked,
            "error_rel_l2_final_block": err_final,
            "steady_vs_classical": float(
                np.linalg.norm(ss - stacked_classical) / np.linalg.norm(stacked_classical)
            ),
            "mode_norm_drift": res.mode_norm_drift,
            "trunc_estimate": res.trunc_estimate,
            "methods_disagreement": float(
                np.linalg.norm(res.u_single_point - res.u_integral)
            ),
        },
        "certificates": {
            "T_evol": cert.T_evol,
            "T_evol_numeric": cert.T_evol_numeric,
            "weyl_bound": cert.weyl_bound,
            "lambda_min_H1": cert.lambda_min_H1,
            "weyl_certified": cert.weyl_certified,
            "t_run": res.t_run,
            "p_diamond_eff": res.p_diamond_eff,
        },
        "grid": {"Np": res.grid.Np, "Lp": res.grid.Lp, "Rp": res.grid.Rp},
        "complexity": {k: v for k, v in vars(crep).items()},
        "Nt": Nt,
        "provenance": {
            "error_rel_l2_stacked": "schrodingerize.run_pipeline vs imex.classical_imex_solve",
            "T_evol": "allatonce.decay_certificate",
            "queries": "complexity.berry_queries",
            "steady_vs_classical": "allatonce.steady_state vs imex.classical_imex_solve",
        },
    }


_TELE_KEYS = {
    "kind", "schema", "Nx", "beta", "epsilon", "a", "u0", "v0", "T", "delta",
    "dt_factor", "K", "method", "np_cap", "dp_target", "seed",
}


def _telegraph_config(cfg: dict) -> TelegraphConfig:
    _check_keys(cfg, _TELE_KEYS, "telegraph config")
    a = _profile(cfg["a"], "a")
    eps = float(cfg["epsilon"])
    u0_spec = cfg.get("u0", {"type": "sin", "k": 1})
    u0 = _field1d(u0_spec, "u0")
    v0_spec = cfg.get("v0", {"type": "wellprepared"})
    if isinstance(v0_spec, dict) and v0_spec.get("type") == "wellprepared":
        # v(0,x) = -(a(0)-eps^2) du0/dx for the k=1 sine profile
        k = float(u0_spec.get("k", 1)) if u0_spec.get("type") == "sin" else 1.0
        amp = float(u0_spec.get("amplitude", 1.0))
        A0 = a(0.0) - eps ** 2
        v0 = lambda x: -A0 * amp * k * np.pi * np.cos(k * np.pi * np.asarray(x))
    else:
        v0 = _field1d(v0_spec, "v0")
    K = cfg.get("K", "sqrt_nx")
    Kval = None if K == "sqrt_nx" else float(K)
    return TelegraphConfig(
        Nx=int(cfg["Nx"]), beta=float(cfg["beta"]), epsilon=eps, a_func=a,
        u0_func=u0, v0_func=v0, T=float(cfg["T"]), delta=float(cfg["delta"]),
        K=Kval, dt_factor=float(cfg.get("dt_factor", 0.5)),
    )


def _run_telegraph(cfg: dict, outdir: str) -> dict:
    tc = _telegraph_config(cfg)
    Nt = steps_for_dt(tc.T, tc.default_dt())
    tsys = telegraph_build(tc, Nt)
    bs = assemble_block_system(tsys.system, tsys.w0_hat)
    ss = steady_state(bs)
    cert = decay_certificate(bs, delta_ss=tc.delta / 3.0)
    chi = telegraph_chi(tc.Nx, Nt)
    emb = embed_homogeneous(bs, K=tc.K_value, chi=chi)
    res = run_pipeline(emb, cert, delta_fourier=tc.delta / 3.0, **_pipeline_knobs(cfg))
    traj = classical_imex_solve(tsys.system, tsys.w0_hat)
    uc, vc = tsys.recover_trajectory(traj)
    qs = np.vstack([tsys.w0_hat, np.stack(res.slices)])
    uq, vq = tsys.recover_trajectory(qs)
    err_u = float(np.linalg.norm(uq - uc) / np.linalg.norm(uc))
    err_v = float(np.linalg.norm(vq - vc) / np.linalg.norm(vc))
    stacked_classical = np.concatenate(traj[1:][::-1])
    err_stacked = float(
        np.linalg.norm(res.u_stacked - stacked_classical) / np.linalg.norm(stacked_classical)
    )
    x = np.arange(1, tc.Nx + 1) * tc.h
    header = ["x", "u_classical", "u_quantum", "v_classical", "v_quantum"]
    rows = [[x[i], uc[-1][i], uq[-1][i], vc[-1][i], vq[-1][i]] for i in range(tc.Nx)]
    _write_csv(os.path.join(outdir, "solution.csv"), header, rows)

    branch = telegraph_branch(
        tc.Nx, Nt, tsys.lam_tilde, tc.epsilon, tsys.system.tau, bs.F, bs.steps,
        K=tc.K_value,
    )
    return {
        "metrics": {
            "error_rel_l2_stacked": err_stacked,
            "error_rel_l2_u": err_u,
            "error_rel_l2_v": err_v,
            "mode_norm_drift": res.mode_norm_drift,
            "trunc_estimate": res.trunc_estimate,
            "methods_disagreement": float(
                np.linalg.norm(res.u_single_point - res.u_integral)
            ),
        },
        "certificates": {
            "T_evol": cert.T_evol,
            "weyl_bound": cert.weyl_bound,
            "lambda_min_H1": cert.lambda_min_H1,
            "lambda_tilde": tsys.lam_tilde,
            "t_run": res.t_run,
            "p_diamond_eff": res.p_diamond_eff,
        },
        "grid": {"Np": res.grid.Np, "Lp": res.grid.Lp, "Rp": res.grid.Rp},
        "physical_branch": {
            "lam_phys_formula": branch.lam_phys_formula,
            "lam_phys_numeric": branch.lam_phys_numeric,
            "coupling": branch.coupling,
            "K_required": branch.K_required,
            "K_used": tc.K_value,
            "gK": branch.gK,
            "chi_norm_sq": branch.chi_norm_sq,
        },
        "Nt": Nt,
        "provenance": {
            "error_rel_l2_u": "frontends.telegraph_recover on run_pipeline vs classical_imex_solve",
            "lam_phys_formula": "complexity.telegraph_branch",
            "T_evol": "allatonce.decay_certificate",
        },
    }


def _run_bench(cfg: dict, outdir: str, seed: int) -> dict:
    _check_keys(cfg, {"kind", "schema", "dim", "count", "ts", "seed"}, "bench config")
    dim = int(cfg.get("dim", 6))
    count = int(cfg.get("count", 5))
    ts = [float(t) for t in cfg.get("ts", [0.1, 0.5, 1.0, 2.0, 5.0])]
    rng = np.random.default_rng(seed)
    rows = []
    violations = 0
    for trial in range(count):
        G = rng.standard_normal((dim, dim))
        H = np.eye(dim) + 0.3 * (G + G.T) / 2 + 0.4 * (G - G.T) / 2
        curve = bound_curve(H, ts)
        for i, t in enumerate(ts):
            jd = curve.jordan[i] if curve.jordan is not None else float("nan")
            rows.append([trial, t, curve.exact[i], curve.lognorm[i], jd, curve.schur[i]])
            if curve.exact[i] > curve.lognorm[i] * (1 + 1e-8):
                violations += 1
    _write_csv(
        os.path.join(outdir, "bounds.csv"),
        ["trial", "t", "exact", "lognorm", "jordan", "schur"],
        rows,
    )
    return {
        "metrics": {"bound_violations": violations, "trials": count},
        "provenance": {"bounds": "bounds.bound_curve"},
    }


def _run_order_study(cfg: dict, outdir: str) -> dict:
    _check_keys(
        cfg, {"kind", "schema", "betas", "Nx_list", "T", "c_tau", "eps", "seed"},
        "order-study config",
    )
    betas = cfg.get("betas", [1.0, 2.0, 4.0])
    kwargs = {}
    if "Nx_list" in cfg:
        kwargs["Nx_list"] = tuple(int(n) for n in cfg["Nx_list"])
    if "T" in cfg:
        kwargs["T"] = float(cfg["T"])
    if "c_tau" in cfg:
        kwargs["c_tau"] = float(cfg["c_tau"])
    if "eps" in cfg:
        kwargs["eps"] = float(cfg["eps"])
    out = {}
    rows = []
    for b in betas:
        r = dissipative_order_study(float(b), **kwargs)
        out[str(b)] = {
            "slope": r.slope,
            "predicted_slope": r.predicted_slope,
            "monotone": r.monotone,
            "h": list(map(float, r.h_list)),
            "errors": list(map(float, r.errors)),
        }
        for h, e in zip(r.h_list, r.errors):
            rows.append([b, h, e])
    _write_csv(os.path.join(outdir, "orders.csv"), ["beta", "h", "error"], rows)
    return {"metrics": {"orders": out},
            "provenance": {"orders": "frontends.dissipative_order_study"}}


def _run_complexity(cfg: dict, outdir: str) -> dict:
    _check_keys(cfg, {"kind", "schema", "base", "seed"}, "complexity-report config")
    base = dict(cfg["base"])
    kind = base.get("kind")
    if kind in ("heat1d", "heat2d"):
        rep = _run_heat(base, 1 if kind == "heat1d" else 2, outdir)
    elif kind == "telegraph":
        rep = _run_telegraph(base, outdir)
    else:
        raise ConfigError("complexity-report base must be heat1d, heat2d or telegraph")
    return rep


def _dispatch(cfg: dict, outdir: str, seed: int) -> dict:
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {KINDS}")
    if kind == "heat1d":
        return _run_heat(cfg, 1, outdir)
    if kind == "heat2d":
        return _run_heat(cfg, 2, outdir)
    if kind == "telegraph":
        return _run_telegraph(cfg, outdir)
    if kind == "evoltime-bench":
        return _run_bench(cfg, outdir, seed)
    if kind == "order-study":
        return _run_order_study(cfg, outdir)
    if kind == "complexity-report":
        return _run_complexity(cfg, outdir)
    raise ConfigError("epsilon-sweep configs must be run through the 'sweep' command")


def _finalize_report(cfg, payload, outdir, t0):
    payload = dict(payload)
    payload.update({
        "schema": 1,
        "config": cfg,
        "wallclock_s": time.monotonic() - t0,
        "version": __version__,
    })
    _atomic_write(os.path.join(outdir, "report.json"),
                  json.dumps(payload, indent=2, default=float))
    return payload


def _cmd_run(args) -> int:
    t0 = time.monotonic()
    with open(args.config) as fh:
        cfg = json.load(fh)
    os.makedirs(args.out, exist_ok=True)
    try:
        payload = _dispatch(cfg, args.out, args.seed)
    except (ConfigError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
        _atomic_write(os.path.join(args.out, "report.json"),
                      json.dumps({"schema": 1, "error": str(exc), "config": cfg}, indent=2))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    _finalize_report(cfg, payload, args.out, t0)
    return 0


def _cmd_sweep(args) -> int:
    t0 = time.monotonic()
    with open(args.config) as fh:
        cfg = json.load(fh)
    try:
        _check_keys(cfg, {"kind", "schema", "base", "epsilons", "seed"}, "sweep config")
        eps_list = [float(e) for e in cfg.get("epsilons", [])]
        if len(eps_list) < 2:
            raise ConfigError("epsilon sweep needs at least two epsilon values")
        base = dict(cfg["base"])
        if base.get("kind") not in ("heat1d", "heat2d", "telegraph"):
            raise ConfigError("sweep base must be heat1d, heat2d or telegraph")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)

    def one(eps):
        sub = dict(base)
        sub["epsilon"] = eps
        subdir = os.path.join(args.out, f"eps_{eps:g}")
        os.makedirs(subdir, exist_ok=True)
        payload = _dispatch(sub, subdir, args.seed)
        _finalize_report(sub, payload, subdir, t0)
        return payload

    try:
        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                payloads = list(pool.map(one, eps_list))
        else:
            payloads = [one(e) for e in eps_list]
    except (np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
        _atomic_write(os.path.join(args.out, "report.json"),
                      json.dumps({"schema": 1, "error": str(exc), "config": cfg}, indent=2))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2

    key = "error_rel_l2_stacked"
    errs = [p["metrics"][key] for p in payloads]
    nts = [p["Nt"] for p in payloads]
    agg = {
        "metrics": {
            "per_epsilon": {f"{e:g}": {"error": err, "Nt": nt}
                            for e, err, nt in zip(eps_list, errs, nts)},
            "error_spread": float(max(errs) - min(errs)),
            "error_max": float(max(errs)),
            "Nt_spread": int(max(nts) - min(nts)),
        },
        "provenance": {"per_epsilon": "cli.sweep over run_pipeline"},
    }
    _finalize_report(cfg, agg, args.out, t0)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qimex",
        description="batch runner for implicit-explicit warped-phase pipelines",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", _cmd_run), ("sweep", _cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
