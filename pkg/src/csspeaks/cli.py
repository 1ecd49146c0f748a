"""Batch front end: configuration, orchestration, and result emission.

Subcommands
-----------
ground-state   solve and cache the radial profile, print tail diagnostics
gauge-check    gauge fields + constraint residuals for the configured ansatz
verify         the invariant battery over the configured epsilon list
solve          maximize the reduced energy and emit the solution fields
sweep          concentration sweep over a decreasing epsilon list

All outputs land in --out as CSV/JSON (plus field files) and carry the
config hash in their headers, so identical configurations reproduce
byte-identical results on a fixed thread count.

Exit codes: 0 pass, 1 budget exceeded, 2 solver failure, 3 infeasible
configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import grid as grid_mod
from .energy import (
    ProblemSpec,
    evaluate_I,
    expansion_prediction,
    fit_interaction_constant,
    first_variation,
    physical_l2,
    second_variation_apply,
)
from .errors import InfeasibleError, SolverError
from .gauge import chern_simons_identity, compute_gauge, gauge_residuals
from .grid import Field2D, Grid2D, save_field
from .ground_state import (
    check_decay_asymptotics,
    load_profile,
    ode_residual,
    save_profile,
    solve_ground_state,
)
from .landscape import (
    SearchConfig,
    concentration_sweep,
    maximize_F,
    positivity_check,
)
from .potentials import from_config as potential_from_config
from .reduction import PeakConfiguration, build_ansatz

EXIT_PASS = 0
EXIT_BUDGET = 1
EXIT_SOLVER = 2
EXIT_INFEASIBLE = 3

DEFAULT_CONFIG = {
    "p": 4.0,
    "epsilon": [0.4, 0.2, 0.1],
    "k": 1,
    "potential": {
        "family": "radial_bump",
        "base": 0.5,
        "height": 0.5,
        "x0": [0.0, 0.0],
        "delta": 2.0,
    },
    "grid": {"half_width": 8.0, "n": 256},
    "tolerances": {"ground_state_tol": 1e-8, "r_max": 32.0},
    "search": {"budget": 80, "initial_step": 0.5, "min_step": 0.04,
               "init_scale": 2.0},
    "cache_dir": "cache",
    "out_dir": "out",
    "seed": 0,
    "threads": 1,
    "plot": False,
}


@dataclass
class RunConfig:
    raw: dict
    p: float
    epsilons: list[float]
    k: int
    potential_cfg: dict
    grid: Grid2D
    ground_state_tol: float
    r_max: float
    search: SearchConfig
    cache_dir: Path
    out_dir: Path
    seed: int
    threads: int
    plot: bool
    config_hash: str = field(default="")

    @classmethod
    def load(cls, path: str | None, overrides: dict | None = None) -> "RunConfig":
        cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
        if path:
            with open(path) as fh:
                user = json.load(fh)
            if "potential" in user:  # a family spec replaces the default wholesale
                cfg["potential"] = user.pop("potential")
            _deep_update(cfg, user)
        for key, val in (overrides or {}).items():
            if val is not None:
                cfg[key] = val
        eps = cfg["epsilon"]
        eps_list = [float(e) for e in (eps if isinstance(eps, list) else [eps])]
        if not eps_list or any(not 0 < e < 1 for e in eps_list):
            raise ValueError(f"epsilon values must lie in (0, 1), got {eps_list}")
        if not float(cfg["p"]) > 2:
            raise ValueError(f"p must exceed 2, got {cfg['p']}")
        if int(cfg["k"]) < 1:
            raise ValueError(f"k must be a positive integer, got {cfg['k']}")
        hashed = {k: v for k, v in cfg.items()
                  if k not in ("out_dir", "cache_dir")}
        digest = hashlib.sha256(
            json.dumps(hashed, sort_keys=True).encode()
        ).hexdigest()[:12]
        sc = cfg["search"]
        return cls(
            raw=cfg,
            p=float(cfg["p"]),
            epsilons=eps_list,
            k=int(cfg["k"]),
            potential_cfg=cfg["potential"],
            grid=Grid2D(half_width=float(cfg["grid"]["half_width"]),
                        n=int(cfg["grid"]["n"])),
            ground_state_tol=float(cfg["tolerances"]["ground_state_tol"]),
            r_max=float(cfg["tolerances"]["r_max"]),
            search=SearchConfig(
                budget=int(sc["budget"]),
                initial_step=float(sc["initial_step"]),
                min_step=float(sc["min_step"]),
                init_scale=float(sc["init_scale"]),
                seed=int(cfg["seed"]),
            ),
            cache_dir=Path(cfg["cache_dir"]),
            out_dir=Path(cfg["out_dir"]),
            seed=int(cfg["seed"]),
            threads=int(cfg["threads"]),
            plot=bool(cfg["plot"]),
            config_hash=digest,
        )

    def make_potential(self):
        return potential_from_config(self.potential_cfg)

    def spec(self, epsilon: float, gauge_coupling: float = 1.0) -> ProblemSpec:
        return ProblemSpec(
            p=self.p,
            potential=self.make_potential(),
            epsilon=epsilon,
            gauge_coupling=gauge_coupling,
        )


def _deep_update(base: dict, extra: dict) -> None:
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], val)
        else:
            base[key] = val


def _write_json(path: Path, payload: dict, cfg: RunConfig) -> None:
    payload = {"config_hash": cfg.config_hash, **payload}
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonify)
        fh.write("\n")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_csv(path: Path, header: list[str], rows: list[list],
               cfg: RunConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# config={cfg.config_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _pts_str(points: np.ndarray) -> str:
    return ";".join(f"{v:.12g}" for v in np.asarray(points).ravel())


def _profile_cache_path(cfg: RunConfig, v0: float) -> Path:
    tag = f"p{cfg.p:.6g}_v0{v0:.6g}_tol{cfg.ground_state_tol:.3g}"
    return cfg.cache_dir / f"ground_state_{tag}.csv"


def get_profile(cfg: RunConfig, v0: float, quiet: bool = False):
    """Load the cached profile for (p, v0, tol) or solve and cache it."""
    path = _profile_cache_path(cfg, v0)
    if path.exists():
        prof, meta = load_profile(path)
        if meta.get("r_max", 0.0) >= cfg.r_max:
            if not quiet:
                print(f"profile cache hit: {path}")
            return prof, meta
    prof = solve_ground_state(cfg.p, v0, tol=cfg.ground_state_tol,
                              r_max=cfg.r_max)
    meta = {"tol": cfg.ground_state_tol}
    path.parent.mkdir(parents=True, exist_ok=True)
    save_profile(path, prof, meta)
    if not quiet:
        print(f"profile cached: {path}")
    return prof, meta


def get_interaction_constant(cfg: RunConfig, prof, spec: ProblemSpec) -> float:
    """Interaction constant from the profile sidecar, fitting on a miss."""
    path = _profile_cache_path(cfg, spec.v0)
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    meta = {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
    if "interaction_fit" not in meta:
        fit_spec = ProblemSpec(p=cfg.p, potential=spec.potential, epsilon=0.05,
                               gauge_coupling=spec.gauge_coupling)
        meta["interaction_fit"] = fit_interaction_constant(fit_spec, prof)
        save_profile(path, prof, meta)
    return float(meta["interaction_fit"]["c_fit"])


def _central_config(cfg: RunConfig, epsilon: float) -> PeakConfiguration:
    pot = cfg.make_potential()
    return PeakConfiguration(
        epsilon=epsilon, k=1, points=np.array([pot.x0]), delta=pot.delta,
        x0=pot.x0,
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_ground_state(cfg: RunConfig) -> int:
    pot = cfg.make_potential()
    v0 = pot.at_x0()
    prof, _ = get_profile(cfg, v0)
    rep = check_decay_asymptotics(prof)
    resid = ode_residual(prof)
    print(f"U(0) = {prof.u0:.12g}   residual = {resid:.3e}")
    print(
        f"tail window {rep.window}: slope = {rep.slope:.5f} "
        f"(normalized {rep.slope_normalized:.5f}), "
        f"amplitude spread = {rep.c_spread:.3e}, c_hat = {rep.c_hat:.6g}"
    )
    print(f"asymptotics {'pass' if rep.passed else 'FAIL'}")
    _write_json(
        cfg.out_dir / "ground_state.json",
        {
            "u0": prof.u0,
            "residual": resid,
            "slope": rep.slope,
            "slope_normalized": rep.slope_normalized,
            "c_hat": rep.c_hat,
            "c_spread": rep.c_spread,
            "passed": rep.passed,
        },
        cfg,
    )
    return EXIT_PASS if rep.passed else EXIT_BUDGET


def cmd_gauge_check(cfg: RunConfig) -> int:
    pot = cfg.make_potential()
    prof, _ = get_profile(cfg, pot.at_x0(), quiet=True)
    rows = []
    ok = True
    for eps in cfg.epsilons:
        peaks = _central_config(cfg, eps)
        u = build_ansatz(prof, peaks, cfg.grid)
        g = compute_gauge(u)
        rep = gauge_residuals(u, g)
        lhs, rhs = chern_simons_identity(u, g)
        cs_rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
        rho_max = float(np.max(u.values ** 2))
        budgets = (
            rep.curl / rho_max <= 5e-3
            and rep.coulomb / rho_max <= 5e-3
            and rep.a0_grad1 / max(rep.a0_scale, 1e-300) <= 5e-3
            and rep.a0_grad2 / max(rep.a0_scale, 1e-300) <= 5e-3
            and cs_rel <= 1e-2
        )
        ok = ok and budgets
        rows.append([eps, rep.curl / rho_max, rep.coulomb / rho_max,
                     rep.a0_grad1 / max(rep.a0_scale, 1e-300),
                     rep.a0_grad2 / max(rep.a0_scale, 1e-300),
                     cs_rel, rep.curl_sign, budgets])
        print(f"eps={eps}: curl {rep.curl / rho_max:.2e} "
              f"coulomb {rep.coulomb / rho_max:.2e} "
              f"a0 {rep.a0_grad1 / max(rep.a0_scale, 1e-300):.2e} "
              f"cs {cs_rel:.2e} {'ok' if budgets else 'BUDGET EXCEEDED'}")
        base = cfg.out_dir / f"gauge_eps{eps:g}"
        base.parent.mkdir(parents=True, exist_ok=True)
        for name, fld in (("a0", g.a0), ("a1", g.a1), ("a2", g.a2)):
            save_field(base.with_name(base.name + f"_{name}.f2d"), fld)
        _write_json(
            base.with_name(base.name + ".json"),
            {
                "source_norm": g.source_norm,
                "residuals": {
                    "curl": rep.curl, "coulomb": rep.coulomb,
                    "a0_grad1": rep.a0_grad1, "a0_grad2": rep.a0_grad2,
                    "curl_scale": rep.curl_scale, "a0_scale": rep.a0_scale,
                    "curl_sign": rep.curl_sign,
                },
                "chern_simons": {"lhs": lhs, "rhs": rhs, "rel": cs_rel},
            },
            cfg,
        )
    _write_csv(cfg.out_dir / "gauge_check.csv",
               ["eps", "curl_rel", "coulomb_rel", "a0_grad1_rel",
                "a0_grad2_rel", "cs_rel", "curl_sign", "ok"],
               rows, cfg)
    return EXIT_PASS if ok else EXIT_BUDGET


def cmd_verify(cfg: RunConfig) -> int:
    pot = cfg.make_potential()
    validation = pot.validate(np.random.default_rng(cfg.seed))
    if not validation["v2_strict_max"]:
        print("(V2) guard: potential has no strict maximum at x0; "
              "running the gauge/variational battery only")
    prof, _ = get_profile(cfg, pot.at_x0(), quiet=True)
    failures: list[str] = []
    rows = []

    rng = np.random.default_rng(cfg.seed)
    small = Grid2D(half_width=8.0, n=64)
    X1, X2 = small.meshes()
    env = np.exp(-(X1 ** 2 + X2 ** 2) / 6.0)

    def decayed_random():
        from scipy.ndimage import gaussian_filter

        return Field2D(small, env * gaussian_filter(
            rng.standard_normal(small.n * small.n).reshape(small.n, small.n), 2.0
        ))

    gauge_terms = []
    breakdowns = {}
    for eps in cfg.epsilons:
        spec = cfg.spec(eps)
        peaks = _central_config(cfg, eps)
        u = build_ansatz(prof, peaks, cfg.grid)
        g = compute_gauge(u)
        rep = gauge_residuals(u, g)
        lhs, rhs = chern_simons_identity(u, g)
        cs_rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
        rho_max = float(np.max(u.values ** 2))
        if rep.curl / rho_max > 5e-3 or rep.coulomb / rho_max > 5e-3:
            failures.append(f"gauge curl/coulomb budget at eps={eps}")
        if max(rep.a0_grad1, rep.a0_grad2) / max(rep.a0_scale, 1e-300) > 5e-3:
            failures.append(f"gauge a0 budget at eps={eps}")
        if cs_rel > 1e-2:
            failures.append(f"chern-simons identity at eps={eps}")
        if not g.boundary_decay_ok():
            failures.append(f"gauge boundary decay at eps={eps}")

        br = evaluate_I(spec, u)
        if abs(br.total - br.j_value) > 1e-10 * abs(br.total):
            failures.append(f"I vs J identity at eps={eps}")
        gauge_terms.append(br.gauge_term)
        breakdowns[str(eps)] = {
            "kinetic": br.kinetic, "potential_term": br.potential_term,
            "gauge_term": br.gauge_term, "nonlinear": br.nonlinear,
            "total": br.total,
        }

        pred = expansion_prediction(spec, prof, peaks)
        rows.append([eps, 1, float("nan"), br.total, pred, br.total - pred])

    if len(cfg.epsilons) >= 2:
        slope = np.polyfit(np.log(cfg.epsilons), np.log(gauge_terms), 1)[0]
        if not 3.6 <= slope <= 4.4:
            failures.append(f"gauge-term slope {slope:.2f} outside [3.6, 4.4]")
        print(f"gauge-term scaling slope: {slope:.3f}")

    # variational consistency at the first epsilon
    spec = cfg.spec(cfg.epsilons[0])
    uu, psi = decayed_random(), decayed_random()
    gvec = first_variation(spec, uu)
    h = 1e-4
    ip = evaluate_I(spec, Field2D(small, uu.values + h * psi.values)).total
    im = evaluate_I(spec, Field2D(small, uu.values - h * psi.values)).total
    fd = (ip - im) / (2 * h)
    an = physical_l2(spec, gvec, psi)
    rel1 = abs(fd - an) / max(abs(an), 1e-300)
    if rel1 > 1e-5:
        failures.append(f"first-variation FD consistency ({rel1:.2e})")
    lw = second_variation_apply(spec, uu, psi)
    gp = first_variation(spec, Field2D(small, uu.values + h * psi.values))
    gm = first_variation(spec, Field2D(small, uu.values - h * psi.values))
    fd2 = (gp.values - gm.values) / (2 * h)
    rel2 = float(np.max(np.abs(fd2 - lw.values)) / np.max(np.abs(lw.values)))
    if rel2 > 1e-4:
        failures.append(f"second-variation FD consistency ({rel2:.2e})")
    print(f"variational consistency: first {rel1:.2e}, second {rel2:.2e}")

    # two-peak comparison rows when the run is configured for pairs
    if cfg.k >= 2:
        eps = min(cfg.epsilons)
        spec = cfg.spec(eps)
        c_val = get_interaction_constant(cfg, prof, spec)
        for ratio in (6.0, 8.0):
            d = ratio * eps
            off = np.array([0.5 * d, 0.0])
            pot2 = cfg.make_potential()
            try:
                pair = PeakConfiguration(
                    epsilon=eps, k=2,
                    points=np.array([pot2.x0 + off, pot2.x0 - off]),
                    delta=pot2.delta, x0=pot2.x0,
                )
                u2 = build_ansatz(prof, pair, cfg.grid)
            except InfeasibleError as exc:
                print(f"pair row d/eps={ratio:g} skipped: {exc}")
                continue
            total = evaluate_I(spec, u2).total
            pred = expansion_prediction(spec, prof, pair,
                                        interaction_constant=c_val)
            rows.append([eps, 2, ratio, total, pred, total - pred])

    _write_csv(cfg.out_dir / "verify.csv",
               ["eps", "k", "d_over_eps", "I_total", "prediction",
                "discrepancy"], rows, cfg)
    _write_json(cfg.out_dir / "verify.json",
                {"failures": failures, "potential_validation": validation,
                 "breakdowns": breakdowns},
                cfg)
    if failures:
        for f in failures:
            print(f"budget exceeded: {f}")
        return EXIT_BUDGET
    print("verify: all budgets met")
    return EXIT_PASS


def cmd_solve(cfg: RunConfig) -> int:
    pot = cfg.make_potential()
    prof, _ = get_profile(cfg, pot.at_x0(), quiet=True)
    eps = min(cfg.epsilons)
    spec = cfg.spec(eps)
    run = maximize_F(spec, prof, cfg.k, search=cfg.search, grid=cfg.grid)
    ansatz = build_ansatz(prof, run.argmax, cfg.grid)
    u = Field2D(cfg.grid, ansatz.values + run.best_result.phi.values)
    g = compute_gauge(u)
    positive = positivity_check(u, ansatz)

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_field(out / "solution_u.f2d", u)
    for name, fld in (("a0", g.a0), ("a1", g.a1), ("a2", g.a2)):
        save_field(out / f"solution_{name}.f2d", fld)
    save_field(out / "solution_phi.f2d", run.best_result.phi)
    rows = [
        [_pts_str(c.points), c.value, c.phi_norm_eps] for c in run.candidates
    ]
    _write_csv(out / "landscape_candidates.csv",
               ["points", "F", "phi_norm_eps"], rows, cfg)
    _write_json(
        out / "solve.json",
        {
            "epsilon": eps,
            "k": cfg.k,
            "argmax": run.argmax.points,
            "F": run.best_value,
            "interior": run.interior_flag,
            "positive": positive,
            "evaluations": run.evaluations,
            "phi_norm_eps": run.best_result.phi_norm_eps,
            "residual_norm": run.best_result.residual_norm,
            "contraction_ratios": run.best_result.contraction_ratios,
            "ritz_min_abs": run.best_result.ritz_min_abs,
        },
        cfg,
    )
    if cfg.plot and cfg.k == 1:
        _plot_landscape(cfg, spec, prof, run)
    dist = run.argmax.max_center_distance()
    print(f"argmax at {run.argmax.points.tolist()} "
          f"(|y - x0| = {dist:.4g}), F = {run.best_value:.8g}")
    print(f"interior: {run.interior_flag}, positive: {positive}")
    return EXIT_PASS if (run.interior_flag and positive) else EXIT_BUDGET


def _plot_landscape(cfg: RunConfig, spec, prof, run) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pts = np.array([c.points[0] for c in run.candidates])
    vals = np.array([c.value for c in run.candidates])
    fig, ax = plt.subplots(figsize=(5, 4))
    finite = np.isfinite(vals)
    drew_contour = False
    if np.count_nonzero(finite) >= 10:
        try:
            tc = ax.tricontourf(pts[finite, 0], pts[finite, 1], vals[finite],
                                levels=12)
            fig.colorbar(tc, ax=ax, label="F")
            drew_contour = True
        except Exception:
            pass
    if not drew_contour:
        sc = ax.scatter(pts[finite, 0], pts[finite, 1], c=vals[finite], s=25)
        fig.colorbar(sc, ax=ax, label="F")
    ax.plot(*run.argmax.points[0], "r+", markersize=12)
    ax.set_xlabel("y1")
    ax.set_ylabel("y2")
    fig.tight_layout()
    fig.savefig(cfg.out_dir / "landscape.svg")
    plt.close(fig)


def cmd_sweep(cfg: RunConfig) -> int:
    pot = cfg.make_potential()
    prof, _ = get_profile(cfg, pot.at_x0(), quiet=True)
    eps_sorted = sorted(cfg.epsilons, reverse=True)
    specs = [cfg.spec(e) for e in eps_sorted]
    report = concentration_sweep(specs, prof, cfg.k, search=cfg.search,
                                 grid=cfg.grid)
    rows = [
        [e.epsilon, cfg.k, _pts_str(e.argmax), e.distance, e.separation_ratio,
         e.value, e.phi_norm_eps, e.interior, e.positive]
        for e in report.entries
    ]
    _write_csv(cfg.out_dir / "sweep.csv",
               ["eps", "k", "argmax", "distance", "sep_ratio", "F",
                "phi_norm_eps", "interior", "positive"], rows, cfg)
    _write_json(
        cfg.out_dir / "sweep.json",
        {
            "monotone": report.monotone,
            "violations": report.violations,
            "degenerate": report.degenerate,
            "message": report.message,
            "distances": [e.distance for e in report.entries],
        },
        cfg,
    )
    if report.degenerate:
        print(report.message)
        return EXIT_PASS
    for e in report.entries:
        print(f"eps={e.epsilon}: distance {e.distance:.4g}, "
              f"sep/eps {e.separation_ratio:.3g}, interior {e.interior}, "
              f"positive {e.positive}")
    print(f"distances monotone: {report.monotone} "
          f"({report.violations} violations)")
    return EXIT_PASS if report.monotone else EXIT_BUDGET


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="csspeaks",
        description="Multi-peak solver for the planar gauged Schrodinger system",
    )
    parser.add_argument("command",
                        choices=["ground-state", "gauge-check", "verify",
                                 "solve", "sweep"])
    parser.add_argument("--config", type=str, default=None,
                        help="JSON configuration file")
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--cache", type=str, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = RunConfig.load(
            args.config,
            overrides={
                "out_dir": args.out,
                "cache_dir": args.cache,
                "threads": args.threads,
                "seed": args.seed,
            },
        )
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    grid_mod.FFT_WORKERS = cfg.threads
    handlers = {
        "ground-state": cmd_ground_state,
        "gauge-check": cmd_gauge_check,
        "verify": cmd_verify,
        "solve": cmd_solve,
        "sweep": cmd_sweep,
    }
    try:
        return handlers[args.command](cfg)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
