"""Command-line front end.

    strata simulate <scenario> [-o DIR] [--sweep]
    strata analyze {hyperbolicity,haantjes,imbalance,poisson-check,gradient-check} <scenario> [-o DIR]
    strata scenarios list

A scenario argument is a file path or a built-in name (see
``strata scenarios list``).  Runs write fields.csv, diagnostics.csv and
summary.json into the output directory; analysis subcommands write a CSV
table and report.json.  Floats are serialized with 17 significant digits
and no wall-clock data is written, so identical scenarios produce
byte-identical outputs.

Exit codes: 0 success (including recorded shock/ellipticity events),
2 validation error, 3 numerical failure.  STRATA_THREADS caps the worker
pool used by --sweep.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import dynamics as dyn
from . import hamiltonian as ham
from . import quasilinear as ql
from . import scenarios as scn
from .core import (ConfigError, LayerConfig, ModelError, PrimitiveState,
                   velocities_from_shear)
from .hydrostatics import pressure_imbalance

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def build_flow(scenario: scn.Scenario, far_field):
    if scenario.formulation == "primitive":
        return dyn.PrimitiveRigidLid3Flow(scenario.config, far_field=far_field)
    variant = scenario.variant
    if variant == "free-surface-n":
        variant = "free-surface-n"
    model = ham.make_model(scenario.config, variant)
    return dyn.HamiltonianFlow(model, far_field=far_field)


def initial_primitive_state(scenario: scn.Scenario, U0) -> PrimitiveState | None:
    """Primitive (eta, u) view of the initial data for rigid-lid scenarios."""
    cfg = scenario.config
    if scenario.variant not in ("rigid-lid-3", "boussinesq-3"):
        return None
    if scenario.formulation == "primitive":
        e2, e3, u2, u3 = U0
        e1 = cfg.h - e2 - e3
        u1 = -(e2 * u2 + e3 * u3) / e1
        return PrimitiveState(scenario.grid, np.array([e1, e2, e3]),
                              np.array([u1, u2, u3]))
    z1, z2, s1, s2 = U0
    if scenario.variant == "rigid-lid-3":
        u1, u2, u3 = velocities_from_shear(cfg, z1, z2, s1, s2)
    else:
        rb = cfg.rho_bar
        u1 = -(z1 * s1 + z2 * s2) / (cfg.h * rb)
        u2 = u1 + s1 / rb
        u3 = u2 + s2 / rb
    eta = np.array([cfg.h - z1, z1 - z2, z2])
    return PrimitiveState(scenario.grid, eta, np.array([u1, u2, u3]))


def quasilinear_points(scenario: scn.Scenario, U):
    """Map evolution fields to the state chart of the variant's
    characteristic matrix."""
    cfg = scenario.config
    if scenario.variant == "rigid-lid-3":
        if scenario.formulation == "primitive":
            return ql.build_system(cfg, "rigid-lid-3"), np.moveaxis(U, 0, -1)
        z1, z2, s1, s2 = U
        _, u2, u3 = velocities_from_shear(cfg, z1, z2, s1, s2)
        return ql.build_system(cfg, "rigid-lid-3"), \
            np.stack([z1 - z2, z2, u2, u3], axis=-1)
    if scenario.variant == "boussinesq-3":
        return ql.build_system(cfg, "boussinesq-3"), np.moveaxis(U, 0, -1)
    if scenario.variant == "symmetric":
        return ql.build_system(cfg, "symmetric"), np.moveaxis(U, 0, -1)
    variant = "free-surface-2" if scenario.variant == "free-surface-2" else "free-surface-n"
    n = cfg.n
    eta, mu = U[:n], U[n:]
    vel = mu / np.asarray(cfg.rho)[:, None]
    return ql.build_system(cfg, variant), np.moveaxis(np.vstack([eta, vel]), 0, -1)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def run_simulation(scenario: scn.Scenario, outdir: str) -> int:
    os.makedirs(outdir, exist_ok=True)
    U0, far = scn.build_initial(scenario)
    flow = build_flow(scenario, far if scenario.boundary == "clamp" else None)
    disc = dyn.Discretization(scenario.grid, order=scenario.order,
                              boundary=scenario.boundary,
                              far_field=far if scenario.boundary == "clamp" else None,
                              nu=scenario.nu)
    shock = None
    if scenario.shock_mode is not None:
        shock = dyn.ShockDetection(mode=scenario.shock_mode,
                                   ratio=scenario.shock_ratio,
                                   gradient_factor=scenario.gradient_factor)
    p_delta_t0 = None
    prim = initial_primitive_state(scenario, U0)
    if prim is not None:
        p_delta_t0 = pressure_imbalance(scenario.config, prim).p_delta

    res = dyn.integrate(flow, disc, U0, scenario.t_end, cfl=scenario.cfl,
                        sample_dt=scenario.sample_dt, shock=shock,
                        symmetry_monitor=scenario.monitor_symmetry)

    x = scenario.grid.centers()
    frames = list(range(0, len(res.times), max(1, scenario.fields_stride)))
    if frames[-1] != len(res.times) - 1:
        frames.append(len(res.times) - 1)
    rows = []
    for k in frames:
        for j in range(scenario.grid.m):
            rows.append([res.times[k], x[j]] + [res.states[k][f, j]
                                                for f in range(flow.nfields)])
    _write_csv(os.path.join(outdir, "fields.csv"),
               ["t", "x"] + list(flow.field_names), rows)

    diag = res.diagnostics
    header = ["t"] + list(diag.series) + ["maxgrad", "hyperbolic"]
    cols = [diag.t] + [diag.series[k] for k in diag.series] + [diag.maxgrad,
                                                               diag.hyperbolic]
    if diag.symmetry_residual is not None:
        header.append("symmetry_residual")
        cols.append(diag.symmetry_residual)
    _write_csv(os.path.join(outdir, "diagnostics.csv"), header,
               list(zip(*cols)))

    summary = {
        "schema_version": 1,
        "name": scenario.name,
        "variant": scenario.variant,
        "formulation": scenario.formulation,
        "m": scenario.grid.m,
        "t_end": scenario.t_end,
        "t_final": res.t_final,
        "steps": res.steps,
        "event": None if res.event is None else {"kind": res.event[0],
                                                 "time": res.event[1]},
        "shock_time": res.event[1] if res.event and res.event[0] == "shock" else None,
        "pressure_imbalance_t0": p_delta_t0,
        "drifts": {k: {"abs": diag.drift_abs(k), "rel": diag.drift(k)}
                   for k in diag.series},
        "hyperbolic_throughout": bool(np.all(diag.hyperbolic)),
        "max_gradient": float(np.max(diag.maxgrad)),
    }
    if diag.symmetry_residual is not None:
        summary["symmetry_residual_max"] = float(np.max(diag.symmetry_residual))
    _write_json(os.path.join(outdir, "summary.json"), summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _random_states(scenario: scn.Scenario, rng, count):
    """Random hyperbolic states in the chart of the variant's matrix."""
    cfg = scenario.config
    system, _ = quasilinear_points(scenario, scn.build_initial(scenario)[0])
    out = []
    guard = 0
    while len(out) < count:
        guard += 1
        if guard > 100 * count:
            raise ModelError("could not sample enough hyperbolic states")
        if scenario.variant in ("rigid-lid-3", "boussinesq-3"):
            h = cfg.h
            z1 = rng.uniform(0.55, 0.85) * h
            z2 = rng.uniform(0.15, 0.45) * h
            sscale = np.sqrt(cfg.g * h * cfg.rho_bar * np.max(cfg.gaps()))
            s1, s2 = rng.normal(0.0, 0.25 * sscale, size=2)
            if scenario.variant == "rigid-lid-3":
                _, u2, u3 = velocities_from_shear(cfg, np.array([z1]), np.array([z2]),
                                                  np.array([s1]), np.array([s2]))
                u = np.array([z1 - z2, z2, u2[0], u3[0]])
            else:
                u = np.array([z1, z2, s1, s2])
        elif scenario.variant == "symmetric":
            h = cfg.h
            bound = ql.hyperbolic_shear_bound(cfg)
            u = np.array([rng.uniform(0.05, 0.45) * h,
                          rng.uniform(-0.9, 0.9) * bound])
        else:
            n = cfg.n
            eta = rng.uniform(0.5, 1.5, size=n)
            vel = rng.normal(0.0, 0.2, size=n)
            u = np.concatenate([eta, vel])
        if ql.classify_hyperbolicity(system, u).kind == "hyperbolic":
            out.append(u)
    return system, out


def analyze_hyperbolicity(scenario, outdir):
    U0, _ = scn.build_initial(scenario)
    system, pts = quasilinear_points(scenario, U0)
    kinds, speeds = ql.classify_grid(system, pts)
    x = scenario.grid.centers()
    rows = [[x[j], kinds[j]] + list(speeds[j]) for j in range(scenario.grid.m)]
    _write_csv(os.path.join(outdir, "hyperbolicity.csv"),
               ["x", "classification"] + [f"speed{i+1}" for i in range(system.dim)],
               rows)
    counts = {k: int(np.sum(kinds == k)) for k in ("hyperbolic", "elliptic", "degenerate")}
    _write_json(os.path.join(outdir, "report.json"), {
        "subcommand": "hyperbolicity",
        "variant": scenario.variant,
        "counts": counts,
        "all_hyperbolic": counts["hyperbolic"] == scenario.grid.m,
    })
    return EXIT_OK


def analyze_haantjes(scenario, outdir):
    rng = np.random.default_rng(scenario.analysis_seed)
    system, states = _random_states(scenario, rng, scenario.analysis_samples)
    cfg = scenario.config
    closed = None
    if scenario.variant == "free-surface-2":
        closed = ql.haantjes_free_surface_2
    elif scenario.variant == "boussinesq-3":
        closed = ql.haantjes_boussinesq_3
    dim = system.dim
    triples = [(i + 1, j + 1, k + 1) for i in range(dim)
               for j in range(dim) for k in range(j + 1, dim)]
    max_num = {t: 0.0 for t in triples}
    max_dev = {t: 0.0 for t in triples}
    always_nonvanishing = None
    threshold = 0.0
    for u in states:
        res = ql.haantjes(system, u)
        threshold = max(threshold, res.threshold)
        nv = set(res.nonvanishing)
        always_nonvanishing = nv if always_nonvanishing is None \
            else always_nonvanishing & nv
        ref = closed(cfg, u) if closed else {}
        for (i, j, k) in triples:
            val = res.components[i - 1, j - 1, k - 1]
            max_num[(i, j, k)] = max(max_num[(i, j, k)], abs(val))
            if (i, j, k) in ref:
                dev = abs(val - ref[(i, j, k)]) / max(1e-300, abs(ref[(i, j, k)]))
                max_dev[(i, j, k)] = max(max_dev[(i, j, k)], dev)
    rows = []
    for t in triples:
        expected = "" if closed is None else (t in (closed(cfg, states[0])))
        rows.append([t[0], t[1], t[2], max_num[t],
                     max_dev[t] if closed and expected else "",
                     int(t in always_nonvanishing)])
    with open(os.path.join(outdir, "haantjes.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "k", "max_abs", "max_rel_dev_closed_form",
                    "nonvanishing"])
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    report = {
        "subcommand": "haantjes",
        "variant": scenario.variant,
        "samples": len(states),
        "threshold_max": threshold,
        "nonvanishing_triples": sorted(always_nonvanishing),
        "nonvanishing_count": len(always_nonvanishing),
        "independent_components": len(triples),
    }
    if closed is not None:
        expected_triples = sorted(closed(cfg, states[0]).keys())
        report["closed_form_triples"] = expected_triples
        report["matches_closed_form"] = \
            sorted(always_nonvanishing) == expected_triples and \
            max(max_dev[t] for t in expected_triples) < 1e-6
        report["max_rel_dev"] = max(max_dev[t] for t in expected_triples)
    _write_json(os.path.join(outdir, "report.json"), report)
    return EXIT_OK


def analyze_imbalance(scenario, outdir):
    if scenario.variant not in ("rigid-lid-3", "boussinesq-3"):
        raise ConfigError("imbalance analysis needs a rigid-lid scenario")
    import dataclasses
    base = scenario.grid
    rows = []
    values = []
    for m in (base.m // 4, base.m // 2, base.m, 2 * base.m):
        if m < 64:
            continue
        sub = dataclasses.replace(scenario, grid=type(base)(base.x0, base.x1, m))
        U0, _ = scn.build_initial(sub)
        prim = initial_primitive_state(sub, U0)
        pd = pressure_imbalance(sub.config, prim)
        rows.append([m, pd.p_delta])
        values.append(pd.p_delta)
    _write_csv(os.path.join(outdir, "imbalance.csv"), ["m", "p_delta"], rows)
    order = None
    if len(values) >= 3:
        d1 = abs(values[-2] - values[-3])
        d2 = abs(values[-1] - values[-2])
        if d2 > 0:
            order = float(np.log2(d1 / d2))
    _write_json(os.path.join(outdir, "report.json"), {
        "subcommand": "imbalance",
        "p_delta": values[-1],
        "refinement": {str(int(r[0])): r[1] for r in rows},
        "observed_order": order,
    })
    return EXIT_OK


def analyze_poisson(scenario, outdir):
    rng = np.random.default_rng(scenario.analysis_seed)
    from .core import flat_jacobian
    worst = 0.0
    for _ in range(50):
        r = np.sort(rng.uniform(0.3, 2.0, size=3))
        if r[0] >= r[1] or r[1] >= r[2]:
            continue
        cfg = LayerConfig(tuple(r), g=1.0, h=1.0)
        M = flat_jacobian(cfg)
        B_flat = ham.flat_poisson_matrix(cfg)
        B_can = ham.poisson_operator("rigid-lid-3").B
        worst = max(worst, float(np.max(np.abs(M @ B_flat @ M.T - B_can))))
    # discrete skew-adjointness of B d/dx under periodic differencing
    disc = dyn.Discretization(scenario.grid, order=scenario.order,
                              boundary="periodic")
    op = ham.poisson_operator(
        scenario.variant if scenario.variant != "free-surface-n" else "free-surface-n",
        scenario.config)
    v = rng.standard_normal((op.dim, scenario.grid.m))
    w = rng.standard_normal((op.dim, scenario.grid.m))
    Bw = op.apply(w, disc.deriv)
    Bv = op.apply(v, disc.deriv)
    skew = abs(float(np.sum(v * Bw) + np.sum(Bv * w)) * scenario.grid.dx)
    sym = float(np.max(np.abs(op.B - op.B.T)))
    _write_json(os.path.join(outdir, "report.json"), {
        "subcommand": "poisson-check",
        "congruence_residual_max": worst,
        "skew_adjointness_residual": skew,
        "operator_symmetry_residual": sym,
    })
    _write_csv(os.path.join(outdir, "poisson.csv"),
               ["check", "residual"],
               [["congruence", worst], ["skew_adjointness", skew],
                ["operator_symmetry", sym]])
    return EXIT_OK


def analyze_gradient(scenario, outdir):
    if scenario.formulation == "primitive":
        raise ConfigError("gradient analysis uses the canonical formulation")
    rng = np.random.default_rng(scenario.analysis_seed)
    model = ham.make_model(scenario.config, scenario.variant)
    cfg = scenario.config
    worst, worst_half = 0.0, 0.0
    for _ in range(scenario.analysis_samples):
        m = 32
        if scenario.variant in ("rigid-lid-3", "boussinesq-3"):
            U = np.array([rng.uniform(0.55, 0.85, m) * cfg.h,
                          rng.uniform(0.15, 0.45, m) * cfg.h,
                          rng.normal(0, 0.2, m), rng.normal(0, 0.2, m)])
        elif scenario.variant == "symmetric":
            U = np.array([rng.uniform(0.05, 0.45, m) * cfg.h,
                          rng.normal(0, 0.2, m)])
        else:
            n = cfg.n
            U = np.vstack([rng.uniform(0.5, 1.5, (n, m)),
                           rng.normal(0, 0.3, (n, m))])
        ana = model.gradient(U)
        scale = np.max(np.abs(ana)) + 1.0
        err = np.max(np.abs(ham.gradient_fd(model, U, 1e-5) - ana)) / scale
        err_half = np.max(np.abs(ham.gradient_fd(model, U, 5e-6) - ana)) / scale
        worst = max(worst, float(err))
        worst_half = max(worst_half, float(err_half))
    order = float(np.log2(worst / max(worst_half, 1e-300)))
    _write_json(os.path.join(outdir, "report.json"), {
        "subcommand": "gradient-check",
        "max_rel_error": worst,
        "max_rel_error_half_step": worst_half,
        "observed_order": order,
    })
    _write_csv(os.path.join(outdir, "gradient.csv"),
               ["delta", "max_rel_error"],
               [[1e-5, worst], [5e-6, worst_half]])
    return EXIT_OK


ANALYZE_SUBS = {
    "hyperbolicity": analyze_hyperbolicity,
    "haantjes": analyze_haantjes,
    "imbalance": analyze_imbalance,
    "poisson-check": analyze_poisson,
    "gradient-check": analyze_gradient,
}


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def _simulate_job(args):
    path, outdir = args
    scenario = scn.load_scenario(path)
    return run_simulation(scenario, outdir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="strata", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    p_sim = subs.add_parser("simulate", help="run one or more scenarios")
    p_sim.add_argument("scenario", nargs="+",
                       help="scenario file path or built-in name")
    p_sim.add_argument("-o", "--output", required=True, help="output directory")
    p_sim.add_argument("--sweep", action="store_true",
                       help="run scenarios on a worker pool, one subdirectory each")

    p_an = subs.add_parser("analyze", help="structural analyses of a scenario")
    p_an.add_argument("subcommand", choices=sorted(ANALYZE_SUBS))
    p_an.add_argument("scenario", help="scenario file path or built-in name")
    p_an.add_argument("-o", "--output", required=True, help="output directory")

    p_ls = subs.add_parser("scenarios", help="built-in scenario registry")
    p_ls.add_argument("action", choices=["list"])

    args = parser.parse_args(argv)

    try:
        if args.command == "scenarios":
            for name in scn.builtin_names():
                desc = scn.parse_scenario(scn.builtin_text(name), name).description
                print(f"{name:22s} {desc}")
            return EXIT_OK

        if args.command == "simulate":
            if args.sweep or len(args.scenario) > 1:
                jobs = []
                for path in args.scenario:
                    scenario = scn.load_scenario(path)  # validate up front
                    jobs.append((path, os.path.join(args.output, scenario.name)))
                if args.sweep:
                    import concurrent.futures as cf
                    workers = os.environ.get("STRATA_THREADS")
                    workers = int(workers) if workers else None
                    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
                        codes = list(pool.map(_simulate_job, jobs))
                else:
                    codes = [_simulate_job(j) for j in jobs]
                return max(codes)
            scenario = scn.load_scenario(args.scenario[0])
            return run_simulation(scenario, args.output)

        if args.command == "analyze":
            scenario = scn.load_scenario(args.scenario)
            os.makedirs(args.output, exist_ok=True)
            return ANALYZE_SUBS[args.subcommand](scenario, args.output)

    except (scn.ScenarioError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except dyn.BlowUpError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
