"""Offline/online orchestration, run manifests, metrics, comparisons.

The offline stage trains the reduced model (full-order solves, POD bases,
sample-node selection, online operators) and persists every artifact plus
a deterministic JSON manifest: identical configuration bytes reproduce
identical manifests and artifact bytes.  Wall-clock measurements land in a
separate timings file so they cannot break that guarantee.  The online
stage loads the precomputed operators and runs the hyper-reduced solver;
``compare`` additionally runs baseline reductions against a full-order
reference and emits per-step error series as CSV.
"""

from __future__ import annotations

import csv
import json
import os
import time as _time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds as bounds_mod
from . import snapshots as snaps
from .model import BurgersModel, Grid1D, ParameterPoint, TimeDiscretization
from .pod import PodBasis, compute_pod
from .sampling import (GreedyConfig, OnlineOperators, OutputSpec, SampleSets,
                       compute_online_operators, greedy_select,
                       output_index_set)
from .solvers import (SolverConfig, StepFailureError, Trajectory,
                      baseline_collocation_galerkin,
                      baseline_collocation_least_squares, baseline_deim_like,
                      solve_fom, solve_gnat_online, solve_tier2_pg, timed,
                      warm_up_kernels)

MANIFEST_VERSION = 1
COMPARE_METHODS = ("gnat", "tier2-pg", "collocation-galerkin",
                   "collocation-ls", "deim-like")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


DEFAULT_CONFIG = {
    "version": 1,
    "grid": {"num_nodes": 4001, "domain_length": 100.0},
    "time": {"dt": 0.05, "num_steps": 1000},
    "training_inputs": [[3.0, 0.02], [6.0, 0.05], [9.0, 0.075]],
    "rom": {
        "n_w": 50,
        "n_R": 160,
        "n_J": 70,
        "procedure": 2,
        "state_snapshot_variant": "from-initial",
        "normalize_snapshots": True,
        "collect_tier1_residuals": True,
        "bounds_extension": 20,
    },
    "greedy": {"target_nodes": 160, "working_columns": None,
               "seed_nodes": [0]},
    "solver": {},
    "output": {"global": True, "probes": []},
}


def _merged(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merged(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return validate_config(user)


def validate_config(user: dict) -> dict:
    cfg = _merged(DEFAULT_CONFIG, user)
    if cfg["version"] != 1:
        raise ConfigError(f"unsupported config version {cfg['version']}")
    if not cfg["training_inputs"]:
        raise ConfigError("at least one training input is required")
    rom = cfg["rom"]
    if rom["procedure"] not in (0, 1, 2, 3):
        raise ConfigError("rom.procedure must be 0, 1, 2 or 3")
    if rom["state_snapshot_variant"] not in snaps.STATE_VARIANTS:
        raise ConfigError(
            f"unknown state snapshot variant {rom['state_snapshot_variant']!r}")
    n_i = cfg["greedy"]["target_nodes"]
    if n_i < rom["n_R"] or n_i < rom["n_J"]:
        raise ConfigError(
            "greedy.target_nodes must be at least max(n_R, n_J) so the "
            "gappy least-squares fits stay overdetermined")
    if rom["n_J"] < rom["n_w"]:
        raise ConfigError("rom.n_J must be at least rom.n_w")
    try:
        _build_problem(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _build_problem(cfg: dict):
    grid = Grid1D(num_nodes=cfg["grid"]["num_nodes"],
                  domain_length=cfg["grid"]["domain_length"])
    time = TimeDiscretization(dt=cfg["time"]["dt"],
                              num_steps=cfg["time"]["num_steps"])
    solver = SolverConfig(**cfg["solver"])
    mus = [ParameterPoint(a, b) for a, b in cfg["training_inputs"]]
    return BurgersModel(grid), time, solver, mus


# -- artifact helpers ----------------------------------------------------------

def _persist_trajectory(traj: Trajectory, kind: str, path) -> None:
    prov = tuple(snaps.column_source(traj.mu, n)
                 for n in range(len(traj.states)))
    meta = {
        "mu": [traj.mu.a, traj.mu.b],
        "dt": float(traj.times[1] - traj.times[0]),
        "iterations": [int(v) for v in traj.iterations],
        "residual_norms": [float(v) for v in traj.residual_norms],
        "statuses": [int(v) for v in traj.statuses],
    }
    matrix = snaps.SnapshotMatrix(columns=np.ascontiguousarray(traj.states.T),
                                  kind=kind, provenance=prov, meta=meta)
    snaps.persist(matrix, path)


def load_trajectory(path, basis=None, initial_condition=None) -> Trajectory:
    matrix = snaps.load(path)
    meta = matrix.meta
    states = matrix.columns.T.copy()
    nt = states.shape[0] - 1
    dt = meta["dt"]
    return Trajectory(
        states=states, times=np.arange(nt + 1) * dt,
        iterations=np.asarray(meta["iterations"], dtype=int),
        residual_norms=np.asarray(meta["residual_norms"]),
        gradient_norms=np.zeros(nt),
        statuses=np.asarray(meta["statuses"], dtype=int),
        kind="full" if matrix.kind == "trajectory-full" else "reduced",
        mu=ParameterPoint(*meta["mu"]), basis=basis,
        initial_condition=initial_condition)


def _persist_array(arr: np.ndarray, kind: str, path, meta=None) -> None:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    snaps.persist(snaps.SnapshotMatrix(columns=np.ascontiguousarray(arr),
                                       kind=kind, meta=meta or {}), path)


def _load_array(path) -> np.ndarray:
    return snaps.load(path).columns


def _persist_basis(basis: PodBasis, path) -> None:
    meta = {"singular_values": [float(s) for s in basis.singular_values],
            "energy_fraction": basis.energy_fraction,
            "clamped": basis.clamped}
    snaps.persist(snaps.SnapshotMatrix(columns=basis.basis, kind="basis",
                                       meta=meta), path)


def load_basis(path) -> PodBasis:
    matrix = snaps.load(path)
    return PodBasis(basis=matrix.columns,
                    singular_values=np.asarray(
                        matrix.meta["singular_values"]),
                    energy_fraction=matrix.meta["energy_fraction"],
                    clamped=matrix.meta["clamped"])


# -- offline stage ---------------------------------------------------------------

def run_offline(cfg: dict, outdir) -> dict:
    """Train the reduced model and persist all artifacts plus the manifest."""
    cfg = validate_config(cfg)
    model, time, solver, training = _build_problem(cfg)
    rom = cfg["rom"]
    os.makedirs(outdir, exist_ok=True)
    timings = {}
    counters = {"tier1_runs": 0, "tier2_runs": 0,
                "tier1_newton_iterations": [], "tier2_iterations": []}
    artifacts = {}

    # tier-I training solves (+ residual iterates for procedure 0 / baselines)
    tier1_collector = None
    if rom["collect_tier1_residuals"] or rom["procedure"] == 0:
        tier1_collector = snaps.HyperReductionCollector(0)
    trajectories = []
    train_paths = []
    for j, mu in enumerate(training):
        traj, secs = timed(solve_fom, mu, model, time, solver,
                           collector=tier1_collector)
        timings[f"tier1_train_{j}"] = secs
        counters["tier1_runs"] += 1
        counters["tier1_newton_iterations"].append(
            traj.counters["newton_iterations"])
        trajectories.append(traj)
        path = f"train_tier1_{j}.snap"
        _persist_trajectory(traj, "trajectory-full", os.path.join(outdir, path))
        train_paths.append(path)
    artifacts["training_trajectories"] = train_paths

    # state POD
    state_cols = [snaps.collect_state_snapshots(
        traj, rom["state_snapshot_variant"], mu=mu).columns
        for traj, mu in zip(trajectories, training)]
    state_matrix = snaps.SnapshotMatrix(
        columns=np.hstack(state_cols),
        kind=snaps._VARIANT_KIND[rom["state_snapshot_variant"]])
    if rom["normalize_snapshots"]:
        state_matrix = snaps.normalize_columns(state_matrix)
    with_timer = _time.perf_counter()
    phi_w = compute_pod(state_matrix, num_modes=rom["n_w"])
    timings["state_pod"] = _time.perf_counter() - with_timer
    _persist_basis(phi_w, os.path.join(outdir, "state_basis.snap"))
    artifacts["state_basis"] = "state_basis.snap"

    # hyper-reduction snapshots
    w0 = model.initial_condition()
    if rom["procedure"] == 0:
        hyper_collector = tier1_collector
    else:
        hyper_collector = snaps.HyperReductionCollector(rom["procedure"])
        tier2_paths = []
        for j, mu in enumerate(training):
            traj, secs = timed(solve_tier2_pg, mu, model, phi_w, w0, time,
                               solver, collector=hyper_collector)
            timings[f"tier2_train_{j}"] = secs
            counters["tier2_runs"] += 1
            counters["tier2_iterations"].append(
                traj.counters["gauss_newton_iterations"])
            path = f"train_tier2_{j}.snap"
            _persist_trajectory(traj, "trajectory-reduced",
                                os.path.join(outdir, path))
            tier2_paths.append(path)
        artifacts["tier2_trajectories"] = tier2_paths
    res_matrix, jac_matrix = hyper_collector.matrices()
    counters["residual_snapshots"] = res_matrix.n_snapshots
    counters["jacobian_snapshots"] = jac_matrix.n_snapshots
    if rom["normalize_snapshots"]:
        res_matrix = snaps.normalize_columns(res_matrix)
        jac_matrix = snaps.normalize_columns(jac_matrix)

    with_timer = _time.perf_counter()
    extension = int(rom["bounds_extension"])
    phi_r_ext = compute_pod(res_matrix, num_modes=rom["n_R"] + extension)
    phi_r = PodBasis(basis=phi_r_ext.basis[:, :rom["n_R"]],
                     singular_values=phi_r_ext.singular_values,
                     energy_fraction=phi_r_ext.energy_fraction,
                     clamped=phi_r_ext.clamped)
    phi_j = compute_pod(jac_matrix, num_modes=rom["n_J"])
    timings["hyper_pod"] = _time.perf_counter() - with_timer
    _persist_basis(phi_r_ext, os.path.join(outdir, "residual_basis.snap"))
    _persist_basis(phi_j, os.path.join(outdir, "jacobian_basis.snap"))
    artifacts["residual_basis_extended"] = "residual_basis.snap"
    artifacts["jacobian_basis"] = "jacobian_basis.snap"

    # interpolatory-baseline basis from the tier-I residual iterates
    if rom["collect_tier1_residuals"] and rom["procedure"] != 0:
        deim_src, _ = tier1_collector.matrices()
        if rom["normalize_snapshots"]:
            deim_src = snaps.normalize_columns(deim_src)
        with_timer = _time.perf_counter()
        n_interp = cfg["greedy"]["target_nodes"]
        deim_basis = compute_pod(deim_src, num_modes=n_interp)
        timings["deim_pod"] = _time.perf_counter() - with_timer
        _persist_basis(deim_basis, os.path.join(outdir, "deim_basis.snap"))
        artifacts["deim_basis"] = "deim_basis.snap"

    # greedy sample-node selection
    greedy_cfg = GreedyConfig(
        target_nodes=cfg["greedy"]["target_nodes"],
        working_columns=cfg["greedy"]["working_columns"],
        seed_nodes=tuple(cfg["greedy"]["seed_nodes"]))
    out_spec = OutputSpec(probes=tuple(cfg["output"]["probes"]),
                          global_output=cfg["output"]["global"])
    out_idx = output_index_set(out_spec, model.dim)
    with_timer = _time.perf_counter()
    sets, trace = greedy_select(phi_r, phi_j, greedy_cfg,
                                closure=model.stencil_closure,
                                output_indices=out_idx, return_trace=True)
    timings["greedy"] = _time.perf_counter() - with_timer

    operators = compute_online_operators(phi_w, phi_r, phi_j, sets, w0)
    _persist_array(operators.A, "operator",
                   os.path.join(outdir, "operator_a.snap"))
    _persist_array(operators.B, "operator",
                   os.path.join(outdir, "operator_b.snap"))
    _persist_array(operators.masked_state_basis, "operator",
                   os.path.join(outdir, "masked_state_basis.snap"))
    _persist_array(operators.masked_initial_condition, "operator",
                   os.path.join(outdir, "masked_ic.snap"))
    _persist_array(operators.sampled_residual_basis, "operator",
                   os.path.join(outdir, "sampled_residual_basis.snap"))
    _persist_array(operators.sampled_residual_pinv, "operator",
                   os.path.join(outdir, "sampled_residual_pinv.snap"))
    artifacts.update({
        "operator_a": "operator_a.snap",
        "operator_b": "operator_b.snap",
        "masked_state_basis": "masked_state_basis.snap",
        "masked_initial_condition": "masked_ic.snap",
        "sampled_residual_basis": "sampled_residual_basis.snap",
        "sampled_residual_pinv": "sampled_residual_pinv.snap",
    })

    manifest = {
        "version": MANIFEST_VERSION,
        "config": cfg,
        "rom_sizes": {"n_w": phi_w.n_modes, "n_R": phi_r.n_modes,
                      "n_J": phi_j.n_modes, "n_i": sets.n_samples},
        "procedure": rom["procedure"],
        "index_sets": {
            "nodes": [int(v) for v in sets.nodes],
            "residual": [int(v) for v in sets.residual_indices],
            "state": [int(v) for v in sets.state_indices],
            "output": "global" if sets.global_output
                      else [int(v) for v in sets.output_indices],
        },
        "greedy": {
            "selection_order": [int(v) for v in sets.selection_order],
            "iterations": trace.iterations,
            "rank_warnings": trace.rank_warnings,
        },
        "counters": counters,
        "artifacts": artifacts,
        "timings_file": "timings.json",
    }
    with open(os.path.join(outdir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(os.path.join(outdir, "timings.json"), "w",
              encoding="utf-8") as fh:
        json.dump(timings, fh, indent=1, sort_keys=True)
    return manifest


# -- loading an offline run -------------------------------------------------------

def load_manifest(path) -> tuple[dict, str]:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != MANIFEST_VERSION:
        raise ConfigError(f"{path}: unsupported manifest version")
    return manifest, os.path.dirname(os.path.abspath(path))


def load_operators(manifest: dict, outdir: str) -> OnlineOperators:
    art = manifest["artifacts"]

    def p(name):
        return os.path.join(outdir, art[name])

    idx = manifest["index_sets"]
    model, _, _, _ = _build_problem(manifest["config"])
    nodes = np.asarray(idx["nodes"], dtype=int)
    out_global = idx["output"] == "global"
    out_idx = (np.arange(model.dim) if out_global
               else np.asarray(idx["output"], dtype=int))
    sets = SampleSets(nodes=nodes,
                      residual_indices=np.asarray(idx["residual"], dtype=int),
                      state_indices=np.asarray(idx["state"], dtype=int),
                      output_indices=out_idx, num_unknowns=model.dim,
                      global_output=out_global,
                      selection_order=tuple(
                          manifest["greedy"]["selection_order"]))
    phi_w = load_basis(p("state_basis")).basis
    phi_r_ext = load_basis(p("residual_basis_extended")).basis
    n_r = manifest["rom_sizes"]["n_R"]
    w0 = model.initial_condition()
    return OnlineOperators(
        A=_load_array(p("operator_a")),
        B=_load_array(p("operator_b")),
        masked_state_basis=_load_array(p("masked_state_basis")),
        masked_initial_condition=_load_array(
            p("masked_initial_condition")).ravel(),
        output_basis=phi_w[out_idx],
        output_initial_condition=w0[out_idx],
        sampled_residual_basis=_load_array(p("sampled_residual_basis")),
        sampled_residual_pinv=_load_array(p("sampled_residual_pinv")),
        sets=sets, full_state_basis=phi_w,
        full_residual_basis=phi_r_ext[:, :n_r])


# -- online stage -------------------------------------------------------------------

def run_online(manifest: dict, outdir: str, mu: ParameterPoint,
               tag: str = "online") -> tuple[Trajectory, dict]:
    """Hyper-reduced solve at a new input; persists the reduced trajectory."""
    model, time, solver, _ = _build_problem(manifest["config"])
    operators = load_operators(manifest, outdir)
    warm_up_kernels()
    traj, secs = timed(solve_gnat_online, mu, model, operators, time, solver)
    path = os.path.join(outdir, f"{tag}_trajectory.snap")
    _persist_trajectory(traj, "trajectory-reduced", path)
    metrics = {
        "mu": [mu.a, mu.b],
        "wall_time_s": secs,
        "counters": traj.counters,
        "avg_iterations_per_step": float(np.mean(traj.iterations)),
        "steps": int(traj.num_steps),
        "trajectory": os.path.basename(path),
    }
    with open(os.path.join(outdir, f"{tag}_metrics.json"), "w",
              encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
    return traj, metrics


# -- comparison ----------------------------------------------------------------------

@dataclass
class MethodMetrics:
    method: str
    discrepancy: float | None
    discrepancy_alt: float | None
    wall_time_s: float
    wall_time_ratio: float | None
    avg_iterations: float
    completed_steps: int
    failed: bool = False
    failure: str | None = None


@dataclass
class MetricsReport:
    mu: list
    fom_wall_time_s: float
    rows_touched_ratio: float
    sample_index_factor: float    # n_i / n_R
    methods: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"mu": self.mu, "fom_wall_time_s": self.fom_wall_time_s,
                "rows_touched_ratio": self.rows_touched_ratio,
                "sample_index_factor": self.sample_index_factor,
                "methods": [asdict(m) for m in self.methods]}


def _discrepancies(reference: np.ndarray, reconstructed: np.ndarray):
    """Relative time-averaged discrepancy (primary and alternative forms)."""
    steps = min(len(reference), len(reconstructed)) - 1
    if steps < 1:
        return None, None, 0
    diff = np.linalg.norm(reference[1:steps + 1] - reconstructed[1:steps + 1],
                          axis=1)
    ref = np.linalg.norm(reference[1:steps + 1], axis=1)
    return (float(np.mean(diff / ref)),
            float(np.sum(diff) / np.sum(ref)), steps)


def run_compare(manifest: dict, outdir: str, mu: ParameterPoint,
                methods=COMPARE_METHODS, reference: Trajectory | None = None,
                csv_path=None) -> MetricsReport:
    """Run the requested reduction methods at ``mu`` against a tier-I
    reference; a diverging method yields a truncated, flagged series."""
    unknown = set(methods) - set(COMPARE_METHODS)
    if unknown:
        raise ConfigError(f"unknown compare methods: {sorted(unknown)}")
    model, time, solver, _ = _build_problem(manifest["config"])
    operators = load_operators(manifest, outdir)
    phi_w = operators.full_state_basis
    w0 = model.initial_condition()
    warm_up_kernels()

    fom_traj, fom_secs = timed(solve_fom, mu, model, time, solver)
    ref_states = (reference.reconstruct() if reference is not None
                  else fom_traj.states)

    sets = operators.sets
    report = MetricsReport(
        mu=[mu.a, mu.b], fom_wall_time_s=fom_secs,
        rows_touched_ratio=sets.n_samples / model.dim,
        sample_index_factor=sets.n_samples / manifest["rom_sizes"]["n_R"])

    def _run(method):
        if method == "gnat":
            return solve_gnat_online(mu, model, operators, time, solver)
        if method == "tier2-pg":
            return solve_tier2_pg(mu, model, phi_w, w0, time, solver)
        if method == "collocation-galerkin":
            return baseline_collocation_galerkin(mu, model, phi_w, sets,
                                                 time, solver)
        if method == "collocation-ls":
            return baseline_collocation_least_squares(mu, model, phi_w, sets,
                                                      time, solver)
        art = manifest["artifacts"]
        if "deim_basis" not in art:
            raise ConfigError(
                "deim-like comparison needs tier-I residual collection "
                "enabled during the offline stage")
        deim_basis = load_basis(os.path.join(outdir, art["deim_basis"]))
        return baseline_deim_like(mu, model, phi_w, deim_basis, sets, time,
                                  solver)

    series = {}
    for method in methods:
        start = _time.perf_counter()
        failure = None
        try:
            traj = _run(method)
        except (StepFailureError, np.linalg.LinAlgError) as exc:
            failure = str(exc)
            traj = None
        secs = _time.perf_counter() - start
        if traj is None:
            report.methods.append(MethodMetrics(
                method=method, discrepancy=None, discrepancy_alt=None,
                wall_time_s=secs, wall_time_ratio=None, avg_iterations=0.0,
                completed_steps=0, failed=True, failure=failure))
            series[method] = np.full(time.num_steps, np.nan)
            continue
        recon = traj.reconstruct() if traj.kind == "reduced" else traj.states
        disc, disc_alt, steps = _discrepancies(ref_states, recon)
        per_step = np.full(time.num_steps, np.nan)
        diff = np.linalg.norm(ref_states[1:steps + 1] - recon[1:steps + 1],
                              axis=1)
        per_step[:steps] = diff / np.linalg.norm(ref_states[1:steps + 1],
                                                 axis=1)
        series[method] = per_step
        report.methods.append(MethodMetrics(
            method=method, discrepancy=disc, discrepancy_alt=disc_alt,
            wall_time_s=secs, wall_time_ratio=fom_secs / secs,
            avg_iterations=float(np.mean(traj.iterations)),
            completed_steps=steps))

    if csv_path is not None:
        times = time.times()
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "time", "ref_norm"]
                            + [f"relerr_{m}" for m in methods])
            ref_norms = np.linalg.norm(ref_states[1:], axis=1)
            for n in range(time.num_steps):
                writer.writerow([n + 1, times[n + 1], ref_norms[n]]
                                + [series[m][n] for m in methods])
    return report


# -- bound traces -------------------------------------------------------------------

def run_bounds(manifest: dict, outdir: str, trajectory_path,
               eps_newton: float | None = None, csv_path=None):
    """Diagnostic bound trace along a stored reduced trajectory."""
    model, time, solver, _ = _build_problem(manifest["config"])
    operators = load_operators(manifest, outdir)
    traj = load_trajectory(os.path.join(outdir, trajectory_path),
                           basis=operators.full_state_basis,
                           initial_condition=model.initial_condition())
    eps = solver.newton_abs_tol if eps_newton is None else eps_newton
    states = traj.reconstruct()
    probes = states[:: max(1, len(states) // 16)]
    a_est = bounds_mod.estimate_lipschitz_a(model, traj.mu, probes, time)
    spectrum = load_basis(os.path.join(
        outdir, manifest["artifacts"]["residual_basis_extended"]))
    trace = bounds_mod.bound_terms(
        traj, model, operators, eps, a_est,
        residual_singular_values=spectrum.singular_values,
        n_R=manifest["rom_sizes"]["n_R"])
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "b", "c", "d", "cum_b", "cum_c", "cum_d",
                             "alt_d"])
            for n in range(trace.num_steps):
                alt = (trace.projection_alt_estimate[n]
                       if trace.projection_alt_estimate is not None
                       else "")
                writer.writerow([n, trace.b[n], trace.c[n], trace.d[n],
                                 trace.cum_b[n], trace.cum_c[n],
                                 trace.cum_d[n], alt])
    return trace
