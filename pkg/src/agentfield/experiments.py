"""Pre-registered numerical checks.

Each check turns one quantitative guarantee of the dynamics into a pass/fail
procedure with pinned tolerances: sampling error of resampling, contraction
of the move kernels, uniform-in-time tightness of the field, fixed-point
uniqueness, finite-horizon and uniform-in-time convergence of the particle
models, order-of-limits behavior, and asymptotic independence of agents.
Checks are deterministic given their seed; replica loops parallelize over
processes without changing any output.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .agents import marginal_product_gap, run_system
from .kernels import BoxDomain, KernelBank, field_tail_radius
from .meanfield import (
    MeanFieldState,
    compute_constants,
    fixed_point,
    field_update,
    pair_distance,
    phi_step,
)
from .measures import (
    EmpiricalMeasure,
    FunctionNet,
    GaussianMixture,
    GridDensity,
    UniformGrid,
    agent_grid,
    build_net,
    field_grid,
    net_distance,
    rasterize,
    sup_distance,
    tv_distance,
    uniform_density,
)
from .metropolis import PotentialField, transition_matrix
from .scheme import exact_field_oracle, run_scheme


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one check: verdict, headline numbers, and raw rows."""

    name: str
    passed: bool
    summary: dict
    rows: list[dict] = field(default_factory=list)
    columns: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RunContext:
    """Shared inputs every check draws from.

    Bundles the kernel bank, coupling parameters, grids, initial data in both
    grid and mixture form, the default test-function net, and execution
    knobs. Built once per verification run so all checks see the same model.
    """

    bank: KernelBank
    eps: float
    lam: float
    seed: int
    agent_cells: int
    field_cells: int
    m0: GridDensity
    eta0_grid: GridDensity
    eta0_mix: GaussianMixture
    eta0_sigma: float
    net: FunctionNet
    fp_tol: float = 1e-8
    fp_max_iter: int = 10_000
    parallel: int = 1

    @property
    def domain(self) -> BoxDomain:
        return self.bank.domain

    def mean_state(self) -> MeanFieldState:
        return MeanFieldState(m=self.m0, eta=self.eta0_grid, step=0)


def build_context(
    bank: KernelBank,
    *,
    eps: float,
    lam: float,
    seed: int,
    agent_cells: int,
    field_cells: int,
    eta0_mean,
    eta0_sigma: float,
    fp_tol: float = 1e-8,
    fp_max_iter: int = 10_000,
    parallel: int = 1,
) -> RunContext:
    """Assemble the standard check context from configuration values."""
    from .measures import single_gaussian

    agrid = agent_grid(bank.domain, agent_cells)
    fgrid = field_grid(bank.domain, field_cells)
    eta0_mix = single_gaussian(eta0_mean, eta0_sigma)
    delta = 0.2 if bank.domain.dim == 1 else 1.0
    return RunContext(
        bank=bank,
        eps=float(eps),
        lam=float(lam),
        seed=int(seed),
        agent_cells=int(agent_cells),
        field_cells=int(field_cells),
        m0=uniform_density(agrid),
        eta0_grid=rasterize(eta0_mix, fgrid),
        eta0_mix=eta0_mix,
        eta0_sigma=float(eta0_sigma),
        net=build_net(bank.domain.lower, bank.domain.upper, delta=delta),
        fp_tol=fp_tol,
        fp_max_iter=fp_max_iter,
        parallel=int(parallel),
    )


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _child_seed(seed: int, *key: int) -> int:
    """Deterministic replica seed independent of execution order."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _pmap(fn, tasks: list, parallel: int) -> list:
    """Map preserving order; processes only when ``parallel`` asks for them."""
    if parallel <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallel) as ex:
        chunk = max(1, len(tasks) // (4 * parallel))
        return list(ex.map(fn, tasks, chunksize=chunk))


def _random_density(grid: UniformGrid, rng: np.random.Generator) -> GridDensity:
    vals = rng.random(grid.cells) + 0.05
    return GridDensity(grid, vals / (vals.sum() * grid.cell_volume))


def _random_pair_state(ctx: RunContext, rng: np.random.Generator) -> MeanFieldState:
    return MeanFieldState(
        m=_random_density(ctx.m0.grid, rng),
        eta=_random_density(ctx.eta0_grid.grid, rng),
        step=0,
    )


def _meanfield_snapshots(ctx: RunContext, steps: tuple[int, ...]) -> dict[int, MeanFieldState]:
    """Deterministic trajectory of the coupled update, kept at chosen steps."""
    wanted = set(steps)
    state = ctx.mean_state()
    out: dict[int, MeanFieldState] = {}
    if 0 in wanted:
        out[0] = state
    for k in range(1, max(steps) + 1):
        state = phi_step(ctx.bank, state, ctx.eps, ctx.lam)
        if k in wanted:
            out[k] = state
    return out


def _paired_growth_pvalue(late: np.ndarray, early: np.ndarray) -> float:
    """One-sided paired t-test p-value for 'late exceeds early'."""
    diff = np.asarray(late, dtype=float) - np.asarray(early, dtype=float)
    if np.allclose(diff, 0.0):
        return 1.0
    res = stats.ttest_rel(late, early, alternative="greater")
    return float(res.pvalue)


# ---------------------------------------------------------------------------
# Resampling error against the test-function net
# ---------------------------------------------------------------------------


def _mc_bound_batch(args) -> list[float]:
    base, net, n_samples, seed, n_idx, reps = args
    out = []
    for rep in range(reps):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(n_idx, rep)))
        )
        cloud = EmpiricalMeasure(base.sample(n_samples, rng))
        out.append(net_distance(cloud, base, net))
    return out


def check_mc_bound(
    ctx: RunContext,
    *,
    sample_sizes: tuple[int, ...] = (25, 100, 400),
    reps: int = 200,
    cells: int = 32,
) -> CheckReport:
    """Mean net-sup error of i.i.d. resampling stays within the 2/sqrt(N) rate.

    For a fixed smooth density, the empirical measure of N draws is compared
    against the density over every net member; the mean over replicates must
    not exceed ``2 / sqrt(N)`` plus twice the net's cover slack.
    """
    dom = ctx.domain
    grid = agent_grid(dom, cells)
    centers = np.stack([dom.lower + 0.35 * dom.widths, dom.lower + 0.7 * dom.widths])
    scale = float(dom.widths.min())
    base = rasterize(
        GaussianMixture(np.array([0.6, 0.4]), centers, np.array([0.15 * scale, 0.1 * scale])),
        grid,
    )
    batches = _pmap(
        _mc_bound_batch,
        [(base, ctx.net, n, ctx.seed, i, reps) for i, n in enumerate(sample_sizes)],
        ctx.parallel,
    )
    rows, summary, ok = [], {}, True
    for n, errs in zip(sample_sizes, batches):
        mean = float(np.mean(errs))
        bound = float(2.0 / np.sqrt(n) + 2.0 * ctx.net.delta)
        ok = ok and mean <= bound
        summary[f"mean_err_n{n}"] = mean
        summary[f"bound_n{n}"] = bound
        rows.extend(
            {"n_samples": n, "rep": r, "net_error": e} for r, e in enumerate(errs)
        )
    summary["net_size"] = ctx.net.size
    return CheckReport(
        name="mc-bound",
        passed=ok,
        summary=summary,
        rows=rows,
        columns={
            "n_samples": "number of i.i.d. draws",
            "rep": "replicate index",
            "net_error": "max over net members of |empirical(f) - density(f)|",
        },
    )


# ---------------------------------------------------------------------------
# Contraction of the proposal and of the biased move kernel
# ---------------------------------------------------------------------------


def check_dobrushin(
    ctx: RunContext, *, n_pairs: int = 100, cells: int | None = None
) -> CheckReport:
    """Proposal kernel contracts total variation by at least its uniform part.

    The discrete rows carry the uniform mixture weight exactly, so the
    contraction ratio over random density pairs must stay below
    ``1 - eps_q`` up to float roundoff.
    """
    n_cells = cells if cells is not None else (256 if ctx.domain.dim == 1 else 24)
    grid = agent_grid(ctx.domain, n_cells)
    matrix = transition_matrix(ctx.bank, grid, None, 0.0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=ctx.seed, spawn_key=(11,))))
    bound = 1.0 - ctx.bank.eps_q
    rows = []
    worst = 0.0
    for pair in range(n_pairs):
        p = _random_density(grid, rng).flat * grid.cell_volume
        q = _random_density(grid, rng).flat * grid.cell_volume
        before = float(np.abs(p - q).sum())
        after = float(np.abs((p - q) @ matrix).sum())
        ratio = after / before
        worst = max(worst, ratio)
        rows.append({"pair": pair, "ratio": ratio})
    return CheckReport(
        name="dobrushin",
        passed=worst <= bound + 1e-10,
        summary={"bound": bound, "max_ratio": worst, "cells": n_cells},
        rows=rows,
        columns={"pair": "random density pair index", "ratio": "tv after one proposal step / tv before"},
    )


def check_metropolis_contraction(
    ctx: RunContext, *, n_pairs: int = 100, cells: int | None = None
) -> CheckReport:
    """Potential-biased kernel contracts by ``1 - eps_q * exp(-lam * osc)``.

    The field is produced by one refresh from random inputs, so its
    oscillation obeys the refresh bound; the oscillation entering the bound
    is that of the potential at the agent-grid midpoints, exactly what the
    discrete kernel sees.
    """
    n_cells = cells if cells is not None else (256 if ctx.domain.dim == 1 else 24)
    grid = agent_grid(ctx.domain, n_cells)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=ctx.seed, spawn_key=(12,))))
    eta = field_update(
        ctx.bank,
        _random_density(ctx.eta0_grid.grid, rng),
        _random_density(grid, rng),
        ctx.eps,
    )
    psi_values = PotentialField(eta).at(grid.midpoints)
    osc = float(psi_values.max() - psi_values.min())
    bound = 1.0 - ctx.bank.eps_q * float(np.exp(-ctx.lam * osc))
    matrix = transition_matrix(ctx.bank, grid, psi_values, ctx.lam)
    rows = []
    worst = 0.0
    for pair in range(n_pairs):
        p = _random_density(grid, rng).flat * grid.cell_volume
        q = _random_density(grid, rng).flat * grid.cell_volume
        ratio = float(np.abs((p - q) @ matrix).sum() / np.abs(p - q).sum())
        worst = max(worst, ratio)
        rows.append({"pair": pair, "ratio": ratio})
    return CheckReport(
        name="metropolis-contraction",
        passed=worst <= bound + 1e-10,
        summary={"bound": bound, "max_ratio": worst, "field_osc": osc, "cells": n_cells},
        rows=rows,
        columns={"pair": "random density pair index", "ratio": "tv after one biased move step / tv before"},
    )


# ---------------------------------------------------------------------------
# Uniform-in-time tightness of the field
# ---------------------------------------------------------------------------


def check_tightness(
    ctx: RunContext, *, delta: float = 1e-3, horizon: int = 200
) -> CheckReport:
    """Field mass outside the computed compact stays below ``delta`` forever.

    The compact is the agent box inflated by the mixture-tail radius derived
    from the refresh expansion; the check follows the deterministic coupled
    trajectory and accounts truncation leakage as mass outside.
    """
    bank, dom = ctx.bank, ctx.domain
    radius = field_tail_radius(
        delta, ctx.eps, bank.p_sigma, bank.pprime_sigma, extra_sigma=ctx.eta0_sigma, dim=dom.dim
    )
    lo, hi = dom.lower - radius, dom.upper + radius
    fits = bool(np.all(lo >= dom.field_lower) and np.all(hi <= dom.field_upper))
    grid = ctx.eta0_grid.grid
    inside = np.all((grid.midpoints >= lo) & (grid.midpoints <= hi), axis=-1)
    state = ctx.mean_state()
    rows = []
    worst = 0.0
    for k in range(horizon + 1):
        if k > 0:
            state = phi_step(bank, state, ctx.eps, ctx.lam)
        outside = 1.0 - float(state.eta.flat[inside].sum() * grid.cell_volume)
        outside += max(state.eta.leaked_mass, 0.0)
        worst = max(worst, outside)
        rows.append({"step": k, "outside_mass": outside, "leaked_mass": state.eta.leaked_mass})
    return CheckReport(
        name="tightness",
        passed=fits and worst < delta,
        summary={
            "delta": delta,
            "radius": float(radius),
            "max_outside_mass": worst,
            "compact_fits_field_box": fits,
        },
        rows=rows,
        columns={
            "step": "trajectory step",
            "outside_mass": "field mass outside the computed compact (leak included)",
            "leaked_mass": "mass lost to field-box truncation at this step",
        },
    )


# ---------------------------------------------------------------------------
# Fixed point and contraction of the coupled update
# ---------------------------------------------------------------------------


def check_fixed_point(ctx: RunContext, *, n_inits: int = 5) -> CheckReport:
    """Independent initializations meet at one point and traces contract.

    Requires a feasible certificate; runs the iteration from ``n_inits``
    random initializations, demands every pairwise distance below twice the
    tolerance, and re-checks the certified two-step contraction inequality
    on every trace.
    """
    consts = compute_constants(ctx.bank, ctx.eps, ctx.lam)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=ctx.seed, spawn_key=(13,))))
    finals, rows = [], []
    trace_ok = True
    for init in range(n_inits):
        state, trace = fixed_point(
            ctx.bank,
            _random_pair_state(ctx, rng),
            ctx.eps,
            ctx.lam,
            tol=ctx.fp_tol,
            max_iter=ctx.fp_max_iter,
            constants=consts,
        )
        finals.append(state)
        for k, alpha in enumerate(trace):
            rows.append({"init": init, "k": k, "alpha": alpha})
        for k in range(2, len(trace)):
            lhs = trace[k] + consts.kappa * trace[k - 1]
            rhs = consts.theta * (trace[k - 1] + consts.kappa * trace[k - 2])
            if lhs > rhs + 1e-13:
                trace_ok = False
    max_pairwise = max(
        (pair_distance(a, b) for i, a in enumerate(finals) for b in finals[i + 1 :]),
        default=0.0,
    )
    passed = consts.feasible and trace_ok and max_pairwise < 2.0 * ctx.fp_tol
    return CheckReport(
        name="fixed-point",
        passed=passed,
        summary={
            "feasible": consts.feasible,
            "theta": consts.theta,
            "kappa": consts.kappa,
            "max_pairwise_distance": float(max_pairwise),
            "pairwise_tolerance": 2.0 * ctx.fp_tol,
            "trace_contraction_ok": trace_ok,
        },
        rows=rows,
        columns={
            "init": "initialization index",
            "k": "iteration",
            "alpha": "per-step error tv(m) + tv(eta)",
        },
    )


def check_phi_contraction(
    ctx: RunContext, *, horizons: tuple[int, ...] = (2, 5, 10), n_pairs: int = 10
) -> CheckReport:
    """Any two trajectories approach at the certified geometric rate.

    After ``n`` steps the pair distance must fall below ``4 * theta**(n-1)``,
    the a-priori bound that needs no information about the initial pair.
    """
    consts = compute_constants(ctx.bank, ctx.eps, ctx.lam)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=ctx.seed, spawn_key=(14,))))
    rows = []
    ok = consts.feasible
    for pair in range(n_pairs):
        a = _random_pair_state(ctx, rng)
        b = _random_pair_state(ctx, rng)
        for n in range(1, max(horizons) + 1):
            a = phi_step(ctx.bank, a, ctx.eps, ctx.lam)
            b = phi_step(ctx.bank, b, ctx.eps, ctx.lam)
            if n in horizons:
                dist = pair_distance(a, b)
                bound = 4.0 * consts.theta ** (n - 1)
                ok = ok and dist <= bound + 1e-12
                rows.append({"pair": pair, "horizon": n, "distance": dist, "bound": bound})
    return CheckReport(
        name="phi-contraction",
        passed=ok,
        summary={"feasible": consts.feasible, "theta": consts.theta},
        rows=rows,
        columns={
            "pair": "random initial pair index",
            "horizon": "steps applied to both trajectories",
            "distance": "pair distance after the horizon",
            "bound": "certified a-priori bound 4 * theta**(n-1)",
        },
    )


# ---------------------------------------------------------------------------
# Finite-horizon convergence of the particle models
# ---------------------------------------------------------------------------


def _system_task(args) -> list[tuple[int, np.ndarray, np.ndarray, float]]:
    bank, eps, lam, m0, eta0, n_agents, steps, every, seed = args
    traj = run_system(
        bank,
        n_agents=n_agents,
        horizon=max(steps),
        eps=eps,
        lam=lam,
        seed=seed,
        m0=m0,
        eta0=eta0,
        snapshot_every=every,
    )
    out = []
    for s in steps:
        snap = traj.at(s)
        out.append((s, snap.positions, snap.field.flat.copy(), snap.field.leaked_mass))
    return out


def _scheme_task(args) -> list[tuple[int, np.ndarray, np.ndarray, float]]:
    bank, eps, lam, m0, eta0_mix, n_agents, steps, every, seed, raster_grid = args
    traj = run_scheme(
        bank,
        n_agents=n_agents,
        horizon=max(steps),
        eps=eps,
        lam=lam,
        seed=seed,
        m0=m0,
        eta0=eta0_mix,
        snapshot_every=every,
    )
    out = []
    for s in steps:
        snap = traj.at(s)
        raster = rasterize(snap.field, raster_grid)
        out.append((s, snap.positions, raster.flat.copy(), raster.leaked_mass))
    return out


def _convergence_errors(
    ctx: RunContext,
    results: list[list[tuple[int, np.ndarray, np.ndarray, float]]],
    references: dict[int, MeanFieldState],
) -> list[dict[int, tuple[float, float]]]:
    """Per-replica, per-step net error on the cloud and sup error on the field."""
    fgrid = ctx.eta0_grid.grid
    out = []
    for replica in results:
        entry: dict[int, tuple[float, float]] = {}
        for step, positions, field_values, leak in replica:
            ref = references[step]
            err_m = net_distance(EmpiricalMeasure(positions), ref.m, ctx.net)
            err_eta = sup_distance(GridDensity(fgrid, field_values, leak), ref.eta)
            entry[step] = (err_m, err_eta)
        out.append(entry)
    return out


def _fit_slope(sample_sizes: tuple[int, ...], means: list[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(sample_sizes, float)), np.log(means), 1)[0])


def _finite_horizon_generic(
    ctx: RunContext,
    *,
    model: str,
    sample_sizes: tuple[int, ...],
    horizon: int,
    n_seeds: int,
    slope_cap: float,
) -> CheckReport:
    refs = _meanfield_snapshots(ctx, (horizon,))
    tasks = []
    for i, n in enumerate(sample_sizes):
        for rep in range(n_seeds):
            seed = _child_seed(ctx.seed, 21 if model == "system" else 22, i, rep)
            if model == "system":
                tasks.append(
                    (ctx.bank, ctx.eps, ctx.lam, ctx.m0, ctx.eta0_grid, n, (horizon,), 1, seed)
                )
            else:
                tasks.append(
                    (
                        ctx.bank,
                        ctx.eps,
                        ctx.lam,
                        ctx.m0,
                        ctx.eta0_mix,
                        n,
                        (horizon,),
                        1,
                        seed,
                        ctx.eta0_grid.grid,
                    )
                )
    worker = _system_task if model == "system" else _scheme_task
    results = _pmap(worker, tasks, ctx.parallel)
    errors = _convergence_errors(ctx, results, refs)
    rows, means = [], []
    for i, n in enumerate(sample_sizes):
        block = errors[i * n_seeds : (i + 1) * n_seeds]
        totals = []
        for rep, entry in enumerate(block):
            em, ee = entry[horizon]
            totals.append(em + ee)
            rows.append(
                {"n_agents": n, "rep": rep, "err_net_m": em, "err_sup_eta": ee, "err_total": em + ee}
            )
        means.append(float(np.mean(totals)))
    slope = _fit_slope(sample_sizes, means)
    decreasing = all(means[i + 1] < means[i] for i in range(len(means) - 1))
    summary = {"horizon": horizon, "slope": slope, "decreasing": decreasing}
    for n, m in zip(sample_sizes, means):
        summary[f"mean_err_n{n}"] = m
    return CheckReport(
        name="finite-horizon" if model == "system" else "scheme-horizon",
        passed=decreasing and slope <= slope_cap,
        summary=summary,
        rows=rows,
        columns={
            "n_agents": "particle count",
            "rep": "replicate index",
            "err_net_m": "net distance between the agent cloud and the limiting density",
            "err_sup_eta": "sup distance between the particle field and the limiting field",
            "err_total": "sum of the two errors",
        },
    )


def check_finite_horizon(
    ctx: RunContext,
    *,
    sample_sizes: tuple[int, ...] = (25, 100, 400),
    horizon: int = 10,
    n_seeds: int = 50,
    slope_cap: float = -0.3,
) -> CheckReport:
    """N-agent system converges to the deterministic pair at a root-N-like rate.

    Mean error must decrease strictly in N and the log-log fit must be at
    least as steep as ``slope_cap``.
    """
    return _finite_horizon_generic(
        ctx,
        model="system",
        sample_sizes=sample_sizes,
        horizon=horizon,
        n_seeds=n_seeds,
        slope_cap=slope_cap,
    )


def check_scheme_horizon(
    ctx: RunContext,
    *,
    sample_sizes: tuple[int, ...] = (25, 100, 400),
    horizon: int = 5,
    n_seeds: int = 50,
    slope_cap: float = -0.3,
) -> CheckReport:
    """Mixture-field scheme converges to the same deterministic pair."""
    return _finite_horizon_generic(
        ctx,
        model="scheme",
        sample_sizes=sample_sizes,
        horizon=horizon,
        n_seeds=n_seeds,
        slope_cap=slope_cap,
    )


# ---------------------------------------------------------------------------
# Scheme field versus the closed-form refresh expansion
# ---------------------------------------------------------------------------


def _scheme_oracle_task(args) -> np.ndarray:
    bank, eps, lam, m0, eta0_mix, n_agents, horizon, seed, raster_grid = args
    traj = run_scheme(
        bank,
        n_agents=n_agents,
        horizon=horizon,
        eps=eps,
        lam=lam,
        seed=seed,
        m0=m0,
        eta0=eta0_mix,
        snapshot_every=1,
    )
    history = [traj.at(s).positions for s in range(horizon)]
    oracle = exact_field_oracle(bank, history, eta0_mix, eps)
    got = rasterize(traj.final.field, raster_grid)
    want = rasterize(oracle, raster_grid)
    return got.flat - want.flat


def check_scheme_oracle(
    ctx: RunContext,
    *,
    n_agents: int = 200,
    horizon: int = 3,
    reps: int = 200,
    cells: int = 64,
    tolerance: float = 1e-3,
) -> CheckReport:
    """Resampling noise in the scheme field is mean-zero against the oracle.

    Each replicate compares the scheme's field with the closed-form refresh
    expansion driven by that replicate's own pre-move clouds; averaging over
    replicates must cancel the resampling noise to within ``tolerance`` plus
    three aggregated standard errors in total variation.
    """
    raster = field_grid(ctx.domain, cells)
    tasks = [
        (
            ctx.bank,
            ctx.eps,
            ctx.lam,
            ctx.m0,
            ctx.eta0_mix,
            n_agents,
            horizon,
            _child_seed(ctx.seed, 23, rep),
            raster,
        )
        for rep in range(reps)
    ]
    diffs = np.stack(_pmap(_scheme_oracle_task, tasks, ctx.parallel))
    mean = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / np.sqrt(reps)
    cv = raster.cell_volume
    tv_mean = float(np.abs(mean).sum() * cv)
    se_tv = float(se.sum() * cv)
    bound = tolerance + 3.0 * se_tv
    rows = [
        {"cell": i, "mean_diff": float(mean[i]), "se": float(se[i])} for i in range(mean.size)
    ]
    return CheckReport(
        name="scheme-oracle",
        passed=tv_mean <= bound,
        summary={
            "tv_of_mean_difference": tv_mean,
            "bound": bound,
            "se_tv": se_tv,
            "reps": reps,
            "n_agents": n_agents,
            "horizon": horizon,
        },
        rows=rows,
        columns={
            "cell": "raster cell index",
            "mean_diff": "replicate-mean density difference (scheme minus oracle)",
            "se": "standard error of the replicate mean in this cell",
        },
    )


# ---------------------------------------------------------------------------
# Uniform-in-time error control
# ---------------------------------------------------------------------------


def check_uniform_time(
    ctx: RunContext,
    *,
    n_agents: int = 400,
    horizons: tuple[int, ...] = (10, 50, 200),
    n_seeds: int = 12,
) -> CheckReport:
    """Particle error does not grow with the horizon, for system and scheme.

    Mean errors across the horizons must stay within a factor two, and a
    one-sided paired t-test across seeds must find no significant growth
    between the shortest and longest horizon at the 5% level.
    """
    refs = _meanfield_snapshots(ctx, horizons)
    every = int(np.gcd.reduce(np.asarray(horizons)))
    sys_tasks, sch_tasks = [], []
    for rep in range(n_seeds):
        seed = _child_seed(ctx.seed, 24, rep)
        sys_tasks.append(
            (ctx.bank, ctx.eps, ctx.lam, ctx.m0, ctx.eta0_grid, n_agents, horizons, every, seed)
        )
        sch_tasks.append(
            (
                ctx.bank,
                ctx.eps,
                ctx.lam,
                ctx.m0,
                ctx.eta0_mix,
                n_agents,
                horizons,
                every,
                seed,
                ctx.eta0_grid.grid,
            )
        )
    sys_errors = _convergence_errors(ctx, _pmap(_system_task, sys_tasks, ctx.parallel), refs)
    sch_errors = _convergence_errors(ctx, _pmap(_scheme_task, sch_tasks, ctx.parallel), refs)
    rows, summary = [], {"n_agents": n_agents}
    passed = True
    for model, errors in (("system", sys_errors), ("scheme", sch_errors)):
        per_horizon = {h: [] for h in horizons}
        for rep, entry in enumerate(errors):
            for h in horizons:
                total = entry[h][0] + entry[h][1]
                per_horizon[h].append(total)
                rows.append({"model": model, "horizon": h, "rep": rep, "err": total})
        means = {h: float(np.mean(per_horizon[h])) for h in horizons}
        ratio = max(means.values()) / min(means.values())
        pvalue = _paired_growth_pvalue(
            np.asarray(per_horizon[max(horizons)]), np.asarray(per_horizon[min(horizons)])
        )
        passed = passed and ratio < 2.0 and pvalue > 0.05
        summary[f"{model}_ratio"] = ratio
        summary[f"{model}_growth_pvalue"] = pvalue
        for h in horizons:
            summary[f"{model}_mean_err_n{h}"] = means[h]
    return CheckReport(
        name="uniform-time",
        passed=passed,
        summary=summary,
        rows=rows,
        columns={
            "model": "which particle model produced the error",
            "horizon": "trajectory length",
            "rep": "replicate index",
            "err": "net error on the cloud plus sup error on the field",
        },
    )


# ---------------------------------------------------------------------------
# Order of limits
# ---------------------------------------------------------------------------


def check_commuting_limits(
    ctx: RunContext,
    *,
    n_values: tuple[int, ...] = (2, 5, 10, 20),
    sample_sizes: tuple[int, ...] = (25, 100, 400),
    n_seeds: int = 12,
) -> CheckReport:
    """Long-time and many-agents limits commute on the error surface.

    ``e(n, N)`` measures the distance of the N-agent state after n steps to
    the unique fixed point. Along the largest n the error must decrease
    strictly in N; along the largest N it must not increase beyond paired
    noise, and the longest horizon must improve on the shortest.
    """
    consts = compute_constants(ctx.bank, ctx.eps, ctx.lam)
    fixed, _ = fixed_point(
        ctx.bank,
        ctx.mean_state(),
        ctx.eps,
        ctx.lam,
        tol=ctx.fp_tol,
        max_iter=ctx.fp_max_iter,
        constants=consts,
    )
    tasks = []
    for i, n_agents in enumerate(sample_sizes):
        for rep in range(n_seeds):
            seed = _child_seed(ctx.seed, 25, i, rep)
            tasks.append(
                (ctx.bank, ctx.eps, ctx.lam, ctx.m0, ctx.eta0_grid, n_agents, n_values, 1, seed)
            )
    results = _pmap(_system_task, tasks, ctx.parallel)
    refs = {n: fixed for n in n_values}
    errors = _convergence_errors(ctx, results, refs)
    rows = []
    surface: dict[tuple[int, int], list[float]] = {}
    for i, n_agents in enumerate(sample_sizes):
        block = errors[i * n_seeds : (i + 1) * n_seeds]
        for rep, entry in enumerate(block):
            for n in n_values:
                total = entry[n][0] + entry[n][1]
                surface.setdefault((n, n_agents), []).append(total)
                rows.append({"n_steps": n, "n_agents": n_agents, "rep": rep, "err": total})
    means = {key: float(np.mean(v)) for key, v in surface.items()}
    ses = {
        key: float(np.std(v, ddof=1) / np.sqrt(len(v))) for key, v in surface.items()
    }
    n_max, big_n = max(n_values), max(sample_sizes)
    along_n_axis = [means[(n_max, n)] for n in sample_sizes]
    decreasing_in_agents = all(
        along_n_axis[i + 1] < along_n_axis[i] for i in range(len(along_n_axis) - 1)
    )
    along_time = [means[(n, big_n)] for n in n_values]
    noise = [
        2.0 * float(np.hypot(ses[(n_values[i], big_n)], ses[(n_values[i + 1], big_n)]))
        for i in range(len(n_values) - 1)
    ]
    nonincreasing_in_time = all(
        along_time[i + 1] <= along_time[i] + noise[i] for i in range(len(along_time) - 1)
    )
    overall_drop = along_time[-1] < along_time[0]
    passed = decreasing_in_agents and nonincreasing_in_time and overall_drop
    summary = {
        "decreasing_in_agents_at_max_steps": decreasing_in_agents,
        "nonincreasing_in_time_at_max_agents": nonincreasing_in_time,
        "overall_drop_at_max_agents": overall_drop,
    }
    for (n, n_agents), m in sorted(means.items()):
        summary[f"mean_err_steps{n}_agents{n_agents}"] = m
    return CheckReport(
        name="commuting-limits",
        passed=passed,
        summary=summary,
        rows=rows,
        columns={
            "n_steps": "trajectory length",
            "n_agents": "particle count",
            "rep": "replicate index",
            "err": "distance of the particle state to the fixed point",
        },
    )


# ---------------------------------------------------------------------------
# Asymptotic independence of agents
# ---------------------------------------------------------------------------


def check_chaos(
    ctx: RunContext,
    *,
    sample_sizes: tuple[int, ...] = (50, 200, 800),
    horizon: int = 5,
    n_seeds: int = 200,
) -> CheckReport:
    """Pairs of agents decouple: the product-moment gap halves as N quadruples.

    The joint moment uses disjoint agent pairs inside each independent run;
    the limit moment is the product of the deterministic marginals. Each
    quadrupling of N must at least halve the gap, within three combined
    standard errors.
    """
    mk = _meanfield_snapshots(ctx, (horizon,))[horizon].m
    dom = ctx.domain
    width = dom.widths[0]

    def f1(pts: np.ndarray) -> np.ndarray:
        t = (np.atleast_2d(pts)[:, 0] - dom.lower[0]) / width
        return np.sin(2.0 * np.pi * t)

    def f2(pts: np.ndarray) -> np.ndarray:
        t = (np.atleast_2d(pts)[:, 0] - dom.lower[0]) / width
        return np.cos(np.pi * t)

    gaps, ses, rows = [], [], []
    for i, n_agents in enumerate(sample_sizes):
        tasks = [
            (
                ctx.bank,
                ctx.eps,
                ctx.lam,
                ctx.m0,
                ctx.eta0_grid,
                n_agents,
                (horizon,),
                1,
                _child_seed(ctx.seed, 26, i, rep),
            )
            for rep in range(n_seeds)
        ]
        results = _pmap(_system_task, tasks, ctx.parallel)
        batches = [replica[0][1] for replica in results]
        gap, se = marginal_product_gap(batches, mk, [f1, f2])
        gaps.append(gap)
        ses.append(se)
        rows.append({"n_agents": n_agents, "gap": gap, "se": se})
    ok = True
    for i in range(len(sample_sizes) - 1):
        slack = 3.0 * float(np.hypot(ses[i + 1], 0.5 * ses[i]))
        ok = ok and gaps[i + 1] <= 0.5 * gaps[i] + slack
    summary = {"horizon": horizon, "n_seeds": n_seeds}
    for n, g, s in zip(sample_sizes, gaps, ses):
        summary[f"gap_n{n}"] = g
        summary[f"se_n{n}"] = s
    return CheckReport(
        name="chaos",
        passed=ok,
        summary=summary,
        rows=rows,
        columns={
            "n_agents": "particle count",
            "gap": "absolute gap between the paired moment and the product of marginals",
            "se": "standard error of the paired moment across runs",
        },
    )


# ---------------------------------------------------------------------------
# Registry and reporting
# ---------------------------------------------------------------------------


CHECKS = {
    "mc-bound": check_mc_bound,
    "dobrushin": check_dobrushin,
    "metropolis-contraction": check_metropolis_contraction,
    "tightness": check_tightness,
    "fixed-point": check_fixed_point,
    "phi-contraction": check_phi_contraction,
    "finite-horizon": check_finite_horizon,
    "scheme-horizon": check_scheme_horizon,
    "scheme-oracle": check_scheme_oracle,
    "uniform-time": check_uniform_time,
    "commuting-limits": check_commuting_limits,
    "chaos": check_chaos,
}


def run_checks(ctx: RunContext, names: list[str]) -> list[CheckReport]:
    """Run the named checks (in registry order) against one context."""
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks {unknown}; available: {sorted(CHECKS)}")
    ordered = [n for n in CHECKS if n in set(names)]
    return [CHECKS[n](ctx) for n in ordered]


def emit_report(reports: list[CheckReport], metadata: dict) -> dict:
    """Assemble the verification payload written to ``report.json``.

    Deterministic for a given seed and configuration: no timestamps, no
    environment data, keys sorted downstream by the JSON writer.
    """
    return {
        "metadata": metadata,
        "all_passed": all(r.passed for r in reports),
        "checks": [
            {"name": r.name, "passed": r.passed, "summary": r.summary} for r in reports
        ],
    }
