"""Command-line interface.

Subcommands cover the two particle models, the deterministic coupled
iteration, the fixed-point solver, constant reporting, and the verification
suite. Every run writes a self-describing directory: a copy of the effective
configuration, identity metadata, delimited data artifacts, a schema file
documenting every column, and (unless disabled) rendered figures.
"""
from __future__ import annotations

import argparse
import filecmp
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .agents import run_system
from .config import OUTPUT_ROOT_ENV, RunConfig, load_config
from .experiments import CheckReport, emit_report, run_checks
from .meanfield import compute_constants, fixed_point, phi_step
from .measures import rasterize
from .runio import (
    csv_schema,
    json_schema,
    run_metadata,
    write_json,
    write_rows_csv,
    write_schema,
)
from .scheme import run_scheme


def _position_columns(dim: int) -> list[str]:
    return [f"x{i}" for i in range(dim)]


def _position_row(point: np.ndarray) -> dict:
    return {f"x{i}": float(v) for i, v in enumerate(np.atleast_1d(point))}


def _agents_rows(snapshots) -> list[dict]:
    rows = []
    for snap in snapshots:
        for agent, point in enumerate(snap.positions):
            rows.append({"step": snap.step, "agent": agent, **_position_row(point)})
    return rows


def _field_rows(step: int, density) -> list[dict]:
    grid = density.grid
    mids = grid.midpoints.reshape(-1, grid.midpoints.shape[-1])
    values = density.flat
    return [
        {"step": step, "cell": i, **_position_row(mids[i]), "density": float(values[i])}
        for i in range(values.size)
    ]


def _density_csv_columns(dim: int, with_step: bool = True) -> list[str]:
    head = ["step", "cell"] if with_step else ["cell"]
    return head + _position_columns(dim) + ["density"]


def _write_common(run_dir: Path, cfg: RunConfig, command: str, files: dict) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(cfg.render(), encoding="utf-8")
    meta = run_metadata(command, cfg.seed, cfg.digest(), {"version": __version__})
    write_json(run_dir / "metadata.json", meta)
    files = dict(files)
    files["config.ini"] = {
        "format": "ini",
        "description": "effective configuration for this run",
    }
    files["metadata.json"] = json_schema("run identity: command, seed, config hash, version")
    files["schema.json"] = json_schema("this file; documents every artifact")
    write_schema(run_dir / "schema.json", files)


def _maybe_figures(run_dir: Path, cfg: RunConfig) -> None:
    if not cfg.figures:
        return
    from .figures import render_run_figures

    render_run_figures(run_dir)


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _run_simulate_agents(cfg: RunConfig, run_dir: Path) -> int:
    run_dir.mkdir(parents=True, exist_ok=True)
    bank = cfg.bank()
    ctx = cfg.context()
    traj = run_system(
        bank,
        n_agents=cfg.n_agents,
        horizon=cfg.horizon,
        eps=cfg.eps,
        lam=cfg.lam,
        seed=cfg.seed,
        m0=ctx.m0,
        eta0=ctx.eta0_grid,
        snapshot_every=cfg.snapshot_every,
    )
    dim = bank.domain.dim
    field_rows, diag_rows = [], []
    for snap in traj.snapshots:
        field_rows.extend(_field_rows(snap.step, snap.field))
        diag_rows.append({"step": snap.step, "field_leaked_mass": snap.field.leaked_mass})
    write_rows_csv(
        run_dir / "agents.csv",
        ["step", "agent"] + _position_columns(dim),
        _agents_rows(traj.snapshots),
    )
    write_rows_csv(run_dir / "field.csv", _density_csv_columns(dim), field_rows)
    write_rows_csv(run_dir / "diagnostics.csv", ["step", "field_leaked_mass"], diag_rows)
    _write_common(
        run_dir,
        cfg,
        "simulate-agents",
        {
            "agents.csv": csv_schema(
                "agent positions at snapshot steps",
                {
                    "step": "trajectory step",
                    "agent": "agent index",
                    **{c: "position coordinate" for c in _position_columns(dim)},
                },
            ),
            "field.csv": csv_schema(
                "grid field density at snapshot steps",
                {
                    "step": "trajectory step",
                    "cell": "flat cell index",
                    **{c: "cell midpoint coordinate" for c in _position_columns(dim)},
                    "density": "field density at the cell midpoint",
                },
            ),
            "diagnostics.csv": csv_schema(
                "per-snapshot accounting",
                {
                    "step": "trajectory step",
                    "field_leaked_mass": "mass lost to field-box truncation",
                },
            ),
        },
    )
    _maybe_figures(run_dir, cfg)
    return 0


def _run_simulate_scheme(cfg: RunConfig, run_dir: Path) -> int:
    run_dir.mkdir(parents=True, exist_ok=True)
    bank = cfg.bank()
    ctx = cfg.context()
    traj = run_scheme(
        bank,
        n_agents=cfg.n_agents,
        horizon=cfg.horizon,
        eps=cfg.eps,
        lam=cfg.lam,
        seed=cfg.seed,
        m0=ctx.m0,
        eta0=ctx.eta0_mix,
        snapshot_every=cfg.snapshot_every,
    )
    dim = bank.domain.dim
    fgrid = ctx.eta0_grid.grid
    field_rows, diag_rows, components = [], [], []
    for snap in traj.snapshots:
        raster = rasterize(snap.field, fgrid)
        field_rows.extend(_field_rows(snap.step, raster))
        diag_rows.append(
            {
                "step": snap.step,
                "n_components": int(snap.field.weights.size),
                "raster_leaked_mass": raster.leaked_mass,
            }
        )
        components.append(
            {
                "step": snap.step,
                "weights": snap.field.weights.tolist(),
                "means": snap.field.means.tolist(),
                "sigmas": snap.field.sigmas.tolist(),
            }
        )
    write_rows_csv(
        run_dir / "agents.csv",
        ["step", "agent"] + _position_columns(dim),
        _agents_rows(traj.snapshots),
    )
    write_rows_csv(run_dir / "field.csv", _density_csv_columns(dim), field_rows)
    write_rows_csv(
        run_dir / "diagnostics.csv",
        ["step", "n_components", "raster_leaked_mass"],
        diag_rows,
    )
    write_json(run_dir / "field_components.json", {"snapshots": components})
    _write_common(
        run_dir,
        cfg,
        "simulate-scheme",
        {
            "agents.csv": csv_schema(
                "agent positions at snapshot steps",
                {
                    "step": "trajectory step",
                    "agent": "agent index",
                    **{c: "position coordinate" for c in _position_columns(dim)},
                },
            ),
            "field.csv": csv_schema(
                "mixture field rasterized on the field grid at snapshot steps",
                {
                    "step": "trajectory step",
                    "cell": "flat cell index",
                    **{c: "cell midpoint coordinate" for c in _position_columns(dim)},
                    "density": "rasterized mixture density at the cell midpoint",
                },
            ),
            "diagnostics.csv": csv_schema(
                "per-snapshot accounting",
                {
                    "step": "trajectory step",
                    "n_components": "Gaussian components in the mixture field",
                    "raster_leaked_mass": "mixture mass outside the field box",
                },
            ),
            "field_components.json": json_schema(
                "exact mixture field per snapshot: weights, means, sigmas"
            ),
        },
    )
    _maybe_figures(run_dir, cfg)
    return 0


def _run_meanfield_iterate(cfg: RunConfig, run_dir: Path) -> int:
    run_dir.mkdir(parents=True, exist_ok=True)
    bank = cfg.bank()
    ctx = cfg.context()
    state = ctx.mean_state()
    dim = bank.domain.dim
    m_rows, eta_rows, diag_rows = [], [], []
    for k in range(cfg.horizon + 1):
        if k > 0:
            state = phi_step(bank, state, cfg.eps, cfg.lam)
        if k % cfg.snapshot_every == 0 or k == cfg.horizon:
            m_rows.extend(_field_rows(k, state.m))
            eta_rows.extend(_field_rows(k, state.eta))
            diag_rows.append({"step": k, "eta_leaked_mass": state.eta.leaked_mass})
    write_rows_csv(run_dir / "meanfield_m.csv", _density_csv_columns(dim), m_rows)
    write_rows_csv(run_dir / "meanfield_eta.csv", _density_csv_columns(dim), eta_rows)
    write_rows_csv(run_dir / "diagnostics.csv", ["step", "eta_leaked_mass"], diag_rows)
    _write_common(
        run_dir,
        cfg,
        "meanfield-iterate",
        {
            "meanfield_m.csv": csv_schema(
                "deterministic agent-law density at snapshot steps",
                {
                    "step": "iteration",
                    "cell": "flat cell index",
                    **{c: "cell midpoint coordinate" for c in _position_columns(dim)},
                    "density": "agent-law density at the cell midpoint",
                },
            ),
            "meanfield_eta.csv": csv_schema(
                "deterministic field density at snapshot steps",
                {
                    "step": "iteration",
                    "cell": "flat cell index",
                    **{c: "cell midpoint coordinate" for c in _position_columns(dim)},
                    "density": "field density at the cell midpoint",
                },
            ),
            "diagnostics.csv": csv_schema(
                "per-snapshot accounting",
                {"step": "iteration", "eta_leaked_mass": "mass lost to field-box truncation"},
            ),
        },
    )
    _maybe_figures(run_dir, cfg)
    return 0


def _run_fixed_point(cfg: RunConfig, run_dir: Path) -> int:
    run_dir.mkdir(parents=True, exist_ok=True)
    bank = cfg.bank()
    ctx = cfg.context()
    consts = compute_constants(bank, cfg.eps, cfg.lam)
    state, trace = fixed_point(
        bank,
        ctx.mean_state(),
        cfg.eps,
        cfg.lam,
        tol=cfg.fp_tol,
        max_iter=cfg.fp_max_iter,
        constants=consts,
    )
    dim = bank.domain.dim
    write_rows_csv(
        run_dir / "trace.csv",
        ["k", "alpha"],
        [{"k": k, "alpha": a} for k, a in enumerate(trace)],
    )
    write_rows_csv(
        run_dir / "fixed_m.csv",
        _density_csv_columns(dim, with_step=False),
        [
            {k: v for k, v in row.items() if k != "step"}
            for row in _field_rows(0, state.m)
        ],
    )
    write_rows_csv(
        run_dir / "fixed_eta.csv",
        _density_csv_columns(dim, with_step=False),
        [
            {k: v for k, v in row.items() if k != "step"}
            for row in _field_rows(0, state.eta)
        ],
    )
    write_json(
        run_dir / "constants.json",
        {"kernel": bank.constants(), "contraction": consts.as_dict(), "iterations": len(trace)},
    )
    _write_common(
        run_dir,
        cfg,
        "fixed-point",
        {
            "trace.csv": csv_schema(
                "per-iteration step size of the fixed-point run",
                {"k": "iteration", "alpha": "tv(m) + tv(eta) change at this iteration"},
            ),
            "fixed_m.csv": csv_schema(
                "agent-law density at the computed fixed point",
                {
                    "cell": "flat cell index",
                    **{c: "cell midpoint coordinate" for c in _position_columns(dim)},
                    "density": "density at the cell midpoint",
                },
            ),
            "fixed_eta.csv": csv_schema(
                "field density at the computed fixed point",
                {
                    "cell": "flat cell index",
                    **{c: "cell midpoint coordinate" for c in _position_columns(dim)},
                    "density": "density at the cell midpoint",
                },
            ),
            "constants.json": json_schema(
                "kernel constants, contraction certificate, iteration count"
            ),
        },
    )
    _maybe_figures(run_dir, cfg)
    return 0


def _constants_payload(cfg: RunConfig) -> dict:
    bank = cfg.bank()
    consts = compute_constants(bank, cfg.eps, cfg.lam)
    return {
        "kernel": bank.constants(),
        "contraction": consts.as_dict(),
        "field_margin": cfg.resolved_margin(),
        "config_sha256": cfg.digest(),
    }


def _run_constants(cfg: RunConfig, run_dir: Path) -> int:
    run_dir.mkdir(parents=True, exist_ok=True)
    write_json(run_dir / "constants.json", _constants_payload(cfg))
    _write_common(
        run_dir,
        cfg,
        "constants",
        {
            "constants.json": json_schema(
                "kernel constants, contraction certificate, field margin, config hash"
            )
        },
    )
    print((run_dir / "constants.json").read_text(encoding="utf-8"), end="")
    return 0


# ---------------------------------------------------------------------------
# Determinism check (needs the writers, so it lives with the CLI)
# ---------------------------------------------------------------------------

_DATA_NAMES = (
    "agents.csv",
    "field.csv",
    "diagnostics.csv",
    "field_components.json",
    "metadata.json",
    "report.json",
)


def check_determinism(cfg: RunConfig) -> CheckReport:
    """Byte-identical artifacts across repeated runs and parallel degrees.

    Runs each particle model twice with identical inputs, and the
    resampling-error check with one and with two worker processes; every
    data artifact must match byte for byte.
    """
    small = cfg.with_overrides(
        n_agents=min(cfg.n_agents, 50),
        horizon=min(cfg.horizon, 5),
        figures=False,
        checks=("mc-bound",),
    )
    rows = []
    ok = True

    def compare(scenario: str, left: Path, right: Path) -> None:
        nonlocal ok
        for name in _DATA_NAMES:
            a, b = left / name, right / name
            if a.exists() != b.exists():
                ok = False
                rows.append({"scenario": scenario, "file": name, "identical": False})
                continue
            if not a.exists():
                continue
            same = filecmp.cmp(a, b, shallow=False)
            ok = ok and same
            rows.append({"scenario": scenario, "file": name, "identical": bool(same)})

    with tempfile.TemporaryDirectory() as tmp:
        base = Path(tmp)
        _run_simulate_agents(small, base / "sys_a")
        _run_simulate_agents(small, base / "sys_b")
        compare("simulate-agents-repeat", base / "sys_a", base / "sys_b")
        _run_simulate_scheme(small, base / "sch_a")
        _run_simulate_scheme(small, base / "sch_b")
        compare("simulate-scheme-repeat", base / "sch_a", base / "sch_b")
        _run_verify(small.with_overrides(parallel=1), base / "ver_p1", emit_lines=False)
        _run_verify(small.with_overrides(parallel=2), base / "ver_p2", emit_lines=False)
        compare("verify-parallel-degrees", base / "ver_p1", base / "ver_p2")
        for name in ("check_mc-bound.csv",):
            same = filecmp.cmp(base / "ver_p1" / name, base / "ver_p2" / name, shallow=False)
            ok = ok and same
            rows.append(
                {"scenario": "verify-parallel-degrees", "file": name, "identical": bool(same)}
            )
    return CheckReport(
        name="determinism",
        passed=ok,
        summary={"comparisons": len(rows), "all_identical": ok},
        rows=rows,
        columns={
            "scenario": "which pair of runs is compared",
            "file": "artifact name",
            "identical": "whether the two runs agree byte for byte",
        },
    )


def _run_verify(
    cfg: RunConfig, run_dir: Path, *, names: list[str] | None = None, emit_lines: bool = True
) -> int:
    wanted = list(names if names is not None else cfg.checks)
    ctx = cfg.context()
    reports = run_checks(ctx, [n for n in wanted if n != "determinism"])
    if "determinism" in wanted:
        reports.append(check_determinism(cfg))
    run_dir.mkdir(parents=True, exist_ok=True)
    files = {"report.json": json_schema("verdict and summary numbers for every check run")}
    for report in reports:
        if report.rows:
            csv_name = f"check_{report.name}.csv"
            columns = list(report.columns)
            write_rows_csv(run_dir / csv_name, columns, report.rows)
            files[csv_name] = csv_schema(f"raw rows behind the {report.name} check", report.columns)
    meta = run_metadata("verify", cfg.seed, cfg.digest(), {"version": __version__})
    write_json(run_dir / "report.json", emit_report(reports, meta))
    _write_common(run_dir, cfg, "verify", files)
    _maybe_figures(run_dir, cfg)
    if emit_lines:
        for report in reports:
            verdict = "PASS" if report.passed else "FAIL"
            print(f"{verdict} {report.name}")
    return 0 if all(r.passed for r in reports) else 1


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentfield",
        description="Simulate and verify interacting agents driven by a dynamic potential field.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI configuration file (defaults apply when absent)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="exact run directory (defaults to a hashed name)")
        p.add_argument("--parallel", type=int, help="worker processes for replica loops")

    for name, descr in (
        ("simulate-agents", "run the N-agent system with the grid field"),
        ("simulate-scheme", "run the mixture-field particle scheme"),
        ("meanfield-iterate", "iterate the deterministic coupled update"),
        ("fixed-point", "iterate to the unique fixed point with a certificate"),
        ("constants", "print and store kernel and contraction constants"),
    ):
        common(sub.add_parser(name, help=descr))
    verify = sub.add_parser("verify", help="run pre-registered checks and write a report")
    common(verify)
    verify.add_argument(
        "checks",
        nargs="*",
        default=["all"],
        help="check names, or 'all' (default) for the configured list",
    )
    return parser


def _resolve_run_dir(args, cfg: RunConfig, command: str) -> Path:
    if args.out:
        return Path(args.out)
    root = cfg.out_directory or os.environ.get(OUTPUT_ROOT_ENV) or "runs"
    return Path(root) / f"{command}-{cfg.digest()[:8]}-seed{cfg.seed}"


def _dispatch(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.parallel is not None:
        overrides["parallel"] = args.parallel
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    run_dir = _resolve_run_dir(args, cfg, args.command)
    if args.command == "simulate-agents":
        code = _run_simulate_agents(cfg, run_dir)
    elif args.command == "simulate-scheme":
        code = _run_simulate_scheme(cfg, run_dir)
    elif args.command == "meanfield-iterate":
        code = _run_meanfield_iterate(cfg, run_dir)
    elif args.command == "fixed-point":
        code = _run_fixed_point(cfg, run_dir)
    elif args.command == "constants":
        code = _run_constants(cfg, run_dir)
    elif args.command == "verify":
        names = args.checks
        if names == ["all"] or names == []:
            names = list(cfg.checks)
        code = _run_verify(cfg, run_dir, names=names)
    else:  # pragma: no cover - argparse enforces choices
        raise AssertionError(args.command)
    print(f"run directory: {run_dir}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
