"""Figure rendering for run directories.

Looks at the delimited artifacts a run produced and renders matching PNG
figures into ``<run>/figures``. Rendering is a pure function of the CSV
contents; the PNG metadata is pinned so repeated renders agree.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_META = {"Software": "agentfield"}


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        column = [row[j] for row in rows]
        try:
            out[name] = np.array([float(v) for v in column])
        except ValueError:
            out[name] = np.array(column, dtype=object)
    return out


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def _dim_of(data: dict[str, np.ndarray]) -> int:
    return sum(1 for k in data if k.startswith("x") and k[1:].isdigit())


def _plot_agents(path: Path, out: Path) -> None:
    data = _read_csv(path)
    steps = np.unique(data["step"]).astype(int)
    final = data["step"] == steps.max()
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    if _dim_of(data) == 1:
        axes[0].hist(data["x0"][final], bins=30, density=True, color="#3b6ea5")
        axes[0].set_xlabel("position")
        axes[0].set_ylabel("density")
        axes[0].set_title(f"agent positions at step {steps.max()}")
        for q, style in ((0.1, ":"), (0.5, "-"), (0.9, ":")):
            curve = [np.quantile(data["x0"][data["step"] == s], q) for s in steps]
            axes[1].plot(steps, curve, style, color="#3b6ea5")
        axes[1].set_xlabel("step")
        axes[1].set_ylabel("position quantiles")
        axes[1].set_title("cloud spread over time")
    else:
        axes[0].scatter(data["x0"][final], data["x1"][final], s=8, color="#3b6ea5")
        axes[0].set_xlabel("x0")
        axes[0].set_ylabel("x1")
        axes[0].set_title(f"agent positions at step {steps.max()}")
        for q, style in ((0.1, ":"), (0.5, "-"), (0.9, ":")):
            curve = [np.quantile(data["x0"][data["step"] == s], q) for s in steps]
            axes[1].plot(steps, curve, style, color="#3b6ea5")
        axes[1].set_xlabel("step")
        axes[1].set_ylabel("first-coordinate quantiles")
    fig.tight_layout()
    _save(fig, out)


def _plot_density_over_time(path: Path, out: Path, label: str) -> None:
    data = _read_csv(path)
    steps = np.unique(data["step"]).astype(int)
    shown = sorted({steps.min(), steps.max(), int(np.median(steps))})
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    if _dim_of(data) == 1:
        for s in shown:
            sel = data["step"] == s
            order = np.argsort(data["x0"][sel])
            ax.plot(data["x0"][sel][order], data["density"][sel][order], label=f"step {s}")
        ax.set_xlabel("position")
        ax.set_ylabel(label)
        ax.legend()
    else:
        sel = data["step"] == steps.max()
        ax.tricontourf(data["x0"][sel], data["x1"][sel], data["density"][sel], levels=24)
        ax.set_xlabel("x0")
        ax.set_ylabel("x1")
        ax.set_title(f"{label} at step {steps.max()}")
    fig.tight_layout()
    _save(fig, out)


def _plot_static_density(path: Path, out: Path, label: str) -> None:
    data = _read_csv(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    if _dim_of(data) == 1:
        order = np.argsort(data["x0"])
        ax.plot(data["x0"][order], data["density"][order], color="#a5483b")
        ax.set_xlabel("position")
        ax.set_ylabel(label)
    else:
        ax.tricontourf(data["x0"], data["x1"], data["density"], levels=24)
        ax.set_xlabel("x0")
        ax.set_ylabel("x1")
        ax.set_title(label)
    fig.tight_layout()
    _save(fig, out)


def _plot_trace(path: Path, out: Path) -> None:
    data = _read_csv(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.semilogy(data["k"], np.maximum(data["alpha"], 1e-300), color="#3b6ea5")
    ax.set_xlabel("iteration")
    ax.set_ylabel("step size")
    ax.set_title("fixed-point iteration trace")
    fig.tight_layout()
    _save(fig, out)


def _grouped_means(data, key_col, val_col):
    keys = np.unique(data[key_col])
    return keys, np.array([data[val_col][data[key_col] == k].mean() for k in keys])


def _plot_rate(path: Path, out: Path, value_col: str, title: str, reference_rate: bool) -> None:
    data = _read_csv(path)
    sizes, means = _grouped_means(data, "n_agents", value_col)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.loglog(sizes, means, "o-", color="#3b6ea5", label="mean error")
    if reference_rate:
        ref = means[0] * np.sqrt(sizes[0] / sizes)
        ax.loglog(sizes, ref, "--", color="#888888", label="1/sqrt(N) reference")
    ax.set_xlabel("agents")
    ax.set_ylabel("error")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    _save(fig, out)


def _plot_mc_bound(path: Path, out: Path) -> None:
    data = _read_csv(path)
    sizes, means = _grouped_means(data, "n_samples", "net_error")
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.loglog(sizes, means, "o-", color="#3b6ea5", label="mean net error")
    ax.loglog(sizes, 2.0 / np.sqrt(sizes), "--", color="#a5483b", label="2/sqrt(N)")
    ax.set_xlabel("draws")
    ax.set_ylabel("net-sup error")
    ax.set_title("resampling error against the test-function net")
    ax.legend()
    fig.tight_layout()
    _save(fig, out)


def _plot_uniform_time(path: Path, out: Path) -> None:
    data = _read_csv(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for model, color in (("system", "#3b6ea5"), ("scheme", "#a5483b")):
        sel = data["model"] == model
        horizons = np.unique(data["horizon"][sel])
        means = [data["err"][sel & (data["horizon"] == h)].mean() for h in horizons]
        ax.plot(horizons, means, "o-", color=color, label=model)
    ax.set_xlabel("horizon")
    ax.set_ylabel("mean error")
    ax.set_title("error versus trajectory length")
    ax.legend()
    fig.tight_layout()
    _save(fig, out)


def _plot_chaos(path: Path, out: Path) -> None:
    data = _read_csv(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.errorbar(
        data["n_agents"],
        np.maximum(data["gap"], 1e-300),
        yerr=data["se"],
        fmt="o-",
        color="#3b6ea5",
    )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("agents")
    ax.set_ylabel("pair-moment gap")
    ax.set_title("decoupling of agent pairs")
    fig.tight_layout()
    _save(fig, out)


def _plot_fixed_point_check(path: Path, out: Path) -> None:
    data = _read_csv(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for init in np.unique(data["init"]).astype(int):
        sel = data["init"] == init
        ax.semilogy(
            data["k"][sel], np.maximum(data["alpha"][sel], 1e-300), label=f"init {init}"
        )
    ax.set_xlabel("iteration")
    ax.set_ylabel("step size")
    ax.set_title("fixed-point runs from independent initializations")
    ax.legend()
    fig.tight_layout()
    _save(fig, out)


def _plot_commuting(path: Path, out: Path) -> None:
    data = _read_csv(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for n_agents in np.unique(data["n_agents"]).astype(int):
        sel = data["n_agents"] == n_agents
        steps = np.unique(data["n_steps"][sel])
        means = [data["err"][sel & (data["n_steps"] == s)].mean() for s in steps]
        ax.plot(steps, means, "o-", label=f"N={n_agents}")
    ax.set_xlabel("steps")
    ax.set_ylabel("distance to the fixed point")
    ax.set_title("error surface across both limits")
    ax.legend()
    fig.tight_layout()
    _save(fig, out)


def render_run_figures(run_dir: Path) -> list[Path]:
    """Render figures for every recognized artifact; returns written paths."""
    run_dir = Path(run_dir)
    fig_dir = run_dir / "figures"
    plan = [
        ("agents.csv", lambda p, o: _plot_agents(p, o), "agents.png"),
        ("field.csv", lambda p, o: _plot_density_over_time(p, o, "field density"), "field.png"),
        (
            "meanfield_m.csv",
            lambda p, o: _plot_density_over_time(p, o, "agent-law density"),
            "meanfield_m.png",
        ),
        (
            "meanfield_eta.csv",
            lambda p, o: _plot_density_over_time(p, o, "field density"),
            "meanfield_eta.png",
        ),
        ("fixed_m.csv", lambda p, o: _plot_static_density(p, o, "fixed-point agent law"), "fixed_m.png"),
        ("fixed_eta.csv", lambda p, o: _plot_static_density(p, o, "fixed-point field"), "fixed_eta.png"),
        ("trace.csv", lambda p, o: _plot_trace(p, o), "trace.png"),
        ("check_mc-bound.csv", lambda p, o: _plot_mc_bound(p, o), "check_mc-bound.png"),
        (
            "check_finite-horizon.csv",
            lambda p, o: _plot_rate(p, o, "err_total", "system error versus N", True),
            "check_finite-horizon.png",
        ),
        (
            "check_scheme-horizon.csv",
            lambda p, o: _plot_rate(p, o, "err_total", "scheme error versus N", True),
            "check_scheme-horizon.png",
        ),
        ("check_uniform-time.csv", lambda p, o: _plot_uniform_time(p, o), "check_uniform-time.png"),
        ("check_chaos.csv", lambda p, o: _plot_chaos(p, o), "check_chaos.png"),
        ("check_fixed-point.csv", lambda p, o: _plot_fixed_point_check(p, o), "check_fixed-point.png"),
        (
            "check_commuting-limits.csv",
            lambda p, o: _plot_commuting(p, o),
            "check_commuting-limits.png",
        ),
    ]
    written = []
    for name, fn, png in plan:
        src = run_dir / name
        if src.exists():
            dst = fig_dir / png
            fn(src, dst)
            written.append(dst)
    return written
