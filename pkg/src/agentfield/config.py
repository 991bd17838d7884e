"""INI configuration for runs.

One file describes a complete model: box geometry, kernel widths, coupling
parameters, initial data, grid resolutions, run shape, and output options.
Unknown sections or keys are rejected by name. The canonical rendering of a
configuration excludes everything that cannot change numerical output
(parallelism, output paths, the seed), and its hash names run directories.
"""
from __future__ import annotations

import configparser
import io
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .experiments import CHECKS, RunContext, build_context
from .kernels import BoxDomain, KernelBank, derive_constants, field_tail_radius
from .runio import config_digest

_CHECK_NAMES = tuple(CHECKS) + ("determinism",)

_KNOWN_KEYS = {
    "domain": ("dim", "lower", "upper", "field_margin"),
    "kernels": ("q_sigma", "eps_q", "q0", "p_sigma", "pprime_sigma"),
    "dynamics": ("eps", "lam"),
    "init": ("m0", "eta0_mean", "eta0_sigma"),
    "grid": ("agent_cells", "field_cells"),
    "run": ("n_agents", "horizon", "seed", "snapshot_every", "parallel"),
    "fixed_point": ("tol", "max_iter"),
    "output": ("directory", "figures"),
    "verify": ("checks",),
}

OUTPUT_ROOT_ENV = "AGENTFIELD_OUTPUT_ROOT"


@dataclass
class RunConfig:
    """Validated run description with builder methods for model objects."""

    dim: int = 1
    lower: tuple[float, ...] = (0.0,)
    upper: tuple[float, ...] = (1.0,)
    field_margin: float | None = None  # None means derive from the dynamics
    q_sigma: float = 0.25
    eps_q: float = 0.5
    q0: str = "uniform"
    p_sigma: float = 0.3
    pprime_sigma: float = 0.5
    eps: float = 0.2
    lam: float = 0.025
    m0: str = "uniform"
    eta0_mean: tuple[float, ...] | None = None  # None means the box center
    eta0_sigma: float = 0.3
    agent_cells: int = 256
    field_cells: int = 256
    n_agents: int = 100
    horizon: int = 10
    seed: int = 7
    snapshot_every: int = 1
    parallel: int = 1
    fp_tol: float = 1e-8
    fp_max_iter: int = 10_000
    out_directory: str = ""
    figures: bool = True
    checks: tuple[str, ...] = tuple(_CHECK_NAMES)

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if self.dim < 1:
            raise ValueError("domain dim must be at least 1")
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (self.dim,) or hi.shape != (self.dim,):
            raise ValueError("lower/upper must match the domain dimension")
        if not np.all(hi > lo):
            raise ValueError("upper must exceed lower on every axis")
        if self.field_margin is not None and self.field_margin <= 0:
            raise ValueError("field_margin must be positive or auto")
        for name in ("q_sigma", "p_sigma", "pprime_sigma", "eta0_sigma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.eps_q <= 1.0:
            raise ValueError("eps_q must lie in (0, 1]")
        if self.q0 != "uniform":
            raise ValueError("q0 supports only 'uniform'")
        if self.m0 != "uniform":
            raise ValueError("m0 supports only 'uniform'")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        if self.lam < 0.0:
            raise ValueError("lam must be nonnegative")
        if self.eta0_mean is not None and len(self.eta0_mean) != self.dim:
            raise ValueError("eta0_mean must match the domain dimension")
        for name in ("agent_cells", "field_cells"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be at least 2")
        if self.n_agents < 1:
            raise ValueError("n_agents must be at least 1")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be at least 1")
        if self.parallel < 1:
            raise ValueError("parallel must be at least 1")
        if self.fp_tol <= 0:
            raise ValueError("fixed_point tol must be positive")
        if self.fp_max_iter < 1:
            raise ValueError("fixed_point max_iter must be at least 1")
        bad = [c for c in self.checks if c not in _CHECK_NAMES]
        if bad:
            raise ValueError(f"unknown checks {bad}; available: {list(_CHECK_NAMES)}")

    # -- model builders -----------------------------------------------------

    def resolved_margin(self) -> float:
        if self.field_margin is not None:
            return float(self.field_margin)
        return auto_field_margin(
            self.eps, self.p_sigma, self.pprime_sigma, self.eta0_sigma, self.dim
        )

    def domain(self) -> BoxDomain:
        return BoxDomain.build(self.lower, self.upper, field_margin=self.resolved_margin())

    def bank(self) -> KernelBank:
        return derive_constants(
            self.domain(),
            q_sigma=self.q_sigma,
            eps_q=self.eps_q,
            p_sigma=self.p_sigma,
            pprime_sigma=self.pprime_sigma,
            q0=self.q0,
        )

    def eta0_mean_point(self) -> np.ndarray:
        if self.eta0_mean is not None:
            return np.asarray(self.eta0_mean, dtype=float)
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        return (lo + hi) / 2.0

    def context(self, parallel: int | None = None) -> RunContext:
        return build_context(
            self.bank(),
            eps=self.eps,
            lam=self.lam,
            seed=self.seed,
            agent_cells=self.agent_cells,
            field_cells=self.field_cells,
            eta0_mean=self.eta0_mean_point(),
            eta0_sigma=self.eta0_sigma,
            fp_tol=self.fp_tol,
            fp_max_iter=self.fp_max_iter,
            parallel=self.parallel if parallel is None else parallel,
        )

    # -- canonical text -----------------------------------------------------

    def render(self, *, canonical: bool = False) -> str:
        """INI text for this configuration.

        The canonical form drops the seed, parallelism, and output options:
        two runs with equal canonical text and equal seed must produce
        byte-identical data artifacts.
        """
        margin = "auto" if self.field_margin is None else repr(float(self.field_margin))
        eta_mean = (
            "center" if self.eta0_mean is None else _render_vector(self.eta0_mean)
        )
        sections: dict[str, list[tuple[str, str]]] = {
            "domain": [
                ("dim", str(self.dim)),
                ("lower", _render_vector(self.lower)),
                ("upper", _render_vector(self.upper)),
                ("field_margin", margin),
            ],
            "kernels": [
                ("q_sigma", repr(float(self.q_sigma))),
                ("eps_q", repr(float(self.eps_q))),
                ("q0", self.q0),
                ("p_sigma", repr(float(self.p_sigma))),
                ("pprime_sigma", repr(float(self.pprime_sigma))),
            ],
            "dynamics": [
                ("eps", repr(float(self.eps))),
                ("lam", repr(float(self.lam))),
            ],
            "init": [
                ("m0", self.m0),
                ("eta0_mean", eta_mean),
                ("eta0_sigma", repr(float(self.eta0_sigma))),
            ],
            "grid": [
                ("agent_cells", str(self.agent_cells)),
                ("field_cells", str(self.field_cells)),
            ],
            "run": [
                ("n_agents", str(self.n_agents)),
                ("horizon", str(self.horizon)),
                ("snapshot_every", str(self.snapshot_every)),
            ],
            "fixed_point": [
                ("tol", repr(float(self.fp_tol))),
                ("max_iter", str(self.fp_max_iter)),
            ],
            "verify": [("checks", ",".join(self.checks))],
        }
        if not canonical:
            sections["run"].insert(2, ("seed", str(self.seed)))
            sections["run"].append(("parallel", str(self.parallel)))
            sections["output"] = [
                ("directory", self.out_directory),
                ("figures", str(self.figures).lower()),
            ]
        out = io.StringIO()
        for section, items in sections.items():
            out.write(f"[{section}]\n")
            for key, value in items:
                out.write(f"{key} = {value}\n")
            out.write("\n")
        return out.getvalue()

    def digest(self) -> str:
        return config_digest(self.render(canonical=True))

    def with_overrides(self, **kwargs) -> "RunConfig":
        cfg = replace(self, **kwargs)
        cfg.validate()
        return cfg


def _render_vector(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def auto_field_margin(
    eps: float, p_sigma: float, pprime_sigma: float, eta0_sigma: float, dim: int
) -> float:
    """Default field-box margin.

    Wide enough that mixture tails beyond the box are negligible along any
    trajectory started from the configured initial field, and that the
    tightness compact for mass level 1e-3 fits strictly inside.
    """
    radius = field_tail_radius(
        1e-4, eps, p_sigma, pprime_sigma, extra_sigma=eta0_sigma, dim=dim
    )
    return float(max(6.0 * max(p_sigma, pprime_sigma, eta0_sigma), radius))


def _parse_vector(text: str, dim: int, name: str) -> tuple[float, ...]:
    parts = [p for p in (piece.strip() for piece in text.split(",")) if p]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise ValueError(f"{name} must be a number or comma-separated numbers") from exc
    if len(values) == 1:
        return tuple(values * dim)
    if len(values) != dim:
        raise ValueError(f"{name} needs 1 or {dim} entries, got {len(values)}")
    return tuple(values)


def parse_config(text: str) -> RunConfig:
    """Parse INI text, rejecting unknown sections and keys by name."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    unknown = []
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            unknown.append(f"[{section}]")
            continue
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                unknown.append(f"[{section}] {key}")
    if unknown:
        raise ValueError("unknown configuration entries: " + ", ".join(sorted(unknown)))

    cfg = RunConfig()
    get = parser.get

    def has(section: str, key: str) -> bool:
        return parser.has_section(section) and key in parser[section]

    if has("domain", "dim"):
        cfg.dim = parser.getint("domain", "dim")
    if cfg.dim < 1:
        raise ValueError("domain dim must be at least 1")
    cfg.lower = tuple([0.0] * cfg.dim)
    cfg.upper = tuple([1.0] * cfg.dim)
    if has("domain", "lower"):
        cfg.lower = _parse_vector(get("domain", "lower"), cfg.dim, "lower")
    if has("domain", "upper"):
        cfg.upper = _parse_vector(get("domain", "upper"), cfg.dim, "upper")
    if has("domain", "field_margin"):
        raw = get("domain", "field_margin").strip()
        cfg.field_margin = None if raw == "auto" else float(raw)

    for key in ("q_sigma", "eps_q", "p_sigma", "pprime_sigma"):
        if has("kernels", key):
            setattr(cfg, key, parser.getfloat("kernels", key))
    if has("kernels", "q0"):
        cfg.q0 = get("kernels", "q0").strip()

    for key in ("eps", "lam"):
        if has("dynamics", key):
            setattr(cfg, key, parser.getfloat("dynamics", key))

    if has("init", "m0"):
        cfg.m0 = get("init", "m0").strip()
    if has("init", "eta0_mean"):
        raw = get("init", "eta0_mean").strip()
        cfg.eta0_mean = (
            None if raw == "center" else _parse_vector(raw, cfg.dim, "eta0_mean")
        )
    if has("init", "eta0_sigma"):
        cfg.eta0_sigma = parser.getfloat("init", "eta0_sigma")

    for key in ("agent_cells", "field_cells"):
        if has("grid", key):
            setattr(cfg, key, parser.getint("grid", key))

    for key in ("n_agents", "horizon", "seed", "snapshot_every", "parallel"):
        if has("run", key):
            setattr(cfg, key, parser.getint("run", key))

    if has("fixed_point", "tol"):
        cfg.fp_tol = parser.getfloat("fixed_point", "tol")
    if has("fixed_point", "max_iter"):
        cfg.fp_max_iter = parser.getint("fixed_point", "max_iter")

    if has("output", "directory"):
        cfg.out_directory = get("output", "directory").strip()
    if has("output", "figures"):
        cfg.figures = parser.getboolean("output", "figures")

    if has("verify", "checks"):
        raw = get("verify", "checks").strip()
        if raw == "all":
            cfg.checks = tuple(_CHECK_NAMES)
        else:
            cfg.checks = tuple(p.strip() for p in raw.split(",") if p.strip())

    cfg.validate()
    return cfg


def load_config(path: str | None) -> RunConfig:
    """Load from a file, or return defaults when no path is given.

    Warns when the configured coupling strength has no contraction
    certificate; simulation still runs, but fixed-point stopping loses its
    guarantee.
    """
    if path is None:
        cfg = RunConfig()
        cfg.validate()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    from .meanfield import compute_constants

    consts = compute_constants(cfg.bank(), cfg.eps, cfg.lam)
    if not consts.feasible:
        warnings.warn(
            "no contraction certificate for eps={:.4g}, lam={:.4g}; "
            "certified thresholds: eps0={:.4g}, lambda0={:.4g}".format(
                cfg.eps, cfg.lam, consts.eps0, consts.lambda0
            ),
            stacklevel=2,
        )
    return cfg
