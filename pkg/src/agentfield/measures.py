"""Measure representations and the distances the verification checks use.

Three concrete representations cover everything the dynamics produce: cellwise
densities on uniform grids, weighted point clouds, and isotropic Gaussian
mixtures. Distances follow the unnormalized total-variation convention
``tv(mu, nu) = integral of |mu - nu|``, so two mutually singular probability
measures are at distance 2. Finite nets of quantized Lipschitz functions give
a computable surrogate for suprema over bounded Lipschitz test functions.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .kernels import BoxDomain

_MASS_TOL = 1e-8


# ---------------------------------------------------------------------------
# Uniform grids and cellwise densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformGrid:
    """Axis-aligned box split into equal cells, sampled at cell midpoints.

    Cell midpoints carry both the density values and the quadrature rule:
    integrals are midpoint sums weighted by the constant cell volume.
    """

    lower: np.ndarray
    upper: np.ndarray
    cells: tuple[int, ...]

    def __post_init__(self) -> None:
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        up = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "cells", tuple(int(c) for c in np.atleast_1d(self.cells)))
        if lo.shape != up.shape or not np.all(up > lo):
            raise ValueError(f"empty grid box: lower={lo}, upper={up}")
        if len(self.cells) != lo.size or any(c < 1 for c in self.cells):
            raise ValueError(f"bad cell counts {self.cells} for dimension {lo.size}")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @cached_property
    def steps(self) -> np.ndarray:
        return (self.upper - self.lower) / np.asarray(self.cells, dtype=float)

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.steps))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            self.lower[i] + (np.arange(self.cells[i]) + 0.5) * self.steps[i]
            for i in range(self.dim)
        )

    @cached_property
    def midpoints(self) -> np.ndarray:
        """All cell midpoints, shape (n_cells, d), C-ordered."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack(mesh, axis=-1).reshape(-1, self.dim)
        pts.setflags(write=False)
        return pts

    def matches(self, other: "UniformGrid") -> bool:
        return (
            self.cells == other.cells
            and np.allclose(self.lower, other.lower, atol=1e-12)
            and np.allclose(self.upper, other.upper, atol=1e-12)
        )

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Flat cell index of each point (points outside clip to edge cells)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.floor((pts - self.lower) / self.steps).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.cells) - 1)
        return np.ravel_multi_index(tuple(idx.T), self.cells)

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation of cellwise values at arbitrary points.

        Points beyond the outermost midpoints clamp to the edge value, which
        extends the density continuously without inventing mass.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        clipped = np.empty_like(pts)
        for i, ax in enumerate(self.axes):
            clipped[:, i] = np.clip(pts[:, i], ax[0], ax[-1])
        interp = RegularGridInterpolator(self.axes, np.asarray(values).reshape(self.cells))
        return interp(clipped)


def agent_grid(domain: BoxDomain, cells_per_axis: int) -> UniformGrid:
    """Grid over the agent box."""
    return UniformGrid(domain.lower, domain.upper, (int(cells_per_axis),) * domain.dim)


def field_grid(domain: BoxDomain, cells_per_axis: int) -> UniformGrid:
    """Grid over the field box."""
    return UniformGrid(domain.field_lower, domain.field_upper, (int(cells_per_axis),) * domain.dim)


@dataclass(frozen=True)
class GridDensity:
    """Probability density stored cellwise on a uniform grid.

    Values are nonnegative and midpoint-integrate to 1 within 1e-8.
    ``leaked_mass`` records mass lost to truncation when the density was
    built (rasterization or a field refresh); it is a diagnostic, not state.
    """

    grid: UniformGrid
    values: np.ndarray
    leaked_mass: float = 0.0

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float).reshape(self.grid.cells).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if np.any(vals < 0.0):
            raise ValueError(f"negative density values (min {vals.min()})")
        mass = float(vals.sum() * self.grid.cell_volume)
        if abs(mass - 1.0) > _MASS_TOL:
            raise ValueError(f"density mass {mass} is not 1 within {_MASS_TOL}")

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def integral(self) -> float:
        return float(self.flat.sum() * self.grid.cell_volume)

    def max_density(self) -> float:
        return float(self.flat.max())

    def at(self, points: np.ndarray) -> np.ndarray:
        """Interpolated density values at arbitrary points."""
        return self.grid.interpolate(self.values, points)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` points: a mass-weighted cell, then uniform in the cell."""
        probs = self.flat * self.grid.cell_volume
        probs = probs / probs.sum()
        flat_idx = rng.choice(self.grid.n_cells, size=n, p=probs)
        multi = np.stack(np.unravel_index(flat_idx, self.grid.cells), axis=-1)
        jitter = rng.random((n, self.grid.dim))
        return self.grid.lower + (multi + jitter) * self.grid.steps

    def to_csv(self, path) -> None:
        _write_grid_csv(path, self.grid, self.values, self.leaked_mass)

    @classmethod
    def from_csv(cls, path) -> "GridDensity":
        grid, values, leaked = _read_grid_csv(path)
        return cls(grid, values, leaked)


def normalize_cell_values(grid: UniformGrid, raw: np.ndarray) -> tuple[GridDensity, float]:
    """Wrap raw nonnegative cell values as a density, reporting lost mass.

    Returns the renormalized density together with ``1 - raw_mass``, the mass
    the raw values failed to capture (positive when truncation leaked mass).
    """
    raw = np.asarray(raw, dtype=float)
    mass = float(raw.sum() * grid.cell_volume)
    if mass <= 0.0:
        raise ValueError("raw cell values carry no mass")
    leaked = 1.0 - mass
    return GridDensity(grid, raw / mass, leaked_mass=leaked), leaked


def uniform_density(grid: UniformGrid) -> GridDensity:
    """Flat density over the grid box."""
    volume = float(np.prod(grid.upper - grid.lower))
    return GridDensity(grid, np.full(grid.cells, 1.0 / volume))


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniformly weighted point cloud, one row per support point."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float)).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError(f"points must be a nonempty (n, d) array, got shape {pts.shape}")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def sample(self, n: int, rng: np.random.Generator) -> "EmpiricalMeasure":
        """Multinomial resample with replacement (i.i.d. draws from the cloud)."""
        idx = rng.integers(0, self.n, size=n)
        return EmpiricalMeasure(self.points[idx])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(self.dim)])
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalMeasure":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(data)


# ---------------------------------------------------------------------------
# Gaussian mixtures
# ---------------------------------------------------------------------------

_EVAL_CHUNK = 4_000_000  # cap on points * components per evaluation block


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic Gaussian mixture with per-component scalar widths."""

    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self) -> None:
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        mu = np.atleast_2d(np.asarray(self.means, dtype=float)).copy()
        sg = np.atleast_1d(np.asarray(self.sigmas, dtype=float)).copy()
        for arr in (w, mu, sg):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "sigmas", sg)
        n = w.size
        if mu.shape[0] != n or sg.size != n:
            raise ValueError(
                f"component count mismatch: {n} weights, {mu.shape[0]} means, {sg.size} sigmas"
            )
        if np.any(w < 0.0):
            raise ValueError("mixture weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > _MASS_TOL:
            raise ValueError(f"mixture weights sum to {w.sum()}, not 1")
        if np.any(sg <= 0.0):
            raise ValueError("mixture sigmas must be positive")

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def density(self, points: np.ndarray) -> np.ndarray:
        """Mixture density at each point, evaluated in memory-bounded blocks."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.dim
        norm = (2.0 * np.pi * self.sigmas**2) ** (-d / 2.0)
        out = np.empty(pts.shape[0])
        block = max(1, _EVAL_CHUNK // max(self.n_components, 1))
        for start in range(0, pts.shape[0], block):
            chunk = pts[start : start + block]
            sq = np.sum((chunk[:, None, :] - self.means[None, :, :]) ** 2, axis=-1)
            out[start : start + block] = np.sum(
                self.weights * norm * np.exp(-0.5 * sq / self.sigmas**2), axis=-1
            )
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.n_components, size=n, p=self.weights / self.weights.sum())
        return self.means[idx] + self.sigmas[idx, None] * rng.standard_normal((n, self.dim))

    def convolve(self, sigma: float) -> "GaussianMixture":
        """Convolution with an isotropic Gaussian of width ``sigma``."""
        return GaussianMixture(self.weights, self.means, np.sqrt(self.sigmas**2 + sigma**2))

    def to_json(self, path) -> None:
        payload = {
            "weights": [float(v) for v in self.weights],
            "means": [[float(v) for v in row] for row in self.means],
            "sigmas": [float(v) for v in self.sigmas],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "GaussianMixture":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(
            np.asarray(payload["weights"], dtype=float),
            np.asarray(payload["means"], dtype=float),
            np.asarray(payload["sigmas"], dtype=float),
        )


def single_gaussian(mean, sigma: float) -> GaussianMixture:
    """One-component mixture (the usual initial field)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return GaussianMixture(np.array([1.0]), mean[None, :], np.array([float(sigma)]))


def rasterize(mix: GaussianMixture, grid: UniformGrid) -> GridDensity:
    """Evaluate a mixture at cell midpoints and renormalize over the grid box.

    The returned density records the mass the box failed to capture in
    ``leaked_mass``.
    """
    values = mix.density(grid.midpoints).reshape(grid.cells)
    density, _ = normalize_cell_values(grid, values)
    return density


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def _require_same_grid(a: GridDensity, b: GridDensity) -> None:
    if not a.grid.matches(b.grid):
        raise ValueError("grid densities live on different grids")


def tv_distance(a: GridDensity, b: GridDensity) -> float:
    """Unnormalized total variation: integral of |a - b| over the grid box."""
    _require_same_grid(a, b)
    return float(np.sum(np.abs(a.flat - b.flat)) * a.grid.cell_volume)


def sup_distance(a: GridDensity, b: GridDensity) -> float:
    """Largest cellwise density gap."""
    _require_same_grid(a, b)
    return float(np.max(np.abs(a.flat - b.flat)))


def oscillation(a) -> float:
    """Max minus min over cells; accepts a GridDensity or a value array."""
    values = a.flat if isinstance(a, GridDensity) else np.asarray(a, dtype=float)
    return float(np.max(values) - np.min(values))


# ---------------------------------------------------------------------------
# Quantized Lipschitz function nets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionNet:
    """Finite family of piecewise-multilinear test functions on a box.

    Members interpolate values from a node lattice of mesh ``delta /
    lipschitz``; node values are multiples of ``delta`` within ``[-bound,
    bound]`` and adjacent nodes differ by at most one quantum, so every member
    is bounded by ``bound`` and (in one dimension, exactly) ``lipschitz``-
    Lipschitz. For any signed measure ``mu`` on the box,

        sup over the full Lipschitz ball of |mu(f)|
            <= max over members of |mu(g)| + delta * ||mu||_tv,

    with the cover slack exact in one dimension and degrading by a factor
    ``sqrt(d)`` otherwise.
    """

    lower: np.ndarray
    upper: np.ndarray
    bound: float
    lipschitz: float
    delta: float
    nodes: tuple[np.ndarray, ...]
    member_values: np.ndarray  # (n_members, n_nodes_total)

    @property
    def size(self) -> int:
        return self.member_values.shape[0]

    @property
    def dim(self) -> int:
        return self.lower.size

    def _node_weights(self, points: np.ndarray) -> np.ndarray:
        """Multilinear hat-basis weights of each point, shape (k, n_nodes)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = pts.shape[0]
        axis_w = []
        for i, ax in enumerate(self.nodes):
            w = np.zeros((k, ax.size))
            x = np.clip(pts[:, i], ax[0], ax[-1])
            hi = np.clip(np.searchsorted(ax, x), 1, ax.size - 1)
            lo = hi - 1
            frac = (x - ax[lo]) / (ax[hi] - ax[lo])
            rows = np.arange(k)
            w[rows, lo] = 1.0 - frac
            w[rows, hi] += frac
            axis_w.append(w)
        full = axis_w[0]
        for w in axis_w[1:]:
            full = (full[:, :, None] * w[:, None, :]).reshape(k, -1)
        return full

    def members_at(self, points: np.ndarray) -> np.ndarray:
        """Evaluate every member at every point, shape (n_members, k)."""
        return self.member_values @ self._node_weights(points).T


def build_net(
    lower,
    upper,
    *,
    bound: float = 1.0,
    lipschitz: float = 1.0,
    delta: float = 0.25,
    max_members: int = 20_000,
) -> FunctionNet:
    """Enumerate the quantized Lipschitz net on a box.

    Raises
    ------
    ValueError
        If the requested net would exceed ``max_members`` members; choose a
        larger ``delta`` (or smaller box) instead of silently truncating.
    """
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    up = np.atleast_1d(np.asarray(upper, dtype=float))
    if bound <= 0.0 or lipschitz <= 0.0 or delta <= 0.0:
        raise ValueError("bound, lipschitz, and delta must all be positive")
    if delta > bound:
        raise ValueError(f"delta {delta} exceeds the bound {bound}; the net would be degenerate")
    widths = up - lo
    n_nodes = [int(np.ceil(w * lipschitz / delta)) + 1 for w in widths]
    nodes = tuple(np.linspace(lo[i], up[i], n_nodes[i]) for i in range(lo.size))
    n_levels = int(np.floor(bound / delta + 1e-12))
    levels = delta * np.arange(-n_levels, n_levels + 1)

    shape = tuple(n_nodes)
    total = int(np.prod(shape))
    # Left-neighbors (along each axis) of every flat lattice index.
    neighbors: list[list[int]] = [[] for _ in range(total)]
    for flat in range(total):
        multi = np.unravel_index(flat, shape)
        for ax in range(len(shape)):
            if multi[ax] > 0:
                prev = list(multi)
                prev[ax] -= 1
                neighbors[flat].append(int(np.ravel_multi_index(tuple(prev), shape)))

    members: list[np.ndarray] = []
    assignment = np.empty(total)

    def extend(pos: int) -> None:
        if pos == total:
            members.append(assignment.copy())
            if len(members) > max_members:
                raise ValueError(
                    f"net capacity exceeded: more than {max_members} members for "
                    f"delta={delta}, bound={bound}, lipschitz={lipschitz}"
                )
            return
        for v in levels:
            if all(abs(v - assignment[j]) <= delta + 1e-12 for j in neighbors[pos]):
                assignment[pos] = v
                extend(pos + 1)

    extend(0)
    return FunctionNet(
        lower=lo,
        upper=up,
        bound=float(bound),
        lipschitz=float(lipschitz),
        delta=float(delta),
        nodes=nodes,
        member_values=np.array(members),
    )


def _member_integrals(net: FunctionNet, measure) -> np.ndarray:
    """Integral of every net member against a grid density or point cloud."""
    if isinstance(measure, GridDensity):
        weights = measure.flat * measure.grid.cell_volume
        return net.members_at(measure.grid.midpoints) @ weights
    if isinstance(measure, EmpiricalMeasure):
        return net.members_at(measure.points).mean(axis=1)
    raise TypeError(f"cannot integrate a {type(measure).__name__} against a net")


def net_distance(a, b, net: FunctionNet) -> float:
    """Largest gap |a(g) - b(g)| over the net members.

    Accepts any mix of grid densities and point clouds; this is the
    computable surrogate for the supremum over the bounded-Lipschitz ball,
    exact up to the net's cover slack.
    """
    return float(np.max(np.abs(_member_integrals(net, a) - _member_integrals(net, b))))


# ---------------------------------------------------------------------------
# Grid CSV round-trip
# ---------------------------------------------------------------------------


def _write_grid_csv(path, grid: UniformGrid, values: np.ndarray, leaked_mass: float) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(
            "# grid"
            f" lower={json.dumps([float(v) for v in grid.lower])}"
            f" upper={json.dumps([float(v) for v in grid.upper])}"
            f" cells={json.dumps(list(grid.cells))}"
            f" leaked_mass={leaked_mass!r}\n"
        )
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(grid.dim)] + ["density"])
        flat_vals = values.reshape(-1)
        for point, val in zip(grid.midpoints, flat_vals):
            writer.writerow([repr(float(c)) for c in point] + [repr(float(val))])


def _read_grid_csv(path) -> tuple[UniformGrid, np.ndarray, float]:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# grid "):
            raise ValueError(f"{path} is not a grid density CSV (missing grid header)")
        meta: dict[str, object] = {}
        for token in header[len("# grid ") :].split(" "):
            key, raw = token.split("=", 1)
            meta[key] = json.loads(raw)
        rows = [r for r in csv.reader(fh)]
    grid = UniformGrid(
        np.asarray(meta["lower"], dtype=float),
        np.asarray(meta["upper"], dtype=float),
        tuple(int(c) for c in meta["cells"]),
    )
    values = np.array([float(r[-1]) for r in rows[1:]]).reshape(grid.cells)
    return grid, values, float(meta["leaked_mass"])


def mixture_component_counts(n_agents: int, steps: int, init_components: int = 1) -> int:
    """Components of the exact field expansion after ``steps`` refreshes."""
    return init_components + n_agents * steps


__all__ = [
    "UniformGrid",
    "GridDensity",
    "EmpiricalMeasure",
    "GaussianMixture",
    "FunctionNet",
    "agent_grid",
    "field_grid",
    "normalize_cell_values",
    "uniform_density",
    "single_gaussian",
    "rasterize",
    "tv_distance",
    "sup_distance",
    "oscillation",
    "build_net",
    "net_distance",
    "mixture_component_counts",
]
