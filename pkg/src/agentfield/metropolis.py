"""Potential-biased move kernel.

An agent at ``x`` proposes ``y`` from the proposal kernel and accepts it with
weight ``exp(-lam * max(psi(x) - psi(y), 0))``; on rejection it takes an
independent fallback draw instead. Downhill moves (toward higher potential)
always pass, so the potential attracts agents while the uniform reinjection
keeps the kernel minorized and hence contracting in total variation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelBank, q0_sample, q_sample, truncnorm_density
from .measures import GaussianMixture, GridDensity, UniformGrid

_ROW_BLOCK = 512


@dataclass(frozen=True)
class PotentialField:
    """Potential evaluated pointwise from a grid density or a mixture.

    Grid-backed fields interpolate multilinearly (clamping beyond the
    outermost midpoints); mixture-backed fields evaluate exactly.
    """

    source: GridDensity | GaussianMixture

    def at(self, points: np.ndarray) -> np.ndarray:
        if isinstance(self.source, GridDensity):
            return self.source.at(points)
        return self.source.density(points)


def accept_weight(psi_x: np.ndarray, psi_y: np.ndarray, lam: float) -> np.ndarray:
    """Acceptance weight ``exp(-lam * (psi_x - psi_y)_+)``, elementwise."""
    drop = np.maximum(np.asarray(psi_x, dtype=float) - np.asarray(psi_y, dtype=float), 0.0)
    return np.exp(-lam * drop)


def m_psi_sample(
    bank: KernelBank,
    x: np.ndarray,
    psi: PotentialField,
    lam: float,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw moves from a single position under the potential-biased kernel.

    Proposal and fallback draws are independent; the proposal is kept with
    the acceptance weight, otherwise the fallback point is taken.
    """
    n = 1 if size is None else int(size)
    proposals = q_sample(bank, x, rng, size=n)
    fallbacks = q0_sample(bank, x, rng, size=n)
    u = rng.random(n)
    psi_x = psi.at(np.atleast_2d(np.asarray(x, dtype=float)))[0]
    keep = u <= accept_weight(psi_x, psi.at(proposals), lam)
    out = np.where(keep[:, None], proposals, fallbacks)
    return out[0] if size is None else out


def step_agents(
    bank: KernelBank,
    positions: np.ndarray,
    psi: PotentialField,
    lam: float,
    streams: list[np.random.Generator],
) -> np.ndarray:
    """Move every agent once against a frozen potential.

    Each agent consumes draws only from its own stream (proposal, fallback,
    acceptance uniform, in that order), so the result does not depend on how
    agents are scheduled; potential evaluations are batched afterwards.
    """
    pts = np.asarray(positions, dtype=float)
    n = pts.shape[0]
    if len(streams) != n:
        raise ValueError(f"{n} agents but {len(streams)} streams")
    proposals = np.empty_like(pts)
    fallbacks = np.empty_like(pts)
    u = np.empty(n)
    for i in range(n):
        rng = streams[i]
        proposals[i] = q_sample(bank, pts[i], rng)
        fallbacks[i] = q0_sample(bank, pts[i], rng)
        u[i] = rng.random()
    keep = u <= accept_weight(psi.at(pts), psi.at(proposals), lam)
    return np.where(keep[:, None], proposals, fallbacks)


def _proposal_rows(bank: KernelBank, grid: UniformGrid, block: np.ndarray) -> np.ndarray:
    """Row-stochastic proposal transition probabilities for a block of cells.

    The uniform mixture component is exactly ``eps_q / n_cells`` per cell and
    only the truncated-Gaussian component is renormalized over the grid, so
    the discrete rows inherit the uniform minorization exactly.
    """
    dom = bank.domain
    mids = grid.midpoints
    tn = truncnorm_density(block[:, None, :], mids[None, :, :], bank.q_sigma, dom.lower, dom.upper)
    row_sums = tn.sum(axis=1, keepdims=True)
    return bank.eps_q / grid.n_cells + (1.0 - bank.eps_q) * tn / row_sums


def transition_matrix(
    bank: KernelBank,
    grid: UniformGrid,
    psi_values: np.ndarray | None,
    lam: float,
) -> np.ndarray:
    """Row-stochastic matrix of the move kernel on the grid cells.

    ``psi_values`` holds the potential at the cell midpoints; ``None`` (or
    ``lam = 0``) reduces the kernel to the bare proposal. Every row carries at
    least ``eps_q * exp(-lam * osc(psi_values)) / n_cells`` in each cell.
    """
    mids = grid.midpoints
    n = grid.n_cells
    out = np.empty((n, n))
    for start in range(0, n, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, n)
        q_rows = _proposal_rows(bank, grid, mids[start:stop])
        if psi_values is None or lam == 0.0:
            out[start:stop] = q_rows
            continue
        w = accept_weight(psi_values[start:stop, None], psi_values[None, :], lam)
        kept = q_rows * w
        leftover = 1.0 - kept.sum(axis=1, keepdims=True)
        out[start:stop] = kept + leftover / n
    return out


def m_psi_pushforward(
    bank: KernelBank,
    m: GridDensity,
    psi: PotentialField,
    lam: float,
) -> GridDensity:
    """Deterministic one-step image of a density under the move kernel.

    Works blockwise so the full transition matrix is never materialized on
    large grids; mass is conserved exactly because the discrete rows are
    stochastic by construction.
    """
    grid = m.grid
    mids = grid.midpoints
    psi_values = psi.at(mids)
    masses = m.flat * grid.cell_volume
    out = np.zeros(grid.n_cells)
    uniform_total = 0.0
    for start in range(0, grid.n_cells, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, grid.n_cells)
        q_rows = _proposal_rows(bank, grid, mids[start:stop])
        w = accept_weight(psi_values[start:stop, None], psi_values[None, :], lam)
        kept = q_rows * w
        block_mass = masses[start:stop]
        out += block_mass @ kept
        uniform_total += float(block_mass @ (1.0 - kept.sum(axis=1)))
    out += uniform_total / grid.n_cells
    return GridDensity(grid, (out / grid.cell_volume).reshape(grid.cells))


def m_psi_lipschitz_bound(bank: KernelBank, lam: float, field_lipschitz: float) -> float:
    """Lipschitz bound for ``x -> (move kernel f)(x)`` over sup-norm-1 ``f``.

    ``field_lipschitz`` bounds the Lipschitz constant of the potential's
    density; the move kernel inherits smoothness from the proposal and
    fallback kernels plus the exponential acceptance weight.
    """
    return bank.proposal_lipschitz * (3.0 + 2.0 * lam * field_lipschitz)
