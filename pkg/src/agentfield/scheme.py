"""Particle scheme with an exactly-represented Gaussian-mixture field.

Instead of gridding the field, the scheme resamples it: each step draws N
i.i.d. locations from the current mixture, convolves them with the diffusion
kernel, and adds fresh deposit components at the agents' pre-move positions.
The field is then always a mixture of exactly 2N Gaussians (after the first
step), evaluation is exact, and no component is ever pruned.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelBank
from .measures import EmpiricalMeasure, GaussianMixture, GridDensity
from .metropolis import PotentialField, step_agents
from .rng import agent_streams, field_stream, init_stream

_DEFAULT_COMPONENT_BUDGET = 500_000


@dataclass(frozen=True)
class SchemeState:
    """Agent positions and the mixture-represented field."""

    positions: np.ndarray
    field: GaussianMixture
    step: int = 0

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.positions, dtype=float)).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "positions", pts)

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    def empirical(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions)


@dataclass(frozen=True)
class SchemeTrajectory:
    snapshots: tuple[SchemeState, ...]

    def at(self, step: int) -> SchemeState:
        for snap in self.snapshots:
            if snap.step == step:
                return snap
        raise KeyError(f"no snapshot at step {step}")

    @property
    def final(self) -> SchemeState:
        return self.snapshots[-1]


def resample_field(
    bank: KernelBank,
    field: GaussianMixture,
    premove_positions: np.ndarray,
    eps: float,
    rng: np.random.Generator,
) -> GaussianMixture:
    """One field refresh in mixture form.

    Draw ``N`` i.i.d. points from the current field, attach diffusion-width
    components at the draws with total weight ``1 - eps``, and deposit-width
    components at the pre-move agent positions with total weight ``eps``.
    The result always has exactly ``2 N`` components; nothing is pruned.
    """
    pts = np.atleast_2d(np.asarray(premove_positions, dtype=float))
    n = pts.shape[0]
    resampled = field.sample(n, rng)
    weights = np.concatenate([np.full(n, (1.0 - eps) / n), np.full(n, eps / n)])
    means = np.concatenate([resampled, pts], axis=0)
    sigmas = np.concatenate([np.full(n, bank.p_sigma), np.full(n, bank.pprime_sigma)])
    return GaussianMixture(weights, means, sigmas)


def scheme_step(
    bank: KernelBank,
    state: SchemeState,
    eps: float,
    lam: float,
    streams: list[np.random.Generator],
    field_rng: np.random.Generator,
) -> SchemeState:
    """Advance agents against the frozen mixture, then resample the field."""
    psi = PotentialField(state.field)
    new_positions = step_agents(bank, state.positions, psi, lam, streams)
    new_field = resample_field(bank, state.field, state.positions, eps, field_rng)
    return SchemeState(positions=new_positions, field=new_field, step=state.step + 1)


def run_scheme(
    bank: KernelBank,
    *,
    n_agents: int,
    horizon: int,
    eps: float,
    lam: float,
    seed: int,
    m0: GridDensity,
    eta0: GaussianMixture,
    snapshot_every: int = 1,
) -> SchemeTrajectory:
    """Simulate the particle scheme; the step-0 field is ``eta0`` verbatim."""
    if n_agents < 1:
        raise ValueError(f"n_agents must be positive, got {n_agents}")
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    positions = m0.sample(n_agents, init_stream(seed))
    streams = agent_streams(seed, n_agents)
    frng = field_stream(seed)
    state = SchemeState(positions=positions, field=eta0, step=0)
    snaps = [state]
    for k in range(1, horizon + 1):
        state = scheme_step(bank, state, eps, lam, streams, frng)
        if k % max(snapshot_every, 1) == 0 or k == horizon:
            snaps.append(state)
    return SchemeTrajectory(snapshots=tuple(snaps))


def exact_field_oracle(
    bank: KernelBank,
    position_history: list[np.ndarray],
    eta0: GaussianMixture,
    eps: float,
    *,
    max_components: int = _DEFAULT_COMPONENT_BUDGET,
) -> GaussianMixture:
    """Closed-form field after ``k = len(position_history)`` refreshes.

    Unrolling the refresh recursion against the supplied pre-move clouds
    gives a finite mixture: the cloud deposited ``j`` steps ago appears
    convolved with ``j`` rounds of diffusion under weight ``eps * (1 -
    eps)**j``, and the initial field survives with weight ``(1 - eps)**k``
    after ``k`` rounds of diffusion. This is the refresh dynamics without
    resampling noise, exact up to float roundoff.

    Raises
    ------
    ValueError
        If the expansion would exceed ``max_components`` components.
    """
    k = len(position_history)
    total = eta0.n_components + sum(np.atleast_2d(p).shape[0] for p in position_history)
    if total > max_components:
        raise ValueError(
            f"exact field expansion needs {total} components, over the {max_components} budget"
        )
    weights = [eta0.weights * (1.0 - eps) ** k]
    means = [eta0.means]
    sigmas = [np.sqrt(eta0.sigmas**2 + k * bank.p_sigma**2)]
    for j in range(k):
        pts = np.atleast_2d(np.asarray(position_history[k - 1 - j], dtype=float))
        n = pts.shape[0]
        weights.append(np.full(n, eps * (1.0 - eps) ** j / n))
        means.append(pts)
        sigmas.append(np.full(n, float(np.sqrt(bank.pprime_sigma**2 + j * bank.p_sigma**2))))
    return GaussianMixture(
        np.concatenate(weights), np.concatenate(means, axis=0), np.concatenate(sigmas)
    )
