"""Box geometry and the transition-kernel bank.

Agents live in a compact box and move by a proposal kernel that mixes a
uniform reinjection with a truncated Gaussian step; the potential field
diffuses under isotropic Gaussian kernels and is refreshed from agent
positions by a second Gaussian deposit kernel. This module owns the geometry,
the kernel densities and samplers, and the derived constants (density
suprema, Lipschitz constants, minorization weights) that the contraction
estimates consume.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import ndtr, ndtri

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))
_PHI0 = 1.0 / _SQRT_2PI  # standard normal density at the mode


def _std_normal_pdf(t: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * t * t) / _SQRT_2PI


@dataclass(frozen=True)
class BoxDomain:
    """Agent box together with the enclosing field-truncation box.

    The agent box confines every agent position; the field box is the strictly
    larger region on which field densities are rastered and renormalized.

    Parameters
    ----------
    lower, upper : ndarray, shape (d,)
        Corners of the agent box.
    field_lower, field_upper : ndarray, shape (d,)
        Corners of the field box; must contain the agent box with positive
        margin on every side.
    """

    lower: np.ndarray
    upper: np.ndarray
    field_lower: np.ndarray
    field_upper: np.ndarray

    def __post_init__(self) -> None:
        for name in ("lower", "upper", "field_lower", "field_upper"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("box corners must be 1-d arrays of equal length")
        if not np.all(self.upper > self.lower):
            raise ValueError(f"empty agent box: lower={self.lower}, upper={self.upper}")
        if self.field_lower.shape != self.lower.shape or self.field_upper.shape != self.lower.shape:
            raise ValueError("field box dimension does not match agent box")
        if not (np.all(self.field_lower < self.lower) and np.all(self.field_upper > self.upper)):
            raise ValueError("field box must contain the agent box with positive margin")

    @classmethod
    def build(cls, lower, upper, field_margin: float) -> "BoxDomain":
        """Agent box plus a field box padded by ``field_margin`` on every side."""
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        up = np.atleast_1d(np.asarray(upper, dtype=float))
        if field_margin <= 0.0:
            raise ValueError(f"field_margin must be positive, got {field_margin}")
        return cls(lo, up, lo - field_margin, up + field_margin)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def field_widths(self) -> np.ndarray:
        return self.field_upper - self.field_lower

    @property
    def field_volume(self) -> float:
        return float(np.prod(self.field_widths))

    @property
    def margin(self) -> float:
        """Smallest one-sided gap between the agent box and the field box."""
        gaps = np.concatenate([self.lower - self.field_lower, self.field_upper - self.upper])
        return float(gaps.min())

    def contains(self, points: np.ndarray, field: bool = False) -> np.ndarray:
        """Boolean mask of points inside the agent (or field) box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, up = (self.field_lower, self.field_upper) if field else (self.lower, self.upper)
        mask = np.all((pts >= lo) & (pts <= up), axis=-1)
        return mask if np.asarray(points).ndim > 1 else bool(mask[0])


# ---------------------------------------------------------------------------
# Truncated-Gaussian machinery (per-coordinate, product form)
# ---------------------------------------------------------------------------


def _trunc_normalizers(centers: np.ndarray, sigma: float, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Per-coordinate Gaussian mass of [lower, upper] around each center."""
    return ndtr((upper - centers) / sigma) - ndtr((lower - centers) / sigma)


def truncnorm_density(x: np.ndarray, y: np.ndarray, sigma: float, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Product truncated-Gaussian density centered at ``x`` evaluated at ``y``.

    ``x`` and ``y`` broadcast over leading axes; the last axis is the
    coordinate axis. Points outside the box get density zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = _trunc_normalizers(x, sigma, lower, upper)
    per_coord = _std_normal_pdf((y - x) / sigma) / (sigma * z)
    inside = np.all((y >= lower) & (y <= upper), axis=-1)
    return np.prod(per_coord, axis=-1) * inside


def truncnorm_sample(
    x: np.ndarray,
    sigma: float,
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
    size: int | None = None,
    max_tries: int = 64,
) -> np.ndarray:
    """Draw from the product truncated Gaussian centered at ``x``.

    Rejection against the box, falling back to coordinatewise inverse-CDF
    sampling for any draw still unresolved after ``max_tries`` rounds. The
    fallback is exact, so the cap only bounds work, not correctness.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("draws center on a single point of shape (d,); use size= for batches")
    n = 1 if size is None else int(size)
    d = x.size
    out = np.empty((n, d))
    pending = np.ones(n, dtype=bool)
    for _ in range(max_tries):
        k = int(pending.sum())
        if k == 0:
            break
        draws = x + sigma * rng.standard_normal((k, d))
        ok = np.all((draws >= lower) & (draws <= upper), axis=-1)
        idx = np.flatnonzero(pending)[ok]
        out[idx] = draws[ok]
        pending[idx] = False
    k = int(pending.sum())
    if k:
        a = ndtr((lower - x) / sigma)
        b = ndtr((upper - x) / sigma)
        u = rng.random((k, d))
        out[pending] = x + sigma * ndtri(a + u * (b - a))
    return out[0] if size is None else out


# ---------------------------------------------------------------------------
# Kernel bank
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelBank:
    """Immutable bundle of kernel parameters and their derived constants.

    The proposal kernel mixes ``eps_q`` of uniform reinjection over the agent
    box with ``1 - eps_q`` of a truncated Gaussian step of width ``q_sigma``;
    the fallback kernel is uniform over the agent box. The field diffuses with
    an isotropic Gaussian of width ``p_sigma`` and receives agent deposits
    through an isotropic Gaussian of width ``pprime_sigma``.

    Derived fields are valid upper (resp. lower) bounds, not necessarily
    tight; randomized tests check the defining inequalities directly.

    Attributes
    ----------
    proposal_sup_density : float
        Supremum of the proposal and fallback densities over all center/target
        pairs in the agent box.
    proposal_lipschitz : float
        Lipschitz constant, in the center argument, of the proposal and
        fallback kernels measured against the uniform dominating measure on
        the agent box: ``|Q(x, A) - Q(x', A)| <= proposal_lipschitz * |x - x'|
        * Uniform(A)`` for every cell A.
    p_sup_density, pprime_sup_density, field_sup_density : float
        Suprema of the diffusion and deposit densities, and their maximum.
        One field refresh always has oscillation at most ``field_sup_density``.
    p_lipschitz, pprime_lipschitz, field_lipschitz : float
        Lipschitz constants of the Gaussian densities in either argument, and
        their maximum.
    pprime_return_mass : float
        Infimum over centers in the agent box of the deposit mass landing back
        inside the agent box.
    pprime_floor_mass : float
        Uniform minorization weight of the deposit kernel restricted to the
        agent box.
    pprime_contraction : float
        Total-variation contraction factor of the deposit kernel acting on
        differences of probability measures on the agent box:
        ``1 - pprime_return_mass * pprime_floor_mass``.
    """

    domain: BoxDomain
    q_sigma: float
    eps_q: float
    q0: str
    p_sigma: float
    pprime_sigma: float
    proposal_sup_density: float
    proposal_lipschitz: float
    p_sup_density: float
    pprime_sup_density: float
    field_sup_density: float
    p_lipschitz: float
    pprime_lipschitz: float
    field_lipschitz: float
    pprime_return_mass: float
    pprime_floor_mass: float
    pprime_contraction: float

    def constants(self) -> dict[str, float]:
        """Derived constants as a plain dict (for reports and metadata)."""
        skip = {"domain", "q0"}
        return {f.name: float(getattr(self, f.name)) for f in fields(self) if f.name not in skip}


def _gaussian_sup(sigma: float, dim: int) -> float:
    return float((2.0 * np.pi * sigma * sigma) ** (-dim / 2.0))


def _gaussian_lipschitz(sigma: float, dim: int) -> float:
    # max over r of density(r) * r / sigma^2, attained at r = sigma
    return _gaussian_sup(sigma, dim) / (sigma * np.sqrt(np.e))


def derive_constants(
    domain: BoxDomain,
    *,
    q_sigma: float,
    eps_q: float,
    p_sigma: float,
    pprime_sigma: float,
    q0: str = "uniform",
) -> KernelBank:
    """Validate kernel parameters and assemble the immutable bank.

    Parameters
    ----------
    domain : BoxDomain
        Geometry the kernels act on.
    q_sigma : float
        Truncated-Gaussian step width of the proposal kernel.
    eps_q : float
        Uniform reinjection weight of the proposal kernel, in (0, 1].
    p_sigma, pprime_sigma : float
        Widths of the field diffusion and deposit kernels.
    q0 : str
        Fallback kernel; only ``"uniform"`` is supported.

    Returns
    -------
    KernelBank
    """
    if not 0.0 < eps_q <= 1.0:
        raise ValueError(f"eps_q must lie in (0, 1], got {eps_q}")
    for name, val in (("q_sigma", q_sigma), ("p_sigma", p_sigma), ("pprime_sigma", pprime_sigma)):
        if val <= 0.0:
            raise ValueError(f"{name} must be positive, got {val}")
    if q0 != "uniform":
        raise ValueError(f"unsupported fallback kernel {q0!r}; only 'uniform' is available")

    d = domain.dim
    vol = domain.volume
    widths = domain.widths

    # Per-coordinate truncated-Gaussian bounds. The normalizer is smallest
    # when the center sits in a corner of the box.
    z_min = ndtr(widths / q_sigma) - 0.5
    g_sup = _PHI0 / (q_sigma * z_min)  # per-coordinate density sup
    # |d/dcenter| of the per-coordinate density: kernel-slope term plus the
    # normalizer-variation term.
    g_lip = _PHI0 / (q_sigma**2 * np.sqrt(np.e) * z_min) + _PHI0**2 / (q_sigma**2 * z_min**2)

    trunc_sup = float(np.prod(g_sup))
    # Product rule across coordinates, then l1 -> l2 on the center increment.
    others = trunc_sup / g_sup  # prod over j != i of g_sup[j]
    trunc_lip = float(np.sqrt(d) * np.max(g_lip * others))

    uniform_density = 1.0 / vol
    proposal_sup = max(eps_q * uniform_density + (1.0 - eps_q) * trunc_sup, uniform_density)
    proposal_lip = vol * (1.0 - eps_q) * trunc_lip

    p_sup = _gaussian_sup(p_sigma, d)
    pp_sup = _gaussian_sup(pprime_sigma, d)
    p_lip = _gaussian_lipschitz(p_sigma, d)
    pp_lip = _gaussian_lipschitz(pprime_sigma, d)

    # Deposit kernel restricted to the agent box: worst-case return mass is a
    # product of corner-centered one-sided normal masses, and the uniform
    # minorization weight comes from the density floor at opposite corners.
    return_mass = float(np.prod(ndtr(widths / pprime_sigma) - 0.5))
    floor = vol * pp_sup * float(np.exp(-np.sum(widths**2) / (2.0 * pprime_sigma**2)))

    return KernelBank(
        domain=domain,
        q_sigma=float(q_sigma),
        eps_q=float(eps_q),
        q0=q0,
        p_sigma=float(p_sigma),
        pprime_sigma=float(pprime_sigma),
        proposal_sup_density=float(proposal_sup),
        proposal_lipschitz=float(proposal_lip),
        p_sup_density=p_sup,
        pprime_sup_density=pp_sup,
        field_sup_density=max(p_sup, pp_sup),
        p_lipschitz=p_lip,
        pprime_lipschitz=pp_lip,
        field_lipschitz=max(p_lip, pp_lip),
        pprime_return_mass=return_mass,
        pprime_floor_mass=floor,
        pprime_contraction=1.0 - return_mass * floor,
    )


# ---------------------------------------------------------------------------
# Kernel operations
# ---------------------------------------------------------------------------


def q_density(bank: KernelBank, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Proposal density at target ``y`` for an agent at ``x``.

    Both arguments broadcast over leading axes with the coordinate axis last;
    centers are assumed to lie in the agent box.
    """
    dom = bank.domain
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.all((y >= dom.lower) & (y <= dom.upper), axis=-1)
    tn = truncnorm_density(x, y, bank.q_sigma, dom.lower, dom.upper)
    return (bank.eps_q / dom.volume) * inside + (1.0 - bank.eps_q) * tn


def q_sample(
    bank: KernelBank, x: np.ndarray, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Draw proposal moves for an agent at ``x``.

    Returns a single point of shape (d,) when ``size`` is None, else an array
    of shape (size, d).
    """
    dom = bank.domain
    x = np.asarray(x, dtype=float)
    n = 1 if size is None else int(size)
    take_uniform = rng.random(n) < bank.eps_q
    out = np.empty((n, dom.dim))
    k = int(take_uniform.sum())
    if k:
        out[take_uniform] = dom.lower + rng.random((k, dom.dim)) * dom.widths
    if n - k:
        out[~take_uniform] = truncnorm_sample(
            x, bank.q_sigma, dom.lower, dom.upper, rng, size=n - k
        )
    return out[0] if size is None else out


def q0_density(bank: KernelBank, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Fallback density at target ``y`` (uniform over the agent box)."""
    dom = bank.domain
    y = np.asarray(y, dtype=float)
    inside = np.all((y >= dom.lower) & (y <= dom.upper), axis=-1)
    return np.asarray(inside, dtype=float) / dom.volume


def q0_sample(
    bank: KernelBank, x: np.ndarray, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Draw fallback moves (uniform over the agent box)."""
    dom = bank.domain
    n = 1 if size is None else int(size)
    out = dom.lower + rng.random((n, dom.dim)) * dom.widths
    return out[0] if size is None else out


def p_density(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    """Isotropic Gaussian transition density on free space.

    ``x`` and ``y`` broadcast over leading axes with the coordinate axis last.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = y - x
    d = diff.shape[-1]
    sq = np.sum(diff * diff, axis=-1)
    return _gaussian_sup(sigma, d) * np.exp(-0.5 * sq / (sigma * sigma))


def field_tail_radius(
    delta: float,
    eps: float,
    p_sigma: float,
    pprime_sigma: float,
    extra_sigma: float = 0.0,
    dim: int = 1,
) -> float:
    """Margin beyond the agent box that traps all but ``delta`` of field mass.

    The field at any step is a mixture of Gaussians centered in the agent box
    whose widths grow like ``sqrt(pprime_sigma^2 + j * p_sigma^2)`` under
    geometric weights ``(1 - eps)^j``; truncating the mixture index at the
    point where residual weight drops below ``delta/2`` and bounding each
    remaining component's box tail by ``delta/2`` yields a radius valid
    uniformly in time. ``extra_sigma`` accounts for the initial field width.
    """
    if not 0.0 < delta < 2.0:
        raise ValueError(f"delta must lie in (0, 2), got {delta}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1) for a tail radius, got {eps}")
    j0 = max(int(np.ceil(np.log(delta / 2.0) / np.log(1.0 - eps))) - 1, 0)
    sigma_star = float(np.sqrt(max(pprime_sigma**2, extra_sigma**2) + j0 * p_sigma**2))
    return sigma_star * float(ndtri(1.0 - delta / (4.0 * dim)))
