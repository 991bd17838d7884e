"""Kernel densities, samplers, and derived constants against independent oracles.

Density oracles come from scipy.stats.truncnorm and midpoint quadrature;
constant oracles from brute-force grid extremization of the defining
expressions. The implementation deliberately avoids scipy.stats, so these
comparisons are independent.
"""
import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtr

from agentfield.kernels import (
    BoxDomain,
    derive_constants,
    field_tail_radius,
    q0_density,
    q0_sample,
    q_density,
    q_sample,
    truncnorm_density,
    truncnorm_sample,
)


def unit_domain(dim=1, margin=2.0):
    return BoxDomain.build([0.0] * dim, [1.0] * dim, field_margin=margin)


def default_bank(dim=1):
    return derive_constants(
        unit_domain(dim), q_sigma=0.25, eps_q=0.5, p_sigma=0.3, pprime_sigma=0.5
    )


def scipy_trunc_pdf(x, y, sigma, lo=0.0, hi=1.0):
    a, b = (lo - x) / sigma, (hi - x) / sigma
    return stats.truncnorm.pdf(y, a, b, loc=x, scale=sigma)


class TestBoxDomain:
    def test_build_and_geometry(self):
        dom = BoxDomain.build([0.0, -1.0], [2.0, 3.0], field_margin=1.5)
        assert dom.dim == 2
        assert np.allclose(dom.widths, [2.0, 4.0])
        assert dom.volume == pytest.approx(8.0)
        assert dom.diameter == pytest.approx(np.hypot(2.0, 4.0))
        assert np.allclose(dom.field_lower, [-1.5, -2.5])
        assert np.allclose(dom.field_widths, [5.0, 7.0])

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            BoxDomain.build([0.0], [0.0], field_margin=1.0)
        with pytest.raises(ValueError):
            BoxDomain.build([0.0], [1.0], field_margin=-1.0)

    def test_contains(self):
        dom = unit_domain()
        pts = np.array([[0.5], [1.5], [-2.5]])
        assert list(dom.contains(pts)) == [True, False, False]
        assert list(dom.contains(pts, field=True)) == [True, True, False]


class TestTruncnormDensity:
    def test_matches_scipy_1d(self, rng):
        xs = rng.uniform(0, 1, size=(20, 1))
        ys = rng.uniform(0, 1, size=(40, 1))
        for sigma in (0.1, 0.25, 0.8):
            for x in xs:
                got = truncnorm_density(x, ys, sigma, np.array([0.0]), np.array([1.0]))
                want = scipy_trunc_pdf(x[0], ys[:, 0], sigma)
                assert np.allclose(got, want, atol=1e-12)

    def test_matches_scipy_product_2d(self, rng):
        lo, hi = np.zeros(2), np.ones(2)
        x = np.array([0.3, 0.8])
        ys = rng.uniform(0, 1, size=(30, 2))
        got = truncnorm_density(x, ys, 0.25, lo, hi)
        want = scipy_trunc_pdf(x[0], ys[:, 0], 0.25) * scipy_trunc_pdf(x[1], ys[:, 1], 0.25)
        assert np.allclose(got, want, atol=1e-12)

    def test_zero_outside_box(self):
        got = truncnorm_density(
            np.array([0.5]), np.array([[1.2], [-0.1]]), 0.25, np.array([0.0]), np.array([1.0])
        )
        assert np.all(got == 0.0)

    def test_integrates_to_one(self):
        grid = (np.arange(4000) + 0.5) / 4000
        for x in (0.0, 0.37, 1.0):
            vals = truncnorm_density(
                np.array([x]), grid[:, None], 0.25, np.array([0.0]), np.array([1.0])
            )
            assert vals.sum() / 4000 == pytest.approx(1.0, abs=1e-6)


class TestTruncnormSampler:
    def test_stays_in_box(self, rng):
        out = truncnorm_sample(np.array([0.99]), 0.5, np.array([0.0]), np.array([1.0]), rng, size=5000)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_ks_against_scipy(self, rng):
        x, sigma = 0.3, 0.25
        out = truncnorm_sample(np.array([x]), sigma, np.array([0.0]), np.array([1.0]), rng, size=20000)
        res = stats.kstest(out[:, 0], lambda t: stats.truncnorm.cdf(t, -x / sigma, (1 - x) / sigma, loc=x, scale=sigma))
        assert res.pvalue > 1e-4

    def test_fallback_path_exact(self, rng):
        # Huge sigma: rejection almost never succeeds, so the inverse-CDF
        # fallback carries the distribution. It must still be exact.
        x, sigma = 0.5, 50.0
        out = truncnorm_sample(
            np.array([x]), sigma, np.array([0.0]), np.array([1.0]), rng, size=20000, max_tries=1
        )
        assert out.min() >= 0.0 and out.max() <= 1.0
        a, b = (0 - x) / sigma, (1 - x) / sigma
        res = stats.kstest(out[:, 0], lambda t: stats.truncnorm.cdf(t, a, b, loc=x, scale=sigma))
        assert res.pvalue > 1e-4

    def test_shapes_and_center_guard(self, rng):
        single = truncnorm_sample(np.array([0.5, 0.5]), 0.3, np.zeros(2), np.ones(2), rng)
        assert single.shape == (2,)
        many = truncnorm_sample(np.array([0.5, 0.5]), 0.3, np.zeros(2), np.ones(2), rng, size=7)
        assert many.shape == (7, 2)
        assert np.all((many >= 0) & (many <= 1))
        with pytest.raises(ValueError):
            truncnorm_sample(rng.uniform(0, 1, size=(7, 2)), 0.3, np.zeros(2), np.ones(2), rng)


class TestProposal:
    def test_density_formula(self, rng):
        bank = default_bank()
        x = np.array([0.4])
        ys = rng.uniform(0, 1, size=(50, 1))
        got = q_density(bank, x, ys)
        trunc = scipy_trunc_pdf(0.4, ys[:, 0], 0.25)
        want = (1 - 0.5) * trunc + 0.5 * 1.0
        assert np.allclose(got, want, atol=1e-12)

    def test_density_integrates_to_one(self):
        bank = default_bank()
        grid = ((np.arange(4000) + 0.5) / 4000)[:, None]
        for x in (0.0, 0.42, 1.0):
            vals = q_density(bank, np.array([x]), grid)
            assert vals.sum() / 4000 == pytest.approx(1.0, abs=1e-6)

    def test_sampler_ks(self, rng):
        bank = default_bank()
        x, sigma, eq = 0.7, 0.25, 0.5
        out = q_sample(bank, np.array([x]), rng, size=30000)

        def cdf(t):
            tn = stats.truncnorm.cdf(t, -x / sigma, (1 - x) / sigma, loc=x, scale=sigma)
            return (1 - eq) * tn + eq * np.clip(t, 0, 1)

        res = stats.kstest(out[:, 0], cdf)
        assert res.pvalue > 1e-4

    def test_uniform_part(self, rng):
        bank = default_bank()
        ys = rng.uniform(0, 1, size=(10, 1))
        assert np.allclose(q0_density(bank, np.array([0.2]), ys), 1.0)
        out = q0_sample(bank, np.array([0.2]), rng, size=5000)
        assert out.min() >= 0 and out.max() <= 1
        res = stats.kstest(out[:, 0], "uniform")
        assert res.pvalue > 1e-4


class TestDerivedConstants:
    def test_proposal_sup_by_grid_search(self):
        bank = default_bank()
        grid = ((np.arange(400) + 0.5) / 400)[:, None]
        best = max(float(q_density(bank, x, grid).max()) for x in grid[::4])
        assert best <= bank.proposal_sup_density + 1e-12
        assert best >= 0.9 * bank.proposal_sup_density

    def test_proposal_lipschitz_in_tv(self, rng):
        # tv of x -> Q(x, .) against the claimed Lipschitz constant, with tv
        # computed by midpoint quadrature of |q(x,.) - q(x',.)|.
        bank = default_bank()
        grid = ((np.arange(2000) + 0.5) / 2000)[:, None]
        for _ in range(30):
            x1, x2 = rng.uniform(0, 1, size=(2, 1))
            d1 = q_density(bank, x1, grid)
            d2 = q_density(bank, x2, grid)
            tv = float(np.abs(d1 - d2).sum()) / 2000
            assert tv <= bank.proposal_lipschitz * abs(float(x1[0] - x2[0])) + 1e-9

    def test_gaussian_sup_is_exact(self):
        bank = default_bank()
        assert bank.p_sup_density == pytest.approx(1 / np.sqrt(2 * np.pi * 0.3**2), rel=1e-12)
        assert bank.pprime_sup_density == pytest.approx(1 / np.sqrt(2 * np.pi * 0.5**2), rel=1e-12)
        assert bank.field_sup_density == pytest.approx(
            max(bank.p_sup_density, bank.pprime_sup_density), rel=1e-12
        )

    def test_gaussian_lipschitz_by_sampling(self, rng):
        bank = default_bank()
        sigma = 0.3
        ys = rng.normal(0, 1.0, size=(200, 1))
        for _ in range(30):
            x1, x2 = rng.uniform(0, 1, size=(2, 1))
            d1 = np.exp(-((ys - x1) ** 2) / (2 * sigma**2)).ravel() / np.sqrt(2 * np.pi * sigma**2)
            d2 = np.exp(-((ys - x2) ** 2) / (2 * sigma**2)).ravel() / np.sqrt(2 * np.pi * sigma**2)
            sup = float(np.abs(d1 - d2).max())
            assert sup <= bank.p_lipschitz * abs(float(x1[0] - x2[0])) + 1e-12

    def test_return_mass_by_quadrature(self):
        # Mass the deposit kernel keeps inside the agent box, minimized over
        # the start point; the minimum sits at a corner.
        bank = default_bank()
        sigma = 0.5
        xs = np.linspace(0, 1, 41)
        masses = [ndtr((1 - x) / sigma) - ndtr((0 - x) / sigma) for x in xs]
        assert min(masses) == pytest.approx(bank.pprime_return_mass, abs=1e-12)

    def test_floor_mass_by_corner_search(self):
        bank = default_bank()
        sigma = 0.5
        xs = np.linspace(0, 1, 21)
        dens = np.exp(-((xs[:, None] - xs[None, :]) ** 2) / (2 * sigma**2)) / np.sqrt(
            2 * np.pi * sigma**2
        )
        assert dens.min() == pytest.approx(bank.pprime_floor_mass, rel=1e-12)

    def test_deposit_contraction_by_discretized_dobrushin(self):
        # Numeric Dobrushin coefficient of the deposit kernel on a fine grid
        # must respect the closed-form bound.
        bank = default_bank()
        sigma = 0.5
        xs = np.linspace(0, 1, 9)
        field = np.linspace(-2, 3, 2001)
        h = field[1] - field[0]
        rows = np.exp(-((field[None, :] - xs[:, None]) ** 2) / (2 * sigma**2)) / np.sqrt(
            2 * np.pi * sigma**2
        )
        worst = 0.0
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                worst = max(worst, 0.5 * float(np.abs(rows[i] - rows[j]).sum()) * h)
        assert worst <= bank.pprime_contraction + 1e-6
        assert worst >= 0.25 * bank.pprime_contraction

    def test_constants_dict_roundtrip(self):
        bank = default_bank()
        d = bank.constants()
        assert d["q_sigma"] == 0.25
        assert d["pprime_contraction"] == pytest.approx(
            1 - bank.pprime_return_mass * bank.pprime_floor_mass, rel=1e-12
        )

    def test_rejects_bad_parameters(self):
        dom = unit_domain()
        with pytest.raises(ValueError):
            derive_constants(dom, q_sigma=-1.0, eps_q=0.5, p_sigma=0.3, pprime_sigma=0.5)
        with pytest.raises(ValueError):
            derive_constants(dom, q_sigma=0.25, eps_q=0.0, p_sigma=0.3, pprime_sigma=0.5)
        with pytest.raises(ValueError):
            derive_constants(dom, q_sigma=0.25, eps_q=0.5, p_sigma=0.3, pprime_sigma=0.5, q0="other")


class TestFieldTailRadius:
    def test_monotone_in_delta(self):
        r1 = field_tail_radius(1e-2, 0.2, 0.3, 0.5)
        r2 = field_tail_radius(1e-4, 0.2, 0.3, 0.5)
        assert r2 > r1 > 0

    def test_covers_refresh_mixture_tail(self):
        # Worst case source: all deposits at one point. The refresh expansion
        # is then a mixture of centered Gaussians with linearly growing
        # variance; the radius must capture all but delta of its mass.
        delta, eps, sp, spp = 1e-3, 0.2, 0.3, 0.5
        r = field_tail_radius(delta, eps, sp, spp)
        mass_outside = 0.0
        weight_left = 1.0
        for j in range(2000):
            w = eps * (1 - eps) ** j
            sigma = np.sqrt(spp**2 + j * sp**2)
            mass_outside += w * 2 * (1 - ndtr(r / sigma))
            weight_left -= w
        mass_outside += max(weight_left, 0.0)
        assert mass_outside <= delta

    def test_extra_sigma_accounts_initial_spread(self):
        base = field_tail_radius(1e-3, 0.2, 0.3, 0.5)
        wide = field_tail_radius(1e-3, 0.2, 0.3, 0.5, extra_sigma=2.0)
        assert wide > base
