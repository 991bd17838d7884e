"""Grids, densities, mixtures, distances, and the test-function net.

Oracles: closed-form Gaussian algebra, quadrature sums, scipy cell-mass
integrals, and brute-force verification of the net's defining properties on
randomly generated Lipschitz functions.
"""
import numpy as np
import pytest
from scipy.special import ndtr

from agentfield.measures import (
    EmpiricalMeasure,
    GaussianMixture,
    GridDensity,
    UniformGrid,
    agent_grid,
    build_net,
    field_grid,
    mixture_component_counts,
    net_distance,
    normalize_cell_values,
    oscillation,
    rasterize,
    single_gaussian,
    sup_distance,
    tv_distance,
    uniform_density,
)


def unit_grid(cells=64, dim=1):
    return UniformGrid(np.zeros(dim), np.ones(dim), (cells,) * dim)


class TestUniformGrid:
    def test_geometry(self):
        g = UniformGrid(np.array([0.0, -1.0]), np.array([1.0, 1.0]), (4, 8))
        assert np.allclose(g.steps, [0.25, 0.25])
        assert g.cell_volume == pytest.approx(0.0625)
        assert g.midpoints.shape == (32, 2)
        assert np.allclose(g.midpoints[0], [0.125, -0.875])

    def test_locate_midpoints_roundtrip(self):
        g = unit_grid(16)
        mids = g.midpoints.reshape(-1, 1)
        idx = g.locate(mids)
        assert np.array_equal(idx.ravel(), np.arange(16))

    def test_locate_clamps_to_box(self):
        g = unit_grid(8)
        idx = g.locate(np.array([[-0.5], [1.5]]))
        assert idx.ravel().tolist() == [0, 7]

    def test_interpolate_linear_function_exact(self):
        # Multilinear interpolation reproduces affine functions exactly
        # between midpoints.
        g = unit_grid(32)
        vals = 2.0 * g.midpoints[..., 0] + 1.0
        pts = np.linspace(g.midpoints[0, 0], g.midpoints[-1, 0], 100)[:, None]
        got = g.interpolate(vals, pts)
        assert np.allclose(got, 2.0 * pts[:, 0] + 1.0, atol=1e-12)


class TestGridDensity:
    def test_validates_mass_and_sign(self):
        g = unit_grid(4)
        with pytest.raises(ValueError):
            GridDensity(g, np.array([1.0, 1.0, 1.0, 2.0]))
        with pytest.raises(ValueError):
            GridDensity(g, np.array([-1.0, 2.0, 2.0, 1.0]))

    def test_uniform_and_integral(self):
        g = unit_grid(10)
        u = uniform_density(g)
        assert u.integral() == pytest.approx(1.0)
        assert np.allclose(u.flat, 1.0)

    def test_sample_matches_density(self, rng):
        g = unit_grid(8)
        vals = np.array([0.5, 1.5, 2.0, 1.0, 0.5, 1.0, 0.8, 0.7])
        dens = GridDensity(g, vals / (vals.sum() / 8))
        pts = dens.sample(40000, rng)
        assert np.all((pts >= 0) & (pts <= 1))
        counts = np.bincount(g.locate(pts).ravel(), minlength=8) / 40000
        expect = dens.flat * g.cell_volume
        se = np.sqrt(expect * (1 - expect) / 40000)
        assert np.all(np.abs(counts - expect) <= 5 * se + 1e-12)

    def test_normalize_reports_leak(self):
        g = unit_grid(4)
        dens, leak = normalize_cell_values(g, np.array([1.0, 1.0, 1.0, 1.0]) * 0.2)
        assert dens.integral() == pytest.approx(1.0)
        assert leak == pytest.approx(1.0 - 0.2)

    def test_csv_roundtrip(self, tmp_path, rng):
        g = unit_grid(16)
        vals = rng.random(16) + 0.1
        dens = GridDensity(g, vals / (vals.mean()))
        path = tmp_path / "d.csv"
        dens.to_csv(path)
        back = GridDensity.from_csv(path)
        assert back.grid.matches(g)
        assert np.array_equal(back.flat, dens.flat)


class TestEmpiricalMeasure:
    def test_resample_is_multinomial(self, rng):
        pts = np.array([[0.0], [1.0]])
        emp = EmpiricalMeasure(pts)
        out = emp.sample(10000, rng)
        frac = (out.points == 1.0).mean()
        assert abs(frac - 0.5) < 0.02

    def test_csv_roundtrip(self, tmp_path, rng):
        emp = EmpiricalMeasure(rng.uniform(0, 1, size=(50, 2)))
        path = tmp_path / "e.csv"
        emp.to_csv(path)
        back = EmpiricalMeasure.from_csv(path)
        assert np.array_equal(back.points, emp.points)


class TestGaussianMixture:
    def test_density_integrates_to_one(self):
        mix = GaussianMixture(
            np.array([0.3, 0.7]), np.array([[0.2], [0.8]]), np.array([0.1, 0.3])
        )
        xs = np.linspace(-4, 5, 20000)[:, None]
        total = mix.density(xs).sum() * (xs[1, 0] - xs[0, 0])
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_convolution_closed_form_matches_quadrature(self):
        # Independent check of the algebra the mixture relies on: convolving
        # N(mu, s1^2) with a centered N(0, s2^2) kernel gives N(mu, s1^2+s2^2).
        mu, s1, s2 = 0.4, 0.3, 0.25
        ys = np.linspace(-5, 5, 8001)
        h = ys[1] - ys[0]
        target = np.array([0.1, 0.7, 1.3])
        src = np.exp(-((ys - mu) ** 2) / (2 * s1**2)) / np.sqrt(2 * np.pi * s1**2)
        numeric = [
            float((np.exp(-((t - ys) ** 2) / (2 * s2**2)) / np.sqrt(2 * np.pi * s2**2) * src).sum() * h)
            for t in target
        ]
        mix = single_gaussian(np.array([mu]), s1).convolve(s2)
        got = mix.density(target[:, None])
        assert np.allclose(got, numeric, atol=1e-8)
        assert mix.sigmas[0] == pytest.approx(np.hypot(s1, s2))

    def test_sample_moments(self, rng):
        mix = GaussianMixture(
            np.array([0.5, 0.5]), np.array([[-1.0], [1.0]]), np.array([0.2, 0.2])
        )
        pts = mix.sample(40000, rng)
        assert abs(pts.mean()) < 0.02
        assert np.var(pts) == pytest.approx(1.0 + 0.04, abs=0.03)

    def test_json_roundtrip(self, tmp_path):
        mix = GaussianMixture(
            np.array([0.25, 0.75]), np.array([[0.1], [0.9]]), np.array([0.2, 0.4])
        )
        path = tmp_path / "m.json"
        mix.to_json(path)
        back = GaussianMixture.from_json(path)
        assert np.array_equal(back.weights, mix.weights)
        assert np.array_equal(back.means, mix.means)
        assert np.array_equal(back.sigmas, mix.sigmas)

    def test_validates_weights(self):
        with pytest.raises(ValueError):
            GaussianMixture(np.array([0.5, 0.6]), np.zeros((2, 1)), np.array([1.0, 1.0]))

    def test_component_counts(self):
        # Budget formula for the exact field expansion: one cloud of N per
        # refresh plus the initial components.
        assert mixture_component_counts(100, 3) == 301
        assert mixture_component_counts(10, 0, init_components=5) == 5


class TestRasterize:
    def test_matches_scipy_pdf_at_midpoints(self):
        from scipy.stats import norm

        grid = UniformGrid(np.array([-3.0]), np.array([4.0]), (256,))
        mix = single_gaussian(np.array([0.5]), 0.3)
        dens = rasterize(mix, grid)
        pdf = norm.pdf(grid.midpoints[:, 0], 0.5, 0.3)
        pdf = pdf / (pdf.sum() * grid.cell_volume)
        assert np.max(np.abs(dens.flat - pdf)) < 1e-12

    def test_midpoint_sum_is_spectrally_accurate(self):
        # The midpoint sum of a smooth Gaussian matches the CDF mass far
        # beyond float precision once sigma spans a few cells; this is what
        # lets grid densities stand in for the continuous measures.
        grid = UniformGrid(np.array([-3.0]), np.array([4.0]), (256,))
        mix = single_gaussian(np.array([0.5]), 0.3)
        mids = grid.midpoints[:, 0]
        midsum = mix.density(grid.midpoints).sum() * grid.cell_volume
        true_mass = ndtr((4.0 - 0.5) / 0.3) - ndtr((-3.0 - 0.5) / 0.3)
        assert abs(midsum - true_mass) < 1e-12
        assert mids.size == 256

    def test_leak_accounting(self):
        grid = unit_grid(64)
        wide = single_gaussian(np.array([0.5]), 2.0)
        dens = rasterize(wide, grid)
        assert dens.leaked_mass > 0.5
        assert dens.integral() == pytest.approx(1.0)


class TestDistances:
    def test_tv_disjoint_is_two(self):
        g = unit_grid(4)
        a = GridDensity(g, np.array([4.0, 0.0, 0.0, 0.0]))
        b = GridDensity(g, np.array([0.0, 0.0, 0.0, 4.0]))
        assert tv_distance(a, b) == pytest.approx(2.0)
        assert tv_distance(a, a) == 0.0

    def test_tv_half_overlap(self):
        g = unit_grid(4)
        a = GridDensity(g, np.array([2.0, 2.0, 0.0, 0.0]))
        b = GridDensity(g, np.array([0.0, 2.0, 2.0, 0.0]))
        assert tv_distance(a, b) == pytest.approx(1.0)

    def test_sup_and_oscillation(self):
        g = unit_grid(4)
        a = GridDensity(g, np.array([2.0, 1.0, 0.5, 0.5]))
        b = uniform_density(g)
        assert sup_distance(a, b) == pytest.approx(1.0)
        assert oscillation(a.flat) == pytest.approx(1.5)


class TestFunctionNet:
    def test_one_d_counts_and_properties(self):
        net = build_net(np.array([0.0]), np.array([1.0]), bound=1.0, lipschitz=1.0, delta=0.25)
        # 5 node columns, value quantum 0.25, members pruned to one-quantum
        # adjacency between neighbors.
        assert net.nodes[0].size == 5
        vals = net.member_values
        assert np.all(np.abs(vals) <= 1.0 + 1e-12)
        mesh = net.nodes[0][1] - net.nodes[0][0]
        assert np.all(np.abs(np.diff(vals, axis=1)) <= 1.0 * mesh + 1e-12)
        assert net.size <= 5 ** 5
        assert net.delta == 0.25

    def test_exact_cover_in_one_d(self, rng):
        # Any 1-Lipschitz function bounded by 1 has a net member within delta
        # at every node.
        net = build_net(np.array([0.0]), np.array([1.0]), bound=1.0, lipschitz=1.0, delta=0.25)
        nodes = net.nodes[0]
        for _ in range(200):
            f0 = rng.uniform(-1, 1)
            slopes = rng.uniform(-1, 1, size=len(nodes) - 1)
            fvals = np.concatenate([[f0], f0 + np.cumsum(slopes * np.diff(nodes))])
            fvals = np.clip(fvals, -1, 1)
            gap = np.abs(net.member_values - fvals).max(axis=1).min()
            assert gap <= net.delta + 1e-12

    def test_capacity_error(self):
        with pytest.raises(ValueError):
            build_net(
                np.array([0.0]), np.array([1.0]), bound=1.0, lipschitz=1.0, delta=0.02,
                max_members=1000,
            )

    def test_net_distance_bounded_by_tv(self, rng):
        g = unit_grid(32)
        net = build_net(np.array([0.0]), np.array([1.0]), delta=0.25)
        for _ in range(20):
            v1 = rng.random(32) + 0.05
            v2 = rng.random(32) + 0.05
            a = GridDensity(g, v1 / (v1.mean()))
            b = GridDensity(g, v2 / (v2.mean()))
            nd = net_distance(a, b, net)
            assert 0.0 <= nd <= tv_distance(a, b) + 1e-12
        assert net_distance(a, a, net) == 0.0

    def test_net_distance_detects_shift(self):
        g = unit_grid(64)
        net = build_net(np.array([0.0]), np.array([1.0]), delta=0.2)
        a = rasterize(single_gaussian(np.array([0.3]), 0.1), g)
        b = rasterize(single_gaussian(np.array([0.7]), 0.1), g)
        # A 1-Lipschitz witness separates these by about the mean shift.
        assert net_distance(a, b, net) > 0.25

    def test_empirical_against_density(self, rng):
        net = build_net(np.array([0.0]), np.array([1.0]), delta=0.25)
        mix = single_gaussian(np.array([0.5]), 0.2)
        emp = EmpiricalMeasure(mix.sample(4000, rng))
        g = unit_grid(64)
        dens = rasterize(mix, g)
        assert net_distance(emp, dens, net) < 0.1
        with pytest.raises(TypeError):
            net_distance(mix, dens, net)
