import numpy as np
import pytest

from config.config_loader import get_config
from models.data_models import GridSpec, LagBins, RngSpec, SpaceRef
from modules import simulation
from modules.correlations import GaussianCorrelation
from modules.estimation import experimental_variogram, near_origin_exponent
from modules.model_spec_parser import parse_model_spec
from modules.variogram_models import MixtureSpec, VariogramModel, combine
from utils.errors import InputError, NumericalError

LINE = SpaceRef.euclidean(1)
PLANE = SpaceRef.euclidean(2)


def indicator_variogram(values, i=0, j=1):
    values = np.asarray(values, dtype=float)
    return 0.5 * np.mean((values[:, i] - values[:, j]) ** 2)


class TestGaussianVectors:
    def test_identity_factor(self):
        L, ridge = simulation.cholesky_factor(np.eye(2))
        np.testing.assert_allclose(L, np.eye(2))
        assert ridge == 0.0

    def test_independent_components(self):
        rho = GaussianCorrelation("nugget", LINE)
        ens = simulation.simulate_gaussian(rho, [0.0, 1.0], 20000, RngSpec(seed=1), workers=1)
        corr = np.corrcoef(ens.values.T)[0, 1]
        assert abs(corr) < 0.03

    def test_rank_one_covariance_gives_equal_components(self):
        for seed in range(5):
            y = simulation.sample_gaussian_vector(np.ones((2, 2)), RngSpec(seed=seed))
            assert y[0] == pytest.approx(y[1], abs=1e-3)

    def test_zero_covariance(self):
        y = simulation.sample_gaussian_vector(np.zeros((3, 3)), RngSpec(seed=0))
        np.testing.assert_array_equal(y, np.zeros(3))

    def test_indefinite_matrix_reports_minor(self):
        cov = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NumericalError, match="leading minor 2"):
            simulation.cholesky_factor(cov)

    def test_asymmetric_rejected(self):
        with pytest.raises(InputError):
            simulation.cholesky_factor(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_same_stream_same_draw(self):
        cov = np.array([[1.0, 0.3], [0.3, 1.0]])
        a = simulation.sample_gaussian_vector(cov, RngSpec(seed=9, stream=2))
        b = simulation.sample_gaussian_vector(cov, RngSpec(seed=9, stream=2))
        c = simulation.sample_gaussian_vector(cov, RngSpec(seed=9, stream=3))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestMedianIndicator:
    def test_constant_field_is_comonotone(self):
        mix = MixtureSpec.of((1.0, GaussianCorrelation("constant", LINE)))
        ens = simulation.simulate_median_indicator(mix, [0.0, 1.0, 5.0], 400, RngSpec(seed=2), workers=1)
        rows = ens.values
        assert np.all((rows.min(axis=1) == rows.max(axis=1)))
        assert 0.4 < rows[:, 0].mean() < 0.6

    def test_exponential_pair_at_half_correlation(self):
        mix = MixtureSpec.of((1.0, GaussianCorrelation("exponential", LINE, scale=1.0)))
        ens = simulation.simulate_median_indicator(mix, [0.0, np.log(2)], 40000, RngSpec(seed=3), workers=2)
        assert indicator_variogram(ens.values) == pytest.approx(1 / 6, abs=0.005)
        assert ens.values.mean() == pytest.approx(0.5, abs=0.01)

    def test_two_atoms(self):
        mix = MixtureSpec.of((0.5, GaussianCorrelation("constant", LINE)),
                             (0.5, GaussianCorrelation("nugget", LINE)))
        ens = simulation.simulate_median_indicator(mix, [0.0, 2.0], 40000, RngSpec(seed=4), workers=2)
        assert indicator_variogram(ens.values) == pytest.approx(0.125, abs=0.005)

    def test_binary_uint8_ensemble(self):
        mix = MixtureSpec.of((1.0, GaussianCorrelation("exponential", LINE, scale=1.0)))
        ens = simulation.simulate_median_indicator(mix, [0.0, 1.0], 3, RngSpec(seed=0), workers=1)
        assert ens.values.dtype == np.uint8
        assert ens.binary
        assert ens.provenance["algorithm"] == "median_indicator_mixture"

    def test_worker_count_does_not_change_ensemble(self):
        mix = MixtureSpec.of((0.3, GaussianCorrelation("gaussian", LINE, scale=2.0)),
                             (0.7, GaussianCorrelation("exponential", LINE, scale=1.0)))
        X = np.linspace(0, 5, 11)
        one = simulation.simulate_median_indicator(mix, X, 50, RngSpec(seed=11), workers=1)
        many = simulation.simulate_median_indicator(mix, X, 50, RngSpec(seed=11), workers=4)
        np.testing.assert_array_equal(one.values, many.values)

    def test_non_gaussian_atoms_rejected(self):
        g = VariogramModel("exponential", LINE, params={"a": 1.0})
        with pytest.raises(InputError):
            simulation.simulate_median_indicator(MixtureSpec.of((1.0, g)), [0.0, 1.0], 2, RngSpec())


class TestExcursion:
    def test_very_low_threshold_gives_ones(self):
        rho = GaussianCorrelation("exponential", LINE, scale=1.0)
        ens = simulation.simulate_excursion(rho, -50.0, [0.0, 1.0, 2.0], 20, RngSpec(seed=1), workers=1)
        assert np.all(ens.values == 1)

    def test_zero_threshold_matches_median_indicator(self):
        rho = GaussianCorrelation("exponential", LINE, scale=1.0)
        X = [0.0, 0.5, 2.0]
        a = simulation.simulate_excursion(rho, 0.0, X, 30, RngSpec(seed=6), workers=1)
        b = simulation.simulate_median_indicator(MixtureSpec.of((1.0, rho)), X, 30, RngSpec(seed=6), workers=1)
        np.testing.assert_array_equal(a.values, b.values)

    def test_mean_tracks_threshold(self):
        rho = GaussianCorrelation("exponential", LINE, scale=1.0)
        ens = simulation.simulate_excursion(rho, 1.0, [0.0], 20000, RngSpec(seed=8), workers=2)
        assert ens.values.mean() == pytest.approx(0.158655, abs=0.01)


class TestSphereExponential:
    def test_clt_second_moment(self):
        X = np.array([[1.0, 0.0, 0.0], [0.6, 0.8, 0.0]])
        gen = RngSpec(seed=5).generator()
        Y = np.array([simulation.clt_gaussian(X, 5, gen) for _ in range(20000)])
        assert np.mean(Y[:, 0] * Y[:, 1]) == pytest.approx(0.6, abs=0.05)
        assert np.mean(Y[:, 0] ** 2) == pytest.approx(1.0, abs=0.05)

    def test_small_rate_gives_constant_realizations(self):
        X = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
        ens = simulation.simulate_sphere_exponential(1e-9, X, 50, RngSpec(seed=1), Q=10, workers=1)
        assert np.all(ens.values.min(axis=1) == ens.values.max(axis=1))

    def test_variogram_matches_model(self):
        X = np.array([[1.0, 0.0, 0.0], [np.cos(0.5), np.sin(0.5), 0.0]])
        ens = simulation.simulate_sphere_exponential(2.0, X, 20000, RngSpec(seed=7), Q=500, workers=2)
        assert indicator_variogram(ens.values) == pytest.approx(0.25 * (1 - np.exp(-1.0)), abs=0.01)

    def test_off_sphere_points_rejected(self):
        with pytest.raises(InputError):
            simulation.simulate_sphere_exponential(1.0, np.array([[2.0, 0.0, 0.0]]), 1, RngSpec())

    def test_rate_must_be_positive(self):
        with pytest.raises(InputError):
            simulation.simulate_sphere_exponential(0.0, np.array([[1.0, 0.0, 0.0]]), 1, RngSpec())


class TestPoissonProduct:
    def test_matches_exp_comp_at_four_times_the_rate(self):
        base = VariogramModel("exponential", LINE, params={"a": 1.0})
        target = combine("exp_comp", base, t=2.0, varpi=1.0)
        ens = simulation.simulate_poisson_product(base, 0.5, [0.0, 1.0], 20000, RngSpec(seed=12), workers=2)
        assert indicator_variogram(ens.values) == pytest.approx(float(target.from_distance(1.0)), abs=0.01)

    def test_sign_product_covariance(self):
        base = VariogramModel("exponential", LINE, params={"a": 1.0})
        ens = simulation.simulate_poisson_product(base, 1.0, [0.0, 0.5], 20000, RngSpec(seed=13), workers=2)
        z = 2.0 * ens.values.astype(float) - 1.0
        g = float(base.from_distance(0.5))
        assert np.mean(z[:, 0] * z[:, 1]) == pytest.approx(np.exp(-4 * g), abs=0.03)


class TestSequentialIndicator:
    def test_zero_model_copies_first_node(self):
        model = VariogramModel("zero", PLANE)
        ens = simulation.sequential_indicator_grid(model, GridSpec(nx=8, ny=6), 4, RngSpec(seed=1), workers=1)
        assert ens.values.shape == (4, 48)
        assert np.all(ens.values.min(axis=1) == ens.values.max(axis=1))

    def test_pure_nugget_is_bernoulli(self):
        model = VariogramModel("nugget", PLANE)
        ens = simulation.sequential_indicator_grid(model, GridSpec(nx=30, ny=30), 4, RngSpec(seed=2), workers=1)
        assert ens.values.mean() == pytest.approx(0.5, abs=0.05)
        horizontal = 0.5 * np.mean((ens.values.reshape(4, 30, 30)[:, :, 1:].astype(float)
                                    - ens.values.reshape(4, 30, 30)[:, :, :-1]) ** 2)
        assert horizontal == pytest.approx(0.25, abs=0.03)
        assert ens.provenance["clamped_probabilities"] == 0

    def test_exponential_field_is_spatially_correlated(self):
        model = VariogramModel("exponential", PLANE, params={"a": 0.2})
        ens = simulation.sequential_indicator_grid(model, GridSpec(nx=25, ny=25), 3, RngSpec(seed=3),
                                                   max_data=12, workers=1)
        V = ens.values.reshape(3, 25, 25).astype(float)
        lag1 = 0.5 * np.mean((V[:, :, 1:] - V[:, :, :-1]) ** 2)
        assert lag1 < 0.2
        assert ens.grid.nx == 25

    def test_deterministic_across_workers(self):
        model = VariogramModel("exponential", PLANE, params={"a": 0.5})
        grid = GridSpec(nx=10, ny=10)
        one = simulation.sequential_indicator_grid(model, grid, 3, RngSpec(seed=4), workers=1)
        many = simulation.sequential_indicator_grid(model, grid, 3, RngSpec(seed=4), workers=3)
        np.testing.assert_array_equal(one.values, many.values)

    def test_needs_planar_model(self):
        model = VariogramModel("exponential", LINE, params={"a": 1.0})
        with pytest.raises(InputError, match="R\\^2"):
            simulation.sequential_indicator_grid(model, GridSpec(nx=4, ny=4), 1, RngSpec())

    def test_mean_must_be_inside_unit_interval(self):
        model = VariogramModel("zero", PLANE)
        with pytest.raises(InputError):
            simulation.sequential_indicator_grid(model, GridSpec(nx=4, ny=4), 1, RngSpec(), mean=1.0)


def test_cubic_input_gives_linear_behaviour_near_origin():
    text = get_config().get_section("figures")["fig2"]["models"]["cubic"]
    model = parse_model_spec(text)
    ens = simulation.sequential_indicator_grid(model, GridSpec(nx=60, ny=40), 6, RngSpec(seed=0), workers=2)
    curve = experimental_variogram(ens, LagBins.regular(4, 1.0, "x"))
    # the input itself is parabolic at the origin
    lags = np.arange(1.0, 5.0)
    input_slope = np.polyfit(np.log(lags), np.log(model.from_distance(lags)), 1)[0]
    assert input_slope > 1.5
    assert 0.7 <= near_origin_exponent(curve) <= 1.3
