import numpy as np
import pytest

from models.data_models import Configuration, SpaceRef, WeightVector
from modules.correlations import GaussianCorrelation
from modules.validation_engine import (
    ValidationEngine,
    check_gap,
    check_integer_weights,
    check_negative_type,
    check_pointwise,
    check_polygonal,
    check_realizability,
    configuration_of,
    recheck_certificate,
)
from modules.variogram_models import VariogramModel
from utils.errors import InputError

LINE = SpaceRef.euclidean(1)


def gaussian_sill_scaled():
    rho = GaussianCorrelation("gaussian", LINE, scale=1.0)
    return VariogramModel("sill_scaled", LINE, correlation=rho)


def exponential():
    return VariogramModel("exponential", LINE, params={"a": 1.0})


def matrix_config(off_diagonal):
    g = np.asarray(off_diagonal, dtype=float)
    return Configuration(g=g)


ALL_HALF = np.full((3, 3), 0.5) - 0.5 * np.eye(3)


class TestConfiguration:
    def test_from_model(self):
        cfg = configuration_of(exponential(), [0.0, 1.0, 2.0])
        assert cfg.n == 3
        assert cfg.g[0, 1] == pytest.approx((1 - np.exp(-1)) / 4)

    @pytest.mark.parametrize("g", [
        np.zeros((1, 1)),
        np.array([[0.0, 0.1], [0.2, 0.0]]),
        np.array([[0.0, -0.1], [-0.1, 0.0]]),
        np.array([[0.0, np.nan], [np.nan, 0.0]]),
    ])
    def test_rejects_bad_matrices(self, g):
        with pytest.raises(ValueError):
            Configuration(g=g)

    def test_subset_keeps_points(self):
        cfg = configuration_of(exponential(), [0.0, 1.0, 2.0, 3.0])
        sub = cfg.subset([1, 3])
        assert sub.g[0, 1] == pytest.approx(cfg.g[1, 3])
        np.testing.assert_array_equal(sub.points.ravel(), [1.0, 3.0])


class TestNegativeType:
    def test_two_points_always_pass(self):
        assert check_negative_type(matrix_config([[0, 0.4], [0.4, 0]])).verdict == "pass"

    def test_gaussian_variogram_passes(self):
        cfg = configuration_of(gaussian_sill_scaled(), [0.0, 0.1, 0.2])
        assert check_negative_type(cfg).verdict == "pass"

    def test_failure_certificate_from_eigenvector(self):
        g = np.array([[0, 1, 0.01], [1, 0, 0.01], [0.01, 0.01, 0]])
        entry = check_negative_type(matrix_config(g))
        assert entry.verdict == "fail"
        lam = np.array(entry.certificate["lambdas"])
        assert lam.sum() == pytest.approx(0.0, abs=1e-12)
        assert np.abs(lam).max() == pytest.approx(1.0)
        assert entry.certificate["margin"] > 0
        assert recheck_certificate(matrix_config(g), entry) == pytest.approx(entry.certificate["margin"])


class TestPointwise:
    def test_boundary_half_passes(self):
        assert check_pointwise(matrix_config([[0, 0.5], [0.5, 0]])).verdict == "pass"

    def test_just_above_half_fails(self):
        cfg = matrix_config([[0, 0.5 + 1e-6, 0], [0.5 + 1e-6, 0, 0], [0, 0, 0]])
        entry = check_pointwise(cfg)
        assert entry.verdict == "fail"
        assert entry.certificate["entry"] == [0, 1]
        assert recheck_certificate(cfg, entry) == pytest.approx(1e-6)

    def test_zero_matrix_passes(self):
        assert check_pointwise(matrix_config(np.zeros((4, 4)))).verdict == "pass"


class TestPolygonal:
    def test_gaussian_triangle_fails(self):
        cfg = configuration_of(gaussian_sill_scaled(), [0.0, 0.1, 0.2])
        entry = check_polygonal(cfg)
        assert entry.verdict == "fail"
        assert entry.certificate["partition"] in ([[0, 2], [1]], [[1], [0, 2]])
        # g(0.2) - 2 g(0.1) on the quarter scale, doubled by the quadratic form
        expected = 2 * 0.25 * ((1 - np.exp(-0.04)) - 2 * (1 - np.exp(-0.01)))
        assert recheck_certificate(cfg, entry) == pytest.approx(expected)

    def test_exponential_collinear_passes(self):
        cfg = configuration_of(exponential(), [0.0, 0.7, 3.0])
        assert check_polygonal(cfg).verdict == "pass"

    def test_equal_off_diagonals_pass(self):
        g = np.full((3, 3), 0.2) - 0.2 * np.eye(3)
        assert check_polygonal(matrix_config(g)).verdict == "pass"

    def test_two_points_skipped(self):
        assert check_polygonal(matrix_config([[0, 0.1], [0.1, 0]])).verdict == "skipped"

    def test_sampled_beyond_exhaustive_size(self, rng):
        X = rng.uniform(0, 10, size=13)
        entry = check_polygonal(configuration_of(exponential(), X), seed=3)
        assert entry.verdict == "pass"
        assert entry.sampled
        assert entry.bounds["exhaustive"] is False


class TestIntegerWeights:
    def test_all_half_triangle(self):
        cfg = matrix_config(ALL_HALF)
        assert check_integer_weights(cfg, "matheron").verdict == "pass"
        entry = check_integer_weights(cfg, "odd_clique")
        assert entry.verdict == "fail"
        assert entry.certificate["family"] == "odd_clique"
        assert recheck_certificate(cfg, entry) == pytest.approx(1.0)

    def test_shepp_skips_even_n(self):
        entry = check_integer_weights(matrix_config(np.zeros((4, 4))), "shepp")
        assert entry.verdict == "skipped"

    def test_bounded_family_size_limit(self):
        entry = check_integer_weights(matrix_config(np.zeros((9, 9))), "hypermetric")
        assert entry.verdict == "skipped"
        assert "n <= 8" in entry.reason

    def test_unknown_family(self):
        with pytest.raises(InputError):
            check_integer_weights(matrix_config(np.zeros((3, 3))), "gap")

    def test_given_weights(self):
        cfg = matrix_config(ALL_HALF)
        entry = check_integer_weights(cfg, "odd_clique", weights=[WeightVector(lambdas=(1, 1, -1)),
                                                                   WeightVector(lambdas=(1, 1, 1))])
        assert entry.verdict == "fail"
        assert entry.certificate["lambdas"] == [1, 1, 1]
        assert entry.bounds["n_given"] == 2
        assert recheck_certificate(cfg, entry) == pytest.approx(1.0)

    def test_given_weights_outside_family_are_dropped(self):
        entry = check_integer_weights(matrix_config(ALL_HALF), "matheron", weights=[WeightVector(lambdas=(1, 1, 1))])
        assert entry.verdict == "skipped"

    def test_given_weights_length(self):
        with pytest.raises(InputError, match="length 3"):
            check_integer_weights(matrix_config(ALL_HALF), "psd", weights=[WeightVector(lambdas=(1, 1))])

    def test_gap_all_half(self):
        cfg = matrix_config(ALL_HALF)
        entry = check_gap(cfg)
        assert entry.verdict == "fail"
        assert entry.certificate["family"] == "gap"
        assert recheck_certificate(cfg, entry) > 0


class TestRealizabilityCheck:
    def test_infeasible_carries_corner_positive_matrix(self):
        cfg = matrix_config(ALL_HALF)
        entry = check_realizability(cfg)
        assert entry.verdict == "fail"
        assert entry.certificate["family"] == "corner_positive"
        assert recheck_certificate(cfg, entry) == pytest.approx(entry.margin)

    def test_skipped_beyond_limit(self):
        entry = check_realizability(matrix_config(np.zeros((11, 11))))
        assert entry.verdict == "skipped"


class TestEngine:
    def test_exponential_passes_everything(self):
        cfg = configuration_of(exponential(), [0.0, 1.0, 2.0])
        report = ValidationEngine().check_configuration(cfg, workers=1)
        assert not report.has_failures
        assert report.entry("shepp").verdict == "pass"
        assert report.entry("realizability").verdict == "pass"

    def test_gaussian_triangle_fails(self):
        cfg = configuration_of(gaussian_sill_scaled(), [0.0, 0.1, 0.2])
        report = ValidationEngine().check_configuration(cfg, workers=1)
        assert report.has_failures
        assert report.entry("polygonal").verdict == "fail"
        assert report.entry("realizability").verdict == "fail"

    def test_madogram_profile_drops_upper_bound(self):
        cfg = matrix_config(np.array([[0, 0.8], [0.8, 0]]))
        indicator = ValidationEngine().check_configuration(cfg, workers=1)
        madogram = ValidationEngine().check_configuration(cfg, profile="madogram", workers=1)
        assert indicator.entry("pointwise").verdict == "fail"
        with pytest.raises(KeyError):
            madogram.entry("pointwise")
        assert madogram.entry("odd_clique_homogeneous").verdict == "pass"

    def test_unknown_profile(self):
        with pytest.raises(InputError):
            ValidationEngine().check_configuration(matrix_config(np.zeros((2, 2))), profile="variogram")

    def test_disabled_checks_are_not_run(self):
        config = {"checks": [
            {"id": "negative_type", "check_type": "negative_type", "profiles": ["indicator"]},
            {"id": "pointwise", "check_type": "pointwise", "enabled": False, "profiles": ["indicator"]},
        ]}
        report = ValidationEngine(config).check_configuration(matrix_config(np.zeros((3, 3))), workers=1)
        assert [e.check for e in report.entries] == ["negative_type"]

    def test_configured_weights(self):
        config = {"checks": [{"id": "triangle", "check_type": "integer_weights", "family": "odd_clique",
                              "weights": [[1, 1, 1]], "profiles": ["indicator"]}]}
        report = ValidationEngine(config).check_configuration(matrix_config(ALL_HALF), workers=1)
        assert report.entry("triangle").verdict == "fail"
        assert report.entry("triangle").bounds["values"] == "given"

    def test_subsampled_failure_reports_original_indices(self):
        config = {
            "checks": [{"id": "realizability", "check_type": "realizability", "profiles": ["indicator"]}],
            "subsample": {"enabled": True, "subset_size": 3, "n_subsets": 4},
        }
        g = np.full((11, 11), 0.5) - 0.5 * np.eye(11)
        cfg = matrix_config(g)
        entry = ValidationEngine(config).check_configuration(cfg, seed=5, workers=1).entry("realizability")
        assert entry.verdict == "fail"
        assert entry.sampled
        indices = entry.certificate["indices"]
        assert len(indices) == 3 and indices == sorted(indices)
        assert recheck_certificate(cfg, entry) > 0

    def test_subsampled_pass_is_marked(self, rng):
        config = {
            "checks": [{"id": "hypermetric", "check_type": "integer_weights", "family": "hypermetric",
                        "bound": 1, "profiles": ["indicator"]}],
            "subsample": {"enabled": True, "subset_size": 5, "n_subsets": 3},
        }
        cfg = configuration_of(exponential(), rng.uniform(0, 10, size=10))
        report = ValidationEngine(config).check_configuration(cfg, workers=1)
        entry = report.entry("hypermetric")
        assert entry.verdict == "pass"
        assert entry.sampled
        assert report.to_records()[0]["verdict"] == "pass (sampled)"

    def test_worker_count_does_not_change_report(self, rng):
        cfg = configuration_of(exponential(), rng.uniform(0, 5, size=6))
        one = ValidationEngine().check_configuration(cfg, workers=1)
        many = ValidationEngine().check_configuration(cfg, workers=3)
        assert one.to_records() == many.to_records()
