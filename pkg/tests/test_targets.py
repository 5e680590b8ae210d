import math

import numpy as np
import pytest
from scipy.stats import norm

from slocal.targets import (
    DatasetError,
    LabeledDataset,
    bayesian_logreg,
    benchmark_gmm,
    eight_gaussians,
    funnel,
    load_dataset,
    make_target,
    phi4,
    rings,
    split_dataset,
    two_mode_mixture,
)
from slocal.gmm import IsotropicMixture

from conftest import fd_grad


def _synthetic_logreg(rng, n=40, p=3):
    X = rng.standard_normal((n, p))
    y = (X @ np.arange(1, p + 1) + 0.3 * rng.standard_normal(n) > 0).astype(int)
    return LabeledDataset(X, y)


def _all_targets():
    rng = np.random.default_rng(5)
    return [
        benchmark_gmm(1),
        benchmark_gmm(6),
        eight_gaussians(),
        rings(),
        funnel(),
        bayesian_logreg(_synthetic_logreg(rng)),
        phi4(0.0, d=12),
        phi4(0.05, d=12),
    ]


@pytest.mark.parametrize("target", _all_targets(), ids=lambda t: t.name)
def test_gradient_matches_finite_differences(target):
    rng = np.random.default_rng(1)
    scale = target.R if target.name != "funnel" else 1.0
    bad = 0
    for _ in range(100):
        x = scale * rng.standard_normal(target.dim)
        if target.name == "rings" and np.linalg.norm(x) < 0.05:
            continue
        lp = lambda z: float(target.log_density(z))
        num = fd_grad(lp, x, h=1e-6 * max(1.0, np.abs(x).max()))
        ana = target.grad_log_density(x)
        err = np.linalg.norm(ana - num) / max(np.linalg.norm(ana), 1.0)
        bad += err > 1e-5
    assert bad == 0


@pytest.mark.parametrize("target", _all_targets(), ids=lambda t: t.name)
def test_sigma_finite_positive(target):
    assert target.R > 0
    assert math.isfinite(target.sigma) and target.sigma > 0


@pytest.mark.parametrize("target", _all_targets(), ids=lambda t: t.name)
def test_batched_evaluation_matches_rows(target):
    x = np.random.default_rng(2).standard_normal((5, target.dim))
    lp, g = target.value_and_grad(x)
    for i in range(5):
        lpi, gi = target.value_and_grad(x[i])
        assert lp[i] == pytest.approx(lpi, rel=1e-12)
        np.testing.assert_allclose(g[i], gi, rtol=1e-12, atol=1e-12)


class TestGmm:
    def test_log_density_d1(self):
        t = benchmark_gmm(1)
        s = math.sqrt(0.05)
        expected = math.log(2 / 3 * norm.pdf(-2 / 3, -2 / 3, s) + 1 / 3 * norm.pdf(-2 / 3, 4 / 3, s))
        assert float(t.log_density(np.array([-2 / 3]))) == pytest.approx(expected, rel=1e-12)

    def test_symmetric_midpoint_gradient(self):
        mix = two_mode_mixture(3, 1.5, 0.5, 0.4)
        np.testing.assert_allclose(mix.score(np.zeros(3)), 0.0, atol=1e-14)

    def test_constants(self):
        t = benchmark_gmm(4)
        assert t.a0 == (4 / 3, math.sqrt(0.05))
        assert t.mode_weight == 2 / 3
        assert t.dim == 4

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            benchmark_gmm(0)


class TestEightGaussians:
    def test_first_mean(self):
        t = eight_gaussians()
        np.testing.assert_allclose(t.mixture.means[0], [10.0, 0.0], atol=1e-14)

    def test_rotation_invariance(self):
        t = eight_gaussians()
        c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
        rot = np.array([[c, -s], [s, c]])
        x = np.random.default_rng(0).normal(0, 8, size=(50, 2))
        np.testing.assert_allclose(t.log_density(x @ rot.T), t.log_density(x), rtol=0, atol=1e-10)

    def test_constants(self):
        t = eight_gaussians()
        assert t.R == pytest.approx(10 / math.sqrt(2))
        assert t.tau == pytest.approx(math.sqrt(0.7))


class TestRings:
    def test_nearest_ring_dominates(self):
        # the radial density at r = 1 is essentially that of the first ring
        t = rings()
        lp = float(t.log_density(np.array([1.0, 0.0])))
        first = math.log(0.25 * norm.pdf(1.0, 1.0, 0.15))
        assert lp == pytest.approx(first, abs=1e-6)

    def test_rotational_symmetry(self):
        t = rings()
        rng = np.random.default_rng(3)
        for r in rng.uniform(0.1, 5, size=20):
            assert float(t.log_density(np.array([r, 0.0]))) == pytest.approx(
                float(t.log_density(np.array([0.0, r]))), abs=1e-12
            )
        x = rng.normal(size=(50, 2)) * 3
        theta = rng.uniform(0, 2 * np.pi)
        c, s = math.cos(theta), math.sin(theta)
        np.testing.assert_allclose(t.log_density(x @ np.array([[c, s], [-s, c]])), t.log_density(x), atol=1e-10)

    def test_origin_is_finite(self):
        lp, g = rings().value_and_grad(np.zeros(2))
        assert np.isfinite(lp) and np.all(np.isfinite(g))

    def test_constants(self):
        t = rings()
        assert t.a0 == (pytest.approx(4 / math.sqrt(2)), 0.15)

    def test_sampler_radii(self):
        x = rings().sample_exact(4000, 0)
        r = np.linalg.norm(x, axis=1)
        counts = np.histogram(r, bins=[0, 1.5, 2.5, 3.5, 10])[0] / 4000
        np.testing.assert_allclose(counts, 0.25, atol=4 * math.sqrt(0.25 * 0.75 / 4000))


class TestFunnel:
    def test_origin(self):
        t = funnel()
        expected = -0.5 * math.log(2 * math.pi * 9) - 9 * 0.5 * math.log(2 * math.pi)
        lp, g = t.value_and_grad(np.zeros(10))
        assert float(lp) == pytest.approx(expected, rel=1e-14)
        assert g[0] == pytest.approx(-4.5)
        np.testing.assert_allclose(g[1:], 0.0)

    def test_constants(self):
        assert funnel().a0 == (2.12, 0.0)

    def test_sampler_moments(self):
        x = funnel().sample_exact(20000, 1)
        assert np.mean(x[:, 0]) == pytest.approx(0.0, abs=4 * 3 / math.sqrt(20000))
        assert np.std(x[:, 0]) == pytest.approx(3.0, rel=0.03)


class TestLogreg:
    def test_at_origin(self):
        data = _synthetic_logreg(np.random.default_rng(0), n=17, p=4)
        t = bayesian_logreg(data)
        lp, g = t.value_and_grad(np.zeros(5))
        prior = -0.5 * 4 * math.log(2 * math.pi) - 0.5 * math.log(2 * math.pi * 2.5**2)
        assert float(lp) == pytest.approx(17 * math.log(0.5) + prior, rel=1e-12)

    def test_prior_gradient_zero_at_origin(self):
        # an empty-signal dataset (balanced labels, zero features) leaves only the prior
        X = np.zeros((4, 2))
        t = bayesian_logreg(LabeledDataset(X, np.array([0, 1, 0, 1])))
        np.testing.assert_allclose(t.grad_log_density(np.zeros(3)), 0.0, atol=1e-15)

    def test_R(self):
        data = LabeledDataset(np.zeros((3, 34)), np.array([0, 1, 1]))
        assert bayesian_logreg(data).R == pytest.approx(2.5 / math.sqrt(35))
        assert bayesian_logreg(data).tau == 0.0


class TestPhi4:
    def test_zero_field(self):
        assert float(phi4(0.0).log_density(np.zeros(100))) == pytest.approx(-50.0, rel=1e-14)

    def test_constant_one(self):
        assert float(phi4(0.0).log_density(np.ones(100))) == pytest.approx(-200.0, rel=1e-14)

    def test_symmetry_at_zero_field(self):
        t = phi4(0.0)
        x = np.random.default_rng(0).normal(size=(20, 100))
        np.testing.assert_allclose(t.log_density(x), t.log_density(-x), rtol=1e-13)

    def test_field_breaks_symmetry(self):
        t = phi4(0.05)
        # the +h sum phi term penalises positive fields
        assert float(t.log_density(-np.ones(100) * 0.5)) > float(t.log_density(np.ones(100) * 0.5))

    def test_constants(self):
        assert phi4(0.0).a0 == (4.5, 1e-2)


class TestDatasets:
    def test_sonar_row(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("0.02,0.03,R\n0.05,0.01,M\n")
        d = load_dataset(f, "sonar", standardize=False)
        assert d.p == 2
        np.testing.assert_allclose(d.features[0], [0.02, 0.03])
        assert list(d.labels) == [0, 1]

    def test_ionosphere_labels_and_header(self, tmp_path):
        f = tmp_path / "i.csv"
        f.write_text("a,b,class\n1,2,g\n3,4,b\n5,7,g\n")
        d = load_dataset(f, "ionosphere")
        assert d.n == 3 and list(d.labels) == [1, 0, 1]
        np.testing.assert_allclose(d.features.mean(axis=0), 0.0, atol=1e-14)
        np.testing.assert_allclose(d.features.std(axis=0), 1.0)

    def test_constant_column_standardizes_to_zero(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("1.0,2,R\n1.0,3,M\n1.0,5,R\n")
        d = load_dataset(f, "sonar")
        np.testing.assert_array_equal(d.features[:, 0], 0.0)

    def test_sixty_features(self, tmp_path):
        f = tmp_path / "sonar.csv"
        rng = np.random.default_rng(0)
        lines = [",".join(f"{v:.4f}" for v in rng.random(60)) + ("," + "RM"[i % 2]) for i in range(10)]
        f.write_text("\n".join(lines) + "\n")
        d = load_dataset(f, "sonar")
        assert d.p == 60
        assert bayesian_logreg(d).dim == 61

    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("1,2,R\n1,R\n", "row 2"),
            ("1,2,R\n1,x,M\n", "row 2, column 2"),
            ("1,2,R\n1,2,Q\n", "unknown label"),
            ("", "no data"),
        ],
    )
    def test_errors_name_location(self, tmp_path, text, fragment):
        f = tmp_path / "bad.csv"
        f.write_text(text)
        with pytest.raises(DatasetError, match=fragment):
            load_dataset(f, "sonar")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "nope.csv")

    def test_split_deterministic(self):
        data = _synthetic_logreg(np.random.default_rng(0), n=50)
        a_tr, a_te = split_dataset(data, 0.2, seed=0)
        b_tr, b_te = split_dataset(data, 0.2, seed=0)
        assert a_te.n == 10 and a_tr.n == 40
        np.testing.assert_array_equal(a_te.features, b_te.features)

    def test_make_target_logreg(self, tmp_path):
        f = tmp_path / "ion.csv"
        rng = np.random.default_rng(0)
        f.write_text("".join(f"{rng.normal():.3f},{rng.normal():.3f},{'gb'[i % 2]}\n" for i in range(30)))
        t = make_target(f"logreg:{f}:ionosphere")
        assert t.dim == 3
        assert t.extras["test"].n == 6


class TestMakeTarget:
    @pytest.mark.parametrize("name, dim", [("gmm:3", 3), ("8gauss", 2), ("rings", 2), ("funnel", 10), ("phi4:0.025", 100)])
    def test_names(self, name, dim):
        assert make_target(name).dim == dim

    @pytest.mark.parametrize("name", ["gmm:x", "blob", "phi4:abc"])
    def test_unknown(self, name):
        with pytest.raises(ValueError):
            make_target(name)


def test_mixture_validation():
    with pytest.raises(ValueError):
        IsotropicMixture([0.5, 0.6], np.zeros((2, 1)), 1.0)
    with pytest.raises(ValueError):
        IsotropicMixture([0.5, 0.5], np.zeros((2, 1)), [1.0, 0.0])
