import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saapde.random_field import (
    CoefficientModel,
    DiscreteMeasure,
    EllipticityViolation,
    Field,
    Term,
    UniformBox,
    constant,
    kl_amplitudes,
    kl_model,
    quadrature_measure,
    sample,
    validate_ellipticity,
)
from saapde.reduced_objective import integrand_value

BOX1 = UniformBox.symmetric(1)


def sin_field(amp, freq):
    return Field((Term("sin", amp, freq),))


def test_validate_affine_extremes():
    rep = validate_ellipticity(CoefficientModel(constant(2.0), (constant(1.0),)), BOX1)
    assert rep.gamma_observed == 1.0 and rep.L_observed == 3.0


def test_validate_reports_witness():
    with pytest.raises(EllipticityViolation) as exc:
        validate_ellipticity(CoefficientModel(constant(1.0), (constant(2.0),)), BOX1)
    assert exc.value.xi == (-1.0,)
    assert exc.value.value == -1.0


def test_validate_grid_extremes():
    model = CoefficientModel(constant(1.0), (sin_field(0.5, 2.0),))
    rep = validate_ellipticity(model, BOX1, grid_resolution=400)
    # dense-grid evaluation: the grid contains x = 1/4 and 3/4 where |sin(2 pi x)| = 1
    assert rep.gamma_observed == pytest.approx(0.5, abs=1e-12)
    assert rep.L_observed == pytest.approx(1.5, abs=1e-12)


def test_validate_declared_bounds():
    model = CoefficientModel(constant(2.0), (constant(1.0),), gamma=1.5, L=3.0)
    with pytest.raises(EllipticityViolation):
        validate_ellipticity(model, BOX1)
    with pytest.raises(ValueError):
        CoefficientModel(constant(2.0), (), gamma=2.0, L=1.0)


def test_corner_extremality(default_problem):
    prob, box = default_problem
    model = prob.coefficient
    rep = validate_ellipticity(model, box, grid_resolution=128)
    x = np.linspace(0, 1, 129)[:, None]
    comp = model.components(x)
    xis = np.random.default_rng(0).uniform(-1, 1, (10_000, 2))
    vals = comp[:, :1] + comp[:, 1:] @ xis.T
    assert rep.gamma_observed <= vals.min() <= rep.gamma_observed + 0.05
    assert rep.L_observed >= vals.max() >= rep.L_observed - 0.05


def test_sample_deterministic():
    a = sample(UniformBox.symmetric(2), 3, 42)
    b = sample(UniformBox.symmetric(2), 3, 42)
    np.testing.assert_array_equal(a.points, b.points)
    c = sample(UniformBox.symmetric(2), 3, 42, (1,))
    assert not np.array_equal(a.points, c.points)


def test_sample_mean():
    box = UniformBox((-1.0, 0.0), (1.0, 4.0))
    n = 100_000
    Q = sample(box, n, 5)
    sigma = (np.array(box.upper) - np.array(box.lower)) / np.sqrt(12)
    assert np.all(np.abs(Q.points.mean(axis=0) - box.center) <= 3 * sigma / np.sqrt(n))
    assert np.all(Q.points >= box.lower) and np.all(Q.points <= box.upper)


def test_sample_rejects_empty():
    with pytest.raises(ValueError):
        sample(BOX1, 0, 1)


def test_gauss_legendre_two_nodes():
    Q = quadrature_measure(BOX1, 2)
    np.testing.assert_allclose(np.sort(Q.points[:, 0]), [-1 / np.sqrt(3), 1 / np.sqrt(3)], rtol=1e-15)
    np.testing.assert_allclose(Q.weights, [0.5, 0.5], rtol=1e-15)
    assert Q.kind == "quadrature"


@pytest.mark.parametrize("q", [2, 3, 5])
def test_gauss_legendre_exactness(q):
    Q = quadrature_measure(BOX1, q)
    assert Q.weights @ Q.points[:, 0] ** 2 == pytest.approx(1 / 3, abs=1e-15)
    Q2 = quadrature_measure(UniformBox((0.0, -1.0, 0.0), (2.0, 1.0, 1.0)), q)
    assert Q2.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert Q2.weights @ (Q2.points[:, 0] * Q2.points[:, 2]) == pytest.approx(0.5, abs=1e-14)


def test_quadrature_rejects():
    with pytest.raises(ValueError):
        quadrature_measure(BOX1, 1)
    with pytest.raises(ValueError, match="cap"):
        quadrature_measure(UniformBox.symmetric(6), 8)


def test_quadrature_refinement_settles(default_problem):
    prob, box = default_problem
    z = 0.3 * np.sin(np.pi * prob.mesh.vertices[:, 0])

    def integral(q):
        Q = quadrature_measure(box, q)
        return sum(w * integrand_value(prob, z, xi) for w, xi in zip(Q.weights, Q.points))

    assert abs(integral(8) - integral(16)) < 1e-8


def test_kl_truncation_zero():
    model = kl_model(0)
    assert model.n_params == 0
    x = np.linspace(0, 1, 11)[:, None]
    np.testing.assert_array_equal(model.evaluate(x), np.full(11, 2.0))


@pytest.mark.parametrize("d", [1, 3, 6])
def test_kl_model(d):
    amps = kl_amplitudes(d, 0.5, 0.5)
    assert np.all(np.diff(amps) <= 0)
    model = kl_model(d, sigma=2.0)  # large sigma forces rescaling
    a = [m.terms[0].amplitude for m in model.modes]
    assert np.all(np.diff(a) <= 0)
    rep = validate_ellipticity(model, UniformBox.symmetric(d))
    assert rep.gamma_observed >= model.gamma


def test_kl_amplitude_decay():
    a = kl_amplitudes(40, 0.5, 1.0)
    # ~ j^-2 tail
    assert a[39] / a[19] == pytest.approx(0.25, rel=0.01)


def test_field_spec_round_trip():
    spec = [{"kind": "sin", "amplitude": 0.5, "frequency": 2.0}, {"kind": "const", "amplitude": 1.0, "frequency": 1.0}]
    f = Field.from_spec(spec)
    assert Field.from_spec(f.to_spec()) == f
    assert Field.from_spec(3) == constant(3.0)
    with pytest.raises(ValueError):
        Field.from_spec({"kind": "tanh"})
    with pytest.raises(ValueError):
        Field.from_spec({"kind": "sin", "phase": 1})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=30))
def test_measure_weights(raw):
    w = np.array(raw) / np.sum(raw)
    Q = DiscreteMeasure(np.zeros((len(w), 2)), w, "quadrature")
    assert np.all(Q.weights > 0) and abs(Q.weights.sum() - 1) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5000), st.integers(0, 2**32 - 1))
def test_empirical_equal_weights(n, seed):
    Q = sample(UniformBox.symmetric(2), n, seed)
    assert Q.kind == "empirical" and np.all(Q.weights == 1.0 / n)
    assert abs(Q.weights.sum() - 1) <= 1e-12


def test_measure_rejects_bad_weights():
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((2, 1)), np.array([0.7, 0.7]), "quadrature")
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((2, 1)), np.array([1.0, 0.0]), "quadrature")
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((2, 1)), np.array([0.25, 0.75]), "empirical")
