import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esnmpc import plant
from esnmpc.plant import ResidualSelector, ResidualSpec, SpringDamperParams

BENCH = SpringDamperParams(m=1.0, k=10.0, b=0.5, dt=0.1)
finite = st.floats(-50, 50, allow_nan=False)


def test_discretize_benchmark():
    model = plant.discretize(BENCH)
    np.testing.assert_allclose(model.a, [[1.0, 0.1], [-1.0, 0.95]], atol=1e-15)
    np.testing.assert_allclose(model.b_mat, [[0.0], [0.1]], atol=1e-15)


def test_discretize_double_integrator():
    model = plant.discretize(SpringDamperParams(m=2.0, k=0.0, b=0.0, dt=0.25))
    np.testing.assert_array_equal(model.a, [[1.0, 0.25], [0.0, 1.0]])


def test_discretize_small_dt_is_near_identity():
    model = plant.discretize(SpringDamperParams(dt=1e-6))
    np.testing.assert_allclose(model.a, np.eye(2), atol=1e-5)


@pytest.mark.parametrize("field,value", [("m", 0.0), ("dt", -0.1), ("b", -1.0), ("k", -2.0)])
def test_params_invariants(field, value):
    kwargs = {"m": 1.0, "k": 10.0, "b": 0.5, "dt": 0.1, field: value}
    with pytest.raises(ValueError, match=field):
        SpringDamperParams(**kwargs)


def test_nominal_step_values():
    model = plant.discretize(BENCH)
    np.testing.assert_array_equal(plant.nominal_step(model, [0, 0], [0]), [0, 0])
    np.testing.assert_allclose(plant.nominal_step(model, [10, 0], [0]), [10, -10], atol=1e-14)
    np.testing.assert_allclose(plant.nominal_step(model, [0, 1], [0]), [0.1, 0.95], atol=1e-15)


def test_benchmark_nominal_model_is_underdamped():
    eig = np.linalg.eigvals(plant.discretize(BENCH).a)
    assert np.all(np.abs(eig.imag) > 0)


def test_benchmark_nominal_model_eigenvalues_inside_unit_circle():
    # forward Euler gives det(A) = 1 - b dt/m + k dt^2/m = 1.05, so |lambda| = 1.0247
    eig = np.linalg.eigvals(plant.discretize(BENCH).a)
    assert np.all(np.abs(eig) < 1.0)


@settings(max_examples=60, deadline=None)
@given(
    m=st.floats(0.1, 10), k=st.floats(0, 50), b=st.floats(0, 5), dt=st.floats(1e-3, 0.5),
    s=finite, v=finite, u=finite,
)
def test_discretize_is_forward_euler(m, k, b, dt, s, v, u):
    model = plant.discretize(SpringDamperParams(m=m, k=k, b=b, dt=dt))
    got = plant.nominal_step(model, [s, v], [u])
    expected = np.array([s + dt * v, v + dt * (u - b * v - k * s) / m])
    np.testing.assert_allclose(got, expected, rtol=1e-13, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(s=finite, v=finite, u=finite)
def test_true_step_degenerate_cases(s, v, u):
    model = plant.discretize(BENCH)
    nominal = plant.nominal_step(model, [s, v], [u])
    np.testing.assert_array_equal(plant.true_step(ResidualSpec(kind="none"), model, [s, v], [u]), nominal)
    np.testing.assert_array_equal(
        plant.true_step(ResidualSpec(kind="cubic_spring", alpha=0.0), model, [s, v], [u]), nominal
    )
    same = ResidualSpec(kind="param_perturbation", true_params=BENCH)
    np.testing.assert_array_equal(plant.true_step(same, model, [s, v], [u]), nominal)


def test_true_step_cubic_term():
    model = plant.discretize(BENCH)
    spec = ResidualSpec(kind="cubic_spring", alpha=0.5)
    got = plant.true_step(spec, model, [2.0, 1.0], [3.0])
    expected = plant.nominal_step(model, [2.0, 1.0], [3.0]) - [0.0, 0.5 * 0.1 * 8.0]
    np.testing.assert_allclose(got, expected, atol=1e-15)


def test_true_step_combined_is_perturbed_plus_cubic():
    model = plant.discretize(BENCH)
    spec = ResidualSpec()
    x, u = np.array([3.0, -2.0]), np.array([1.5])
    perturbed = plant.nominal_step(plant.discretize(spec.true_params), x, u)
    expected = perturbed - [0.0, spec.alpha / spec.true_params.m * 0.1 * 27.0]
    np.testing.assert_allclose(plant.true_step(spec, model, x, u), expected, atol=1e-14)


def test_residual_kind_validation():
    with pytest.raises(ValueError, match="kind"):
        ResidualSpec(kind="quadratic")


def test_residual_target_examples():
    sel = ResidualSelector()
    np.testing.assert_array_equal(plant.residual_target(sel, [1.0, 2.0], [1.0, 2.0]), [0.0, 0.0])
    np.testing.assert_allclose(plant.residual_target(sel, [0.1, -0.2], [0.0, 0.0]), [0.1, -0.2])
    vel = ResidualSelector(b_n=np.array([[0.0], [1.0]]))
    np.testing.assert_allclose(plant.residual_target(vel, [0.3, 0.5], [0.0, 0.0]), [0.5])


def test_selector_rejects_rank_deficient_b_n():
    with pytest.raises(ValueError, match="full column rank"):
        ResidualSelector(b_n=np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_regressor_examples():
    np.testing.assert_array_equal(plant.regressor(ResidualSelector(), [10, 0], [2]), [10, 0, 2])
    pos_only = ResidualSelector(b_z=np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_array_equal(plant.regressor(pos_only, [3, 7], [1]), [3])


def test_regressor_benchmark_step0(benchmark_phase1, benchmark_config):
    dataset, log = benchmark_phase1
    x0, u0 = np.array(benchmark_config.x0), np.array([log.u[0]])
    # concatenate-and-multiply oracle
    expected = np.eye(3) @ np.concatenate([x0, u0])
    np.testing.assert_array_equal(dataset.z[0], expected)


@settings(max_examples=60, deadline=None)
@given(s=finite, v=finite, u=finite,
       kind=st.sampled_from(["none", "param_perturbation", "cubic_spring", "combined"]))
def test_residual_round_trip(s, v, u, kind):
    model = plant.discretize(BENCH)
    spec = ResidualSpec(kind=kind)
    x = np.array([s, v])
    true_next = plant.true_step(spec, model, x, [u])
    nom_next = plant.nominal_step(model, x, [u])
    injected = true_next - nom_next
    mu = plant.residual_target(ResidualSelector(), true_next, nom_next)
    np.testing.assert_allclose(mu, injected, atol=1e-12, rtol=0)
