import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcpsim.quantum_core import (
    SZ,
    DensityMatrix,
    Observable,
    StateVector,
    ValidationError,
    born_probabilities,
    density_from_json,
    density_to_json,
    expectation_mixed,
    expectation_pure,
    identity_density,
    lift,
    partial_trace,
    projector,
    purity,
    random_observable,
    random_state,
    tensor,
)

S2 = 1 / math.sqrt(2)


def euler_state(theta: float, phi: float = 0.0) -> StateVector:
    return StateVector([math.cos(theta / 2), math.sin(theta / 2) * np.exp(1j * phi)])


class TestConstruction:
    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            StateVector([1.0, math.nan])

    def test_density_rejects_non_hermitian(self):
        with pytest.raises(ValidationError, match="Hermitian"):
            DensityMatrix([[0.5, 0.1], [0.0, 0.5]])

    def test_density_rejects_bad_trace(self):
        with pytest.raises(ValidationError, match="trace"):
            DensityMatrix(np.diag([0.5, 0.6]))

    def test_density_rejects_negative(self):
        with pytest.raises(ValidationError, match="positive"):
            DensityMatrix(np.diag([1.2, -0.2]))

    def test_density_tolerates_rounding(self):
        DensityMatrix(np.diag([1.0 + 5e-10, -5e-10]))

    def test_observable_hermitian(self):
        with pytest.raises(ValidationError):
            Observable([[0, 1], [0, 0]])

    def test_immutable(self):
        psi = StateVector([1, 0])
        with pytest.raises(ValueError):
            psi.amplitudes[0] = 2


class TestProjector:
    @pytest.mark.parametrize(
        "amps, expected",
        [
            ([1, 0], [[1, 0], [0, 0]]),
            ([S2, S2], [[0.5, 0.5], [0.5, 0.5]]),
            ([math.cos(math.pi / 6), math.sin(math.pi / 6)], [[0.75, math.sqrt(3) / 4], [math.sqrt(3) / 4, 0.25]]),
        ],
    )
    def test_examples(self, amps, expected):
        np.testing.assert_allclose(projector(StateVector(amps)).matrix, expected, atol=1e-15)

    def test_euler_state_matches(self):
        np.testing.assert_allclose(
            projector(euler_state(math.pi / 3)).matrix, [[0.75, math.sqrt(3) / 4], [math.sqrt(3) / 4, 0.25]], atol=1e-15
        )

    def test_non_normalized(self):
        with pytest.raises(ValidationError, match="normalized"):
            projector(StateVector([1, 1]))

    def test_rank_one_purity_one(self, rng):
        for d in (2, 3, 5):
            rho = projector(random_state(d, rng))
            assert np.linalg.matrix_rank(rho.matrix, tol=1e-10) == 1
            assert purity(rho) == pytest.approx(1.0, abs=1e-12)


class TestExpectations:
    def test_pure_examples(self):
        assert expectation_pure(StateVector([1, 0]), SZ) == 0.5
        assert expectation_pure(StateVector([S2, S2]), SZ) == pytest.approx(0.0, abs=1e-15)
        assert expectation_pure(euler_state(math.pi / 3), SZ) == pytest.approx(0.25, abs=1e-15)

    def test_mixed_examples(self):
        assert expectation_mixed(identity_density(2), SZ) == 0.0
        rho = DensityMatrix(np.diag([0.2525, 0.7475]))
        assert expectation_mixed(rho, SZ) == pytest.approx(-0.2475, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError, match="mismatch"):
            expectation_pure(StateVector([1, 0, 0]), SZ)
        with pytest.raises(ValidationError, match="mismatch"):
            expectation_mixed(identity_density(3), SZ)

    def test_projector_consistency(self, rng):
        for _ in range(100):
            d = int(rng.integers(2, 6))
            psi, obs = random_state(d, rng), random_observable(d, rng)
            assert expectation_mixed(projector(psi), obs) == pytest.approx(expectation_pure(psi, obs), abs=1e-12)

    def test_mixed_is_index_sum(self, rng):
        # Tr(rho O) written out as sum_{k,l} rho_lk O_kl
        psi, obs = random_state(3, rng), random_observable(3, rng)
        rho = projector(psi).matrix
        direct = sum(rho[l, k] * obs.matrix[k, l] for k in range(3) for l in range(3))
        assert expectation_mixed(projector(psi), obs) == pytest.approx(direct.real, abs=1e-12)


class TestPurity:
    def test_examples(self):
        assert purity(identity_density(2)) == 0.5
        assert purity(DensityMatrix(np.diag([0.2525, 0.7475]))) == pytest.approx(0.6225125, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6).filter(lambda w: sum(w) > 1e-3))
    def test_bounds(self, weights):
        p = np.array(weights) / sum(weights)
        rho = DensityMatrix(np.diag(p))
        assert 1 / len(p) - 1e-12 <= purity(rho) <= 1 + 1e-9


class TestTensorAndPartialTrace:
    def test_tensor_examples(self):
        np.testing.assert_array_equal(tensor(StateVector([1, 0]), StateVector([0, 1])).amplitudes, [0, 1, 0, 0])
        np.testing.assert_allclose(
            tensor(StateVector([S2, S2]), StateVector([1, 0])).amplitudes, [S2, 0, S2, 0], atol=1e-16
        )

    def test_tensor_norm(self, rng):
        for _ in range(20):
            a, b = random_state(int(rng.integers(2, 4)), rng), random_state(int(rng.integers(2, 4)), rng)
            assert tensor(a, b).norm == pytest.approx(1.0, abs=1e-12)

    def test_product_state(self):
        rho = projector(tensor(StateVector([1, 0]), StateVector([0, 1])))
        np.testing.assert_array_equal(partial_trace(rho, (2, 2), keep=1).matrix, [[1, 0], [0, 0]])
        np.testing.assert_array_equal(partial_trace(rho, (2, 2), keep=2).matrix, [[0, 0], [0, 1]])

    def test_bell_state(self):
        bell = StateVector([S2, 0, 0, S2])
        np.testing.assert_allclose(partial_trace(projector(bell), (2, 2), keep=1).matrix, np.eye(2) / 2, atol=1e-15)

    def test_product_factor_recovered(self, rng):
        a, b = random_state(3, rng), random_state(2, rng)
        rho = projector(tensor(a, b))
        np.testing.assert_allclose(partial_trace(rho, (3, 2), 1).matrix, projector(a).matrix, atol=1e-12)
        np.testing.assert_allclose(partial_trace(rho, (3, 2), 2).matrix, projector(b).matrix, atol=1e-12)

    def test_bad_factorization(self):
        with pytest.raises(ValidationError):
            partial_trace(identity_density(4), (3, 2), 1)

    def test_trace_and_positivity(self, rng):
        for _ in range(50):
            d1, d2 = (int(x) for x in rng.integers(2, 4, size=2))
            red = partial_trace(projector(random_state(d1 * d2, rng)), (d1, d2), 1)
            assert np.trace(red.matrix).real == pytest.approx(1.0, abs=1e-12)
            assert red.eigenvalues().min() >= -1e-9

    def test_subsystem_expectation_identity(self, rng):
        # <Psi|O (x) I|Psi> computed on the full space versus Tr(rho_1 O)
        for _ in range(100):
            d1, d2 = (int(x) for x in rng.choice([2, 3], size=2))
            psi = random_state(d1 * d2, rng)
            obs = random_observable(d1, rng)
            full = expectation_pure(psi, lift(obs, (d1, d2), on=1))
            reduced = expectation_mixed(partial_trace(projector(psi), (d1, d2), 1), obs)
            assert full == pytest.approx(reduced, abs=1e-12)


class TestBorn:
    def test_examples(self):
        np.testing.assert_array_equal(born_probabilities(StateVector([1, 0])), [1, 0])
        np.testing.assert_allclose(born_probabilities(euler_state(math.pi / 2)), [0.5, 0.5], atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(-math.pi, math.pi))
    def test_phase_independent(self, alpha, phi):
        psi = StateVector([alpha, math.sqrt(1 - alpha**2) * np.exp(1j * phi)])
        p = born_probabilities(psi)
        np.testing.assert_allclose(p, [alpha**2, 1 - alpha**2], atol=1e-12)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(p >= 0)


def test_json_round_trip(rng):
    rho = projector(random_state(3, rng))
    payload = density_to_json(rho)
    assert isinstance(payload[0][0], list) and len(payload[0][0]) == 2
    np.testing.assert_array_equal(density_from_json(payload).matrix, rho.matrix)
