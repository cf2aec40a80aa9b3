import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqkan_gan.statevector import (
    PostSelectionError,
    StateVector,
    apply_cz,
    apply_ry,
    cz_chain_signs,
    postselect,
    probabilities,
    zero_state,
)

SQRT2_INV = 1 / np.sqrt(2)


def kron_ry(n, qubit, theta):
    """Dense 2**n matrix of Ry on ``qubit`` (little-endian) built by Kronecker products."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    op = np.ones((1, 1))
    for q in range(n):
        m = np.array([[c, -s], [s, c]]) if q == qubit else np.eye(2)
        op = np.kron(m, op)
    return op


# =============================================================================
# zero_state
# =============================================================================


def test_zero_state_three_qubits():
    np.testing.assert_array_equal(zero_state(3).amplitudes, [1, 0, 0, 0, 0, 0, 0, 0])


def test_zero_state_one_qubit():
    np.testing.assert_array_equal(zero_state(1).amplitudes, [1, 0])


@pytest.mark.parametrize("n", [0, -1, 25])
def test_zero_state_rejects_out_of_bounds(n):
    with pytest.raises(ValueError):
        zero_state(n)


def test_statevector_length_checked():
    with pytest.raises(ValueError):
        StateVector(2, np.ones(3))


# =============================================================================
# gates
# =============================================================================


def test_ry_pi_flips():
    np.testing.assert_allclose(probabilities(apply_ry(zero_state(1), 0, np.pi)), [0, 1], atol=1e-15)


def test_ry_half_pi_superposition():
    np.testing.assert_allclose(probabilities(apply_ry(zero_state(1), 0, np.pi / 2)), [0.5, 0.5])


def test_ry_zero_identity():
    s = apply_ry(apply_ry(zero_state(3), 1, 0.7), 2, -1.1)
    np.testing.assert_array_equal(apply_ry(s, 0, 0.0).amplitudes, s.amplitudes)


def test_ry_third_pi_probabilities():
    # closed form: [cos^2(pi/6), sin^2(pi/6)]
    np.testing.assert_allclose(probabilities(apply_ry(zero_state(1), 0, np.pi / 3)), [0.75, 0.25], atol=1e-15)


@pytest.mark.parametrize("qubit", [0, 1, 2])
def test_ry_matches_kronecker_matrix(qubit):
    rng = np.random.default_rng(qubit)
    amps = rng.normal(size=8) + 1j * rng.normal(size=8)
    amps /= np.linalg.norm(amps)
    out = apply_ry(StateVector(3, amps), qubit, 0.83)
    np.testing.assert_allclose(out.amplitudes, kron_ry(3, qubit, 0.83) @ amps, atol=1e-14)


def test_ry_index_out_of_range():
    with pytest.raises(IndexError):
        apply_ry(zero_state(2), 2, 0.1)


def test_cz_on_bell_state():
    bell = StateVector(2, np.array([SQRT2_INV, 0, 0, SQRT2_INV], dtype=complex))
    np.testing.assert_allclose(apply_cz(bell, 0, 1).amplitudes, [SQRT2_INV, 0, 0, -SQRT2_INV])


def test_cz_twice_is_identity():
    s = apply_ry(apply_ry(zero_state(2), 0, 1.0), 1, 2.0)
    np.testing.assert_array_equal(apply_cz(apply_cz(s, 0, 1), 0, 1).amplitudes, s.amplitudes)


def test_cz_leaves_01_unchanged():
    s = StateVector(2, np.array([0, 1, 0, 0], dtype=complex))
    np.testing.assert_array_equal(apply_cz(s, 0, 1).amplitudes, s.amplitudes)


@pytest.mark.parametrize("q1,q2", [(0, 0), (0, 3), (-1, 1)])
def test_cz_bad_indices(q1, q2):
    with pytest.raises((ValueError, IndexError)):
        apply_cz(zero_state(3), q1, q2)


def test_cz_chain_signs_match_gate_sequence():
    n = 4
    amps = np.ones(1 << n, dtype=complex) / 4
    s = StateVector(n, amps)
    for j in range(n - 1):
        s = apply_cz(s, j, j + 1)
    np.testing.assert_array_equal(s.amplitudes, amps * cz_chain_signs(n))


# =============================================================================
# probabilities and post-selection
# =============================================================================


def test_probabilities_zero_state():
    np.testing.assert_array_equal(probabilities(zero_state(2)), [1, 0, 0, 0])


def test_probabilities_uniform():
    s = StateVector(2, np.full(4, 0.5, dtype=complex))
    np.testing.assert_allclose(probabilities(s), [0.25] * 4)


def test_postselect_uniform():
    s = StateVector(2, np.full(4, 0.5, dtype=complex))
    out, p = postselect(s, 0, 0)
    assert p == pytest.approx(0.5)
    np.testing.assert_allclose(out.amplitudes, [SQRT2_INV, SQRT2_INV])


def test_postselect_deterministic_branch():
    # qubit 0 = 1, ancilla qubit 1 = 0 -> basis index 1
    s = StateVector(2, np.array([0, 1, 0, 0], dtype=complex))
    out, p = postselect(s, 1, 0)
    assert p == 1.0
    np.testing.assert_array_equal(out.amplitudes, [0, 1])


def test_postselect_zero_branch_raises():
    s = StateVector(2, np.array([0, 0, 0, 1], dtype=complex))
    with pytest.raises(PostSelectionError):
        postselect(s, 1, 0)


def test_postselect_keeps_other_qubit_order():
    rng = np.random.default_rng(3)
    amps = rng.normal(size=8) + 0j
    amps /= np.linalg.norm(amps)
    out, p = postselect(StateVector(3, amps), 2, 1)
    np.testing.assert_allclose(out.amplitudes * np.sqrt(p), amps[4:])


# =============================================================================
# properties
# =============================================================================

circuits = st.lists(
    st.tuples(st.booleans(), st.integers(0, 9), st.integers(0, 9), st.floats(-10, 10)),
    max_size=100,
)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 10), gates=circuits)
def test_norm_preserved(n, gates):
    s = zero_state(n)
    for is_cz, a, b, theta in gates:
        a, b = a % n, b % n
        if is_cz and a != b:
            s = apply_cz(s, a, b)
        else:
            s = apply_ry(s, a, theta)
    assert abs(s.norm - 1) < 1e-10


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-7, 7), b=st.floats(-7, 7), q=st.integers(0, 2))
def test_ry_additive(a, b, q):
    base = apply_ry(zero_state(3), (q + 1) % 3, 0.4)
    lhs = apply_ry(apply_ry(base, q, a), q, b)
    np.testing.assert_allclose(lhs.amplitudes, apply_ry(base, q, a + b).amplitudes, atol=1e-12)


def test_cz_symmetric():
    s = apply_ry(apply_ry(apply_ry(zero_state(3), 0, 0.3), 1, 1.3), 2, 2.3)
    np.testing.assert_array_equal(apply_cz(s, 0, 2).amplitudes, apply_cz(s, 2, 0).amplitudes)


@settings(max_examples=30, deadline=None)
@given(phase=st.floats(0, 2 * np.pi))
def test_probabilities_ignore_global_phase(phase):
    s = apply_ry(apply_ry(zero_state(2), 0, 0.9), 1, 0.2)
    rotated = StateVector(2, s.amplitudes * np.exp(1j * phase))
    np.testing.assert_allclose(probabilities(rotated), probabilities(s), atol=1e-15)
