import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xbm.core import Gate, MeasurementCircuit, Part
from xbm.grouping import build_measurement_circuit
from xbm.simulator import (
    Statevector,
    apply_circuit,
    apply_gate,
    basis_state,
    prepare_bipartite,
    probabilities,
    product_state,
    random_state,
    rotated_qubit,
    sample,
)
from xbm.matrix import gen_random_sparse
from xbm.grouping import embed_offdiagonal

from conftest import dense_expectation, haar_state

R2 = np.sqrt(0.5)
ONE_QUBIT = {
    "H": np.array([[1, 1], [1, -1]]) * R2,
    "S": np.diag([1, 1j]),
    "Sdg": np.diag([1, -1j]),
    "X": np.array([[0, 1], [1, 0]]),
}


def dense_gate(g: Gate, n: int) -> np.ndarray:
    """Full 2^n unitary, built independently of the simulator."""
    if g.kind == "CNOT":
        u = np.zeros((1 << n, 1 << n))
        for b in range(1 << n):
            u[b ^ (1 << g.target) if (b >> g.control) & 1 else b, b] = 1
        return u
    u = np.ones((1, 1))
    for q in reversed(range(n)):
        u = np.kron(u, ONE_QUBIT[g.kind] if q == g.target else np.eye(2))
    return u


def ket(*amps):
    return Statevector(np.array(amps, dtype=complex))


gates = st.integers(2, 6).flatmap(lambda n: st.tuples(
    st.just(n),
    st.one_of(
        st.tuples(st.sampled_from(["H", "S", "Sdg", "X"]), st.integers(0, n - 1)).map(lambda t: Gate(*t)),
        st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True).map(
            lambda qs: Gate("CNOT", qs[1], control=qs[0])),
    ),
))


@given(gates, st.integers(0, 10 ** 6))
def test_gate_matches_dense_unitary(ng, seed):
    n, g = ng
    phi = haar_state(n, seed)
    out = apply_gate(phi, g)
    assert np.allclose(out.data, dense_gate(g, n) @ phi.data, atol=1e-12)
    assert abs(out.norm() - 1) < 1e-12


def test_bell_preparation_examples():
    c = MeasurementCircuit(2, (Gate("CNOT", 0, control=1), Gate("H", 1)))
    # adjoint of the Re circuit takes |01> and |11> to the Bell pair
    prep = c.adjoint()
    assert apply_circuit(basis_state(2, 0b01), prep).equiv(ket(0, R2, R2, 0))
    assert np.allclose(apply_circuit(basis_state(2, 0b11), prep).data, [0, R2, -R2, 0])


def test_paper_preparations():
    h, cx = Gate("H", 1), Gate("CNOT", 0, control=1)
    zero = basis_state(2, 0)
    cases = [
        ((h, cx), 0b00, [R2, 0, 0, R2]),
        ((h, cx), 0b10, [R2, 0, 0, -R2]),
        ((h, cx, Gate("S", 1)), 0b00, [R2, 0, 0, 1j * R2]),
        ((h, cx, Gate("S", 1)), 0b10, [R2, 0, 0, -1j * R2]),
    ]
    for seq, b, want in cases:
        out = apply_circuit(basis_state(2, b), MeasurementCircuit(2, seq))
        assert np.allclose(out.data, want)
    assert apply_circuit(zero, MeasurementCircuit(2)).data.tolist() == zero.data.tolist()


def test_measurement_circuit_undoes_bell_pair():
    bell = ket(0, R2, R2, 0)
    out = apply_circuit(bell, build_measurement_circuit(3, Part.RE, 2))
    assert out.equiv(basis_state(2, 0b01))


@pytest.mark.parametrize("n", range(1, 6))
def test_re_and_im_circuits_prepare_pair_states(n):
    for l in range(1, 1 << n):
        for b in range(1 << n):
            c = b ^ l
            if c < b:
                continue
            re = apply_circuit(basis_state(n, b), build_measurement_circuit(l, Part.RE, n).adjoint())
            im = apply_circuit(basis_state(n, b), build_measurement_circuit(l, Part.IM, n).adjoint())
            want_re = np.zeros(1 << n, complex)
            want_re[b], want_re[c] = R2, R2
            want_im = np.zeros(1 << n, complex)
            want_im[b], want_im[c] = R2, 1j * R2
            assert np.allclose(re.data, want_re)
            assert np.allclose(im.data, want_im)


@given(st.integers(1, 6), st.integers(0, 10 ** 6), st.integers(0, 63), st.sampled_from([Part.RE, Part.IM]))
def test_adjoint_round_trip(n, seed, l, s):
    l %= 1 << n
    if l == 0:
        s = Part.RE
    phi = haar_state(n, seed)
    c = build_measurement_circuit(l, s, n)
    back = apply_circuit(apply_circuit(phi, c), c.adjoint())
    assert np.allclose(back.data, phi.data, atol=1e-12)


def test_h_twice_is_identity():
    phi = haar_state(3, 4)
    out = apply_gate(apply_gate(phi, Gate("H", 1)), Gate("H", 1))
    assert np.allclose(out.data, phi.data, atol=1e-14)


def test_gate_range_checked():
    with pytest.raises(ValueError):
        apply_gate(basis_state(2, 0), Gate("H", 2))
    with pytest.raises(ValueError):
        apply_circuit(basis_state(2, 0), MeasurementCircuit(3))


def test_probabilities_examples():
    assert probabilities(basis_state(3, 5)).tolist() == [0, 0, 0, 0, 0, 1, 0, 0]
    plus = apply_circuit(basis_state(3, 0), MeasurementCircuit(3, tuple(Gate("H", q) for q in range(3))))
    assert np.allclose(probabilities(plus), 1 / 8)
    assert np.allclose(probabilities(ket(0, R2, R2, 0)), [0, 0.5, 0.5, 0])


def test_sample_examples():
    recs = sample(basis_state(2, 3), 100, seed=1)
    assert len(recs) == 1 and recs[0].bitstring == 3 and recs[0].count == 100
    plus = ket(R2, R2)
    shots = 100_000
    counts = {r.bitstring: r.count for r in sample(plus, shots, seed=2)}
    sigma = 0.5 / np.sqrt(shots)
    assert abs(counts[0] / shots - 0.5) < 4 * sigma
    assert sample(plus, 50, seed=9) == sample(plus, 50, seed=9)
    with pytest.raises(ValueError):
        sample(plus, 0, seed=1)


def test_sample_distribution_chi_square():
    phi = haar_state(3, 12)
    p = probabilities(phi)
    shots = 200_000
    counts = np.zeros(8)
    for r in sample(phi, shots, seed=5):
        counts[r.bitstring] = r.count
    chi2 = float(np.sum((counts - shots * p) ** 2 / (shots * p)))
    assert chi2 < 24.3  # 7 dof, p = 0.001


def test_prepare_bipartite_examples():
    z, o = basis_state(1, 0), basis_state(1, 1)
    assert np.allclose(prepare_bipartite(z, z).data, [R2, 0, R2, 0])
    assert np.allclose(prepare_bipartite(z, o).data, [R2, 0, 0, R2])
    with pytest.raises(ValueError):
        prepare_bipartite(z, basis_state(2, 0))


@given(st.integers(1, 4), st.integers(0, 10 ** 6))
def test_bipartite_embedding_identity(n, seed):
    psi0, psi1 = haar_state(n, seed), haar_state(n, seed + 1)
    a = gen_random_sparse(n, min(4 ** n, 12), seed=seed)
    phi = prepare_bipartite(psi0, psi1)
    lhs = dense_expectation(embed_offdiagonal(a), phi)
    assert abs(lhs - dense_expectation(a, psi0, psi1)) < 1e-10 * max(1, abs(lhs))


def test_random_state_properties():
    s = random_state(5, 3)
    assert abs(s.norm() - 1) < 1e-12
    assert np.array_equal(s.data, random_state(5, 3).data)
    assert np.allclose(rotated_qubit(0, 0, 0), [1, 0])
    # Rx(pi)|0> = -i|1>
    assert np.allclose(rotated_qubit(np.pi, 0, 0), [0, -1j])
    assert np.allclose(rotated_qubit(0, np.pi, 0), [0, 1])


def test_product_state_order():
    s = product_state([[0, 1], [1, 0]])  # qubit 0 in |1>
    assert s.data.tolist() == [0, 1, 0, 0]


def test_statevector_validation_and_json():
    with pytest.raises(ValueError):
        Statevector([1, 0, 0])
    with pytest.raises(ValueError):
        Statevector([1, 1])
    s = haar_state(2, 0)
    assert np.allclose(Statevector.from_json(s.to_json()).data, s.data)
    with pytest.raises(AttributeError):
        s.n = 4
    assert s.equiv(Statevector(s.data * np.exp(0.7j)))
