import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emeel.pauli import (
    CliffordMap,
    PauliError,
    PauliLabel,
    PeriodNotFoundError,
    all_labels,
    clifford_apply,
    cnot,
    cz,
    dense_index,
    dense_index_to_packed,
    ecr,
    embed,
    gate_period,
    hadamard,
    identity_clifford,
    is_symplectic,
    labels_up_to_weight,
    orbit,
    orbit_partition,
    packed_inner,
    packed_pattern,
    packed_to_dense_index,
    parse_clifford,
    pattern,
    pauli_clifford,
    phase_gate,
    single_qubit_cliffords,
    swap,
    symplectic_inner,
    weight,
)

L = PauliLabel.from_string


def labels(n_min=1, n_max=16):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.tuples(st.just(n), st.integers(0, 2**n - 1), st.integers(0, 2**n - 1))
    ).map(lambda t: PauliLabel(*t))


def label_tuples(k, n_max=16):
    return st.integers(1, n_max).flatmap(
        lambda n: st.tuples(*[st.tuples(st.integers(0, 2**n - 1), st.integers(0, 2**n - 1)) for _ in range(k)]).map(
            lambda ts: tuple(PauliLabel(n, x, z) for x, z in ts)
        )
    )


_GATES = ["cnot", "cz", "swap", "ecr", "h", "s"]


@st.composite
def random_cliffords(draw, n_max=4):
    n = draw(st.integers(2, n_max))
    parts = []
    for _ in range(draw(st.integers(0, 8))):
        g = draw(st.sampled_from(_GATES))
        k = 2 if g in ("cnot", "cz", "swap", "ecr") else 1
        qs = draw(st.permutations(range(n)))[:k]
        parts.append(f"{g} " + " ".join(map(str, qs)))
    return parse_clifford("; ".join(parts), n)


# --------------------------------------------------------------------------
# Examples
# --------------------------------------------------------------------------


class TestExamples:
    def test_symplectic_inner(self):
        assert symplectic_inner(L("X"), L("Z")) == 1
        assert symplectic_inner(L("XX"), L("XX")) == 0
        assert symplectic_inner(L("XYIZI"), L("IIIII")) == 0

    def test_symplectic_inner_dimension_error(self):
        with pytest.raises(PauliError):
            symplectic_inner(L("X"), L("XX"))

    def test_pattern(self):
        assert pattern(L("XYIZI")) == (1, 1, 0, 1, 0)
        assert pattern(L("IIII")) == (0, 0, 0, 0)
        assert pattern(L("ZZ")) == (1, 1)

    def test_weight(self):
        assert weight(L("XYIZI")) == 3
        assert weight(PauliLabel.identity(7)) == 0
        assert weight(L("YYYY")) == 4

    def test_clifford_apply(self):
        out = clifford_apply(cnot(), L("XI"))
        assert out.label == L("XX") and out.sign == 1
        assert clifford_apply(cnot(), L("IZ")).label == L("ZZ")
        for C in (cnot(), ecr(), swap(), hadamard()):
            r = clifford_apply(C, PauliLabel.identity(C.n))
            assert r.label.is_identity() and r.sign == 1

    def test_gate_period(self):
        assert gate_period(cnot()) == 2
        assert gate_period(identity_clifford(3)) == 1
        assert gate_period(swap()) == 2

    def test_gate_period_cap(self):
        with pytest.raises(PeriodNotFoundError):
            gate_period(phase_gate(), cap=1)

    def test_orbit_examples(self):
        assert set(orbit(cnot(), L("ZI")).members) == {L("ZI")}
        assert set(orbit(cnot(), L("XZ")).members) == {L("XZ"), L("YY")}
        assert set(orbit(cnot(), L("XY")).members) == {L("XY"), L("YZ")}

    def test_cnot_orbit_table(self):
        """The nine symmetrized-eigenvalue classes of a single CNOT."""
        expected = {
            frozenset({"ZI"}), frozenset({"IX"}), frozenset({"ZX"}),
            frozenset({"IZ", "ZZ"}), frozenset({"XI", "XX"}), frozenset({"XZ", "YY"}),
            frozenset({"YI", "YX"}), frozenset({"IY", "ZY"}), frozenset({"XY", "YZ"}),
        }
        nontrivial = [a for a in all_labels(2) if not a.is_identity()]
        got = {frozenset(str(m) for m in o.members) for o in orbit_partition(cnot(), nontrivial)}
        assert got == expected

    def test_text_roundtrip(self):
        for s in ("XYIZI", "I", "ZZYX"):
            assert str(L(s)) == s
        assert L("XI").x == 1 and L("IX").x == 2  # leftmost character is qubit 0

    def test_invalid_character(self):
        with pytest.raises(PauliError):
            L("XQ")

    def test_constructors_are_symplectic(self):
        for C in (cnot(), cz(), swap(), ecr(), hadamard(), phase_gate()):
            assert is_symplectic(C.S)

    def test_single_qubit_cliffords(self):
        cl = single_qubit_cliffords()
        assert len(cl) == 24
        assert len({(c.S.tobytes(), c.r.tobytes()) for c in cl}) == 24
        assert cl[0].label_equal(identity_clifford(1))

    def test_ecr_matches_cnot_up_to_local_cliffords(self):
        # both are maximally entangling: the symplectic matrices have the same rank structure
        assert gate_period(ecr()) in (1, 2, 4)
        off = ecr().S[np.ix_([0, 2], [1, 3])]  # qubit-0 outputs from qubit-1 inputs
        assert off.any()

    def test_parse_clifford(self):
        G = parse_clifford("cnot 0 1; cnot 2 3", 4)
        assert G.apply_label(L("XIXI")) == L("XXXX")
        assert parse_clifford("id", 3).label_equal(identity_clifford(3))
        with pytest.raises(PauliError):
            parse_clifford("foo 0", 2)

    def test_embed_invalid(self):
        with pytest.raises(PauliError):
            embed(cnot(), [0, 0], 3)

    def test_pauli_clifford_signs(self):
        C = pauli_clifford(L("XI"))
        assert clifford_apply(C, L("ZI")).sign == -1
        assert clifford_apply(C, L("XZ")).sign == 1
        assert C.label_equal(identity_clifford(2))

    def test_labels_up_to_weight_count(self):
        assert len(labels_up_to_weight(8, 2)) == 1 + 24 + 252
        assert len(labels_up_to_weight(2, 2, include_identity=False)) == 15

    def test_dense_order_single_qubit(self):
        assert [str(PauliLabel.from_packed(1, int(p))) for p in dense_index_to_packed(1)] == ["I", "X", "Y", "Z"]


# --------------------------------------------------------------------------
# Properties
# --------------------------------------------------------------------------


@given(label_tuples(3))
def test_symplectic_bilinear(t):
    a, b, c = t
    assert symplectic_inner(a + b, c) == symplectic_inner(a, c) ^ symplectic_inner(b, c)


@given(label_tuples(2))
def test_symplectic_symmetric_and_alternating(t):
    a, b = t
    assert symplectic_inner(a, b) == symplectic_inner(b, a)
    assert symplectic_inner(a, a) == 0


@given(labels())
def test_label_self_inverse(a):
    assert (a + a).is_identity()
    assert PauliLabel.from_string(str(a)) == a
    assert PauliLabel.from_packed(a.n, a.packed) == a


@given(label_tuples(2))
def test_packed_inner_matches_scalar(t):
    a, b = t
    assert int(packed_inner(np.uint64(a.packed), np.uint64(b.packed), a.n)) == symplectic_inner(a, b)
    assert int(packed_pattern(np.uint64(a.packed), a.n)) == a.x | a.z


@given(random_cliffords(), st.data())
def test_clifford_preserves_commutation(C, data):
    n = C.n
    draw = st.tuples(st.integers(0, 2**n - 1), st.integers(0, 2**n - 1))
    a = PauliLabel(n, *data.draw(draw))
    b = PauliLabel(n, *data.draw(draw))
    assert symplectic_inner(C.apply_label(a), C.apply_label(b)) == symplectic_inner(a, b)
    assert is_symplectic(C.S)


@given(random_cliffords(), st.data())
def test_inverse_roundtrip(C, data):
    n = C.n
    a = PauliLabel(n, *data.draw(st.tuples(st.integers(0, 2**n - 1), st.integers(0, 2**n - 1))))
    s1 = clifford_apply(C, a)
    s2 = clifford_apply(C.inverse(), s1.label)
    assert s2.label == a and s1.sign * s2.sign == 1


@given(random_cliffords(n_max=3), random_cliffords(n_max=3), random_cliffords(n_max=3))
def test_compose_associative(A, B, C):
    if not (A.n == B.n == C.n):
        return
    assert A.compose(B).compose(C) == A.compose(B.compose(C))
    I = identity_clifford(A.n)
    assert A.compose(I) == A and I.compose(A) == A


@given(random_cliffords(n_max=3))
def test_period_is_lcm_of_orbit_periods(C):
    periods = [o.period for o in orbit_partition(C)]
    assert gate_period(C) == reduce(math.lcm, periods, 1)
    for o in orbit_partition(C):
        assert gate_period(C) % o.period == 0
        assert C.apply_label(o.members[-1]) == o.members[0]


@given(random_cliffords(n_max=3))
def test_orbit_partition_covers_all(C):
    members = [m for o in orbit_partition(C) for m in o.members]
    assert len(members) == 4**C.n == len(set(members))


@given(random_cliffords(n_max=4))
def test_apply_packed_matches_scalar(C):
    ls = all_labels(C.n)[:64]
    packed = np.array([a.packed for a in ls], dtype=np.uint64)
    out = C.apply_packed(packed)
    assert [int(v) for v in out] == [C.apply_label(a).packed for a in ls]


@given(st.integers(1, 6))
def test_dense_index_roundtrip(n):
    p = dense_index_to_packed(n)
    assert np.array_equal(packed_to_dense_index(p, n), np.arange(4**n))
    assert all(dense_index(PauliLabel.from_packed(n, int(v))) == i for i, v in enumerate(p[:50]))


def test_signed_period_of_pauli_frame():
    # H S has label period 3; signs make some powers a Pauli frame change
    G = hadamard().compose(phase_gate())
    assert gate_period(G) == 3
    assert gate_period(G, signed=True) % 3 == 0
