import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from emeel.channels import (
    DEFAULT_EEL_CENSUS,
    DEFAULT_EFL_CENSUS,
    DEFAULT_COMPONENT_FIDELITIES,
    CapacityError,
    ChannelError,
    DenseChannel,
    Depolarizing,
    PatternChannel,
    SPAMModel,
    Spiked,
    TensorProduct,
    bell_pair_spam,
    channel_from_config,
    clifford_twirl_pattern,
    compose,
    embed_packed,
    identity_channel,
    load_dense_csv,
    pattern_averaged_eigenvalues,
    random_dense_channel,
    restrict_packed,
    sample_error,
    spam_budget,
    default_budget,
    tensor,
    wht_eigen_to_rates,
    wht_rates_to_eigen,
)
from emeel.pauli import PauliLabel, all_labels, dense_index_to_packed, pattern_int, single_qubit_cliffords

L = PauliLabel.from_string


def dense_tvd(ch, n, N, rng):
    draws = ch.sample(rng, N)
    from emeel.pauli import packed_to_dense_index

    emp = np.bincount(packed_to_dense_index(draws, n), minlength=4**n) / N
    return 0.5 * np.abs(emp - ch.dense_rates()).sum()


# --------------------------------------------------------------------------
# Walsh-Hadamard transform
# --------------------------------------------------------------------------


class TestWHT:
    def test_depolarizing_single_qubit(self):
        assert np.allclose(wht_eigen_to_rates([1, 0, 0, 0]), [0.25] * 4)

    def test_spiked_single_qubit(self):
        assert np.allclose(wht_eigen_to_rates([1, 0, 0, 1 / 3]), [1 / 3, 1 / 6, 1 / 6, 1 / 3])

    def test_inverse_examples(self):
        assert np.allclose(wht_rates_to_eigen([0.25] * 4), [1, 0, 0, 0])
        assert np.allclose(wht_rates_to_eigen([1, 0, 0, 0]), [1, 1, 1, 1])
        assert np.allclose(wht_rates_to_eigen([1 / 3, 1 / 6, 1 / 6, 1 / 3]), [1, 0, 0, 1 / 3])

    def test_matches_definition(self, rng):
        n = 2
        ch = random_dense_channel(n, rng)
        lam = ch.dense_eigenvalues()
        labs = [PauliLabel.from_packed(n, int(p)) for p in dense_index_to_packed(n)]
        from emeel.pauli import symplectic_inner

        p = [sum(lam[j] * (-1) ** symplectic_inner(a, b) for j, b in enumerate(labs)) / 16 for a in labs]
        assert np.allclose(p, wht_eigen_to_rates(lam), atol=1e-14)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            Depolarizing(13).dense_eigenvalues()

    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_roundtrip(self, n, seed):
        ch = random_dense_channel(n, np.random.default_rng(seed))
        lam = ch.dense_eigenvalues()
        assert np.max(np.abs(wht_rates_to_eigen(wht_eigen_to_rates(lam)) - lam)) < 1e-12


# --------------------------------------------------------------------------
# Eigenvalues
# --------------------------------------------------------------------------


class TestEigenvalues:
    def test_spiked(self):
        ch = Spiked(2, L("XX"), 1, 1 / 3)
        assert ch.eigenvalue(L("XX")) == pytest.approx(1 / 3)
        assert ch.eigenvalue(L("II")) == 1
        assert ch.eigenvalue(L("XY")) == 0
        assert Spiked(2, L("XX"), -1).eigenvalue(L("XX")) == pytest.approx(-1 / 3)

    def test_depolarizing(self):
        assert Depolarizing(3).eigenvalue(PauliLabel.identity(3)) == 1
        assert Depolarizing(3).eigenvalue(L("XIZ")) == 0

    def test_tensor_product_rule(self):
        z = DenseChannel.from_mapping(1, {"Z": 0.9, "X": 0.5, "Y": 0.5})
        ch = TensorProduct(2, [(z, [0]), (z, [1])])
        assert ch.eigenvalue(L("ZZ")) == pytest.approx(0.81)

    def test_pattern_channel(self):
        ch = PatternChannel(2, fidelities=[1, 0.9, 0.8, 0.7])
        assert ch.eigenvalue(L("XI")) == pytest.approx(0.9)
        assert ch.eigenvalue(L("IZ")) == pytest.approx(0.8)
        assert ch.eigenvalue(L("YX")) == pytest.approx(0.7)
        pq = PatternChannel(3, per_qubit=[0.9, 0.8, 0.7])
        assert pq.eigenvalue(L("XIY")) == pytest.approx(0.63)

    def test_pattern_channel_identity_fidelity(self):
        with pytest.raises(ChannelError):
            PatternChannel(1, fidelities=[0.9, 0.8])

    def test_spiked_validation(self):
        with pytest.raises(ChannelError):
            Spiked(1, L("I"))
        with pytest.raises(ChannelError):
            Spiked(1, L("X"), 1, 1.5)
        with pytest.raises(ChannelError):
            Spiked(1, L("X"), 2)

    def test_dense_rejects_negative_rates(self):
        with pytest.raises(ChannelError):
            DenseChannel([1, 1, 1, -1])

    def test_large_structured_channels_are_cheap(self, rng):
        n = 32
        k = L("X" * n)
        for ch in (Depolarizing(n), Spiked(n, k), PatternChannel(n, per_qubit=np.full(n, 0.99))):
            s = ch.sample(rng, 1000)
            assert s.dtype == np.uint64
            ch.eigenvalues(s)
        assert PatternChannel(n, per_qubit=np.ones(n)).is_identity()


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_structured_channels_have_valid_rates(n, seed):
    rng = np.random.default_rng(seed)
    k = PauliLabel.from_packed(n, int(rng.integers(1, 4**n)))
    chans = [
        Depolarizing(n), Spiked(n, k, 1), Spiked(n, k, -1, 1.0),
        PatternChannel(n, per_qubit=rng.uniform(0.5, 1, n)),
        random_dense_channel(n, rng),
        TensorProduct(n, [(random_dense_channel(1, rng), [q]) for q in range(n)]),
    ]
    for ch in chans:
        p = ch.dense_rates()
        assert p.min() > -1e-12 and abs(p.sum() - 1) < 1e-12


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


class TestSampling:
    def test_depolarizing_uniform(self, rng):
        d = Depolarizing(1).sample(rng, 10**6)
        counts = np.bincount(d.astype(np.int64), minlength=4)
        assert stats.chisquare(counts).pvalue > 0.001

    def test_spiked_rates(self, rng):
        ch = Spiked(1, L("Z"), 1, 1 / 3)
        from emeel.pauli import packed_to_dense_index

        counts = np.bincount(packed_to_dense_index(ch.sample(rng, 10**6), 1), minlength=4)
        expected = wht_eigen_to_rates([1, 0, 0, 1 / 3]) * 10**6
        assert stats.chisquare(counts, expected).pvalue > 0.001

    def test_tensor_marginals(self, rng):
        a, b = random_dense_channel(1, rng), random_dense_channel(2, rng)
        ch = TensorProduct(3, [(a, [1]), (b, [0, 2])])
        s = ch.sample(rng, 200000)
        from emeel.pauli import packed_to_dense_index

        ma = np.bincount(packed_to_dense_index(restrict_packed(s, 3, [1]), 1), minlength=4) / s.size
        mb = np.bincount(packed_to_dense_index(restrict_packed(s, 3, [0, 2]), 2), minlength=16) / s.size
        assert 0.5 * np.abs(ma - a.dense_rates()).sum() < 5 * np.sqrt(4 / s.size)
        assert 0.5 * np.abs(mb - b.dense_rates()).sum() < 5 * np.sqrt(16 / s.size)

    @pytest.mark.parametrize("n", [1, 2])
    def test_tvd_all_kinds(self, n, rng):
        k = PauliLabel.from_packed(n, 3)
        chans = [
            Depolarizing(n), Spiked(n, k, 1), Spiked(n, k, -1), PatternChannel(n, per_qubit=rng.uniform(0.6, 1, n)),
            random_dense_channel(n, rng), compose(random_dense_channel(n, rng), PatternChannel(n, per_qubit=np.full(n, 0.8))),
        ]
        N = 10**6
        for ch in chans:
            assert dense_tvd(ch, n, N, rng) < 5 * np.sqrt(4**n / N)

    def test_sample_error_returns_label(self, rng):
        e = sample_error(Spiked(2, L("XZ")), rng)
        assert isinstance(e, PauliLabel) and e.n == 2


# --------------------------------------------------------------------------
# Composition, tensoring, twirling
# --------------------------------------------------------------------------


class TestCompose:
    def test_depolarizing_absorbs(self, rng):
        out = compose(Depolarizing(2), random_dense_channel(2, rng))
        assert isinstance(out, Depolarizing)

    def test_identity_passthrough(self, rng):
        ch = random_dense_channel(2, rng)
        assert compose(ch, identity_channel(2)) is ch

    @given(st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_commutative_associative(self, n, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (random_dense_channel(n, rng) for _ in range(3))
        ab = compose(a, b).dense_eigenvalues()
        assert np.array_equal(ab, compose(b, a).dense_eigenvalues())
        assert np.allclose(compose(compose(a, b), c).dense_eigenvalues(), compose(a, compose(b, c)).dense_eigenvalues(), atol=1e-15)
        assert np.allclose(ab, a.dense_eigenvalues() * b.dense_eigenvalues())

    def test_tensor_product_eigenvalues(self, rng):
        a, b = random_dense_channel(1, rng), random_dense_channel(2, rng)
        ch = tensor(a, b)
        for la in all_labels(1):
            for lb in all_labels(2):
                full = PauliLabel(3, la.x | (lb.x << 1), la.z | (lb.z << 1))
                assert ch.eigenvalue(full) == pytest.approx(a.eigenvalue(la) * b.eigenvalue(lb))

    def test_embed_restrict_roundtrip(self, rng):
        loc = rng.integers(0, 16, 100).astype(np.uint64)
        full = embed_packed(loc, 2, 5, [3, 1])
        assert np.array_equal(restrict_packed(full, 5, [3, 1]), loc)


class TestTwirl:
    def test_single_qubit_brute_force(self, rng):
        ch = random_dense_channel(1, rng)
        lam = ch.dense_eigenvalues()
        labs = all_labels(1)
        avg = np.zeros(4)
        for C in single_qubit_cliffords():
            avg += [ch.eigenvalue(C.apply_label(a)) for a in labs]
        avg /= 24
        tw = clifford_twirl_pattern(ch)
        assert tw.fidelity(1) == pytest.approx(avg[1]) == pytest.approx((lam[1] + lam[2] + lam[3]) / 3)

    def test_depolarizing_twirl(self):
        tw = clifford_twirl_pattern(Depolarizing(2))
        assert [tw.fidelity(s) for s in range(4)] == [1, 0, 0, 0]

    def test_idempotent_and_fixed_point(self, rng):
        ch = random_dense_channel(2, rng)
        t1 = clifford_twirl_pattern(ch)
        t2 = clifford_twirl_pattern(t1)
        assert np.allclose(t1.pattern_table(), t2.pattern_table())
        pc = PatternChannel(2, fidelities=[1, 0.9, 0.8, 0.75])
        assert np.allclose(clifford_twirl_pattern(pc).pattern_table(), pc.pattern_table())

    def test_pattern_averaged_matches_twirl(self, rng):
        ch = random_dense_channel(3, rng)
        tw = clifford_twirl_pattern(ch)
        packed = dense_index_to_packed(3)
        assert np.allclose(pattern_averaged_eigenvalues(ch, packed), tw.eigenvalues(packed))


# --------------------------------------------------------------------------
# SPAM and budget
# --------------------------------------------------------------------------


class TestSPAM:
    def test_identity_fidelity(self, rng):
        sp = SPAMModel(random_dense_channel(2, rng), random_dense_channel(2, rng))
        assert sp.combined(np.array([0], dtype=np.uint64))[0] == 1

    def test_bell_fidelity(self):
        sp = bell_pair_spam(3, 0.98)
        a = np.array([L("XIZ").packed], dtype=np.uint64)
        assert sp.bell_fidelity(a, 3)[0] == pytest.approx(0.98**4)

    def test_product_of_prep_and_measure(self, rng):
        s, m = random_dense_channel(2, rng), random_dense_channel(2, rng)
        labs = dense_index_to_packed(2)
        assert np.allclose(SPAMModel(s, m).combined(labs), s.eigenvalues(labs) * m.eigenvalues(labs))


class TestBudget:
    def test_default_budget_direct(self):
        b = default_budget()
        assert b.overhead_base == pytest.approx(1.23, abs=0.01)

    def test_default_budget_depolarizing_conversion(self):
        b = default_budget("depolarizing")
        assert 1.3 < b.overhead_base < 1.5

    def test_perfect_components(self):
        eel = {k: (1.0, c) for k, c in DEFAULT_EEL_CENSUS.items()}
        efl = {k: (1.0, c) for k, c in DEFAULT_EFL_CENSUS.items()}
        b = spam_budget(eel, efl)
        assert b.overhead_base == pytest.approx(1.0) and b.simplified_overhead == pytest.approx(2.0)

    def test_doubling_ecr(self):
        eel = {k: (DEFAULT_COMPONENT_FIDELITIES[k], c) for k, c in DEFAULT_EEL_CENSUS.items()}
        eel2 = dict(eel, ecr=(DEFAULT_COMPONENT_FIDELITIES["ecr"], 2 * DEFAULT_EEL_CENSUS["ecr"]))
        efl = {k: (DEFAULT_COMPONENT_FIDELITIES[k], c) for k, c in DEFAULT_EFL_CENSUS.items()}
        a1, a2 = spam_budget(eel, efl).alpha_eel, spam_budget(eel2, efl).alpha_eel
        assert a2 / a1 == pytest.approx(DEFAULT_COMPONENT_FIDELITIES["ecr"] ** DEFAULT_EEL_CENSUS["ecr"])

    def test_invalid_fidelity(self):
        with pytest.raises(ChannelError):
            spam_budget({"ecr": (0.0, 1)}, {})


# --------------------------------------------------------------------------
# Config
# --------------------------------------------------------------------------


class TestConfig:
    def test_kinds(self):
        assert isinstance(channel_from_config({"kind": "spiked", "k": "XXII", "sign": "+", "eps": 0.3333}, 4), Spiked)
        assert channel_from_config({"kind": "spiked", "k": "XI", "sign": "-"}, 2).spike == pytest.approx(-1 / 3)
        assert isinstance(channel_from_config("depolarizing", 3), Depolarizing)
        assert channel_from_config(None, 2).is_identity()
        t = channel_from_config({"kind": "tensor", "factors": [
            {"qubits": [0], "channel": {"kind": "pattern", "per_qubit": 0.9}},
            {"qubits": [1], "channel": {"kind": "dense", "eigenvalues": {"Z": 0.8, "X": 0.6, "Y": 0.6}}},
        ]}, 2)
        assert t.eigenvalue(L("XZ")) == pytest.approx(0.72)
        c = channel_from_config({"kind": "compose", "channels": [{"kind": "pattern", "uniform": 0.9}, {"kind": "local_depolarizing", "fidelity": 0.9}]}, 2)
        assert c.eigenvalue(L("XZ")) == pytest.approx(0.9 * 0.81)
        with pytest.raises(ChannelError):
            channel_from_config({"kind": "nope"}, 1)

    def test_random_dense_is_seeded(self):
        a = channel_from_config({"kind": "random_dense", "seed": 4}, 2)
        b = channel_from_config({"kind": "random_dense", "seed": 4}, 2)
        assert np.array_equal(a.dense_eigenvalues(), b.dense_eigenvalues())

    def test_dense_csv(self, tmp_path):
        p = tmp_path / "ch.csv"
        p.write_text("pauli,eigenvalue\nX,0.5\nY,0.5\nZ,0.9\n")
        ch = load_dense_csv(p, 1)
        assert ch.eigenvalue(L("Z")) == pytest.approx(0.9)

