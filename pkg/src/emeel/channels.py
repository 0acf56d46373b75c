"""Pauli channels in dense and structured form.

A channel is described either by its Pauli eigenvalues ``lam[b]`` or its error
rates ``p[a]``; the two are related by the Walsh-Hadamard transform
``p_a = 4^-n sum_b lam_b (-1)^<a,b>``.  Structured channels answer eigenvalue
queries and draw errors in time polynomial in n, dense channels are limited to
``n <= DENSE_CAP``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .pauli import (
    CapacityError,
    PauliError,
    PauliLabel,
    check_packable,
    dense_index_to_packed,
    packed_inner,
    packed_pattern,
    packed_to_dense_index,
)
from .rng import uniform_labels

DENSE_CAP = 12
PROB_TOL = 1e-9

# (-1)^<a,b> on single-qubit labels in dense digit order I, X, Y, Z
_H4 = np.array(
    [
        [1, 1, 1, 1],
        [1, 1, -1, -1],
        [1, -1, 1, -1],
        [1, -1, -1, 1],
    ],
    dtype=float,
)


class ChannelError(ValueError):
    """Invalid channel parameters or an operation the representation cannot support."""


# --------------------------------------------------------------------------
# Walsh-Hadamard transform
# --------------------------------------------------------------------------


def _n_from_len(size: int) -> int:
    n = 0
    while 4**n < size:
        n += 1
    if 4**n != size:
        raise ChannelError(f"vector length {size} is not a power of 4")
    return n


def _per_qubit_transform(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    n = _n_from_len(vec.size)
    if n > DENSE_CAP:
        raise CapacityError(f"dense transforms are capped at {DENSE_CAP} qubits")
    out = vec.reshape(-1)
    for j in range(n):
        out = out.reshape(4**j, 4, 4 ** (n - j - 1))
        out = np.einsum("ab,ibk->iak", _H4, out)
    return out.reshape(-1)


def wht_eigen_to_rates(lam) -> np.ndarray:
    """Error rates from dense eigenvalues (dense digit order, see ``pauli``)."""
    lam = np.asarray(lam, dtype=float)
    if lam.size and abs(lam[0] - 1.0) > PROB_TOL:
        raise ChannelError("trace-preserving channels need lambda_identity = 1")
    return _per_qubit_transform(lam) / lam.size


def wht_rates_to_eigen(p) -> np.ndarray:
    """Eigenvalues from dense error rates."""
    return _per_qubit_transform(p)


def check_rates(p: np.ndarray, tol: float = PROB_TOL) -> None:
    if p.min() < -tol:
        raise ChannelError(f"negative error rate {p.min():.3g}; not a valid Pauli channel")
    if abs(p.sum() - 1.0) > tol * max(1, p.size) ** 0.5:
        raise ChannelError(f"error rates sum to {p.sum():.12g}")


# --------------------------------------------------------------------------
# Packed-label helpers
# --------------------------------------------------------------------------


def restrict_packed(labels: np.ndarray, n: int, qubits: Sequence[int]) -> np.ndarray:
    """Restrict packed n-qubit labels to ``qubits`` (in that order)."""
    m = len(qubits)
    out = np.zeros(labels.shape, dtype=np.uint64)
    one = np.uint64(1)
    for i, q in enumerate(qubits):
        out |= ((labels >> np.uint64(q)) & one) << np.uint64(i)
        out |= ((labels >> np.uint64(n + q)) & one) << np.uint64(m + i)
    return out


def embed_packed(local: np.ndarray, m: int, n: int, qubits: Sequence[int]) -> np.ndarray:
    out = np.zeros(local.shape, dtype=np.uint64)
    one = np.uint64(1)
    for i, q in enumerate(qubits):
        out |= ((local >> np.uint64(i)) & one) << np.uint64(q)
        out |= ((local >> np.uint64(m + i)) & one) << np.uint64(n + q)
    return out


def _as_packed(labels, n: int) -> np.ndarray:
    if isinstance(labels, PauliLabel):
        if labels.n != n:
            raise PauliError(f"dimension mismatch: channel on {n} qubits, label on {labels.n}")
        return np.array(labels.packed, dtype=np.uint64)
    return np.asarray(labels, dtype=np.uint64)


def _random_directions(rng: np.random.Generator, support: np.ndarray, n: int) -> np.ndarray:
    """Uniform nontrivial single-qubit Pauli on each qubit flagged in ``support``."""
    codes = rng.integers(1, 4, size=support.shape + (n,), dtype=np.uint64)  # x + 2 z
    out = np.zeros(support.shape, dtype=np.uint64)
    for j in range(n):
        on = (support >> np.uint64(j)) & np.uint64(1)
        c = codes[..., j] * on
        out |= (c & np.uint64(1)) << np.uint64(j)
        out |= (c >> np.uint64(1)) << np.uint64(n + j)
    return out


# --------------------------------------------------------------------------
# Channel classes
# --------------------------------------------------------------------------


class PauliChannel:
    """Base class; subclasses implement ``eigenvalues`` and ``sample``."""

    n: int

    def eigenvalue(self, a: PauliLabel) -> float:
        if a.n != self.n:
            raise PauliError(f"dimension mismatch: channel on {self.n} qubits, label on {a.n}")
        return float(self.eigenvalues(np.array([a.packed], dtype=np.uint64))[0])

    def eigenvalues(self, labels) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Packed labels drawn from the error-rate distribution."""
        raise NotImplementedError

    def dense_eigenvalues(self) -> np.ndarray:
        if self.n > DENSE_CAP:
            raise CapacityError(f"dense expansion is capped at {DENSE_CAP} qubits")
        return self.eigenvalues(dense_index_to_packed(self.n))

    def dense_rates(self) -> np.ndarray:
        return wht_eigen_to_rates(self.dense_eigenvalues())

    def to_dense(self) -> "DenseChannel":
        return DenseChannel(self.dense_eigenvalues())

    def is_identity(self) -> bool:
        return False


@dataclass(frozen=True)
class Depolarizing(PauliChannel):
    n: int

    def eigenvalues(self, labels) -> np.ndarray:
        labels = _as_packed(labels, self.n)
        return (labels == 0).astype(float)

    def sample(self, rng, size) -> np.ndarray:
        check_packable(self.n)
        return uniform_labels(rng, self.n, size)


@dataclass(frozen=True)
class Spiked(PauliChannel):
    """Depolarizing channel with a single nonzero eigenvalue ``sign * eps`` at ``k``."""

    n: int
    k: PauliLabel
    sign: int = 1
    eps: float = 1.0 / 3.0

    def __post_init__(self):
        if self.k.n != self.n:
            raise PauliError("spike label has the wrong qubit count")
        if self.k.is_identity():
            raise ChannelError("spike must sit on a nonidentity Pauli")
        if self.sign not in (1, -1):
            raise ChannelError("sign must be +1 or -1")
        if not 0.0 <= self.eps <= 1.0:
            raise ChannelError("eps must lie in [0, 1] for nonnegative error rates")

    @property
    def spike(self) -> float:
        return self.sign * self.eps

    def eigenvalues(self, labels) -> np.ndarray:
        labels = _as_packed(labels, self.n)
        out = (labels == 0).astype(float)
        out[labels == np.uint64(self.k.packed)] = self.spike
        return out

    def _anticommuting_partner(self) -> int:
        # any c with <c, k> = 1
        for j in range(self.n):
            if (self.k.x >> j) & 1:
                return 1 << (self.n + j)  # Z_j
            if (self.k.z >> j) & 1:
                return 1 << j  # X_j
        raise AssertionError("unreachable")

    def sample(self, rng, size) -> np.ndarray:
        check_packable(self.n)
        # commuting half carries (1 + spike)/2 of the mass, uniform inside each half
        want_anti = rng.random(size) >= (1.0 + self.spike) / 2.0
        u = uniform_labels(rng, self.n, size)
        is_anti = packed_inner(u, np.uint64(self.k.packed), self.n).astype(bool)
        flip = np.where(is_anti != want_anti, np.uint64(self._anticommuting_partner()), np.uint64(0))
        return u ^ flip


class PatternChannel(PauliChannel):
    """Eigenvalues depend only on the support pattern of the Pauli.

    Give either ``fidelities`` (length ``2**n``, indexed by the pattern integer
    whose bit ``j`` marks qubit ``j``; a mapping from bit strings such as
    ``"10"`` is also accepted) or ``per_qubit`` values ``c_j`` for the product
    form ``fidelity[s] = prod_j c_j^{s_j}``.
    """

    def __init__(self, n: int, fidelities=None, per_qubit=None):
        self.n = int(n)
        if (fidelities is None) == (per_qubit is None):
            raise ChannelError("give exactly one of fidelities or per_qubit")
        self.per_qubit = None
        self.fidelities = None
        if per_qubit is not None:
            c = np.asarray(per_qubit, dtype=float)
            if c.shape != (self.n,):
                raise ChannelError("per_qubit needs one value per qubit")
            if np.any(c < -1.0 / 3.0 - PROB_TOL) or np.any(c > 1 + PROB_TOL):
                raise ChannelError("per-qubit fidelities must lie in [-1/3, 1]")
            self.per_qubit = c
        else:
            if self.n > 20:
                raise CapacityError("explicit pattern tables are limited to 20 qubits")
            if isinstance(fidelities, Mapping):
                arr = np.ones(2**self.n)
                arr[:] = np.nan
                arr[0] = 1.0
                for key, val in fidelities.items():
                    arr[_pattern_key(key, self.n)] = float(val)
                if np.isnan(arr).any():
                    raise ChannelError("pattern table is missing entries")
            else:
                arr = np.asarray(fidelities, dtype=float)
            if arr.shape != (2**self.n,):
                raise ChannelError("pattern table needs 2**n entries")
            if abs(arr[0] - 1.0) > PROB_TOL:
                raise ChannelError("fidelity of the empty pattern must be 1")
            self.fidelities = arr

    @classmethod
    def uniform(cls, n: int, fidelity: float) -> "PatternChannel":
        """Every nontrivial pattern gets the same fidelity (n-qubit depolarizing)."""
        arr = np.full(2**n, float(fidelity))
        arr[0] = 1.0
        return cls(n, fidelities=arr)

    def fidelity(self, pattern_int: int) -> float:
        if self.per_qubit is not None:
            return float(np.prod([self.per_qubit[j] for j in range(self.n) if (pattern_int >> j) & 1]))
        return float(self.fidelities[pattern_int])

    def pattern_table(self) -> np.ndarray:
        if self.fidelities is not None:
            return self.fidelities
        idx = np.arange(2**self.n)
        out = np.ones(2**self.n)
        for j in range(self.n):
            out = np.where((idx >> j) & 1, out * self.per_qubit[j], out)
        return out

    def eigenvalues(self, labels) -> np.ndarray:
        labels = _as_packed(labels, self.n)
        pt = packed_pattern(labels, self.n)
        if self.fidelities is not None:
            return self.fidelities[pt.astype(np.intp)]
        out = np.ones(labels.shape)
        for j in range(self.n):
            on = ((pt >> np.uint64(j)) & np.uint64(1)).astype(bool)
            out = np.where(on, out * self.per_qubit[j], out)
        return out

    def pattern_probabilities(self) -> np.ndarray:
        """Probability that the drawn error has each support pattern."""
        if self.per_qubit is not None:
            raise ChannelError("product form is sampled qubit by qubit")
        # per qubit: rate of I is (F0 + 3 F1)/4, rate of each of X,Y,Z is (F0 - F1)/4
        q = self.fidelities.copy()
        for j in range(self.n):
            q = q.reshape(2 ** (self.n - j - 1), 2, 2**j)
            f0, f1 = q[:, 0, :].copy(), q[:, 1, :].copy()
            q[:, 0, :] = (f0 + 3 * f1) / 4
            q[:, 1, :] = 3 * (f0 - f1) / 4
        return q.reshape(-1)

    def sample(self, rng, size) -> np.ndarray:
        check_packable(self.n)
        if self.per_qubit is not None:
            p_err = 3.0 * (1.0 - self.per_qubit) / 4.0
            if np.any(p_err < -PROB_TOL):
                raise ChannelError("per-qubit fidelity above 1")
            u = rng.random(np.shape(np.empty(size)) + (self.n,))
            support = np.zeros(np.shape(np.empty(size)), dtype=np.uint64)
            for j in range(self.n):
                support |= (u[..., j] < p_err[j]).astype(np.uint64) << np.uint64(j)
        else:
            q = self.pattern_probabilities()
            if q.min() < -PROB_TOL:
                raise ChannelError("pattern table gives negative error rates")
            q = np.clip(q, 0, None)
            support = rng.choice(q.size, size=size, p=q / q.sum()).astype(np.uint64)
        return _random_directions(rng, support, self.n)

    def is_identity(self) -> bool:
        if self.per_qubit is not None:
            return bool(np.all(self.per_qubit == 1.0))
        return bool(np.all(self.fidelities == 1.0))

    def __repr__(self) -> str:
        if self.per_qubit is not None:
            return f"PatternChannel(n={self.n}, per_qubit={self.per_qubit.tolist()})"
        return f"PatternChannel(n={self.n}, fidelities={self.fidelities.tolist()})"


def _pattern_key(key, n: int) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    s = str(key)
    if len(s) != n or set(s) - {"0", "1"}:
        raise ChannelError(f"bad pattern key {key!r}")
    return sum(1 << j for j, ch in enumerate(s) if ch == "1")


class TensorProduct(PauliChannel):
    """Independent factors on disjoint qubit subsets; unlisted qubits are noiseless."""

    def __init__(self, n: int, factors: Sequence[tuple[PauliChannel, Sequence[int]]]):
        self.n = int(n)
        used: set[int] = set()
        fs = []
        for ch, qubits in factors:
            qubits = tuple(int(q) for q in qubits)
            if len(qubits) != ch.n:
                raise ChannelError("factor qubit list does not match factor size")
            if used & set(qubits) or any(q < 0 or q >= self.n for q in qubits):
                raise ChannelError("factor supports must be disjoint and in range")
            used |= set(qubits)
            fs.append((ch, qubits))
        self.factors = tuple(fs)

    def eigenvalues(self, labels) -> np.ndarray:
        labels = _as_packed(labels, self.n)
        out = np.ones(labels.shape)
        for ch, qubits in self.factors:
            out = out * ch.eigenvalues(restrict_packed(labels, self.n, qubits))
        return out

    def sample(self, rng, size) -> np.ndarray:
        check_packable(self.n)
        out = np.zeros(np.shape(np.empty(size)), dtype=np.uint64)
        for ch, qubits in self.factors:
            out |= embed_packed(ch.sample(rng, size), len(qubits), self.n, qubits)
        return out

    def is_identity(self) -> bool:
        return all(ch.is_identity() for ch, _ in self.factors)

    def __repr__(self) -> str:
        return f"TensorProduct(n={self.n}, factors={list(self.factors)!r})"


class DenseChannel(PauliChannel):
    """Explicit eigenvalue table in dense digit order."""

    def __init__(self, eigenvalues, validate: bool = True):
        lam = np.asarray(eigenvalues, dtype=float).copy()
        self.n = _n_from_len(lam.size)
        if self.n > DENSE_CAP:
            raise CapacityError(f"dense channels are capped at {DENSE_CAP} qubits")
        if abs(lam[0] - 1) > PROB_TOL:
            raise ChannelError("lambda_identity must be 1")
        lam[0] = 1.0
        self.lam = lam
        self._rates = None
        if validate:
            check_rates(self.rates)

    @classmethod
    def from_rates(cls, p) -> "DenseChannel":
        p = np.asarray(p, dtype=float)
        check_rates(p)
        ch = cls(wht_rates_to_eigen(p), validate=False)
        ch._rates = p / p.sum()
        return ch

    @classmethod
    def from_mapping(cls, n: int, eigenvalues: Mapping[str, float]) -> "DenseChannel":
        lam = np.zeros(4**n)
        lam[0] = 1.0
        packed_to_idx = packed_to_dense_index
        for key, val in eigenvalues.items():
            a = PauliLabel.from_string(key)
            if a.n != n:
                raise ChannelError(f"label {key!r} is not on {n} qubits")
            lam[int(packed_to_idx(np.array([a.packed], dtype=np.uint64), n)[0])] = float(val)
        return cls(lam)

    @property
    def rates(self) -> np.ndarray:
        if self._rates is None:
            self._rates = wht_eigen_to_rates(self.lam)
        return self._rates

    def eigenvalues(self, labels) -> np.ndarray:
        labels = _as_packed(labels, self.n)
        return self.lam[packed_to_dense_index(labels, self.n)]

    def dense_eigenvalues(self) -> np.ndarray:
        return self.lam.copy()

    def sample(self, rng, size) -> np.ndarray:
        p = self.rates
        if p.min() < -PROB_TOL:
            raise ChannelError("channel has negative error rates")
        p = np.clip(p, 0, None)
        idx = rng.choice(p.size, size=size, p=p / p.sum())
        return self._index_table()[idx]

    def _index_table(self) -> np.ndarray:
        if not hasattr(self, "_table"):
            self._table = dense_index_to_packed(self.n)
        return self._table

    def is_identity(self) -> bool:
        return bool(np.all(self.lam == 1.0))

    def __repr__(self) -> str:
        return f"DenseChannel(n={self.n})"


class Composed(PauliChannel):
    """Sequential application; eigenvalues multiply and errors XOR."""

    def __init__(self, channels: Sequence[PauliChannel]):
        channels = tuple(channels)
        if not channels:
            raise ChannelError("nothing to compose")
        n = channels[0].n
        if any(c.n != n for c in channels):
            raise PauliError("composed channels need equal qubit counts")
        self.n = n
        self.channels = channels

    def eigenvalues(self, labels) -> np.ndarray:
        out = 1.0
        for c in self.channels:
            out = out * c.eigenvalues(labels)
        return out

    def sample(self, rng, size) -> np.ndarray:
        out = np.zeros(np.shape(np.empty(size)), dtype=np.uint64)
        for c in self.channels:
            out ^= c.sample(rng, size)
        return out

    def is_identity(self) -> bool:
        return all(c.is_identity() for c in self.channels)


def identity_channel(n: int) -> PatternChannel:
    return PatternChannel(n, per_qubit=np.ones(n))


def sample_error(ch: PauliChannel, rng) -> PauliLabel:
    return PauliLabel.from_packed(ch.n, int(ch.sample(rng, 1)[0]))


def compose(ch1: PauliChannel, ch2: PauliChannel) -> PauliChannel:
    if ch1.n != ch2.n:
        raise PauliError(f"cannot compose channels on {ch1.n} and {ch2.n} qubits")
    if isinstance(ch1, Depolarizing) or isinstance(ch2, Depolarizing):
        return Depolarizing(ch1.n)
    if ch2.is_identity():
        return ch1
    if ch1.is_identity():
        return ch2
    return Composed([ch1, ch2])


def tensor(ch1: PauliChannel, ch2: PauliChannel) -> TensorProduct:
    """``ch1`` on the first ``ch1.n`` qubits, ``ch2`` on the rest."""
    n = ch1.n + ch2.n
    return TensorProduct(n, [(ch1, range(ch1.n)), (ch2, range(ch1.n, n))])


def clifford_twirl_pattern(ch: PauliChannel) -> PatternChannel:
    """Average over local Cliffords: each eigenvalue becomes its pattern-class mean."""
    if isinstance(ch, PatternChannel):
        return ch
    lam = ch.dense_eigenvalues()
    pt = packed_pattern(dense_index_to_packed(ch.n), ch.n).astype(np.intp)
    sums = np.bincount(pt, weights=lam, minlength=2**ch.n)
    counts = np.bincount(pt, minlength=2**ch.n)
    return PatternChannel(ch.n, fidelities=sums / counts)


def pattern_averaged_eigenvalues(ch: PauliChannel, labels) -> np.ndarray:
    """Mean eigenvalue over the pattern class of each label.

    This is the eigenvalue of the local-Clifford twirl of ``ch``.  Structured
    channels are handled in polynomial time; other cases fall back to the dense
    twirl.
    """
    labels = _as_packed(labels, ch.n)
    pt = packed_pattern(labels, ch.n)
    if isinstance(ch, PatternChannel):
        return ch.eigenvalues(labels)
    if isinstance(ch, Depolarizing):
        return (pt == 0).astype(float)
    if isinstance(ch, Spiked):
        kpt = np.uint64(pattern_int_packed(ch.k.packed, ch.n))
        size = 3.0 ** bin(int(kpt)).count("1")
        out = (pt == 0).astype(float)
        out[pt == kpt] = ch.spike / size
        return out
    if isinstance(ch, TensorProduct):
        out = np.ones(labels.shape)
        for f, qubits in ch.factors:
            out = out * pattern_averaged_eigenvalues(f, restrict_packed(labels, ch.n, qubits))
        return out
    return clifford_twirl_pattern(ch).eigenvalues(labels)


def pattern_int_packed(packed: int, n: int) -> int:
    mask = (1 << n) - 1
    return (packed & mask) | (packed >> n)


def random_dense_channel(n: int, rng, identity_mass=(0.9, 0.99), concentration: float = 1.0) -> DenseChannel:
    """Random valid channel: identity rate drawn from ``identity_mass``, rest Dirichlet.

    With ``identity_mass >= (1 + m)/2`` every eigenvalue is at least ``m``.
    """
    lo, hi = identity_mass
    p0 = rng.uniform(lo, hi)
    rest = rng.dirichlet(np.full(4**n - 1, concentration)) * (1 - p0)
    return DenseChannel.from_rates(np.concatenate([[p0], rest]))


# --------------------------------------------------------------------------
# SPAM
# --------------------------------------------------------------------------


def bell_pair_label(a_packed, n: int) -> np.ndarray:
    """The 2n-qubit label ``(a on system, a on ancilla)`` for packed n-qubit labels."""
    a = np.asarray(a_packed, dtype=np.uint64)
    mask = np.uint64((1 << n) - 1)
    ax, az = a & mask, a >> np.uint64(n)
    sh = np.uint64(n)
    x = ax | (ax << sh)
    z = az | (az << sh)
    return x | (z << np.uint64(2 * n))


def z_label(mu, n: int) -> np.ndarray:
    """Packed Z-type label with support bit vector ``mu``."""
    return np.asarray(mu, dtype=np.uint64) << np.uint64(n)


@dataclass
class SPAMModel:
    """Pauli-twirled state-preparation and measurement noise on ``m`` qubits."""

    state_prep: PauliChannel
    measurement: PauliChannel

    def __post_init__(self):
        if self.state_prep.n != self.measurement.n:
            raise PauliError("prep and measurement channels differ in size")

    @property
    def n(self) -> int:
        return self.state_prep.n

    @classmethod
    def ideal(cls, m: int) -> "SPAMModel":
        return cls(identity_channel(m), identity_channel(m))

    @classmethod
    def local_depolarizing(cls, m: int, fidelity: float) -> "SPAMModel":
        """Each qubit has combined (prep then measure) Pauli fidelity ``fidelity``."""
        c = math.sqrt(fidelity)
        return cls(PatternChannel(m, per_qubit=np.full(m, c)), PatternChannel(m, per_qubit=np.full(m, c)))

    def combined(self, labels) -> np.ndarray:
        return self.state_prep.eigenvalues(labels) * self.measurement.eigenvalues(labels)

    def bell_fidelity(self, a_packed, n: int) -> np.ndarray:
        """xi_{a,a}: combined eigenvalue on the label (a, a) of the 2n-qubit pair register."""
        if self.n != 2 * n:
            raise PauliError("Bell-frame SPAM must act on 2n qubits")
        return self.combined(bell_pair_label(a_packed, n))

    def is_identity(self) -> bool:
        return self.state_prep.is_identity() and self.measurement.is_identity()


def bell_pair_spam(n: int, fidelity: float) -> SPAMModel:
    """Product SPAM on the 2n-qubit pair register with per-physical-qubit ``fidelity``.

    A Bell-pair label of weight w then has ``xi = fidelity**(2 w)``.
    """
    return SPAMModel.local_depolarizing(2 * n, fidelity)


# --------------------------------------------------------------------------
# SPAM budget from component fidelities
# --------------------------------------------------------------------------

DEFAULT_COMPONENT_FIDELITIES = {"ecr": 0.9903, "t1": 0.9983, "t2": 0.9939, "readout": 0.9925}
# one block of two system qubits and two ancillas: Bell prep uses 2 ECR and a
# 3-ECR SWAP during which two qubits idle; Bell measurement mirrors it and adds
# four readouts.  EFL on the same block only reads out the two system qubits.
DEFAULT_EEL_CENSUS = {"ecr": 10, "t1": 12, "t2": 12, "readout": 4}
DEFAULT_EFL_CENSUS = {"readout": 2}


@dataclass(frozen=True)
class SpamBudget:
    alpha_eel: float
    alpha_efl: float
    alpha_ratio_per_qubit: float
    overhead_base: float
    simplified_overhead: float
    details: dict = field(default_factory=dict)


def _component_factor(fid: float, qubits: int, conversion: str) -> float:
    if not 0 < fid <= 1:
        raise ChannelError(f"component fidelity {fid} outside (0, 1]")
    if conversion == "direct":
        return fid
    if conversion == "depolarizing":
        dim = 2**qubits
        f_pro = ((dim + 1) * fid - 1) / dim
        return (dim**2 * f_pro - 1) / (dim**2 - 1)
    raise ChannelError(f"unknown conversion {conversion!r}")


_COMPONENT_QUBITS = {"ecr": 2, "cnot": 2, "swap": 2}


def spam_budget(
    eel_components: Mapping[str, tuple[float, int]],
    efl_components: Mapping[str, tuple[float, int]],
    qubits_per_block: int = 2,
    conversion: str = "direct",
) -> SpamBudget:
    """SPAM Pauli fidelities of EEL and EFL from a census of faulty components.

    Each component contributes ``factor**count`` to the block's SPAM fidelity.
    ``conversion="direct"`` uses the reported fidelity as that factor;
    ``"depolarizing"`` first maps an average gate fidelity to the common
    nonidentity eigenvalue of a depolarizing channel of matching process fidelity.
    The overhead base is the per-qubit ``(alpha_EFL / alpha_EEL)**2``.
    """
    def block_alpha(components):
        a = 1.0
        for name, (fid, count) in components.items():
            a *= _component_factor(fid, _COMPONENT_QUBITS.get(name.lower(), 1), conversion) ** count
        return a

    a_eel = block_alpha(eel_components)
    a_efl = block_alpha(efl_components)
    ratio_q = (a_efl / a_eel) ** (1.0 / qubits_per_block)
    base = ratio_q**2
    simple = base + 1.0  # r_aux = 0 limit of the simplified overhead, per qubit
    return SpamBudget(a_eel, a_efl, ratio_q, base, simple, {"conversion": conversion, "qubits_per_block": qubits_per_block})


def default_budget(conversion: str = "direct") -> SpamBudget:
    eel = {k: (DEFAULT_COMPONENT_FIDELITIES[k], c) for k, c in DEFAULT_EEL_CENSUS.items()}
    efl = {k: (DEFAULT_COMPONENT_FIDELITIES[k], c) for k, c in DEFAULT_EFL_CENSUS.items()}
    return spam_budget(eel, efl, qubits_per_block=2, conversion=conversion)


# --------------------------------------------------------------------------
# Config and CSV loading
# --------------------------------------------------------------------------


def channel_from_config(cfg, n: int, rng=None) -> PauliChannel:
    """Build a channel from a declarative mapping such as
    ``{"kind": "spiked", "k": "XXII", "sign": "+", "eps": 0.3333}``."""
    if cfg is None:
        return identity_channel(n)
    if isinstance(cfg, str):
        cfg = {"kind": cfg}
    kind = str(cfg.get("kind", "")).lower()
    if kind in ("identity", "ideal", "none"):
        return identity_channel(n)
    if kind == "depolarizing":
        return Depolarizing(n)
    if kind == "spiked":
        k = PauliLabel.from_string(cfg["k"])
        sign = cfg.get("sign", "+")
        sign = -1 if str(sign).strip() in ("-", "-1") else 1
        return Spiked(n, k, sign, float(cfg.get("eps", 1.0 / 3.0)))
    if kind == "pattern":
        if "per_qubit" in cfg:
            pq = cfg["per_qubit"]
            pq = [pq] * n if isinstance(pq, (int, float)) else pq
            return PatternChannel(n, per_qubit=pq)
        if "uniform" in cfg:
            return PatternChannel.uniform(n, float(cfg["uniform"]))
        return PatternChannel(n, fidelities=cfg["fidelities"])
    if kind == "local_depolarizing":
        return PatternChannel(n, per_qubit=np.full(n, float(cfg["fidelity"])))
    if kind == "dense":
        if "csv" in cfg:
            return load_dense_csv(cfg["csv"], n)
        return DenseChannel.from_mapping(n, cfg["eigenvalues"])
    if kind == "random_dense":
        from .rng import as_generator

        gen = as_generator(cfg.get("seed", rng))
        return random_dense_channel(n, gen, tuple(cfg.get("identity_mass", (0.9, 0.99))))
    if kind == "tensor":
        factors = []
        for f in cfg["factors"]:
            qubits = list(f["qubits"])
            factors.append((channel_from_config(f["channel"], len(qubits), rng), qubits))
        return TensorProduct(n, factors)
    if kind == "compose":
        chans = [channel_from_config(c, n, rng) for c in cfg["channels"]]
        out = chans[0]
        for c in chans[1:]:
            out = compose(out, c)
        return out
    raise ChannelError(f"unknown channel kind {kind!r}")


def load_dense_csv(path, n: int) -> DenseChannel:
    """Rows of ``pauli_string,eigenvalue``; unlisted labels get eigenvalue 0."""
    vals = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("pauli", "pauli_string", "label"):
                continue
            vals[row[0].strip()] = float(row[1])
    return DenseChannel.from_mapping(n, vals)
