"""Pauli group modulo phase over GF(2)^{2n} and Clifford action on Pauli labels.

Labels are packed into a single integer: bit ``j`` holds the X component of
qubit ``j`` and bit ``n + j`` holds its Z component.  In string form the
leftmost character is qubit 0, so ``"XZ"`` has ``x = 0b01`` and ``z = 0b10``.

Vectorised helpers operate on ``uint64`` arrays of packed labels and are
therefore limited to ``n <= 32``; the scalar API has no qubit limit.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from math import lcm
from typing import Iterable, Sequence

import numpy as np

MAX_PACKED_QUBITS = 32
DEFAULT_PERIOD_CAP = 4096

_CHARS = "IXZY"  # index = x + 2 z
_CHAR_TO_XZ = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_DENSE_DIGIT = {"I": 0, "X": 1, "Y": 2, "Z": 3}


class PauliError(ValueError):
    """Raised for malformed labels, dimension mismatches and invalid Cliffords."""


class CapacityError(PauliError):
    """Requested size exceeds a packed-array or dense-oracle limit."""


class PeriodNotFoundError(RuntimeError):
    pass


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True, order=True)
class PauliLabel:
    """An n-qubit Pauli modulo phase, stored as packed X and Z bit vectors."""

    n: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise PauliError("qubit count must be nonnegative")
        mask = (1 << self.n) - 1
        if self.x & ~mask or self.z & ~mask:
            raise PauliError(f"bit vectors exceed {self.n} qubits")

    @classmethod
    def identity(cls, n: int) -> "PauliLabel":
        return cls(n, 0, 0)

    @classmethod
    def from_string(cls, s: str) -> "PauliLabel":
        x = z = 0
        for j, ch in enumerate(s.strip().upper()):
            try:
                bx, bz = _CHAR_TO_XZ[ch]
            except KeyError:
                raise PauliError(f"invalid Pauli character {ch!r} in {s!r}") from None
            x |= bx << j
            z |= bz << j
        return cls(len(s.strip()), x, z)

    @classmethod
    def from_packed(cls, n: int, packed: int) -> "PauliLabel":
        mask = (1 << n) - 1
        packed = int(packed)
        return cls(n, packed & mask, (packed >> n) & mask)

    @classmethod
    def from_bits(cls, x_bits: Sequence[int], z_bits: Sequence[int]) -> "PauliLabel":
        if len(x_bits) != len(z_bits):
            raise PauliError("x and z bit vectors differ in length")
        x = sum(int(b) << j for j, b in enumerate(x_bits))
        z = sum(int(b) << j for j, b in enumerate(z_bits))
        return cls(len(x_bits), x, z)

    @property
    def packed(self) -> int:
        return self.x | (self.z << self.n)

    @property
    def x_bits(self) -> tuple[int, ...]:
        return tuple((self.x >> j) & 1 for j in range(self.n))

    @property
    def z_bits(self) -> tuple[int, ...]:
        return tuple((self.z >> j) & 1 for j in range(self.n))

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def __add__(self, other: "PauliLabel") -> "PauliLabel":
        _check_same_n(self, other)
        return PauliLabel(self.n, self.x ^ other.x, self.z ^ other.z)

    def restrict(self, qubits: Sequence[int]) -> "PauliLabel":
        """Label on the listed qubits, in the order given."""
        xs = [(self.x >> q) & 1 for q in qubits]
        zs = [(self.z >> q) & 1 for q in qubits]
        return PauliLabel.from_bits(xs, zs)

    def __str__(self) -> str:
        return "".join(_CHARS[((self.x >> j) & 1) + 2 * ((self.z >> j) & 1)] for j in range(self.n))

    def __repr__(self) -> str:
        return f"PauliLabel({str(self)!r})"


@dataclass(frozen=True)
class SignedPauli:
    label: PauliLabel
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise PauliError("sign must be +1 or -1")

    def __str__(self) -> str:
        return ("+" if self.sign == 1 else "-") + str(self.label)


def _check_same_n(a: PauliLabel, b: PauliLabel) -> None:
    if a.n != b.n:
        raise PauliError(f"dimension mismatch: {a.n} vs {b.n} qubits")


def symplectic_inner(a: PauliLabel, b: PauliLabel) -> int:
    """0 if ``P_a`` and ``P_b`` commute, 1 otherwise."""
    _check_same_n(a, b)
    return _popcount((a.x & b.z) ^ (a.z & b.x)) & 1


def pattern(a: PauliLabel) -> tuple[int, ...]:
    """Support indicator of ``a``; ``pattern(XYIZI) == (1, 1, 0, 1, 0)``."""
    s = a.x | a.z
    return tuple((s >> j) & 1 for j in range(a.n))


def pattern_int(a: PauliLabel) -> int:
    return a.x | a.z


def weight(a: PauliLabel) -> int:
    return _popcount(a.x | a.z)


def all_labels(n: int) -> list[PauliLabel]:
    """Every n-qubit label in packed-integer order."""
    return [PauliLabel.from_packed(n, v) for v in range(4**n)]


def labels_up_to_weight(n: int, w: int, include_identity: bool = True) -> list[PauliLabel]:
    """All labels of weight <= ``w``, ordered by weight then support then direction."""
    out = [PauliLabel.identity(n)] if include_identity else []
    for k in range(1, min(w, n) + 1):
        for support in itertools.combinations(range(n), k):
            for dirs in itertools.product("XYZ", repeat=k):
                chars = ["I"] * n
                for q, ch in zip(support, dirs):
                    chars[q] = ch
                out.append(PauliLabel.from_string("".join(chars)))
    return out


# --------------------------------------------------------------------------
# Vectorised packed-label helpers (n <= 32)
# --------------------------------------------------------------------------


def check_packable(n: int) -> None:
    if n > MAX_PACKED_QUBITS:
        raise CapacityError(f"packed arrays support at most {MAX_PACKED_QUBITS} qubits, got {n}")


def packed_inner(a, b, n: int):
    """Elementwise symplectic inner product of packed label arrays (broadcasts)."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    sh = np.uint64(n)
    mask = np.uint64((1 << n) - 1)
    v = ((a & mask) & (b >> sh)) ^ ((a >> sh) & (b & mask))
    return (np.bitwise_count(v) & 1).astype(np.uint8)


def packed_pattern(a, n: int):
    a = np.asarray(a, dtype=np.uint64)
    mask = np.uint64((1 << n) - 1)
    return (a & mask) | (a >> np.uint64(n))


def dense_index_to_packed(n: int) -> np.ndarray:
    """Packed label for each dense index.

    Dense vectors use one base-4 digit per qubit, qubit 0 most significant, with
    digits ``I=0, X=1, Y=2, Z=3``.  For n = 1 the order is therefore (I, X, Y, Z).
    """
    check_packable(n)
    idx = np.arange(4**n, dtype=np.int64)
    x = np.zeros(4**n, dtype=np.uint64)
    z = np.zeros(4**n, dtype=np.uint64)
    for j in range(n):
        digit = (idx >> (2 * (n - 1 - j))) & 3
        bx = ((digit == 1) | (digit == 2)).astype(np.uint64)
        bz = ((digit == 2) | (digit == 3)).astype(np.uint64)
        x |= bx << np.uint64(j)
        z |= bz << np.uint64(j)
    return x | (z << np.uint64(n))


def packed_to_dense_index(packed, n: int) -> np.ndarray:
    packed = np.asarray(packed, dtype=np.uint64)
    out = np.zeros(packed.shape, dtype=np.int64)
    digit_of = np.array([0, 1, 3, 2], dtype=np.int64)  # x + 2z -> I,X,Y,Z digit
    for j in range(n):
        bx = (packed >> np.uint64(j)) & np.uint64(1)
        bz = (packed >> np.uint64(n + j)) & np.uint64(1)
        d = digit_of[(bx + 2 * bz).astype(np.int64)]
        out |= d << (2 * (n - 1 - j))
    return out


def dense_index(label: PauliLabel) -> int:
    idx = 0
    for ch in str(label):
        idx = 4 * idx + _DENSE_DIGIT[ch]
    return idx


def format_packed(packed: int, n: int) -> str:
    return str(PauliLabel.from_packed(n, packed))


# --------------------------------------------------------------------------
# Clifford maps
# --------------------------------------------------------------------------


def _mul_phase(k1, x1, z1, k2, x2, z2):
    """Product of i^k1 X^x1 Z^z1 and i^k2 X^x2 Z^z2 in the same form."""
    return (k1 + k2 + 2 * _popcount(z1 & x2)) % 4, x1 ^ x2, z1 ^ z2


@dataclass(frozen=True, eq=False)
class CliffordMap:
    """Clifford conjugation action on n-qubit Paulis.

    ``S`` is a 2n x 2n GF(2) matrix over the basis ``(x_0..x_{n-1}, z_0..z_{n-1})``;
    column ``i`` is the image label of the generator ``e_i``.  ``r[i] = 1`` means
    ``C P_{e_i} C^dag = -P_{S e_i}``.
    """

    n: int
    S: np.ndarray
    r: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        S = np.asarray(self.S, dtype=np.uint8) & 1
        r = np.asarray(self.r, dtype=np.uint8) & 1
        if S.shape != (2 * self.n, 2 * self.n) or r.shape != (2 * self.n,):
            raise PauliError("tableau shape does not match qubit count")
        S.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "r", r)
        if not is_symplectic(S):
            raise PauliError("matrix does not preserve the symplectic form")

    # column images as packed ints, cached lazily
    @functools.cached_property
    def _columns(self) -> tuple[int, ...]:
        cols = []
        for i in range(2 * self.n):
            v = 0
            for row in range(2 * self.n):
                if self.S[row, i]:
                    v |= 1 << row
            cols.append(v)
        return tuple(cols)

    @functools.cached_property
    def _byte_luts(self) -> list[np.ndarray]:
        check_packable(self.n)
        cols = self._columns
        luts = []
        for start in range(0, 2 * self.n, 8):
            lut = np.zeros(256, dtype=np.uint64)
            for byte in range(256):
                v = 0
                for b in range(8):
                    i = start + b
                    if i < 2 * self.n and (byte >> b) & 1:
                        v ^= cols[i]
                lut[byte] = v
            luts.append(lut)
        return luts

    def apply_label(self, a: PauliLabel) -> PauliLabel:
        """Label part of the conjugation, signs dropped."""
        if a.n != self.n:
            raise PauliError(f"dimension mismatch: map on {self.n} qubits, label on {a.n}")
        v = 0
        packed = a.packed
        for i, col in enumerate(self._columns):
            if (packed >> i) & 1:
                v ^= col
        return PauliLabel.from_packed(self.n, v)

    def apply_packed(self, labels) -> np.ndarray:
        """Vectorised label action on a packed uint64 array."""
        labels = np.asarray(labels, dtype=np.uint64)
        out = np.zeros(labels.shape, dtype=np.uint64)
        for k, lut in enumerate(self._byte_luts):
            out ^= lut[((labels >> np.uint64(8 * k)) & np.uint64(0xFF)).astype(np.intp)]
        return out

    def compose(self, other: "CliffordMap") -> "CliffordMap":
        """The map ``self o other`` (``other`` acts first)."""
        if other.n != self.n:
            raise PauliError("cannot compose Cliffords on different qubit counts")
        n = self.n
        S = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        r = np.zeros(2 * n, dtype=np.uint8)
        for i in range(2 * n):
            img = clifford_apply(other, _basis_label(n, i))
            img2 = clifford_apply(self, img.label)
            S[:, i] = _label_column(img2.label)
            r[i] = (img.sign * img2.sign) == -1
        return CliffordMap(n, S, r, name=f"{self.name}*{other.name}" if self.name else "")

    def __matmul__(self, other: "CliffordMap") -> "CliffordMap":
        return self.compose(other)

    def power(self, k: int) -> "CliffordMap":
        out = identity_clifford(self.n)
        for _ in range(k):
            out = self.compose(out)
        return out

    def inverse(self) -> "CliffordMap":
        # the label action has finite order; C^{-1} = C^{order-1} including signs
        p = gate_period(self, signed=True)
        return self.power(p - 1)

    def label_equal(self, other: "CliffordMap") -> bool:
        return self.n == other.n and np.array_equal(self.S, other.S)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CliffordMap):
            return NotImplemented
        return self.label_equal(other) and np.array_equal(self.r, other.r)

    def __hash__(self) -> int:
        return hash((self.n, self.S.tobytes(), self.r.tobytes()))

    def __repr__(self) -> str:
        return f"CliffordMap(n={self.n}, name={self.name!r})"


def _basis_label(n: int, i: int) -> PauliLabel:
    return PauliLabel.from_packed(n, 1 << i)


def _label_column(a: PauliLabel) -> np.ndarray:
    packed = a.packed
    return np.array([(packed >> k) & 1 for k in range(2 * a.n)], dtype=np.uint8)


def symplectic_form(n: int) -> np.ndarray:
    omega = np.zeros((2 * n, 2 * n), dtype=np.uint8)
    omega[:n, n:] = np.eye(n, dtype=np.uint8)
    omega[n:, :n] = np.eye(n, dtype=np.uint8)
    return omega


def is_symplectic(S: np.ndarray) -> bool:
    S = np.asarray(S, dtype=np.int64) & 1
    n = S.shape[0] // 2
    omega = symplectic_form(n).astype(np.int64)
    return bool(np.array_equal((S.T @ omega @ S) % 2, omega))


def clifford_apply(C: CliffordMap, a: PauliLabel) -> SignedPauli:
    """Conjugate the Hermitian Pauli ``P_a`` by ``C``; returns the signed image."""
    if a.n != C.n:
        raise PauliError(f"dimension mismatch: map on {C.n} qubits, label on {a.n}")
    n = C.n
    cols = C._columns
    mask = (1 << n) - 1
    # P_a = i^{a_x.a_z} prod_j X_j^{a_x,j} prod_j Z_j^{a_z,j}
    k, x, z = _popcount(a.x & a.z) % 4, 0, 0
    for i in range(2 * n):
        if not (a.packed >> i) & 1:
            continue
        col = cols[i]
        cx, cz = col & mask, col >> n
        # Hermitian image (-1)^{r_i} P_col = i^{2 r_i + cx.cz} X^cx Z^cz
        ck = (2 * int(C.r[i]) + _popcount(cx & cz)) % 4
        k, x, z = _mul_phase(k, x, z, ck, cx, cz)
    sign_exp = (k - _popcount(x & z)) % 4
    if sign_exp % 2:
        raise PauliError("non-Hermitian image; tableau signs are inconsistent")
    return SignedPauli(PauliLabel(n, x, z), 1 if sign_exp == 0 else -1)


def gate_period(G: CliffordMap, cap: int = DEFAULT_PERIOD_CAP, signed: bool = False) -> int:
    """Smallest ``d0 >= 1`` with ``G^{d0}`` acting trivially on labels.

    With ``signed=True`` the signs must also be trivial, i.e. ``G^{d0}`` is the
    identity channel rather than conjugation by some Pauli.
    """
    ident = identity_clifford(G.n)
    cur = G
    for k in range(1, cap + 1):
        if cur.label_equal(ident) and (not signed or not cur.r.any()):
            return k
        cur = G.compose(cur)
    raise PeriodNotFoundError(f"gate period exceeds cap {cap}")


@dataclass(frozen=True)
class PauliOrbit:
    representative: PauliLabel
    members: tuple[PauliLabel, ...]

    @property
    def period(self) -> int:
        return len(self.members)

    def key(self) -> frozenset:
        return frozenset(self.members)


def orbit(G: CliffordMap, a: PauliLabel, cap: int = DEFAULT_PERIOD_CAP) -> PauliOrbit:
    """Sequence ``a, G(a), G^2(a), ...`` until it returns to ``a`` (signs stripped)."""
    members = [a]
    cur = G.apply_label(a)
    while cur != a:
        members.append(cur)
        if len(members) > cap:
            raise PeriodNotFoundError(f"orbit length exceeds cap {cap}")
        cur = G.apply_label(cur)
    return PauliOrbit(a, tuple(members))


def orbit_partition(G: CliffordMap, labels: Iterable[PauliLabel] | None = None) -> list[PauliOrbit]:
    labels = all_labels(G.n) if labels is None else list(labels)
    seen: set[PauliLabel] = set()
    out = []
    for a in labels:
        if a in seen:
            continue
        o = orbit(G, a)
        seen.update(o.members)
        out.append(o)
    return out


# --------------------------------------------------------------------------
# Constructors
# --------------------------------------------------------------------------

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(a: PauliLabel) -> np.ndarray:
    """Dense matrix of the Hermitian Pauli; qubit 0 is the leftmost Kronecker factor."""
    m = np.eye(1, dtype=complex)
    for ch in str(a):
        m = np.kron(m, _PAULI_MATS[ch])
    return m


def clifford_from_unitary(U: np.ndarray, name: str = "") -> CliffordMap:
    """Tableau of a small Clifford unitary by direct conjugation of the generators."""
    U = np.asarray(U, dtype=complex)
    dim = U.shape[0]
    n = dim.bit_length() - 1
    if U.shape != (dim, dim) or 2**n != dim:
        raise PauliError("unitary dimension must be a power of two")
    S = np.zeros((2 * n, 2 * n), dtype=np.uint8)
    r = np.zeros(2 * n, dtype=np.uint8)
    for i in range(2 * n):
        img = U @ pauli_matrix(_basis_label(n, i)) @ U.conj().T
        for cand in all_labels(n):
            c = np.trace(pauli_matrix(cand) @ img).real / dim
            if abs(abs(c) - 1) < 1e-9:
                S[:, i] = _label_column(cand)
                r[i] = c < 0
                break
        else:
            raise PauliError("unitary is not Clifford")
    return CliffordMap(n, S, r, name=name)


def identity_clifford(n: int) -> CliffordMap:
    return CliffordMap(n, np.eye(2 * n, dtype=np.uint8), np.zeros(2 * n, dtype=np.uint8), name="id")


def pauli_clifford(a: PauliLabel) -> CliffordMap:
    """Conjugation by ``P_a``: labels fixed, generators anticommuting with ``a`` flip sign."""
    n = a.n
    r = np.array([symplectic_inner(_basis_label(n, i), a) for i in range(2 * n)], dtype=np.uint8)
    return CliffordMap(n, np.eye(2 * n, dtype=np.uint8), r, name=f"P[{a}]")


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.diag([1, 1j])
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)
_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
# ECR = (I (x) X - X (x) Y) / sqrt(2), control on qubit 0.  Equal to CNOT up to
# single-qubit Cliffords; Hermitian, so ECR^2 = I exactly.
_ECR = (np.kron(_PAULI_MATS["I"], _PAULI_MATS["X"]) - np.kron(_PAULI_MATS["X"], _PAULI_MATS["Y"])) / np.sqrt(2)


@functools.lru_cache(maxsize=None)
def _named_two_qubit(name: str) -> CliffordMap:
    mats = {"cnot": _CNOT, "cx": _CNOT, "cz": _CZ, "swap": _SWAP, "ecr": _ECR}
    return clifford_from_unitary(mats[name], name=name)


def cnot() -> CliffordMap:
    return _named_two_qubit("cnot")


def cz() -> CliffordMap:
    return _named_two_qubit("cz")


def swap() -> CliffordMap:
    return _named_two_qubit("swap")


def ecr() -> CliffordMap:
    return _named_two_qubit("ecr")


def hadamard() -> CliffordMap:
    return clifford_from_unitary(_H, name="h")


def phase_gate() -> CliffordMap:
    return clifford_from_unitary(_S, name="s")


@functools.lru_cache(maxsize=None)
def single_qubit_cliffords() -> tuple[CliffordMap, ...]:
    """The 24 single-qubit Cliffords modulo phase, identity first."""
    gens = [hadamard(), phase_gate()]
    found = [identity_clifford(1)]
    frontier = [identity_clifford(1)]
    while frontier:
        nxt = []
        for c in frontier:
            for g in gens:
                h = g.compose(c)
                if h not in found:
                    found.append(h)
                    nxt.append(h)
        frontier = nxt
    if len(found) != 24:
        raise AssertionError(f"expected 24 single-qubit Cliffords, found {len(found)}")
    return tuple(CliffordMap(1, c.S, c.r, name=f"c1_{i}") for i, c in enumerate(found))


def tensor(*maps: CliffordMap) -> CliffordMap:
    """Tensor product; the first map acts on the lowest-indexed qubits."""
    n = sum(m.n for m in maps)
    out = identity_clifford(n)
    offset = 0
    for m in maps:
        out = embed(m, list(range(offset, offset + m.n)), n).compose(out)
        offset += m.n
    return out


def embed(C: CliffordMap, qubits: Sequence[int], n: int) -> CliffordMap:
    """Place ``C`` on the listed qubits of an n-qubit register."""
    qubits = list(qubits)
    if len(qubits) != C.n or len(set(qubits)) != C.n or any(q < 0 or q >= n for q in qubits):
        raise PauliError(f"invalid qubit list {qubits} for {C.n}-qubit map on {n} qubits")
    m = C.n
    # local basis index -> global basis index
    glob = [qubits[i] for i in range(m)] + [n + qubits[i] for i in range(m)]
    S = np.eye(2 * n, dtype=np.uint8)
    r = np.zeros(2 * n, dtype=np.uint8)
    for i_loc, i_glob in enumerate(glob):
        S[:, i_glob] = 0
        for j_loc, j_glob in enumerate(glob):
            S[j_glob, i_glob] = C.S[j_loc, i_loc]
        r[i_glob] = C.r[i_loc]
    return CliffordMap(n, S, r, name=f"{C.name}{tuple(qubits)}")


_CONSTRUCTORS = {"cnot": cnot, "cx": cnot, "cz": cz, "swap": swap, "ecr": ecr, "h": hadamard, "s": phase_gate}


def parse_clifford(spec: str | Sequence, n: int) -> CliffordMap:
    """Build an n-qubit map from ``"cnot 0 1"`` style text.

    Several gates may be joined with ``";"``; they are tensored/composed in order.
    ``"id"`` gives the identity.
    """
    if isinstance(spec, (list, tuple)):
        parts = [str(p) for p in spec]
    else:
        parts = [p for p in str(spec).split(";")]
    out = identity_clifford(n)
    for part in parts:
        tokens = part.split()
        if not tokens:
            continue
        name = tokens[0].lower()
        if name in ("id", "identity", "i"):
            continue
        try:
            ctor = _CONSTRUCTORS[name]
        except KeyError:
            raise PauliError(f"unknown gate {name!r}") from None
        gate = ctor()
        qubits = [int(t) for t in tokens[1:]]
        out = embed(gate, qubits, n).compose(out)
    return out
