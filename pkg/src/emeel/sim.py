"""Pauli-frame Monte Carlo of the randomized learning circuits.

Three experiment kinds are simulated:

``EEL``
    n Bell pairs, d twirled layers of the gate on the system while the ancilla
    idles between random local Cliffords, Bell-basis readout.
``AuxEFL``
    Same circuit started from ``|0>`` with only the ancilla read out in the
    computational basis.
``EFL``
    The system alone, prepared and measured in a product Pauli basis.

All noise is Pauli, so a shot is fully described by the XOR of the error labels
after propagating each through the rest of the circuit.  Pauli twirls and
global signs leave labels unchanged and are dropped at label level.  Exact
outcome distributions are available for small n as test oracles.
"""

from __future__ import annotations

import csv
import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .channels import (
    CapacityError,
    ChannelError,
    Depolarizing,
    PauliChannel,
    SPAMModel,
    Spiked,
    identity_channel,
    pattern_averaged_eigenvalues,
    restrict_packed,
)
from .pauli import (
    CliffordMap,
    PauliError,
    PauliLabel,
    check_packable,
    dense_index_to_packed,
    gate_period,
    identity_clifford,
    packed_inner,
    packed_pattern,
    pauli_clifford,
    single_qubit_cliffords,
    tensor,
)
from .rng import stream, uniform_labels

PROTOCOLS = ("EEL", "AuxEFL", "EFL")
BLOCK_CIRCUITS = 16
ORACLE_CAP = 6


class PlanError(ValueError):
    pass


class PoolExhaustedError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Single-qubit Clifford tables
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _c1_tables():
    """Label permutation, composition and inverse tables for the 24 Cliffords.

    ``perm[c, code]`` with ``code = x + 2 z``; ``comp[i, j]`` indexes ``C_i o C_j``.
    """
    cl = single_qubit_cliffords()
    perm = np.zeros((24, 4), dtype=np.uint64)
    for c, C in enumerate(cl):
        for code in range(4):
            b = C.apply_label(PauliLabel(1, code & 1, code >> 1))
            perm[c, code] = b.x + 2 * b.z
    index = {C: i for i, C in enumerate(cl)}
    comp = np.zeros((24, 24), dtype=np.intp)
    for i, A in enumerate(cl):
        for j, B in enumerate(cl):
            comp[i, j] = index[A.compose(B)]
    inv = np.array([int(np.flatnonzero(comp[i] == 0)[0]) for i in range(24)], dtype=np.intp)
    return perm, comp, inv


def apply_local_cliffords(labels: np.ndarray, cidx: np.ndarray, n: int) -> np.ndarray:
    """Apply per-qubit Clifford indices ``cidx`` (shape ``(..., n)``) to packed labels.

    ``cidx`` broadcasts against ``labels`` after dropping its last axis.
    """
    perm = _c1_tables()[0]
    labels = np.asarray(labels, dtype=np.uint64)
    out = np.zeros(np.broadcast_shapes(labels.shape, cidx.shape[:-1]), dtype=np.uint64)
    one = np.uint64(1)
    for q in range(n):
        code = ((labels >> np.uint64(q)) & one) | (((labels >> np.uint64(n + q)) & one) << one)
        new = perm[cidx[..., q], code.astype(np.intp)]
        out |= (new & one) << np.uint64(q)
        out |= (new >> one) << np.uint64(n + q)
    return out


def local_clifford_map(cidx: Sequence[int]) -> CliffordMap:
    cl = single_qubit_cliffords()
    return tensor(*[cl[int(c)] for c in cidx])


def join_labels(sys_labels, anc_labels, n: int) -> np.ndarray:
    """2n-qubit packed label with the system on qubits ``0..n-1``."""
    s = np.asarray(sys_labels, dtype=np.uint64)
    a = np.asarray(anc_labels, dtype=np.uint64)
    mask = np.uint64((1 << n) - 1)
    sh = np.uint64(n)
    x = (s & mask) | ((a & mask) << sh)
    z = (s >> sh) | ((a >> sh) << sh)
    return x | (z << np.uint64(2 * n))


def split_labels(joint, n: int) -> tuple[np.ndarray, np.ndarray]:
    joint = np.asarray(joint, dtype=np.uint64)
    return restrict_packed(joint, 2 * n, range(n)), restrict_packed(joint, 2 * n, range(n, 2 * n))


def basis_flips(labels, basis_packed: int, n: int) -> np.ndarray:
    """Bit q set when the label anticommutes with the basis Pauli on qubit q."""
    labels = np.asarray(labels, dtype=np.uint64)
    mask = np.uint64((1 << n) - 1)
    b = np.uint64(basis_packed)
    bx, bz = b & mask, b >> np.uint64(n)
    return ((labels & mask) & bz) ^ ((labels >> np.uint64(n)) & bx)


# --------------------------------------------------------------------------
# Gate sequences
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Twirls:
    cliffords: np.ndarray  # (d, nb, n) Clifford indices C_1..C_d
    paulis: np.ndarray  # (d, nb) packed a_1..a_d
    alpha: np.ndarray  # (nb,)
    beta: np.ndarray  # (nb,)

    def prefix_inverse(self) -> np.ndarray:
        """Index of ``(C_j ... C_1)^{-1}`` for each layer j, shape (d, nb, n)."""
        _, comp, inv = _c1_tables()
        out = np.empty_like(self.cliffords)
        acc = None
        for j in range(self.cliffords.shape[0]):
            acc = self.cliffords[j] if acc is None else comp[self.cliffords[j], acc]
            out[j] = inv[acc]
        return out


def _draw_twirls(rng, d: int, nb: int, n: int, twirl: bool = True) -> _Twirls:
    if twirl:
        cl = rng.integers(0, 24, size=(d, nb, n), dtype=np.intp)
        pa = uniform_labels(rng, n, (d, nb))
        alpha = uniform_labels(rng, n, nb)
        beta = uniform_labels(rng, n, nb)
    else:
        cl = np.zeros((d, nb, n), dtype=np.intp)
        pa = np.zeros((d, nb), dtype=np.uint64)
        alpha = np.zeros(nb, dtype=np.uint64)
        beta = np.zeros(nb, dtype=np.uint64)
    return _Twirls(cl, pa, alpha, beta)


@dataclass(frozen=True)
class GateSequence:
    """One random circuit: d twirled gate layers on the system, local Cliffords on the ancilla."""

    n: int
    d: int
    gate: CliffordMap
    pauli_twirls: tuple[PauliLabel, ...]
    clifford_twirls: tuple[tuple[int, ...], ...]
    alpha: PauliLabel
    beta: PauliLabel

    @functools.cached_property
    def clifford_layers(self) -> tuple[CliffordMap, ...]:
        return tuple(local_clifford_map(c) for c in self.clifford_twirls)

    @functools.cached_property
    def end_clifford(self) -> CliffordMap:
        """``P_alpha C_1^dag C_2^dag ... C_d^dag``."""
        out = identity_clifford(self.n)
        for C in self.clifford_layers:  # C_d^dag acts first
            out = out.compose(C.inverse())
        return pauli_clifford(self.alpha).compose(out)

    @functools.cached_property
    def end_pauli(self) -> PauliLabel:
        """Label of ``P_beta G^d(P_a1) G^{d-1}(P_a2) ... G(P_ad)``."""
        out = self.beta
        for i, a in enumerate(self.pauli_twirls, start=1):
            img = a
            for _ in range(self.d - i + 1):
                img = self.gate.apply_label(img)
            out = out + img
        return out


def sample_gate_sequence(d: int, gate: CliffordMap, n: int, rng, twirl: bool = True) -> GateSequence:
    if d < 0:
        raise PlanError("depth must be nonnegative")
    if gate.n != n:
        raise PauliError("gate size does not match n")
    tw = _draw_twirls(rng, d, 1, n, twirl)
    return GateSequence(
        n=n,
        d=d,
        gate=gate,
        pauli_twirls=tuple(PauliLabel.from_packed(n, int(tw.paulis[j, 0])) for j in range(d)),
        clifford_twirls=tuple(tuple(int(c) for c in tw.cliffords[j, 0]) for j in range(d)),
        alpha=PauliLabel.from_packed(n, int(tw.alpha[0])),
        beta=PauliLabel.from_packed(n, int(tw.beta[0])),
    )


# --------------------------------------------------------------------------
# Plans
# --------------------------------------------------------------------------


def _basis_label(basis: str) -> PauliLabel:
    if not basis or set(basis.upper()) - set("XYZ"):
        raise PlanError(f"basis must be a string over X, Y, Z; got {basis!r}")
    return PauliLabel.from_string(basis.upper())


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one data-collection run.

    ``spam`` acts on the 2n-qubit pair register for EEL and on n qubits
    otherwise.  ``crosstalk`` is an optional joint channel on ``2n`` qubits
    (system first) applied every layer on top of the product noise.
    """

    protocol: str
    n: int
    gate: CliffordMap
    depths: tuple[int, ...]
    n_circuits: int
    n_shots: int
    system_noise: PauliChannel | None = None
    ancilla_noise: PauliChannel | None = None
    spam: SPAMModel | None = None
    crosstalk: PauliChannel | None = None
    basis: str | None = None
    seed: int = 0
    twirl: bool = True

    def __post_init__(self):
        proto = {p.lower(): p for p in PROTOCOLS}.get(str(self.protocol).lower())
        if proto is None:
            raise PlanError(f"unknown protocol {self.protocol!r}")
        object.__setattr__(self, "protocol", proto)
        n = self.n
        if self.gate.n != n:
            raise PlanError(f"gate acts on {self.gate.n} qubits, plan has n={n}")
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        if any(d < 0 for d in self.depths) or not self.depths:
            raise PlanError("depths must be a nonempty list of nonnegative integers")
        d0 = self.d0
        bad = [d for d in self.depths if d % d0]
        if bad:
            raise PlanError(f"depths {bad} are not multiples of the gate period {d0}")
        if self.n_circuits < 1 or self.n_shots < 1:
            raise PlanError("need at least one circuit and one shot")
        m = 2 * n if proto == "EEL" else n
        check_packable(m)
        if self.system_noise is None:
            object.__setattr__(self, "system_noise", identity_channel(n))
        if self.ancilla_noise is None:
            object.__setattr__(self, "ancilla_noise", identity_channel(n))
        if self.spam is None:
            object.__setattr__(self, "spam", SPAMModel.ideal(m))
        for name, ch, size in (
            ("system_noise", self.system_noise, n),
            ("ancilla_noise", self.ancilla_noise, n),
            ("spam", self.spam, m),
        ):
            if ch.n != size:
                raise PlanError(f"{name} acts on {ch.n} qubits, expected {size}")
        if self.crosstalk is not None and self.crosstalk.n != 2 * n:
            raise PlanError("crosstalk channel must act on 2n qubits")
        if proto == "EFL":
            b = _basis_label(self.basis or "")
            if b.n != n:
                raise PlanError("basis length does not match n")
        object.__setattr__(self, "seed", int(self.seed))

    @functools.cached_property
    def d0(self) -> int:
        # signed period: G^d0 must be the identity channel, not a Pauli frame change
        return gate_period(self.gate, signed=True)

    @functools.cached_property
    def _gate_powers(self) -> tuple[CliffordMap, ...]:
        pw = [identity_clifford(self.n)]
        for _ in range(self.d0 - 1):
            pw.append(self.gate.compose(pw[-1]))
        return tuple(pw)

    @functools.cached_property
    def _gate_inverse(self) -> CliffordMap:
        return self.gate.inverse()

    def gate_power_apply(self, m: int, labels) -> np.ndarray:
        return self._gate_powers[m % self.d0].apply_packed(labels)

    def gate_inverse_power_apply(self, m: int, labels) -> np.ndarray:
        return self._gate_powers[(-m) % self.d0].apply_packed(labels)

    @property
    def basis_label(self) -> PauliLabel:
        return _basis_label(self.basis)

    @property
    def outcome_count(self) -> int:
        return 4**self.n if self.protocol == "EEL" else 2**self.n

    def replace(self, **changes) -> "ExperimentPlan":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# Shot records
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ShotRecord:
    depth: int
    circuit: int
    shot: int
    corrected_outcome: PauliLabel | tuple[int, ...]
    raw_outcome: PauliLabel | tuple[int, ...]


@dataclass
class ShotRecords:
    """Columnar shot log.

    ``outcome`` holds the twirl-corrected result (packed Pauli label for EEL,
    bit vector with bit q for qubit q otherwise); ``raw`` the uncorrected one
    and ``correction`` the XOR between them (``alpha + beta`` or ``alpha_x``).
    """

    protocol: str
    n: int
    depth: np.ndarray
    circuit: np.ndarray
    shot: np.ndarray
    outcome: np.ndarray
    raw: np.ndarray
    correction: np.ndarray
    basis: str | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.outcome.size)

    def _wrap(self, v: int):
        if self.protocol == "EEL":
            return PauliLabel.from_packed(self.n, int(v))
        return tuple((int(v) >> q) & 1 for q in range(self.n))

    def __iter__(self) -> Iterator[ShotRecord]:
        for i in range(len(self)):
            yield ShotRecord(
                int(self.depth[i]), int(self.circuit[i]), int(self.shot[i]),
                self._wrap(self.outcome[i]), self._wrap(self.raw[i]),
            )

    @property
    def depths(self) -> np.ndarray:
        return np.unique(self.depth)

    def outcome_matrix(self, d: int) -> np.ndarray:
        """Outcomes at depth d as an (n_circuits, n_shots) array."""
        sel = self.depth == d
        if not sel.any():
            raise KeyError(f"no records at depth {d}")
        c, s, o = self.circuit[sel], self.shot[sel], self.outcome[sel]
        out = np.zeros((int(c.max()) + 1, int(s.max()) + 1), dtype=np.uint64)
        out[c, s] = o
        return out

    def signs(self, d: int, query) -> np.ndarray:
        """Single-shot values ``(-1)^{<a, mu>}`` (EEL) or ``(-1)^{k.s}`` as (N_C, N_S)."""
        mat = self.outcome_matrix(d)
        if self.protocol == "EEL":
            a = query.packed if isinstance(query, PauliLabel) else int(query)
            par = packed_inner(mat, np.uint64(a), self.n)
        else:
            s = _bits_query(query, self.n)
            par = (np.bitwise_count(mat & np.uint64(s)) & 1).astype(np.uint8)
        return 1.0 - 2.0 * par

    def histogram(self, d: int) -> np.ndarray:
        """Empirical outcome distribution at depth d in dense order."""
        from .pauli import packed_to_dense_index

        o = self.outcome[self.depth == d]
        if self.protocol == "EEL":
            idx = packed_to_dense_index(o, self.n)
            size = 4**self.n
        else:
            idx = o.astype(np.int64)
            size = 2**self.n
        return np.bincount(idx, minlength=size) / max(len(o), 1)

    @classmethod
    def concat(cls, parts: Sequence["ShotRecords"]) -> "ShotRecords":
        p0 = parts[0]
        return cls(
            p0.protocol, p0.n,
            *[np.concatenate([getattr(p, k) for p in parts]) for k in ("depth", "circuit", "shot", "outcome", "raw", "correction")],
            basis=p0.basis, meta=dict(p0.meta),
        )

    # -- persistence --------------------------------------------------------

    def to_csv(self, path) -> None:
        width = (2 * self.n + 3) // 4 if self.protocol == "EEL" else (self.n + 3) // 4
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["depth", "circuit", "shot", "outcome", "raw"])
            for d, c, s, o, r in zip(self.depth, self.circuit, self.shot, self.outcome, self.raw):
                w.writerow([int(d), int(c), int(s), f"{int(o):0{width}x}", f"{int(r):0{width}x}"])

    @classmethod
    def from_csv(cls, path, protocol: str, n: int, basis: str | None = None) -> "ShotRecords":
        cols = {k: [] for k in ("depth", "circuit", "shot", "outcome", "raw")}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                for k in ("depth", "circuit", "shot"):
                    cols[k].append(int(row[k]))
                cols["outcome"].append(int(row["outcome"], 16))
                cols["raw"].append(int(row.get("raw") or row["outcome"], 16))
        o = np.array(cols["outcome"], dtype=np.uint64)
        r = np.array(cols["raw"], dtype=np.uint64)
        return cls(
            protocol, n,
            np.array(cols["depth"], dtype=np.int64), np.array(cols["circuit"], dtype=np.int64),
            np.array(cols["shot"], dtype=np.int64), o, r, o ^ r, basis=basis,
        )

    def save_npz(self, path) -> None:
        np.savez_compressed(
            path, protocol=self.protocol, n=self.n, basis=self.basis or "",
            depth=self.depth, circuit=self.circuit, shot=self.shot,
            outcome=self.outcome, raw=self.raw, correction=self.correction,
        )

    @classmethod
    def load_npz(cls, path) -> "ShotRecords":
        z = np.load(path, allow_pickle=False)
        return cls(
            str(z["protocol"]), int(z["n"]), z["depth"], z["circuit"], z["shot"],
            z["outcome"], z["raw"], z["correction"], basis=str(z["basis"]) or None,
        )


def _bits_query(query, n: int) -> int:
    if isinstance(query, (int, np.integer)):
        return int(query)
    if isinstance(query, PauliLabel):
        return int(packed_pattern(np.uint64(query.packed), n))
    if isinstance(query, str):
        return sum(1 << q for q, ch in enumerate(query) if ch not in "0I")
    return sum(int(b) << q for q, b in enumerate(query))


# --------------------------------------------------------------------------
# Frame simulation
# --------------------------------------------------------------------------


def _sample(ch: PauliChannel, rng, size) -> np.ndarray | None:
    if ch is None or ch.is_identity():
        return None
    return ch.sample(rng, size)


def _block_records(plan: ExperimentPlan, d: int, block: int, start: int, nb: int):
    n, S = plan.n, plan.n_shots
    rng = stream(plan.seed, plan.protocol, d, block)
    tw = _draw_twirls(rng, d, nb, n, plan.twirl)
    size = (nb, S)
    acc = np.zeros(size, dtype=np.uint64)

    if plan.protocol == "EEL":
        prep = _sample(plan.spam.state_prep, rng, size)
        if prep is not None:
            u, w = split_labels(prep, n)
            acc ^= u ^ w  # G^d and the full ancilla sequence act trivially on labels
        pinv = tw.prefix_inverse()
        for j in range(1, d + 1):
            e = _sample(plan.system_noise, rng, size)
            w = _sample(plan.ancilla_noise, rng, size)
            jl = _sample(plan.crosstalk, rng, size)
            if jl is not None:
                js, ja = split_labels(jl, n)
                e = js if e is None else e ^ js
                w = ja if w is None else w ^ ja
            if e is not None:
                acc ^= plan.gate_power_apply(d - j + 1, e)
            if w is not None:
                acc ^= apply_local_cliffords(w, pinv[j - 1][:, None, :], n)
        meas = _sample(plan.spam.measurement, rng, size)
        if meas is not None:
            u, w = split_labels(meas, n)
            acc ^= u ^ w
        corr = (tw.alpha ^ tw.beta)[:, None]
        outcome = acc

    elif plan.protocol == "AuxEFL":
        prep = _sample(plan.spam.state_prep, rng, size)
        if prep is not None:
            acc ^= prep
        pinv = tw.prefix_inverse()
        for j in range(1, d + 1):
            w = _sample(plan.ancilla_noise, rng, size)
            jl = _sample(plan.crosstalk, rng, size)
            if jl is not None:
                _, ja = split_labels(jl, n)
                w = ja if w is None else w ^ ja
            if w is not None:
                acc ^= apply_local_cliffords(w, pinv[j - 1][:, None, :], n)
        meas = _sample(plan.spam.measurement, rng, size)
        if meas is not None:
            acc ^= meas
        mask = np.uint64((1 << n) - 1)
        outcome = acc & mask  # only X components flip a Z-basis readout
        corr = (tw.alpha & mask)[:, None]

    else:  # EFL
        basis = plan.basis_label.packed
        prep = _sample(plan.spam.state_prep, rng, size)
        if prep is not None:
            acc ^= prep
        for j in range(1, d + 1):
            e = _sample(plan.system_noise, rng, size)
            jl = _sample(plan.crosstalk, rng, size)
            if jl is not None:
                js, _ = split_labels(jl, n)
                e = js if e is None else e ^ js
            if e is not None:
                acc ^= plan.gate_power_apply(d - j + 1, e)
        meas = _sample(plan.spam.measurement, rng, size)
        if meas is not None:
            acc ^= meas
        outcome = basis_flips(acc, basis, n)
        corr = basis_flips(tw.alpha, basis, n)[:, None]

    raw = outcome ^ corr
    circ = np.broadcast_to(np.arange(start, start + nb)[:, None], size)
    shot = np.broadcast_to(np.arange(S)[None, :], size)
    return circ.ravel(), shot.ravel(), outcome.ravel(), raw.ravel(), np.broadcast_to(corr, size).ravel()


def _run_block(args):
    plan, d, block, start, nb = args
    return _block_records(plan, d, block, start, nb)


def collect(plan: ExperimentPlan, workers: int = 1) -> ShotRecords:
    """Simulate every shot of the plan.

    Random streams are keyed by (seed, protocol, depth, block of circuits), so
    the result does not depend on evaluation order or on ``workers``.
    """
    jobs = []
    for d in plan.depths:
        for block, start in enumerate(range(0, plan.n_circuits, BLOCK_CIRCUITS)):
            jobs.append((plan, d, block, start, min(BLOCK_CIRCUITS, plan.n_circuits - start)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_block, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_run_block(j) for j in jobs]
    parts = {k: [] for k in ("depth", "circuit", "shot", "outcome", "raw", "correction")}
    for (_, d, _, _, _), (c, s, o, r, k) in zip(jobs, results):
        parts["depth"].append(np.full(c.size, d, dtype=np.int64))
        parts["circuit"].append(c.astype(np.int64))
        parts["shot"].append(s.astype(np.int64))
        parts["outcome"].append(o)
        parts["raw"].append(r)
        parts["correction"].append(k)
    cols = {k: np.concatenate(v) for k, v in parts.items()}
    return ShotRecords(plan.protocol, plan.n, **cols, basis=plan.basis, meta={"seed": plan.seed})


def _require(plan: ExperimentPlan, proto: str) -> None:
    if plan.protocol != proto:
        raise PlanError(f"plan is for {plan.protocol}, not {proto}")


def collect_eel(plan: ExperimentPlan, workers: int = 1) -> ShotRecords:
    _require(plan, "EEL")
    return collect(plan, workers)


def collect_aux_efl(plan: ExperimentPlan, workers: int = 1) -> ShotRecords:
    _require(plan, "AuxEFL")
    return collect(plan, workers)


def collect_efl(plan: ExperimentPlan, workers: int = 1) -> ShotRecords:
    _require(plan, "EFL")
    return collect(plan, workers)


# --------------------------------------------------------------------------
# Exact expectations and outcome distributions
# --------------------------------------------------------------------------


def symmetrized_eigenvalues(channel: PauliChannel, gate: CliffordMap, labels) -> np.ndarray:
    """Geometric mean of the eigenvalues along each label's orbit under the gate."""
    labels = np.asarray(labels, dtype=np.uint64)
    d0 = gate_period(gate)
    ginv = gate.inverse()
    prod = np.ones(labels.shape)
    cur = labels
    for _ in range(d0):
        cur = ginv.apply_packed(cur)
        prod = prod * channel.eigenvalues(cur)
    return np.sign(prod) * np.abs(prod) ** (1.0 / d0)


def _class_members(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n > ORACLE_CAP:
        raise CapacityError(f"crosstalk oracles are limited to n <= {ORACLE_CAP}")
    allb = dense_index_to_packed(n)
    return allb, packed_pattern(allb, n)


def _crosstalk_pattern_mean(plan: ExperimentPlan, sys_labels: np.ndarray, anc_pattern: np.ndarray) -> np.ndarray:
    """mean over b with pt(b) = anc_pattern of lambda'_b * lambda^J(sys, b)."""
    n = plan.n
    allb, pb = _class_members(n)
    lam_anc = plan.ancilla_noise.eigenvalues(allb)
    out = np.empty(sys_labels.shape)
    for idx in np.ndindex(sys_labels.shape):
        sel = pb == anc_pattern[idx]
        b = allb[sel]
        joint = join_labels(np.full(b.shape, sys_labels[idx], dtype=np.uint64), b, n)
        out[idx] = np.mean(lam_anc[sel] * plan.crosstalk.eigenvalues(joint))
    return out


def eel_fidelities(plan: ExperimentPlan, labels, d: int) -> np.ndarray:
    """E[(-1)^{<a, mu>}] at depth d: xi_{a,a} prod_m lambda_{G^-m a} lambda'_{pt(a)}."""
    n = plan.n
    labels = np.asarray(labels, dtype=np.uint64)
    out = plan.spam.bell_fidelity(labels, n).astype(float)
    pt = packed_pattern(labels, n)
    if plan.crosstalk is None:
        out = out * pattern_averaged_eigenvalues(plan.ancilla_noise, labels) ** d
    for m in range(1, d + 1):
        ga = plan.gate_inverse_power_apply(m, labels)
        out = out * plan.system_noise.eigenvalues(ga)
        if plan.crosstalk is not None:
            out = out * _crosstalk_pattern_mean(plan, ga, pt)
    return out


def aux_efl_fidelities(plan: ExperimentPlan, bits, d: int) -> np.ndarray:
    """E[(-1)^{k.s}] at depth d: xi'_{Z^s} (lambda'_{s})^d."""
    n = plan.n
    bits = np.asarray(bits, dtype=np.uint64)
    zl = bits << np.uint64(n)
    out = plan.spam.combined(zl).astype(float)
    if plan.crosstalk is None:
        lam = pattern_averaged_eigenvalues(plan.ancilla_noise, zl)
    else:
        lam = _crosstalk_pattern_mean(plan, np.zeros(bits.shape, dtype=np.uint64), bits)
    return out * lam**d


def efl_fidelities(plan: ExperimentPlan, bits, d: int) -> np.ndarray:
    """E[(-1)^{f.s}] at depth d: xi_{B^s} prod_m lambda_{G^-m B^s}."""
    n = plan.n
    bits = np.asarray(bits, dtype=np.uint64)
    b = np.uint64(plan.basis_label.packed)
    labels = (b & (bits | (bits << np.uint64(n))))
    out = plan.spam.combined(labels).astype(float)
    for m in range(1, d + 1):
        ga = plan.gate_inverse_power_apply(m, labels)
        out = out * plan.system_noise.eigenvalues(ga)
        if plan.crosstalk is not None:
            out = out * plan.crosstalk.eigenvalues(join_labels(ga, np.zeros_like(ga), n))
    return out


def expected_signal(plan: ExperimentPlan, query, d: int) -> float:
    """Exact mean of the single-shot estimator for one query label or bit pattern."""
    if plan.protocol == "EEL":
        a = query.packed if isinstance(query, PauliLabel) else int(query)
        return float(eel_fidelities(plan, np.array([a], dtype=np.uint64), d)[0])
    s = np.array([_bits_query(query, plan.n)], dtype=np.uint64)
    if plan.protocol == "AuxEFL":
        return float(aux_efl_fidelities(plan, s, d)[0])
    return float(efl_fidelities(plan, s, d)[0])


def _bit_transform(f: np.ndarray, n: int) -> np.ndarray:
    """2^-n sum_s (-1)^{z.s} f_s for every z."""
    out = f.astype(float).copy()
    for q in range(n):
        out = out.reshape(2 ** (n - q - 1), 2, 2**q)
        a, b = out[:, 0, :].copy(), out[:, 1, :].copy()
        out[:, 0, :], out[:, 1, :] = a + b, a - b
    return out.reshape(-1) / 2**n


def closed_form_eel_distribution(plan: ExperimentPlan, d: int) -> np.ndarray:
    """Exact distribution of mu over Paulis in dense order."""
    from .channels import wht_eigen_to_rates

    if plan.n > ORACLE_CAP:
        raise CapacityError(f"closed forms are limited to n <= {ORACLE_CAP}")
    labels = dense_index_to_packed(plan.n)
    return wht_eigen_to_rates(eel_fidelities(plan, labels, d))


def closed_form_aux_efl_distribution(plan: ExperimentPlan, d: int) -> np.ndarray:
    if plan.n > 2 * ORACLE_CAP:
        raise CapacityError("closed forms are limited to small n")
    bits = np.arange(2**plan.n, dtype=np.uint64)
    return _bit_transform(aux_efl_fidelities(plan, bits, d), plan.n)


def closed_form_efl_distribution(plan: ExperimentPlan, d: int) -> np.ndarray:
    if plan.n > 2 * ORACLE_CAP:
        raise CapacityError("closed forms are limited to small n")
    bits = np.arange(2**plan.n, dtype=np.uint64)
    return _bit_transform(efl_fidelities(plan, bits, d), plan.n)


def closed_form_distribution(plan: ExperimentPlan, d: int) -> np.ndarray:
    return {
        "EEL": closed_form_eel_distribution,
        "AuxEFL": closed_form_aux_efl_distribution,
        "EFL": closed_form_efl_distribution,
    }[plan.protocol](plan, d)


def tvd(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# --------------------------------------------------------------------------
# Noise-injection emulation
# --------------------------------------------------------------------------


def emulate_injected_channel(pool, m: int, target: PauliChannel, rng) -> np.ndarray:
    """Indices of an m-subset of ``pool`` whose statistics mimic ``target``.

    ``pool`` holds outcome labels from noiseless-ish shots.  For a depolarizing
    target the subset is uniform; for a spiked target the number of entries
    commuting with k is Binomial(m, (1 + lambda_k)/2) and the rest anticommute.
    """
    if isinstance(pool, np.ndarray) and pool.dtype == np.uint64:
        arr = pool
        n = target.n
    else:
        pool = list(pool)
        arr = np.array([p.packed for p in pool], dtype=np.uint64)
        n = pool[0].n if pool else target.n
    if len(arr) < m:
        raise PoolExhaustedError(f"pool of {len(arr)} is smaller than m={m}")
    if isinstance(target, Depolarizing):
        return np.sort(rng.choice(len(arr), size=m, replace=False))
    if not isinstance(target, Spiked):
        raise ChannelError("injection emulates depolarizing or spiked channels only")
    anti = packed_inner(arr, np.uint64(target.k.packed), n).astype(bool)
    comm_idx, anti_idx = np.flatnonzero(~anti), np.flatnonzero(anti)
    n_comm = int(rng.binomial(m, (1.0 + target.spike) / 2.0))
    if n_comm > comm_idx.size or m - n_comm > anti_idx.size:
        raise PoolExhaustedError("not enough commuting or anticommuting entries in the pool")
    chosen = np.concatenate([
        rng.choice(comm_idx, size=n_comm, replace=False),
        rng.choice(anti_idx, size=m - n_comm, replace=False),
    ])
    return np.sort(chosen)
