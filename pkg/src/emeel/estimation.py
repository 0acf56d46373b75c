"""Fidelity estimation from shot records.

Single-shot estimators are averaged per depth into a decay curve
``f_d = alpha * lam**d``; curves are fitted by weighted least squares or by the
two-point ratio estimator, and EEL/AuxEFL estimates are combined by division.
Variance predictions for the EMEEL/EFL comparison and the tensor-product
correlation metric live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .pauli import PauliLabel, packed_inner, packed_pattern
from .sim import ShotRecords

Z_95 = 1.96
VAR_FLOOR = 1e-6


class EstimationError(ValueError):
    pass


class IncompatibleQueryError(EstimationError):
    pass


class FitError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


# --------------------------------------------------------------------------
# Curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayCurve:
    query: object
    depths: np.ndarray
    f: np.ndarray
    var: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        for k in ("depths", "f", "var", "counts"):
            object.__setattr__(self, k, np.asarray(getattr(self, k), dtype=float if k in ("f", "var") else np.int64))
        if np.any(np.abs(self.f) > 1 + 1e-12):
            raise EstimationError("curve points must lie in [-1, 1]")
        if np.any(self.var < 0):
            raise EstimationError("negative variance")

    @property
    def points(self):
        return list(zip(self.depths.tolist(), self.f.tolist(), self.var.tolist(), self.counts.tolist()))

    def restrict(self, depths: Sequence[int]) -> "DecayCurve":
        sel = np.isin(self.depths, list(depths))
        return DecayCurve(self.query, self.depths[sel], self.f[sel], self.var[sel], self.counts[sel])


@dataclass
class CircuitMeans:
    """Per-circuit averages of the single-shot estimator for a batch of queries.

    ``means[d]`` has shape (n_queries, n_circuits); every circuit holds
    ``shots[d]`` shots.
    """

    queries: list
    depths: np.ndarray
    means: dict
    shots: dict

    def curves(self, clustered: bool = False, circuits: dict | None = None) -> list[DecayCurve]:
        out = []
        f_all, v_all, c_all = [], [], []
        for d in self.depths:
            m = self.means[int(d)]
            if circuits is not None:
                m = m[:, circuits[int(d)]]
            nc, ns = m.shape[1], self.shots[int(d)]
            count = nc * ns
            f = m.mean(axis=1)
            if clustered:
                v = m.var(axis=1, ddof=1) / nc if nc > 1 else np.full(f.shape, np.nan)
            else:
                # sample variance of +-1 values is (1 - f^2) N / (N - 1)
                v = (1.0 - f**2) / max(count - 1, 1)
            f_all.append(f)
            v_all.append(np.clip(v, 0, None))
            c_all.append(count)
        f_all, v_all = np.array(f_all), np.array(v_all)
        for q, query in enumerate(self.queries):
            out.append(DecayCurve(query, self.depths, f_all[:, q], v_all[:, q], np.array(c_all)))
        return out


def _query_bits(records: ShotRecords, query) -> int:
    n = records.n
    if records.protocol == "AuxEFL":
        if isinstance(query, PauliLabel):
            return int(packed_pattern(np.uint64(query.packed), n))
        if isinstance(query, str):
            return sum(1 << q for q, ch in enumerate(query) if ch not in "0I")
        if isinstance(query, (int, np.integer)):
            return int(query)
        return sum(int(b) << q for q, b in enumerate(query))
    # EFL: the query must be the basis restricted to its support
    basis = PauliLabel.from_string(records.basis)
    if isinstance(query, str) and set(query) <= set("01"):
        query = int(sum(1 << q for q, ch in enumerate(query) if ch == "1"))
    if isinstance(query, (int, np.integer)):
        return int(query)
    if isinstance(query, str):
        query = PauliLabel.from_string(query)
    s = int(packed_pattern(np.uint64(query.packed), n))
    mask = s | (s << n)
    if basis.packed & mask != query.packed:
        raise IncompatibleQueryError(f"{query} is not measurable in basis {records.basis}")
    return s


def circuit_means(records: ShotRecords, queries: Sequence) -> CircuitMeans:
    queries = list(queries)
    means, shots = {}, {}
    eel = records.protocol == "EEL"
    if eel:
        packed = [np.uint64(q.packed if isinstance(q, PauliLabel) else PauliLabel.from_string(q).packed
                            if isinstance(q, str) else int(q)) for q in queries]
    else:
        packed = [np.uint64(_query_bits(records, q)) for q in queries]
    for d in records.depths:
        mat = records.outcome_matrix(int(d))
        out = np.empty((len(queries), mat.shape[0]))
        for i, a in enumerate(packed):
            if eel:
                par = packed_inner(mat, a, records.n)
            else:
                par = (np.bitwise_count(mat & a) & 1).astype(np.uint8)
            out[i] = 1.0 - 2.0 * par.mean(axis=1)
        means[int(d)] = out
        shots[int(d)] = mat.shape[1]
    return CircuitMeans(queries, np.array(sorted(means)), means, shots)


def single_shot_curve(records: ShotRecords, query, clustered: bool = False) -> DecayCurve:
    """Per-depth mean of the single-shot estimator with its variance.

    Parameters
    ----------
    records : ShotRecords
    query : PauliLabel, str, int or bit sequence
        Pauli for EEL; support pattern for AuxEFL; basis-compatible Pauli (or
        its support) for EFL.
    clustered : bool
        Use the spread of circuit means instead of i.i.d. shot variance.
    """
    return circuit_means(records, [query]).curves(clustered)[0]


def single_shot_curves(records: ShotRecords, queries, clustered: bool = False) -> list[DecayCurve]:
    return circuit_means(records, queries).curves(clustered)


# --------------------------------------------------------------------------
# Estimates and fitting
# --------------------------------------------------------------------------


@dataclass
class FidelityEstimate:
    alpha: float
    lam: float
    var_alpha: float
    var_lam: float
    cov: float = 0.0
    method: str = "fit"
    query: object = None
    flagged: bool = False
    info: dict = field(default_factory=dict)

    @property
    def stderr(self) -> float:
        return math.sqrt(max(self.var_lam, 0.0))

    def interval(self, z: float = Z_95) -> tuple[float, float]:
        return self.lam - z * self.stderr, self.lam + z * self.stderr


def _model(alpha, lam, d):
    return alpha * lam**d


def _jacobian(alpha, lam, d):
    dl = np.where(d > 0, alpha * d * lam ** np.maximum(d - 1, 0), 0.0)
    return np.column_stack([lam**d, dl])


def fit_decay(curve: DecayCurve, max_iter: int = 200, tol: float = 1e-14, var_floor: float = VAR_FLOOR) -> FidelityEstimate:
    """Weighted least squares fit of ``f_d = alpha * lam**d``.

    Starts from a log-linear regression on the positive points and refines with
    damped Gauss-Newton (Levenberg-Marquardt).  The covariance is the inverse
    of ``J^T W J`` with the supplied point variances taken as absolute.
    """
    d = curve.depths.astype(float)
    f = curve.f
    if np.unique(d).size < 2:
        raise EstimationError("need at least two distinct depths to fit a decay")
    var = np.maximum(curve.var, var_floor / np.maximum(curve.counts, 1))
    w = 1.0 / var

    pos = f > 0
    if np.unique(d[pos]).size < 2:
        return _ratio_fallback(curve, var)
    A = np.column_stack([np.ones(pos.sum()), d[pos]])
    # delta method: var(log f) = var / f^2
    wl = f[pos] ** 2 * w[pos]
    coef = np.linalg.lstsq(A * np.sqrt(wl)[:, None], np.log(f[pos]) * np.sqrt(wl), rcond=None)[0]
    alpha, lam = math.exp(coef[0]), math.exp(coef[1])

    def chi2(a, l):
        r = f - _model(a, l, d)
        return float(np.sum(w * r * r))

    cur = chi2(alpha, lam)
    mu = 1e-3
    converged = False
    for it in range(max_iter):
        J = _jacobian(alpha, lam, d)
        r = f - _model(alpha, lam, d)
        JTW = J.T * w
        H = JTW @ J
        g = JTW @ r
        step = None
        for _ in range(60):
            try:
                step = np.linalg.solve(H + mu * np.diag(np.diag(H)), g)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            na, nl = alpha + step[0], lam + step[1]
            if nl > 0 and chi2(na, nl) <= cur * (1 + 1e-15) + 1e-300:
                break
            mu *= 10
        else:
            converged = True  # no descent direction left: stationary point
            break
        new = chi2(na, nl)
        rel = abs(step[1]) / max(abs(lam), 1e-300) + abs(step[0]) / max(abs(alpha), 1e-300)
        alpha, lam, cur = na, nl, new
        mu = max(mu / 10, 1e-12)
        if rel < tol or cur < 1e-28:
            converged = True
            break
    if not converged:
        raise FitError("decay fit did not converge", {"alpha": alpha, "lam": lam, "chi2": cur, "iterations": max_iter})
    J = _jacobian(alpha, lam, d)
    H = (J.T * w) @ J
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular normal equations", {"alpha": alpha, "lam": lam}) from exc
    return FidelityEstimate(alpha, lam, float(cov[0, 0]), float(cov[1, 1]), float(cov[0, 1]),
                            "fit", curve.query, info={"chi2": cur})


def _ratio_fallback(curve: DecayCurve, var: np.ndarray) -> FidelityEstimate:
    order = np.argsort(-np.abs(curve.f))[:2]
    i0, i1 = sorted(order, key=lambda i: curve.depths[i])
    d0, d1 = int(curve.depths[i0]), int(curve.depths[i1])
    f0, f1 = curve.f[i0], curve.f[i1]
    if f0 == 0 or f1 / f0 <= 0:
        raise FitError("no usable positive signal for a decay fit", {"f": curve.f.tolist()})
    lam = (f1 / f0) ** (1.0 / (d1 - d0))
    alpha = f0 / lam**d0
    dd = d1 - d0
    v = lam**2 * (var[i0] / f0**2 + var[i1] / f1**2) / dd**2
    return FidelityEstimate(alpha, lam, float("nan"), float(v), 0.0, "ratio", curve.query, flagged=True)


def ratio_estimator(f0: float, fd: float, d: int, var0: float = 0.0, vard: float = 0.0) -> FidelityEstimate:
    """``lam = (f_d / f_0)**(1/d)`` with first-order variance."""
    if d < 1:
        raise EstimationError("ratio estimator needs d >= 1")
    if f0 <= 0 or fd / f0 <= 0:
        raise EstimationError("f_d / f_0 must be positive; the signal is consistent with zero")
    lam = (fd / f0) ** (1.0 / d)
    alpha = f0
    var = ratio_variance(lam, alpha, d, var0, vard)
    return FidelityEstimate(alpha, lam, var0, var, 0.0, "ratio")


def ratio_V(var0: float, vard: float, lam: float, d: int) -> float:
    return var0 + vard / lam ** (2 * d)


def ratio_variance(lam: float, alpha: float, d: int, var0: float, vard: float) -> float:
    return lam**2 * ratio_V(var0, vard, lam, d) / (d**2 * alpha**2)


def emeel_combine(est_eel: FidelityEstimate, est_aux: FidelityEstimate) -> FidelityEstimate:
    """Divide out the ancilla fidelity; variance by first-order propagation."""
    la, le = est_aux.lam, est_eel.lam
    if not la > 0:
        raise EstimationError("ancilla fidelity estimate must be positive")
    lam = le / la
    var = est_eel.var_lam / la**2 + le**2 * est_aux.var_lam / la**4
    return FidelityEstimate(est_eel.alpha, lam, est_eel.var_alpha, var, 0.0, "emeel", est_eel.query,
                            flagged=est_eel.flagged or est_aux.flagged)


def spam_robust_pair(lam1: float, lam2: float, var1: float = 0.0, var2: float = 0.0) -> FidelityEstimate:
    """Second experiment divided by the SPAM-only first one."""
    if not lam1 > 0:
        raise EstimationError("SPAM calibration estimate must be positive")
    lam = lam2 / lam1
    var = var2 / lam1**2 + lam2**2 * var1 / lam1**4
    return FidelityEstimate(lam1, lam, var1, var, 0.0, "spam-robust")


def spam_robust_error_bound(eps1: float, eps2: float, xi: float) -> float:
    """``|lam_hat - lam| <= (eps1 + eps2) / (xi - eps1)`` when both estimates are eps-accurate."""
    if not eps1 < xi:
        raise EstimationError("bound needs eps1 < xi")
    return (eps1 + eps2) / (xi - eps1)


# --------------------------------------------------------------------------
# Sample complexity formulas
# --------------------------------------------------------------------------


def _check_unit(**kw):
    for k, v in kw.items():
        if not 0 < v < 1:
            raise EstimationError(f"{k} must lie in (0, 1), got {v}")


def hoeffding_samples(eps: float, delta: float) -> int:
    _check_unit(eps=eps, delta=delta)
    return math.ceil(2.0 / eps**2 * math.log(2.0 / delta) - 1e-9)


def noisy_hoeffding_samples(eps: float, delta: float, F: float) -> int:
    """Shots per experiment for the SPAM-robust two-experiment estimator."""
    _check_unit(eps=eps, delta=delta)
    if not 0 < F <= 1:
        raise EstimationError("F must lie in (0, 1]")
    return math.ceil(18.0 / (eps**2 * F**2) * math.log(4.0 / delta) - 1e-9)


# --------------------------------------------------------------------------
# Overhead analysis
# --------------------------------------------------------------------------


def predicted_overhead(d_efl, alpha_efl, v_efl, d_eel, alpha_eel, v_eel, d_aux, alpha_aux, v_aux) -> float:
    """Variance ratio Var[lam_EMEEL] / Var[lam_EFL] for ratio estimators."""
    den1 = d_eel**2 * alpha_eel**2 * v_efl
    den2 = d_aux**2 * alpha_aux**2 * v_efl
    if den1 == 0 or den2 == 0:
        raise EstimationError("zero denominator in overhead prediction")
    num = d_efl**2 * alpha_efl**2
    return num * v_eel / den1 + num * v_aux / den2


def simplified_overhead(r_aux: float, r_efl: float, alpha_efl: float, alpha_eel: float) -> float:
    """Optimal-depth, binomial-variance approximation of the overhead."""
    if r_efl == 0 or alpha_eel == 0:
        raise EstimationError("zero denominator in simplified overhead")
    return (1.0 + r_aux / r_efl) ** 2 * alpha_efl**2 / alpha_eel**2 + 1.0


def overhead_from_estimates(emeel: FidelityEstimate, efl: FidelityEstimate) -> float:
    if efl.var_lam <= 0:
        raise EstimationError("EFL variance must be positive")
    return emeel.var_lam / efl.var_lam


@dataclass(frozen=True)
class BaseFit:
    c: float
    stderr: float
    amplitude: float
    n_points: int


def fit_overhead_base(weights, overheads, intercept: bool = True) -> BaseFit:
    """Least squares fit of ``log overhead = log A + w log c``.

    The intercept absorbs weight-independent factors such as the constant
    AuxEFL term; ``intercept=False`` pins ``A = 1``.  ``stderr`` is the
    delta-method standard error of ``c`` from the regression residuals.
    """
    w = np.asarray(weights, dtype=float)
    o = np.asarray(overheads, dtype=float)
    if w.shape != o.shape or np.unique(w).size < (2 if intercept else 1) or not np.any(w):
        raise EstimationError("need overheads at two or more distinct weights")
    if np.any(o <= 0):
        raise EstimationError("overheads must be positive")
    X = np.column_stack([np.ones_like(w), w]) if intercept else w[:, None]
    y = np.log(o)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = len(w) - X.shape[1]
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    if not intercept:
        c = math.exp(coef[0])
        return BaseFit(c, c * math.sqrt(cov[0, 0]), 1.0, len(w))
    c = math.exp(coef[1])
    return BaseFit(c, c * math.sqrt(cov[1, 1]), math.exp(coef[0]), len(w))


# --------------------------------------------------------------------------
# Correlations
# --------------------------------------------------------------------------


def correlation_metric(lam_pppp: float, lam_ppii: float, lam_iipp: float) -> float:
    """Deviation of a two-block eigenvalue from the product of its marginals."""
    return abs(lam_pppp - lam_ppii * lam_iipp)


def average_correlation(delta_x: float, delta_z: float) -> float:
    return 0.5 * (delta_x + delta_z)


def block_pair_queries(n: int, block_a: Sequence[int], block_b: Sequence[int], p: str) -> tuple[PauliLabel, PauliLabel, PauliLabel]:
    """(P on both blocks, P on block a, P on block b) as n-qubit labels."""
    def lab(qs):
        return PauliLabel.from_string("".join(p if q in qs else "I" for q in range(n)))

    both = set(block_a) | set(block_b)
    return lab(both), lab(set(block_a)), lab(set(block_b))


@dataclass(frozen=True)
class CorrelationEstimate:
    """Average correlation over the X and Z bases with a circuit-bootstrap stderr."""

    delta: float
    stderr: float
    per_basis: dict


def _block_gap(cm: CircuitMeans, method: str, depths, circuits=None) -> float:
    """Signed ``lam_both - lam_a * lam_b``."""
    curves = cm.curves(circuits=circuits)
    if depths is not None:
        curves = [c.restrict(depths) for c in curves]
    l_both, l_a, l_b = (fit_curve(c, method).lam for c in curves)
    return l_both - l_a * l_b


def block_correlation(records_by_basis: dict, block_a: Sequence[int], block_b: Sequence[int],
                      method: str = "ratio", n_boot: int = 200, seed: int = 0, depths=None) -> CorrelationEstimate:
    """Correlation metric between two blocks from EFL records in the all-P bases.

    ``records_by_basis`` maps ``"X"`` and ``"Z"`` to records measured in the
    bases ``X...X`` and ``Z...Z``.  The three eigenvalues share shots, so the
    stderr comes from resampling circuits rather than from propagation.
    """
    from .rng import stream

    per, boots = {}, []
    rng = stream(seed, "bootstrap", *block_a, *block_b)
    for p in ("X", "Z"):
        recs = records_by_basis[p]
        cm = circuit_means(recs, block_pair_queries(recs.n, block_a, block_b, p))
        per[p] = abs(_block_gap(cm, method, depths))
        draws = []
        for _ in range(n_boot):
            idx = {int(d): rng.integers(0, cm.means[int(d)].shape[1], cm.means[int(d)].shape[1]) for d in cm.depths}
            draws.append(_block_gap(cm, method, depths, idx))
        boots.append(np.array(draws))
    delta = average_correlation(per["X"], per["Z"])
    stderr = 0.5 * math.sqrt(sum(np.var(b, ddof=1) for b in boots)) if n_boot > 1 else float("nan")
    return CorrelationEstimate(delta, stderr, per)


# --------------------------------------------------------------------------
# Intervals
# --------------------------------------------------------------------------


def wilson_interval(successes: int, trials: int, z: float = Z_95) -> tuple[float, float]:
    if trials <= 0:
        return (float("nan"), float("nan"))
    p = successes / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


# --------------------------------------------------------------------------
# Estimator objects
# --------------------------------------------------------------------------


class DecayFitter(BaseEstimator):
    """Fit ``f_d = alpha * lam**d`` to (depth, mean, variance) points.

    Parameters
    ----------
    method : {"fit", "ratio"}
        Weighted least squares over all depths, or the ratio estimator on the
        smallest and largest depth.
    max_iter : int
    var_floor : float
        Point variances are floored at ``var_floor / count``.
    """

    def __init__(self, method: str = "fit", max_iter: int = 200, var_floor: float = VAR_FLOOR):
        self.method = method
        self.max_iter = max_iter
        self.var_floor = var_floor

    def fit(self, depths, f, var=None, counts=None):
        depths = np.asarray(depths)
        f = np.asarray(f, dtype=float)
        var = np.zeros_like(f) if var is None else np.asarray(var, dtype=float)
        counts = np.ones(f.shape, dtype=np.int64) if counts is None else np.asarray(counts)
        curve = DecayCurve(None, depths, f, var, counts)
        self.estimate_ = fit_curve(curve, self.method, self.max_iter, self.var_floor)
        self.alpha_ = self.estimate_.alpha
        self.lam_ = self.estimate_.lam
        self.cov_ = np.array([[self.estimate_.var_alpha, self.estimate_.cov], [self.estimate_.cov, self.estimate_.var_lam]])
        return self

    def predict(self, depths):
        return _model(self.alpha_, self.lam_, np.asarray(depths, dtype=float))


def fit_curve(curve: DecayCurve, method: str = "fit", max_iter: int = 200, var_floor: float = VAR_FLOOR) -> FidelityEstimate:
    if method == "fit":
        return fit_decay(curve, max_iter=max_iter, var_floor=var_floor)
    if method == "ratio":
        i0, i1 = int(np.argmin(curve.depths)), int(np.argmax(curve.depths))
        dd = int(curve.depths[i1] - curve.depths[i0])
        est = ratio_estimator(curve.f[i0], curve.f[i1], dd, curve.var[i0], curve.var[i1])
        est.query = curve.query
        return est
    raise EstimationError(f"unknown method {method!r}")


class PauliFidelityEstimator(BaseEstimator):
    """Per-query decay estimates from one protocol's shot records.

    ``fit(records)`` keeps the records; ``estimate(queries)`` returns
    :class:`FidelityEstimate` objects and ``predict(queries)`` just the decay
    rates.
    """

    def __init__(self, method: str = "fit", clustered: bool = False, depths=None):
        self.method = method
        self.clustered = clustered
        self.depths = depths

    def fit(self, records: ShotRecords, y=None):
        self.records_ = records
        self.protocol_ = records.protocol
        return self

    def curves(self, queries) -> list[DecayCurve]:
        curves = single_shot_curves(self.records_, queries, self.clustered)
        if self.depths is not None:
            curves = [c.restrict(self.depths) for c in curves]
        return curves

    def estimate(self, queries) -> list[FidelityEstimate]:
        return [fit_curve(c, self.method) for c in self.curves(queries)]

    def predict(self, queries) -> np.ndarray:
        return np.array([e.lam for e in self.estimate(queries)])


class EMEELEstimator(BaseEstimator):
    """EEL estimates divided by the AuxEFL estimate of the matching pattern."""

    def __init__(self, method: str = "fit", clustered: bool = False, depths=None):
        self.method = method
        self.clustered = clustered
        self.depths = depths

    def fit(self, eel_records: ShotRecords, aux_records: ShotRecords | None = None):
        if eel_records.protocol != "EEL" or (aux_records is not None and aux_records.protocol != "AuxEFL"):
            raise EstimationError("EMEEL needs EEL records and AuxEFL records")
        params = self.get_params()
        self.eel_ = PauliFidelityEstimator(**params).fit(eel_records)
        self.aux_ = None if aux_records is None else PauliFidelityEstimator(**params).fit(aux_records)
        return self

    def estimate(self, queries) -> list[dict]:
        queries = [q if isinstance(q, PauliLabel) else PauliLabel.from_string(q) for q in queries]
        eel = self.eel_.estimate(queries)
        if self.aux_ is None:
            aux = [FidelityEstimate(1.0, 1.0, 0.0, 0.0, method="ideal") for _ in queries]
        else:
            patterns = sorted({int(packed_pattern(np.uint64(q.packed), q.n)) for q in queries})
            fits = dict(zip(patterns, self.aux_.estimate(patterns)))
            aux = [fits[int(packed_pattern(np.uint64(q.packed), q.n))] for q in queries]
        return [{"query": q, "eel": e, "aux": a, "emeel": emeel_combine(e, a)} for q, e, a in zip(queries, eel, aux)]

    def predict(self, queries) -> np.ndarray:
        return np.array([r["emeel"].lam for r in self.estimate(queries)])
