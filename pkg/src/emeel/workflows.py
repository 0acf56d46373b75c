"""Config-driven pipelines behind the command line tool.

Each function takes a plain mapping (parsed from YAML or JSON) and returns
rows and summaries; file output is left to :mod:`emeel.cli`.
"""

from __future__ import annotations

import math
from dataclasses import asdict
from itertools import product
from typing import Mapping

import numpy as np

from .channels import (
    PatternChannel,
    SPAMModel,
    DEFAULT_EEL_CENSUS,
    DEFAULT_EFL_CENSUS,
    DEFAULT_COMPONENT_FIDELITIES,
    bell_pair_spam,
    channel_from_config,
    random_dense_channel,
    spam_budget,
)
from .estimation import (
    EMEELEstimator,
    EstimationError,
    IncompatibleQueryError,
    PauliFidelityEstimator,
    fit_overhead_base,
    predicted_overhead,
    ratio_V,
    simplified_overhead,
    _query_bits,
    single_shot_curves,
)
from .hypothesis import GAME_PROTOCOLS, GameConfig, run_game
from .pauli import PauliLabel, labels_up_to_weight, parse_clifford, weight
from .rng import stream
from .sim import ORACLE_CAP, PROTOCOLS, ExperimentPlan, closed_form_distribution, collect, symmetrized_eigenvalues, tvd

SCHEMA_VERSION = 1
ORACLE_N_MAX = 3
WITHIN_REL = 0.15


class ConfigError(ValueError):
    pass


class CheckFailed(RuntimeError):
    pass


def _need(cfg: Mapping, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config key {key!r}")
    return cfg[key]


def _plain(v):
    """Python scalars for numpy ones so outputs format identically everywhere."""
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


# --------------------------------------------------------------------------
# hypotest
# --------------------------------------------------------------------------

HYPOTEST_COLUMNS = ("n", "M", "protocol", "hypothesis", "trials", "success_rate", "wilson_low", "wilson_high", "efl_bound")


def hypotest(cfg: Mapping, seed: int | None = None, workers: int = 1) -> list[dict]:
    """Success rates over the (n, M, protocol) grid."""
    ns = [int(v) for v in _as_list(_need(cfg, "n"))]
    Ms = [int(v) for v in _as_list(cfg.get("M", 1000))]
    protocols = _as_list(cfg.get("protocols", list(GAME_PROTOCOLS)))
    trials = int(cfg.get("trials", 100))
    fid = float(cfg.get("spam_fidelity", 1.0))
    mode = cfg.get("mode", "simulate")
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    if not ns or not Ms or not protocols or trials < 0:
        raise ConfigError("hypotest grid must be nonempty with trials >= 0")
    if any(p not in GAME_PROTOCOLS for p in protocols):
        raise ConfigError(f"protocols must be among {GAME_PROTOCOLS}")
    rows = []
    if trials == 0:
        return rows
    for n, M, proto in product(ns, Ms, protocols):
        if n < 1 or M < 1:
            raise ConfigError("n and M must be positive")
        gc = GameConfig.with_bell_spam(n, M, fid, protocol=proto, trials=trials, seed=seed, mode=mode, workers=workers)
        rows.extend(run_game(gc).records())
    return rows


# --------------------------------------------------------------------------
# learn
# --------------------------------------------------------------------------

LEARN_COLUMNS = (
    "query", "weight", "lam_true",
    "lam_eel", "se_eel", "alpha_eel", "v_eel",
    "lam_aux", "se_aux", "alpha_aux", "v_aux",
    "lam_emeel", "se_emeel",
    "efl_basis", "lam_efl", "se_efl", "alpha_efl", "v_efl",
    "depth", "flagged",
)


def _spam(spec, m: int, pair_n: int | None = None) -> SPAMModel:
    """SPAM on m qubits from ``{"fidelity": f}``, ``{"bell_fidelity": f}`` or explicit channels."""
    if spec is None:
        return SPAMModel.ideal(m)
    if "bell_fidelity" in spec:
        if pair_n is None:
            raise ConfigError("bell_fidelity applies to the EEL pair register only")
        return bell_pair_spam(pair_n, float(spec["bell_fidelity"]))
    if "fidelity" in spec:
        return SPAMModel.local_depolarizing(m, float(spec["fidelity"]))
    return SPAMModel(channel_from_config(spec.get("state_prep"), m), channel_from_config(spec.get("measurement"), m))


def _queries(spec, n: int) -> list[PauliLabel]:
    if spec is None:
        spec = {"max_weight": n, "include_identity": False}
    if isinstance(spec, Mapping):
        w = int(_need(spec, "max_weight"))
        return labels_up_to_weight(n, w, include_identity=bool(spec.get("include_identity", True)))
    return [PauliLabel.from_string(s) for s in spec]


class LearnSetup:
    """Plans and ground truth described by a learn config."""

    def __init__(self, cfg: Mapping, seed: int | None = None):
        n = int(_need(cfg, "n"))
        self.n = n
        self.gate = parse_clifford(_need(cfg, "gate"), n)
        self.depths = [int(d) for d in cfg.get("depths", [0, 16, 32])]
        nc, ns = int(cfg.get("n_circuits", 100)), int(cfg.get("n_shots", 1000))
        self.seed = int(cfg.get("seed", 0) if seed is None else seed)
        noise_rng = stream(self.seed, "noise")
        self.system = channel_from_config(cfg.get("system_noise"), n, noise_rng)
        self.ancilla = channel_from_config(cfg.get("ancilla_noise"), n, noise_rng)
        xt = cfg.get("crosstalk")
        self.crosstalk = None if xt is None else channel_from_config(xt, 2 * n, noise_rng)
        spam = cfg.get("spam") or {}
        self.method = cfg.get("method", "fit")
        self.clustered = bool(cfg.get("clustered", False))
        self.queries = _queries(cfg.get("queries"), n)
        common = dict(system_noise=self.system, ancilla_noise=self.ancilla, crosstalk=self.crosstalk)
        self.eel = ExperimentPlan("EEL", n, self.gate, self.depths, nc, ns, spam=_spam(spam.get("eel"), 2 * n, n),
                                  seed=self.seed, **common)
        self.aux = ExperimentPlan("AuxEFL", n, self.gate, self.depths, nc, ns, spam=_spam(spam.get("aux"), n),
                                  seed=self.seed + 1, **common)
        self.efl = [
            ExperimentPlan("EFL", n, self.gate, self.depths, nc, ns, spam=_spam(spam.get("efl"), n), basis=b,
                           seed=self.seed + 2 + i, **common)
            for i, b in enumerate(_as_list(cfg.get("efl_bases", [])))
        ]

    def truth(self) -> np.ndarray:
        packed = np.array([q.packed for q in self.queries], dtype=np.uint64)
        return symmetrized_eigenvalues(self.system, self.gate, packed)


def _endpoint_V(curve, lam: float) -> float:
    d = int(curve.depths[-1] - curve.depths[0])
    if d < 1 or not lam > 0:
        return float("nan")
    return ratio_V(curve.var[0], curve.var[-1], lam, d)


def learn(cfg: Mapping, seed: int | None = None, workers: int = 1) -> list[dict]:
    """EEL, AuxEFL and EMEEL estimates per query, with an optional EFL benchmark."""
    st = LearnSetup(cfg, seed)
    if len(set(st.depths)) < 2:
        raise ConfigError("learning needs at least two depths")
    eel_rec = collect(st.eel, workers)
    aux_rec = collect(st.aux, workers)
    est = EMEELEstimator(st.method, st.clustered).fit(eel_rec, aux_rec)
    queries = list(st.queries)
    res = est.estimate(queries)
    eel_curves = dict(zip(queries, single_shot_curves(eel_rec, queries, st.clustered)))
    aux_curves = {r["query"]: c for r, c in zip(res, single_shot_curves(aux_rec, queries, st.clustered))}
    efl_fits = {}
    for plan in st.efl:
        rec = collect(plan, workers)
        ok = []
        for q in queries:
            if q in efl_fits:
                continue
            try:
                _query_bits(rec, q)
            except IncompatibleQueryError:
                continue
            ok.append(q)
        if ok:
            pe = PauliFidelityEstimator(st.method, st.clustered).fit(rec)
            for q, e, c in zip(ok, pe.estimate(ok), pe.curves(ok)):
                efl_fits[q] = (plan.basis, e, c)
    truth = dict(zip(st.queries, st.truth()))
    rows = []
    for r in res:
        q = r["query"]
        e, a, m = r["eel"], r["aux"], r["emeel"]
        row = {
            "query": str(q), "weight": weight(q), "lam_true": float(truth[q]),
            "lam_eel": e.lam, "se_eel": e.stderr, "alpha_eel": e.alpha, "v_eel": _endpoint_V(eel_curves[q], e.lam),
            "lam_aux": a.lam, "se_aux": a.stderr, "alpha_aux": a.alpha, "v_aux": _endpoint_V(aux_curves[q], a.lam),
            "lam_emeel": m.lam, "se_emeel": m.stderr,
            "efl_basis": "", "lam_efl": float("nan"), "se_efl": float("nan"), "alpha_efl": float("nan"),
            "v_efl": float("nan"), "depth": int(st.depths[-1] - min(st.depths)),
            "flagged": bool(m.flagged),
        }
        if q in efl_fits:
            basis, f, c = efl_fits[q]
            row.update(efl_basis=basis, lam_efl=f.lam, se_efl=f.stderr, alpha_efl=f.alpha,
                       v_efl=_endpoint_V(c, f.lam))
            row["flagged"] = bool(row["flagged"] or f.flagged)
        elif st.efl:
            row["flagged"] = True  # outside every benchmark basis
        rows.append({k: _plain(v) for k, v in row.items()})
    return rows


# --------------------------------------------------------------------------
# overhead
# --------------------------------------------------------------------------

OVERHEAD_COLUMNS = ("query", "weight", "realized", "predicted", "simplified", "rel_error")
OVERHEAD_WEIGHT_COLUMNS = ("weight", "count", "realized", "predicted", "simplified")
_OVERHEAD_NEEDS = ("query", "weight", "se_emeel", "se_efl", "alpha_efl", "v_efl", "alpha_eel", "v_eel",
                   "alpha_aux", "v_aux", "lam_aux", "lam_efl", "depth")


def _num(v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return float("nan")


def analytic_base(weights, simplified) -> float:
    """Exponential base of the weight-dependent (SPAM) term of the simplified overhead."""
    return fit_overhead_base(weights, np.asarray(simplified, dtype=float) - 1.0).c


def overhead(rows: list[Mapping]) -> tuple[list[dict], list[dict], dict]:
    """Realized versus predicted overheads from a learn report with an EFL benchmark."""
    if not rows:
        raise ConfigError("empty learn report")
    missing = [k for k in _OVERHEAD_NEEDS if k not in rows[0]]
    if missing:
        raise ConfigError(f"learn report lacks columns {missing}")
    out = []
    for r in rows:
        g = {k: _num(r[k]) for k in _OVERHEAD_NEEDS if k != "query"}
        if not (g["se_efl"] > 0 and g["se_emeel"] > 0):
            continue
        d = g["depth"]
        realized = g["se_emeel"] ** 2 / g["se_efl"] ** 2
        try:
            pred = predicted_overhead(d, g["alpha_efl"], g["v_efl"], d, g["alpha_eel"], g["v_eel"],
                                      d, g["alpha_aux"], max(g["v_aux"], 0.0) if g["v_aux"] == g["v_aux"] else 0.0)
        except EstimationError:
            pred = float("nan")
        try:
            r_aux = -math.log(g["lam_aux"]) if g["lam_aux"] > 0 else float("nan")
            simp = simplified_overhead(max(r_aux, 0.0), -math.log(g["lam_efl"]), g["alpha_efl"], g["alpha_eel"])
        except (EstimationError, ValueError):
            simp = float("nan")
        out.append({
            "query": r["query"], "weight": int(g["weight"]), "realized": realized, "predicted": pred,
            "simplified": simp, "rel_error": abs(pred / realized - 1.0) if pred == pred else float("nan"),
        })
    if not out:
        raise ConfigError("no query has both EMEEL and EFL variances")
    W = np.array([o["weight"] for o in out])
    R = np.array([o["realized"] for o in out])
    P = np.array([o["predicted"] for o in out])
    S = np.array([o["simplified"] for o in out])
    per_w = []
    for w in sorted(set(W.tolist())):
        sel = W == w
        per_w.append({
            "weight": int(w), "count": int(sel.sum()),
            "realized": float(np.exp(np.mean(np.log(R[sel])))),
            "predicted": float(np.exp(np.nanmean(np.log(P[sel])))) if np.isfinite(P[sel]).any() else float("nan"),
            "simplified": float(np.exp(np.nanmean(np.log(S[sel])))) if np.isfinite(S[sel]).any() else float("nan"),
        })
    fit = fit_overhead_base(W, R)  # raises on a single weight
    ok = np.isfinite(S) & (S > 1)
    c_an = analytic_base(W[ok], S[ok]) if np.unique(W[ok]).size >= 2 else float("nan")
    rel = np.array([o["rel_error"] for o in out])
    summary = {
        "schema": f"emeel.overhead/{SCHEMA_VERSION}",
        "queries": len(out),
        "c": fit.c, "c_stderr": fit.stderr, "amplitude": fit.amplitude,
        "c_analytic": c_an, "z": (fit.c - c_an) / fit.stderr if fit.stderr > 0 else float("nan"),
        "fraction_within_15pct": float(np.mean(rel[np.isfinite(rel)] < WITHIN_REL)) if np.isfinite(rel).any() else float("nan"),
    }
    return out, per_w, summary


# --------------------------------------------------------------------------
# oracle-check
# --------------------------------------------------------------------------

ORACLE_COLUMNS = ("model", "protocol", "depth", "outcomes", "shots", "tvd", "bound", "passed")


def random_model(n: int, rng, protocol: str, gate) -> dict:
    """Random system, ancilla and SPAM noise for one oracle comparison."""
    m = 2 * n if protocol == "EEL" else n
    return dict(
        system_noise=random_dense_channel(n, rng, (0.85, 0.97)),
        ancilla_noise=PatternChannel(n, per_qubit=rng.uniform(0.9, 0.99, n)),
        spam=SPAMModel(random_dense_channel(m, rng, (0.93, 0.99)), random_dense_channel(m, rng, (0.93, 0.99))),
        basis="".join(rng.choice(list("XYZ"), n)) if protocol == "EFL" else None,
    )


def oracle_check(cfg: Mapping, seed: int | None = None, workers: int = 1) -> tuple[list[dict], dict]:
    n = int(_need(cfg, "n"))
    if n > ORACLE_N_MAX:
        from .channels import CapacityError

        raise CapacityError(f"oracle check supports n <= {ORACLE_N_MAX}")
    if n > ORACLE_CAP:
        raise ConfigError("n too large for closed forms")
    gate = parse_clifford(cfg.get("gate", "cnot 0 1" if n >= 2 else "h 0"), n)
    models = int(cfg.get("models", 20))
    shots = int(cfg.get("shots", 10**6))
    protocols = _as_list(cfg.get("protocols", list(PROTOCOLS)))
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    tol = float(cfg.get("tolerance", 5.0))
    rows = []
    for i, proto in product(range(models), protocols):
        rng = stream(seed, "oracle-model", i, proto)
        probe = ExperimentPlan(proto, n, gate, [0], 1, 1, basis="Z" * n if proto == "EFL" else None)
        d0 = probe.d0
        depths = [int(d) for d in cfg.get("depths", [0, d0, 2 * d0])]
        nc = int(cfg.get("n_circuits", 1000))
        plan = ExperimentPlan(proto, n, gate, depths, nc, max(1, shots // nc), seed=seed + i,
                              **random_model(n, rng, proto, gate))
        rec = collect(plan, workers)
        for d in depths:
            emp = rec.histogram(d)
            K = plan.outcome_count
            N = int((rec.depth == d).sum())
            t = tvd(emp, closed_form_distribution(plan, d))
            b = tol * math.sqrt(K / N)
            rows.append({"model": i, "protocol": proto, "depth": d, "outcomes": K, "shots": N,
                         "tvd": t, "bound": b, "passed": bool(t < b)})
    summary = {
        "schema": f"emeel.oracle/{SCHEMA_VERSION}",
        "checks": len(rows), "failed": sum(not r["passed"] for r in rows),
        "passed": all(r["passed"] for r in rows),
    }
    return rows, summary


# --------------------------------------------------------------------------
# spam-budget
# --------------------------------------------------------------------------


def budget(cfg: Mapping | None) -> dict:
    """SPAM budget from component fidelities and per-block component counts."""
    cfg = cfg or {}
    fids = {**DEFAULT_COMPONENT_FIDELITIES, **cfg.get("fidelities", {})}
    eel = cfg.get("eel_census", DEFAULT_EEL_CENSUS)
    efl = cfg.get("efl_census", DEFAULT_EFL_CENSUS)
    unknown = [k for k in (*eel, *efl) if k not in fids]
    if unknown:
        raise ConfigError(f"no fidelity given for components {unknown}")
    b = spam_budget(
        {k: (float(fids[k]), int(c)) for k, c in eel.items()},
        {k: (float(fids[k]), int(c)) for k, c in efl.items()},
        qubits_per_block=int(cfg.get("qubits_per_block", 2)),
        conversion=cfg.get("conversion", "direct"),
    )
    return {"schema": f"emeel.spam_budget/{SCHEMA_VERSION}", **asdict(b)}
