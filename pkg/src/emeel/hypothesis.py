"""Channel-distinguishing game between a referee (Alice) and a learner (Bob).

Alice draws a nonidentity Pauli ``k``, a sign ``s`` and a fair coin choosing
between the fully depolarizing channel and a depolarizing channel with a
single eigenvalue ``s/3`` at ``k``.  Bob collects Bell-sampling shots with
the label still hidden and afterwards guesses the hypothesis from the
estimated eigenvalue at ``k``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channels import Depolarizing, PauliChannel, SPAMModel, Spiked, bell_pair_spam
from .estimation import EstimationError, spam_robust_pair, wilson_interval
from .pauli import PauliLabel, identity_clifford, packed_inner
from .rng import stream, uniform_labels
from .sim import ExperimentPlan, collect, emulate_injected_channel

DEPOLARIZING = "D"
SPIKED = "PM"
HYPOTHESES = (DEPOLARIZING, SPIKED)
GAME_PROTOCOLS = ("single-depth", "spam-robust")
GAME_MODES = ("simulate", "inject")
THRESHOLD = 1.0 / 6.0
SPIKE = 1.0 / 3.0
POOL_FACTOR = 3  # pool size in units of M; ample commuting and anticommuting entries


class GameError(ValueError):
    pass


@dataclass(frozen=True)
class GameInstance:
    n: int
    k: PauliLabel
    sign: int
    hypothesis: str
    channel: PauliChannel


@dataclass(frozen=True)
class GameConfig:
    """Parameters of a batch of game trials.

    ``M`` is the number of shots per phase.  The SPAM-robust protocol runs two
    phases (SPAM calibration at depth 0 and the channel at depth 1) and thus
    uses ``2 M`` shots in total.
    """

    n: int
    M: int
    protocol: str = "spam-robust"
    spam: SPAMModel | None = None
    trials: int = 100
    seed: int = 0
    mode: str = "simulate"
    workers: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise GameError("n must be at least 1")
        if self.M < 1:
            raise GameError("M must be at least 1")
        if self.protocol not in GAME_PROTOCOLS:
            raise GameError(f"protocol must be one of {GAME_PROTOCOLS}")
        if self.mode not in GAME_MODES:
            raise GameError(f"mode must be one of {GAME_MODES}")
        if self.trials < 0:
            raise GameError("trials must be nonnegative")
        if self.spam is None:
            object.__setattr__(self, "spam", SPAMModel.ideal(2 * self.n))
        if self.spam.n != 2 * self.n:
            raise GameError("game SPAM acts on the 2n-qubit pair register")

    @classmethod
    def with_bell_spam(cls, n: int, M: int, fidelity: float, **kw) -> "GameConfig":
        return cls(n, M, spam=bell_pair_spam(n, fidelity), **kw)


def alice_sample(n: int, rng: np.random.Generator) -> GameInstance:
    if n < 1:
        raise GameError("n must be at least 1")
    k = 0
    while k == 0:
        k = int(uniform_labels(rng, n, None))
    label = PauliLabel.from_packed(n, k)
    sign = 1 if rng.random() < 0.5 else -1
    if rng.random() < 0.5:
        return GameInstance(n, label, sign, DEPOLARIZING, Depolarizing(n))
    return GameInstance(n, label, sign, SPIKED, Spiked(n, label, sign, SPIKE))


def bob_decide(lam_hat: float) -> str:
    """Depolarizing iff ``|lam_hat| < 1/6``; the boundary goes to the spiked side."""
    if not math.isfinite(lam_hat):
        raise GameError("estimate must be finite")
    return DEPOLARIZING if abs(lam_hat) < THRESHOLD else SPIKED


def efl_upper_bound(M: float, n: int) -> float:
    """Success-probability ceiling for any entanglement-free learner, valid for n >= 4."""
    if n < 4:
        raise GameError("the entanglement-free bound holds only for n >= 4")
    if M < 0:
        raise GameError("M must be nonnegative")
    return min(1.0, 0.5 + 0.43 * M * 2.0 ** (-n))


def efl_sample_lower_bound(n: int, eps: float, delta: float) -> float:
    """Shots any entanglement-free protocol needs to learn to ``eps`` with failure ``delta``."""
    if not 0 < eps:
        raise GameError("eps must be positive")
    if not 0 <= delta < 0.5:
        raise GameError("delta must lie in [0, 1/2)")
    return (1.0 - 2.0 * delta) * (2.0**n - 2.0 ** (-n)) / (60.0 * eps**2)


# --------------------------------------------------------------------------
# Single trial
# --------------------------------------------------------------------------


def _plan(cfg: GameConfig, channel: PauliChannel, depths, seed: int, spam: SPAMModel | None = None) -> ExperimentPlan:
    return ExperimentPlan(
        "EEL", cfg.n, identity_clifford(cfg.n), depths, 1, cfg.M,
        system_noise=channel, spam=cfg.spam if spam is None else spam, seed=seed,
    )


def _mean_sign(outcomes: np.ndarray, k: PauliLabel) -> float:
    par = packed_inner(outcomes, np.uint64(k.packed), k.n)
    return float(1.0 - 2.0 * np.mean(par))


def _channel_phase(cfg: GameConfig, inst: GameInstance, rng) -> np.ndarray:
    """Depth-1 outcomes, all collected before ``k`` is looked at."""
    seed = int(rng.integers(2**63))
    if cfg.mode == "simulate":
        recs = collect(_plan(cfg, inst.channel, [1], seed))
        return recs.outcome
    # injection: uniform noiseless pool, subset selected to match the channel, then SPAM
    ideal = SPAMModel.ideal(2 * cfg.n)
    pool_plan = _plan(cfg, Depolarizing(cfg.n), [1], seed, spam=ideal).replace(n_circuits=POOL_FACTOR)
    pool = collect(pool_plan).outcome
    idx = emulate_injected_channel(pool, cfg.M, inst.channel, rng)
    spam_shift = collect(_plan(cfg, None, [0], seed + 1)).outcome
    return pool[idx] ^ spam_shift


def estimate_eigenvalue(cfg: GameConfig, inst: GameInstance, rng) -> float:
    """Bob's estimate of the eigenvalue at ``k`` under the configured protocol."""
    data = _channel_phase(cfg, inst, rng)
    calib = None
    if cfg.protocol == "spam-robust":
        calib = collect(_plan(cfg, None, [0], int(rng.integers(2**63)))).outcome
    # k is revealed only now
    f1 = _mean_sign(data, inst.k)
    if calib is None:
        return f1
    f0 = _mean_sign(calib, inst.k)
    try:
        return spam_robust_pair(f0, f1).lam
    except EstimationError:
        # calibration consistent with zero: the ratio is undefined, fall back to the raw mean
        return f1


def play_trial(cfg: GameConfig, trial: int) -> tuple[str, bool]:
    rng = stream(cfg.seed, "game", cfg.n, cfg.M, cfg.protocol, cfg.mode, trial)
    inst = alice_sample(cfg.n, rng)
    guess = bob_decide(estimate_eigenvalue(cfg, inst, rng))
    return inst.hypothesis, guess == inst.hypothesis


# --------------------------------------------------------------------------
# Batches
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GameRow:
    hypothesis: str
    trials: int
    successes: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)


@dataclass(frozen=True)
class GameResult:
    config: GameConfig
    rows: dict = field(default_factory=dict)

    @property
    def overall(self) -> GameRow:
        return self.rows["all"]

    @property
    def efl_bound(self) -> float:
        return efl_upper_bound(self.config.M, self.config.n) if self.config.n >= 4 else float("nan")

    def records(self) -> list[dict]:
        cfg = self.config
        out = []
        for key in (*HYPOTHESES, "all"):
            row = self.rows[key]
            lo, hi = row.interval
            out.append({
                "n": cfg.n, "M": cfg.M, "protocol": cfg.protocol, "hypothesis": key,
                "trials": row.trials, "success_rate": row.success_rate,
                "wilson_low": lo, "wilson_high": hi, "efl_bound": self.efl_bound,
            })
        return out


def _play_many(args):
    cfg, trials = args
    return [play_trial(cfg, t) for t in trials]


def run_game(cfg: GameConfig) -> GameResult:
    """Monte Carlo success rates per hypothesis and overall."""
    trials = list(range(cfg.trials))
    if cfg.workers > 1 and cfg.trials > 1:
        chunks = [trials[i::cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(cfg.workers) as ex:
            outcomes = [o for part in ex.map(_play_many, [(cfg, c) for c in chunks]) for o in part]
    else:
        outcomes = _play_many((cfg, trials))
    rows = {}
    for key in HYPOTHESES:
        sel = [ok for h, ok in outcomes if h == key]
        rows[key] = GameRow(key, len(sel), int(sum(sel)))
    rows["all"] = GameRow("all", len(outcomes), int(sum(ok for _, ok in outcomes)))
    return GameResult(cfg, rows)
