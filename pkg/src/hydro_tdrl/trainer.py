"""REINFORCE training with a greedy-rollout baseline and t-test baseline swaps."""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import atomic_write_bytes
from .decomposition import ObjectiveBounds, WeightVector, make_reward, weight_grid
from .env import ActionSpace, run_episodes
from .hydro import BatchEvaluation, SystemInstance, evaluate_batch
from .policy import Decoder, EncoderConfig, PolicyModel

log = logging.getLogger(__name__)

ZERO_REWARD_PATIENCE = 50


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss, gradient or parameter)."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    epochs: int = 5
    iterations_per_epoch: int = 200
    lr_high: float = 1e-3
    lr_low: float = 1e-4
    lr_switch_epoch: int = 3
    ttest_alpha: float = 0.05
    eval_batch: int = 128
    penalty: float = 0.0
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self) -> None:
        for name in ("batch_size", "epochs", "iterations_per_epoch", "eval_batch", "lr_high", "lr_low"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.lr_low > self.lr_high:
            raise ValueError("learning-rate schedule must be nonincreasing (lr_low <= lr_high)")
        if not 0 < self.ttest_alpha < 1:
            raise ValueError("ttest_alpha must lie in (0, 1)")
        if self.penalty < 0:
            raise ValueError("penalty must be >= 0")

    def lr_at(self, epoch: int) -> float:
        return self.lr_high if epoch < self.lr_switch_epoch else self.lr_low

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gradient_clipping"] = None
        d["weight_decay"] = 0.0
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = {k: v for k, v in d.items() if k not in ("gradient_clipping", "weight_decay")}
        enc = d.pop("encoder", None)
        cfg = cls(**d)
        return replace(cfg, encoder=EncoderConfig(**enc)) if enc else cfg


# ---------------------------------------------------------------------------
# Student t test


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b); relative accuracy about 1e-12."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) of Student's t with ``df`` degrees of freedom."""
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float             # one-sided, alternative mean(a - b) > 0
    significant: bool

    @property
    def p_two_sided(self) -> float:
        return min(1.0, 2.0 * min(self.p, 1.0 - self.p))


def paired_t_test(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """One-sided paired Student t test of ``a`` greater than ``b``.

    Zero-variance differences: a positive mean counts as significant (the p -> 0
    limit, t = +inf); a zero or negative mean gives p = 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be 1-D and equally long, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError("paired t test needs at least two pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    df = n - 1
    if sd == 0.0 or not np.isfinite(sd):
        if mean > 0:
            return TTestResult(math.inf, df, 0.0, True)
        return TTestResult(0.0 if mean == 0 else -math.inf, df, 1.0, False)
    t = mean / (sd / math.sqrt(n))
    p = t_sf(t, df)
    return TTestResult(float(t), df, p, p < alpha)


# ---------------------------------------------------------------------------
# REINFORCE pieces


def reinforce_loss(total_logp: ad.Tensor, rewards: np.ndarray, baseline: np.ndarray) -> ad.Tensor:
    """-(1/B) sum_b (R_b - R_BL_b) * log p_b; the advantage is a constant for autodiff."""
    adv = np.asarray(rewards, dtype=float) - np.asarray(baseline, dtype=float)
    return -(total_logp * ad.Tensor(adv)).mean()


def sample_batch(model: PolicyModel, inst: SystemInstance, batch_size: int,
                 rng: np.random.Generator):
    dec = Decoder(model, inst, rng=rng)
    env = run_episodes(inst, model.space, batch_size, dec)
    return env, dec.total_logp()


def greedy_evaluation(model: PolicyModel, inst: SystemInstance):
    """Evaluate the greedy decode of ``model`` (a single deterministic episode)."""
    with ad.no_grad():
        dec = Decoder(model, inst, greedy=True, record=False)
        env = run_episodes(inst, model.space, 1, dec)
    return env, evaluate_batch(inst, *env.decisions())


RewardFn = Callable[[BatchEvaluation], np.ndarray]


@dataclass
class CurvePoint:
    iteration: int
    epoch: int
    mean_reward: float
    baseline_reward: float
    lr: float
    feasible_fraction: float


CURVE_COLUMNS = ("iteration", "mean_reward", "baseline_reward", "lr", "epoch", "feasible_fraction")


def curve_csv(curve: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for c in curve:
        w.writerow([c.iteration, repr(c.mean_reward), repr(c.baseline_reward), repr(c.lr),
                    c.epoch, repr(c.feasible_fraction)])
    return buf.getvalue()


@dataclass
class SwapEvent:
    epoch: int
    test: TTestResult
    learner_reward: float
    baseline_reward_after: float


@dataclass
class TrainResult:
    model: PolicyModel
    baseline: PolicyModel
    curve: list[CurvePoint]
    swaps: list[SwapEvent]
    tests: list[TTestResult]
    warnings: list[str]
    greedy_objectives: np.ndarray
    greedy_feasible: bool
    greedy_reward: float
    greedy_episode: object = None      # EpisodeBatch of size 1
    observed: np.ndarray | None = None  # feasible objective triples met while sampling


def train_subproblem(inst: SystemInstance, space: ActionSpace, weights: WeightVector | None,
                     bounds: ObjectiveBounds | None, config: TrainConfig = TrainConfig(), *,
                     reward_fn: RewardFn | None = None, model: PolicyModel | None = None,
                     checkpoint_path=None, keep_feasible: bool = False,
                     progress: Callable[[CurvePoint], None] | None = None) -> TrainResult:
    """Train one scalar subproblem with REINFORCE and a greedy-rollout baseline.

    ``reward_fn`` overrides the weighted reward (used for single-objective runs).
    The final greedy decode is scored with the hard reward (infeasible -> 0) so
    that penalty-trained and hard-trained runs are directly comparable.
    """
    if reward_fn is None:
        if weights is None or bounds is None:
            raise ValueError("weights and bounds are required unless reward_fn is given")
        reward_fn = make_reward(weights, bounds, config.penalty)
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    if model is None:
        model = PolicyModel(config.encoder, space, seed=int(seeds[0].generate_state(1)[0]))
    rng = np.random.default_rng(seeds[1])
    baseline = model.clone()
    opt = ad.Adam(model.params, lr=config.lr_at(0))

    def baseline_value() -> float:
        _, ev = greedy_evaluation(baseline, inst)
        return float(reward_fn(ev)[0])

    bl_reward = baseline_value()
    curve: list[CurvePoint] = []
    swaps: list[SwapEvent] = []
    tests: list[TTestResult] = []
    notes: list[str] = []
    observed: list[np.ndarray] = []
    last_good = model.state_dict()
    zero_run = 0
    warned = False
    it = 0
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        for _ in range(config.iterations_per_epoch):
            env, logp = sample_batch(model, inst, config.batch_size, rng)
            ev = evaluate_batch(inst, *env.decisions())
            rewards = reward_fn(ev)
            if keep_feasible:
                observed.append(ev.objectives[ev.feasible])
            loss = reinforce_loss(logp, rewards, np.full(config.batch_size, bl_reward))
            model.zero_grad()
            loss.backward()
            bad = None
            if not np.isfinite(loss.data).all():
                bad = "loss"
            else:
                for name, p in model.params.items():
                    if p.grad is not None and not np.isfinite(p.grad).all():
                        bad = f"gradient of {name}"
                        break
            if bad is None:
                opt.step(lr)
                for name, p in model.params.items():
                    if not np.isfinite(p.data).all():
                        bad = f"parameter {name}"
                        break
            if bad is not None:
                model.load_state_dict(last_good)
                where = ""
                if checkpoint_path is not None:
                    model.save(checkpoint_path, {"aborted_at_iteration": it})
                    where = f"; last good parameters saved to {checkpoint_path}"
                raise TrainingError(f"non-finite {bad} at epoch {epoch}, iteration {it}{where}")
            last_good = model.state_dict()
            mean_r = float(np.mean(rewards))
            zero_run = zero_run + 1 if np.all(rewards == 0) else 0
            if zero_run >= ZERO_REWARD_PATIENCE and not warned:
                msg = (f"{zero_run} consecutive iterations with all-zero rewards (every sampled "
                       "schedule infeasible); consider the soft-penalty mode (penalty > 0)")
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                notes.append(msg)
                warned = True
            point = CurvePoint(it, epoch, mean_r, bl_reward, lr, float(np.mean(ev.feasible)))
            curve.append(point)
            if progress is not None:
                progress(point)
            it += 1
        # epoch end: compare greedy rewards of learner and baseline over the eval batch
        _, ev_l = greedy_evaluation(model, inst)
        learner_r = float(reward_fn(ev_l)[0])
        test = paired_t_test(np.full(config.eval_batch, learner_r),
                             np.full(config.eval_batch, bl_reward), config.ttest_alpha)
        tests.append(test)
        if test.significant:
            baseline.load_state_dict(model.state_dict())
            bl_reward = baseline_value()
            swaps.append(SwapEvent(epoch, test, learner_r, bl_reward))
            log.info("epoch %d: baseline replaced (learner %.6g, p=%.3g)", epoch, learner_r, test.p)

    env, ev = greedy_evaluation(model, inst)
    hard = make_reward(weights, bounds, 0.0)(ev)[0] if weights is not None and bounds is not None \
        else float(reward_fn(ev)[0])
    if checkpoint_path is not None:
        model.save(checkpoint_path, {"train_config": config.to_dict(),
                                     "weights": None if weights is None else weights.as_array().tolist()})
    obs = np.concatenate(observed) if observed else None
    return TrainResult(model, baseline, curve, swaps, tests, notes, ev.objectives[0],
                       bool(ev.feasible[0]), float(hard), env, obs)


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepRecord:
    index: int
    weights: WeightVector
    seed: int
    feasible: bool
    objectives: np.ndarray | None
    reward: float
    diagnostic: str = ""
    checkpoint: str | None = None
    curve: list[CurvePoint] = field(default_factory=list)


def subproblem_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _run_one(args) -> SweepRecord:
    k, inst, space, w, bounds, config, out_dir = args
    ckpt = None
    if out_dir is not None:
        ckpt = str(Path(out_dir) / f"subproblem_{k:03d}.ckpt")
    try:
        res = train_subproblem(inst, space, w, bounds, config, checkpoint_path=ckpt)
    except Exception as exc:  # one failed subproblem must not abort the sweep
        return SweepRecord(k, w, config.seed, False, None, 0.0, f"{type(exc).__name__}: {exc}", ckpt)
    diag = "" if res.greedy_feasible else "greedy decode infeasible"
    return SweepRecord(k, w, config.seed, res.greedy_feasible,
                       res.greedy_objectives if res.greedy_feasible else None,
                       res.greedy_reward, diag, ckpt, res.curve)


def train_sweep(inst: SystemInstance, space: ActionSpace, bounds: ObjectiveBounds,
                config: TrainConfig = TrainConfig(), weights: Sequence[WeightVector] | None = None,
                out_dir=None, workers: int = 1) -> list[SweepRecord]:
    """Train every subproblem of the weight grid independently.

    Each subproblem gets its own seed spawned from ``config.seed``, so results do
    not depend on ``workers`` or on execution order.
    """
    weights = list(weights) if weights is not None else weight_grid()
    seeds = subproblem_seeds(config.seed, len(weights))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(k, inst, space, w, bounds, replace(config, seed=s), out_dir)
            for k, (w, s) in enumerate(zip(weights, seeds))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


# ---------------------------------------------------------------------------
# single-objective extrema for bound estimation


def single_objective_extrema(inst: SystemInstance, space: ActionSpace, sampled: ObjectiveBounds,
                             config: TrainConfig | None = None, seed: int = 0
                             ) -> list[tuple[float, float]]:
    """Push each objective up and down with a dedicated policy.

    Feasible episodes earn ``1 + s * z`` where ``z`` is the objective scaled by
    the sampled bounds and ``s`` is +1 (maximize) or -1 (minimize); infeasible
    ones earn ``-violation``.  Returns the (min, max) seen over every feasible
    sampled and greedy episode, per objective.
    """
    config = config or TrainConfig(batch_size=64, epochs=1, iterations_per_epoch=50,
                                   eval_batch=8, encoder=EncoderConfig(embedding_size=32, num_heads=4))
    lo, hi = sampled.arrays()
    found = [[lo[k], hi[k]] for k in range(3)]
    seeds = subproblem_seeds(seed, 6)
    for k in range(3):
        for s_i, sign in enumerate((1.0, -1.0)):
            def reward(ev, k=k, sign=sign):
                z = (ev.objectives[..., k] - lo[k]) / (hi[k] - lo[k])
                return np.where(ev.feasible, 1.0 + sign * z, -ev.violation)
            res = train_subproblem(inst, space, None, None, replace(config, seed=seeds[2 * k + s_i]),
                                   reward_fn=reward, keep_feasible=True)
            seen = [res.observed] if res.observed is not None else []
            if res.greedy_feasible:
                seen.append(res.greedy_objectives[None, :])
            allv = np.concatenate(seen) if seen else np.zeros((0, 3))
            if len(allv):
                found[k][0] = min(found[k][0], float(allv[:, k].min()))
                found[k][1] = max(found[k][1], float(allv[:, k].max()))
    return [tuple(f) for f in found]


def save_curve(path, curve: Sequence[CurvePoint]) -> None:
    atomic_write_bytes(path, curve_csv(curve).encode())
