"""Attention policy network for the operation decision process.

Two encoder variants share one decoder interface:

``two_stage``
    Static information is embedded and self-attended once per instance
    (reservoir tokens from ``[P_min, P_max, Q_r]``, area tokens from
    ``[W_min, W_max]``, attention across the periods of one entity).  Dynamic
    decoder state (elevation, distance, delivered water) is fused afterwards by
    a linear + relu context layer.

``direct``
    The dynamic state is appended to every static token and the whole set is
    pushed through the encoder at each decision.

Three heads read the decoder context: turbine flow (``K_p`` bins), supply flag
(2) and supply amount (``K_s`` bins).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .env import ActionSpace, StepKind
from .hydro import SystemInstance

CHECKPOINT_FORMAT = "policy-v1"
VARIANTS = ("two_stage", "direct")


@dataclass(frozen=True)
class EncoderConfig:
    embedding_size: int = 128
    num_heads: int = 8
    variant: str = "two_stage"
    n_blocks: int = 1
    ff_hidden: int = 256

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.embedding_size % self.num_heads:
            raise ValueError("embedding_size must be divisible by num_heads")
        if self.n_blocks < 1:
            raise ValueError("need at least one attention block")

    @property
    def head_dim(self) -> int:
        return self.embedding_size // self.num_heads


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    return np.zeros_like(x) if hi - lo <= 0 else (x - lo) / (hi - lo)


def static_features(inst: SystemInstance) -> tuple[np.ndarray, np.ndarray]:
    """Min-max scaled reservoir features [I, T, 3] and area features [J, T, 2]."""
    a = inst.arrays
    res = np.stack([_minmax(a.p_min), _minmax(a.p_max), _minmax(a.inflow)], axis=-1)
    if inst.n_areas:
        area = np.stack([_minmax(a.w_min), _minmax(a.w_max)], axis=-1)
    else:
        area = np.zeros((0, inst.horizon, 2))
    return res, area


class PolicyModel:
    """Parameter container plus forward passes; every tensor lives in ``params``."""

    def __init__(self, config: EncoderConfig, space: ActionSpace, seed: int = 0):
        self.config = config
        self.space = space
        self.seed = seed
        rng = np.random.default_rng(seed)
        d, f = config.embedding_size, config.ff_hidden
        direct = config.variant == "direct"
        shapes: dict[str, tuple[int, ...]] = {}

        def linear(name, n_in, n_out):
            shapes[f"{name}.W"] = (n_in, n_out)
            shapes[f"{name}.b"] = (n_out,)

        def block(prefix):
            for k in ("q", "k", "v", "o"):
                shapes[f"{prefix}.W{k}"] = (d, d)
            linear(f"{prefix}.ff1", d, f)
            linear(f"{prefix}.ff2", f, d)

        linear("res_embed", 4 if direct else 3, d)
        linear("area_embed", 5 if direct else 2, d)
        for n in range(config.n_blocks):
            block(f"res_block{n}")
            block(f"area_block{n}")
        linear("power_ctx", d if direct else d + 1, d)
        linear("supply_ctx", d if direct else d + 3, d)
        linear("power_head", d, space.qp_bins)
        linear("flag_head", d, 2)
        linear("amount_head", d, space.qs_bins)

        self.params: dict[str, Tensor] = {}
        for name, shape in shapes.items():
            fan_in = shape[0] if len(shape) == 2 else shapes[name[:-2] + ".W"][0]
            bound = 1.0 / math.sqrt(fan_in)
            self.params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)

    # -- parameter management -------------------------------------------------
    def p(self, name: str) -> Tensor:
        return self.params[name]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ValueError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {self.params[k].shape}")
            self.params[k].data[...] = v

    def clone(self) -> "PolicyModel":
        other = PolicyModel(self.config, self.space, self.seed)
        other.load_state_dict(self.state_dict())
        return other

    def zero_grad(self) -> None:
        ad.zero_grad(self.params.values())

    def meta(self) -> dict:
        return {"format": CHECKPOINT_FORMAT, "variant": self.config.variant,
                "encoder": asdict(self.config), "qp_bins": self.space.qp_bins,
                "qs_bins": self.space.qs_bins, "seed": self.seed}

    def save(self, path, extra_meta: Mapping | None = None) -> None:
        meta = self.meta()
        meta.update(extra_meta or {})
        ad.save_checkpoint(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path, variant: str | None = None) -> tuple["PolicyModel", dict]:
        state, meta = ad.load_checkpoint(path)
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ad.CheckpointError(f"{path}: expected policy format {CHECKPOINT_FORMAT}, got {meta.get('format')}")
        if variant is not None and meta["variant"] != variant:
            raise ad.CheckpointError(f"{path}: checkpoint is a {meta['variant']} model, not {variant}")
        model = cls(EncoderConfig(**meta["encoder"]), ActionSpace(meta["qp_bins"], meta["qs_bins"]),
                    meta.get("seed", 0))
        model.load_state_dict(state)
        return model, meta

    # -- building blocks --------------------------------------------------------
    def linear(self, name: str, x: Tensor) -> Tensor:
        return x @ self.p(f"{name}.W") + self.p(f"{name}.b")

    def attention_heads(self, prefix: str, tokens: Tensor, query: Tensor | None = None) -> Tensor:
        """Multi-head scaled dot-product attention across the token axis.

        ``tokens`` is [N, T, d]; ``query`` (default: ``tokens``) is [N, Tq, d].
        Returns the merged head outputs [N, Tq, d] before the output projection.
        """
        cfg = self.config
        h, dh = cfg.num_heads, cfg.head_dim
        query = tokens if query is None else query
        N, T, d = tokens.shape
        Tq = query.shape[1]

        def split(x, n):
            return x.reshape(N, n, h, dh).swapaxes(1, 2)        # [N, h, n, dh]

        q = split(query @ self.p(f"{prefix}.Wq"), Tq)
        k = split(tokens @ self.p(f"{prefix}.Wk"), T)
        v = split(tokens @ self.p(f"{prefix}.Wv"), T)
        scores = ad.scale(q @ k.swapaxes(-1, -2), 1.0 / math.sqrt(dh))
        out = ad.softmax(scores) @ v                             # [N, h, Tq, dh]
        return out.swapaxes(1, 2).reshape(N, Tq, d)

    def encoder_block(self, prefix: str, tokens: Tensor, query: Tensor | None = None) -> Tensor:
        """Attention sublayer and feed-forward sublayer, each with a residual connection."""
        base = tokens if query is None else query
        hidden = base + self.attention_heads(prefix, tokens, query) @ self.p(f"{prefix}.Wo")
        ff = self.linear(f"{prefix}.ff2", ad.relu(self.linear(f"{prefix}.ff1", hidden)))
        return hidden + ff

    def _stack(self, kind: str, tokens: Tensor, query: Tensor | None = None) -> Tensor:
        for n in range(self.config.n_blocks):
            last = n == self.config.n_blocks - 1
            tokens_out = self.encoder_block(f"{kind}_block{n}", tokens, query if last else None)
            if last:
                return tokens_out
            tokens = tokens_out
        raise AssertionError("unreachable")

    # -- encoders (two-stage static part) -----------------------------------------
    def encode_reservoirs(self, inst: SystemInstance) -> Tensor:
        """Self-attended reservoir embeddings [I, T, d] from static features."""
        if self.config.variant != "two_stage":
            raise ValueError("static reservoir encoding exists only for the two_stage variant")
        res, _ = static_features(inst)
        return self._stack("res", self.linear("res_embed", Tensor(res)))

    def encode_areas(self, inst: SystemInstance) -> Tensor:
        """Self-attended area embeddings [J, T, d]; empty when there are no areas."""
        if self.config.variant != "two_stage":
            raise ValueError("static area encoding exists only for the two_stage variant")
        _, area = static_features(inst)
        if area.shape[0] == 0:
            return Tensor(np.zeros((0, inst.horizon, self.config.embedding_size)))
        return self._stack("area", self.linear("area_embed", Tensor(area)))

    def begin(self, inst: SystemInstance) -> "Encoded":
        return Encoded(self, inst)


class Encoded:
    """Per-instance cached encoder output and the decoder heads built on it."""

    def __init__(self, model: PolicyModel, inst: SystemInstance):
        self.model = model
        self.inst = inst
        I, J, T = inst.dims
        self.T = T
        d = model.config.embedding_size
        res, area = static_features(inst)
        if model.config.variant == "two_stage":
            x1 = model.encode_reservoirs(inst)
            x2 = model.encode_areas(inst)
            Wp = model.p("power_ctx.W")
            Ws = model.p("supply_ctx.W")
            # linear over [x, dynamic] == x @ W[:d] + dynamic @ W[d:]
            self.power_static = x1.reshape(I * T, d) @ gather(Wp, slice(0, d)) + model.p("power_ctx.b")
            self.power_dyn = gather(Wp, slice(d, d + 1))
            if J:
                self.supply_static = x2.reshape(J * T, d) @ gather(Ws, slice(0, d)) + model.p("supply_ctx.b")
            self.supply_dyn = gather(Ws, slice(d, d + 3))
        else:
            We, Wa = model.p("res_embed.W"), model.p("area_embed.W")
            self.res_tokens = Tensor(res) @ gather(We, slice(0, 3)) + model.p("res_embed.b")    # [I, T, d]
            self.res_dyn = gather(We, slice(3, 4))                                              # [1, d]
            if J:
                self.area_tokens = Tensor(area) @ gather(Wa, slice(0, 2)) + model.p("area_embed.b")
            self.area_dyn = gather(Wa, slice(2, 5))                                             # [3, d]

    def power_context(self, i: int, t: int, elev_norm: np.ndarray) -> Tensor:
        m = self.model
        B = elev_norm.shape[0]
        dyn = Tensor(elev_norm.reshape(B, 1))
        if m.config.variant == "two_stage":
            row = ad.gather_rows(self.power_static, [i * self.T + t])               # [1, d]
            return ad.relu(row + dyn @ self.power_dyn)
        static = ad.gather_rows(self.res_tokens, [i])                                # [1, T, d]
        tokens = static + (dyn @ self.res_dyn).reshape(B, 1, -1)                     # [B, T, d]
        query = ad.gather_rows(tokens.swapaxes(0, 1), [t]).swapaxes(0, 1)            # [B, 1, d]
        out = m._stack("res", tokens, query).reshape(B, -1)
        return ad.relu(m.linear("power_ctx", out))

    def supply_context(self, i: int, j: int, t: int, elev_norm, dist_norm, deliv_norm) -> Tensor:
        m = self.model
        B = elev_norm.shape[0]
        dyn = Tensor(np.stack([elev_norm, dist_norm, deliv_norm], axis=-1))          # [B, 3]
        if m.config.variant == "two_stage":
            row = ad.gather_rows(self.supply_static, [j * self.T + t])
            return ad.relu(row + dyn @ self.supply_dyn)
        static = ad.gather_rows(self.area_tokens, [j])
        tokens = static + (dyn @ self.area_dyn).reshape(B, 1, -1)
        query = ad.gather_rows(tokens.swapaxes(0, 1), [t]).swapaxes(0, 1)
        out = m._stack("area", tokens, query).reshape(B, -1)
        return ad.relu(m.linear("supply_ctx", out))

    def logits(self, kind: StepKind, ctx: Tensor) -> Tensor:
        head = {StepKind.POWER: "power_head", StepKind.SUPPLY_FLAG: "flag_head",
                StepKind.SUPPLY_AMOUNT: "amount_head"}[kind]
        return self.model.linear(head, ctx)


def gather(w: Tensor, rows: slice) -> Tensor:
    return ad.gather_rows(w, np.arange(w.shape[0])[rows])


# ---------------------------------------------------------------------------
# decoding


class Decoder:
    """Vectorized chooser for :func:`hydro_tdrl.env.run_episodes` backed by a policy model.

    Modes: sample (``rng`` given), greedy (``greedy=True``) or teacher-forced
    (``forced`` = an :class:`EpisodeBatch` whose recorded actions are replayed).
    Per-step log-probabilities of the chosen actions are kept in ``step_logps``.
    """

    def __init__(self, model: PolicyModel, inst: SystemInstance, *, rng=None,
                 greedy: bool = False, forced=None, record: bool = True):
        self.enc = model.begin(inst)
        self.rng = rng
        self.greedy = greedy
        self.forced = forced
        self.record = record
        self.step_logps: list[Tensor] = []
        self._ctx: Tensor | None = None

    def __call__(self, kind, i, j, t, obs, active):
        if kind is StepKind.POWER:
            ctx = self.enc.power_context(i, t, obs["elevation_norm"])
        elif kind is StepKind.SUPPLY_FLAG:
            ctx = self._ctx = self.enc.supply_context(i, j, t, obs["elevation_norm"],
                                                      obs["distance_norm"], obs["delivered_norm"])
        else:
            ctx = self._ctx
        logp = ad.log_softmax(self.enc.logits(kind, ctx))                 # [B, K]
        idx = self._pick(kind, i, j, t, logp.data, active)
        if self.record:
            onehot = np.zeros(logp.shape)
            onehot[np.arange(len(idx)), idx] = active.astype(float)
            self.step_logps.append((logp * onehot).sum(axis=-1, keepdims=True))
        return idx

    def _pick(self, kind, i, j, t, logp: np.ndarray, active) -> np.ndarray:
        if self.forced is not None:
            f = self.forced
            if kind is StepKind.POWER:
                return f.qp_index[:, i, t]
            if kind is StepKind.SUPPLY_FLAG:
                return f.x[:, i, j, t]
            return f.qs_index[:, i, j, t]
        if self.greedy:
            return np.argmax(logp, axis=-1)
        p = np.exp(logp)
        u = self.rng.random(p.shape[0])
        idx = (np.cumsum(p, axis=-1) < u[:, None] * p.sum(axis=-1, keepdims=True)).sum(axis=-1)
        return np.minimum(idx, p.shape[1] - 1)

    def total_logp(self) -> Tensor:
        """Sum of chosen-action log-probabilities per episode, shape [B]."""
        return ad.concat(self.step_logps, axis=-1).sum(axis=-1)


def distributions(model: PolicyModel, inst: SystemInstance):
    """Single-episode probability oracle for :func:`hydro_tdrl.env.rollout`.

    The oracle receives the flat observation vector of each step; it is stateful
    only in caching the per-instance encoding.
    """
    with ad.no_grad():
        enc = model.begin(inst)

    def policy(kind, i, j, t, obs):
        with ad.no_grad():
            if kind is StepKind.POWER:
                ctx = enc.power_context(i, t, np.array([obs[0]]))
            else:
                ctx = enc.supply_context(i, j, t, np.array([obs[0]]), np.array([obs[1]]), np.array([obs[2]]))
            return ad.softmax(enc.logits(kind, ctx)).data[0]
    return policy


def power_distribution(model: PolicyModel, inst: SystemInstance, i: int, t: int,
                       elev_norm: float) -> np.ndarray:
    return distributions(model, inst)(StepKind.POWER, i, -1, t, np.array([elev_norm]))


def supply_flag_distribution(model: PolicyModel, inst: SystemInstance, i: int, j: int, t: int,
                             elev_norm: float, dist_norm: float, deliv_norm: float) -> np.ndarray:
    return distributions(model, inst)(StepKind.SUPPLY_FLAG, i, j, t,
                                      np.array([elev_norm, dist_norm, deliv_norm]))


def supply_amount_distribution(model: PolicyModel, inst: SystemInstance, i: int, j: int, t: int,
                               elev_norm: float, dist_norm: float, deliv_norm: float) -> np.ndarray:
    return distributions(model, inst)(StepKind.SUPPLY_AMOUNT, i, j, t,
                                      np.array([elev_norm, dist_norm, deliv_norm]))
