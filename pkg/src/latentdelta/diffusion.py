"""Desk-scale denoising diffusion over low-dimensional vectors.

Forward noising (Markov chain and its closed-form marginal), deterministic
and stochastic reverse steps, deterministic inversion, a closed-form optimal
noise predictor for diagonal-Gaussian data, and a trainable predictor whose
hidden features are modulated per level by the style code and timestep
(group-normalize, then scale/shift from a conditioning head).

Timestep convention: states are indexed t = 0..T with x_0 the data; arrays
inside the schedule are stored for t = 1..T and ``alpha_bar(0) == 1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .bundle import LEVELS, LevelPartition
from .checkpoint import load_params, save_params


class ScheduleError(Exception):
    """Invalid schedule parameters or out-of-range timestep."""


class TrainingDiverged(RuntimeError):
    """Noise-predictor loss became non-finite."""


class DiffusionSchedule:
    """Noise scales beta_t, cumulative signal alpha_bar_t, reverse sigmas.

    ``sigmas[t-1]`` is the reverse-process noise at step t; all-zero sigmas
    give the deterministic (invertible) sampler. Admissibility requires
    sigma_t^2 <= 1 - alpha_bar_{t-1} at every t.
    """

    def __init__(self, betas, sigmas=None):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0:
            raise ScheduleError("betas must be a non-empty 1-d array")
        if not ((betas > 0) & (betas < 1)).all():
            raise ScheduleError("every beta must lie in (0, 1)")
        self.betas = betas
        self._alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        if not ((self._alpha_bars[1:] > 0) & (self._alpha_bars[1:] < 1)).all():
            raise ScheduleError("alpha_bar left (0, 1)")
        if sigmas is None:
            sigmas = np.zeros_like(betas)
        sigmas = np.asarray(sigmas, dtype=np.float64)
        if sigmas.shape != betas.shape:
            raise ScheduleError("sigmas must match betas in length")
        if (sigmas < 0).any():
            raise ScheduleError("sigmas must be non-negative")
        limit = 1.0 - self._alpha_bars[:-1]
        if (sigmas ** 2 > limit + 1e-12).any():
            bad = int(np.argmax(sigmas ** 2 > limit + 1e-12))
            raise ScheduleError(
                f"sigma at t={bad + 1} exceeds the admissible bound")
        self.sigmas = sigmas

    @property
    def t_max(self) -> int:
        return self.betas.size

    @property
    def is_deterministic(self) -> bool:
        return bool((self.sigmas == 0).all())

    def _check_t(self, t, low):
        if not low <= t <= self.t_max:
            raise ScheduleError(f"t={t} outside [{low}, {self.t_max}]")

    def beta(self, t) -> float:
        self._check_t(t, 1)
        return float(self.betas[t - 1])

    def alpha_bar(self, t) -> float:
        self._check_t(t, 0)
        return float(self._alpha_bars[t])

    def sigma(self, t) -> float:
        self._check_t(t, 1)
        return float(self.sigmas[t - 1])

    @classmethod
    def linear(cls, t_max: int, beta_start=1e-4, beta_end=0.02,
               sigma_mode="ddim") -> "DiffusionSchedule":
        """Linearly spaced betas; sigma_mode "ddim" (zero, deterministic) or
        "ddpm" (posterior variance, stochastic ancestral sampling)."""
        betas = np.linspace(beta_start, beta_end, t_max)
        schedule = cls(betas)
        if sigma_mode == "ddim":
            return schedule
        if sigma_mode == "ddpm":
            ab = schedule._alpha_bars
            tilde = (1.0 - ab[:-1]) / (1.0 - ab[1:]) * betas
            return cls(betas, sigmas=np.sqrt(tilde))
        raise ScheduleError(f"unknown sigma mode {sigma_mode!r}")


# ---------------------------------------------------------------------------
# Forward noising

def q_sample(schedule, x0, t, noise):
    """Closed-form marginal draw: sqrt(ab_t) x0 + sqrt(1 - ab_t) noise.

    ``t`` may be an integer or a per-row integer array for batched x0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ScheduleError(f"noise shape {noise.shape} != x0 shape {x0.shape}")
    if np.ndim(t) == 0:
        ab = schedule.alpha_bar(int(t))
        return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise
    t = np.asarray(t)
    if t.min() < 0 or t.max() > schedule.t_max:
        raise ScheduleError(f"t range [{t.min()}, {t.max()}] outside schedule")
    ab = schedule._alpha_bars[t][:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def markov_step(schedule, x_prev, t, noise):
    """One forward chain step: sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) noise."""
    beta = schedule.beta(int(t))
    x_prev = np.asarray(x_prev, dtype=np.float64)
    return np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * np.asarray(noise)


# ---------------------------------------------------------------------------
# Reverse / inversion

def ddim_step(schedule, predictor, x_t, t, s=None, z=None):
    """One reverse step t -> t-1; returns (x_{t-1}, predicted x0).

    With sigma_t = 0 the update is deterministic and ``z`` is ignored;
    otherwise ``z`` must be provided.
    """
    if t < 1:
        raise ScheduleError(f"reverse step needs t >= 1, got {t}")
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    sigma = schedule.sigma(t)
    gap = 1.0 - ab_prev - sigma ** 2
    if gap < -1e-12:
        raise ScheduleError(f"sigma at t={t} inadmissible")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = np.asarray(predictor(x_t, t, s), dtype=np.float64)
    x0_pred = (x_t - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
    x_prev = np.sqrt(ab_prev) * x0_pred + np.sqrt(max(gap, 0.0)) * eps
    if sigma > 0:
        if z is None:
            raise ScheduleError(f"stochastic step at t={t} needs z")
        x_prev = x_prev + sigma * np.asarray(z, dtype=np.float64)
    return x_prev, x0_pred


def _require_deterministic(schedule):
    if not schedule.is_deterministic:
        raise ScheduleError("deterministic (all-zero sigma) schedule required")


def ddim_decode(schedule, predictor, x_t_max, s=None, record=False):
    """Deterministic reverse pass from x_T down to x_0."""
    _require_deterministic(schedule)
    x = np.asarray(x_t_max, dtype=np.float64)
    states = [(schedule.t_max, x.copy())] if record else None
    for t in range(schedule.t_max, 0, -1):
        x, _ = ddim_step(schedule, predictor, x, t, s)
        if record:
            states.append((t - 1, x.copy()))
    return (x, states) if record else x


def ddim_invert(schedule, predictor, x0, s=None, record=False):
    """Deterministic forward pass from x_0 up to x_T.

    Runs the reverse-step formula with the index direction flipped: the step
    into level t evaluates the predictor at the current state with label t.
    This is the explicit discretization, so decode(invert(x)) is exact for
    predictors that ignore their state input and O(1/T) otherwise.
    """
    _require_deterministic(schedule)
    x = np.asarray(x0, dtype=np.float64)
    states = [(0, x.copy())] if record else None
    for t in range(1, schedule.t_max + 1):
        ab_t = schedule.alpha_bar(t)
        ab_prev = schedule.alpha_bar(t - 1)
        eps = np.asarray(predictor(x, t, s), dtype=np.float64)
        x0_est = (x - np.sqrt(1.0 - ab_prev) * eps) / np.sqrt(ab_prev)
        x = np.sqrt(ab_t) * x0_est + np.sqrt(1.0 - ab_t) * eps
        if record:
            states.append((t, x.copy()))
    return (x, states) if record else x


def ddim_sample(schedule, predictor, x_t_max, s, rng, record=False):
    """Reverse pass that draws fresh z at stochastic steps (ancestral mode)."""
    x = np.asarray(x_t_max, dtype=np.float64)
    states = [(schedule.t_max, x.copy())] if record else None
    for t in range(schedule.t_max, 0, -1):
        z = rng.standard_normal(x.shape) if schedule.sigma(t) > 0 else None
        x, _ = ddim_step(schedule, predictor, x, t, s, z)
        if record:
            states.append((t - 1, x.copy()))
    return (x, states) if record else x


def export_trajectory_csv(states, path):
    """Write recorded (t, x) states as CSV with header ``t,x_0,...``."""
    states = list(states)
    dim = np.asarray(states[0][1]).reshape(-1).size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x_{i}" for i in range(dim)])
        for t, x in states:
            writer.writerow([t] + [f"{v:.9g}" for v in np.asarray(x).reshape(-1)])


# ---------------------------------------------------------------------------
# Closed-form predictor for diagonal-Gaussian data

class GaussianOracle:
    """Optimal noise predictor when x0 ~ N(mean, diag(var)).

    The posterior mean of x0 given x_t is the conjugate-Gaussian combination
    (mean * (1 - ab) + sqrt(ab) * var * x_t) / ((1 - ab) + ab * var); the
    predicted noise re-expresses x_t around it. Defined for t >= 1.
    """

    def __init__(self, schedule, mean, var):
        self.schedule = schedule
        self.mean = np.asarray(mean, dtype=np.float64)
        self.var = np.asarray(var, dtype=np.float64)
        if (self.var <= 0).any():
            raise ValueError("variances must be positive")

    def posterior_mean(self, x_t, t):
        ab = self.schedule.alpha_bar(int(t))
        num = self.mean * (1.0 - ab) + np.sqrt(ab) * self.var * np.asarray(x_t)
        return num / ((1.0 - ab) + ab * self.var)

    def __call__(self, x_t, t, s=None):
        t = int(t)
        if t < 1:
            raise ScheduleError("oracle is defined for t >= 1")
        ab = self.schedule.alpha_bar(t)
        return (np.asarray(x_t) - np.sqrt(ab) * self.posterior_mean(x_t, t)) \
            / np.sqrt(1.0 - ab)


# ---------------------------------------------------------------------------
# Trainable style-conditioned predictor

def sinusoidal_embedding(t, dim: int) -> np.ndarray:
    """Classic sin/cos positional features of (integer) timesteps, (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


@dataclass
class PredictorConfig:
    hidden: int = 64
    temb_dim: int = 64
    groups: int = 4


class StylePredictor:
    """MLP noise predictor with per-level adaptive group-norm conditioning.

    The trunk lifts x_t to a hidden vector and passes it through one block
    per style level; each block group-normalizes its features and applies a
    scale/shift produced by that level's head from (style slice, timestep
    embedding). Zeroed heads therefore make the output independent of the
    conditioning signal.
    """

    def __init__(self, dim: int, partition: LevelPartition,
                 config: PredictorConfig | None = None, seed: int = 0):
        config = config or PredictorConfig()
        if config.hidden % config.groups:
            raise ValueError("hidden width must be divisible by the group count")
        self.dim = dim
        self.partition = partition
        self.config = config
        self.params = ad.ParamStore()
        self._build(seed)

    def _layer(self, rng, name, fan_in, fan_out, gain=1.0):
        w = self.params.param(f"{name}.w",
                              rng.normal(size=(fan_in, fan_out)) * gain / np.sqrt(fan_in))
        b = self.params.param(f"{name}.b", np.zeros(fan_out))
        return w, b

    def _build(self, seed):
        rng = np.random.default_rng(seed)
        cfg = self.config
        self.x_in = ad.input_("x")
        self.temb_in = ad.input_("temb")
        self.s_in = ad.input_("s")
        self.eps_target = ad.input_("eps")

        gain = np.sqrt(2.0 / 1.04)  # matches the leaky-relu slope used below
        w, b = self._layer(rng, "in", self.dim, cfg.hidden, gain)
        h = ad.leaky_relu(ad.add(ad.matmul(self.x_in, w), b))
        slices = self.partition.slices()
        for level in LEVELS:
            sl = slices[level]
            w, b = self._layer(rng, f"block.{level}", cfg.hidden, cfg.hidden, gain)
            h = ad.group_norm(ad.add(ad.matmul(h, w), b), groups=cfg.groups)
            head_in = ad.concat([ad.slice_(self.s_in, sl.start, sl.stop),
                                 self.temb_in])
            hw, hb = self._layer(rng, f"mod.{level}",
                                 (sl.stop - sl.start) + cfg.temb_dim,
                                 2 * cfg.hidden)
            head = ad.add(ad.matmul(head_in, hw), hb)
            h = ad.affine_modulate(h,
                                   ad.slice_(head, 0, cfg.hidden),
                                   ad.slice_(head, cfg.hidden, 2 * cfg.hidden))
            h = ad.leaky_relu(h)
        w, b = self._layer(rng, "out", cfg.hidden, self.dim)
        self.eps_out = ad.add(ad.matmul(h, w), b)
        # losses: mean over the batch of the per-sample L1 norm, and mean
        # per-sample squared euclidean norm for the quadratic variant (the
        # 1/batch factor is bound at call time so the graph stays static)
        self.l1_node = ad.l1_distance(self.eps_out, self.eps_target)
        diff = ad.sub(self.eps_out, self.eps_target)
        self.l2sq_node = ad.mul(ad.sum_(ad.mul(diff, diff)),
                                ad.input_("inv_batch"))

    def _bindings(self, x, t, s):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        if s.shape[0] == 1 and x.shape[0] > 1:
            s = np.repeat(s, x.shape[0], axis=0)
        temb = sinusoidal_embedding(t, self.config.temb_dim)
        if temb.shape[0] == 1 and x.shape[0] > 1:
            temb = np.repeat(temb, x.shape[0], axis=0)
        return {"x": x, "temb": temb, "s": s}

    def __call__(self, x, t, s):
        if s is None:
            raise ValueError("style-conditioned predictor needs a style code")
        single = np.ndim(x) == 1
        out = ad.forward(self.eps_out, self._bindings(x, t, s))
        return out[0].copy() if single else out.copy()

    def loss_value(self, x, t, s, eps, norm="l1"):
        """Training loss on a batch; ``norm`` picks l1 or squared-l2."""
        bindings = self._bindings(x, t, s)
        bindings["eps"] = np.atleast_2d(np.asarray(eps, dtype=np.float64))
        if norm == "l1":
            return float(ad.forward(self.l1_node, bindings)), self.l1_node
        if norm == "l2":
            bindings["inv_batch"] = np.array(1.0 / bindings["x"].shape[0])
            return float(ad.forward(self.l2sq_node, bindings)), self.l2sq_node
        raise ValueError(f"unknown loss norm {norm!r}")

    def zero_conditioning(self):
        """Zero all modulation heads (diagnostic: output becomes condition-free)."""
        for level in LEVELS:
            self.params[f"mod.{level}.w"].value[:] = 0.0
            self.params[f"mod.{level}.b"].value[:] = 0.0

    def save(self, path):
        meta = {"dim": self.dim, "style_dim": self.partition.dim,
                "c_end": self.partition.c_end, "m_end": self.partition.m_end,
                "hidden": self.config.hidden, "temb_dim": self.config.temb_dim,
                "groups": self.config.groups}
        save_params(path, self.params.arrays(), kind="style-predictor", meta=meta)

    @classmethod
    def load(cls, path) -> "StylePredictor":
        kind, arrays, meta = load_params(path)
        if kind != "style-predictor":
            raise ValueError(f"checkpoint kind {kind!r} is not a style predictor")
        predictor = cls(dim=int(meta["dim"]),
                        partition=LevelPartition(int(meta["c_end"]),
                                                 int(meta["m_end"]),
                                                 int(meta["style_dim"])),
                        config=PredictorConfig(hidden=int(meta["hidden"]),
                                               temb_dim=int(meta["temb_dim"]),
                                               groups=int(meta["groups"])))
        predictor.params.load_arrays(arrays)
        return predictor


@dataclass
class PredictorTrainConfig:
    steps: int = 8000
    batch_size: int = 32
    learning_rate: float = 1e-3
    eval_interval: int = 500
    loss_norm: str = "l1"  # "l1" (default) or "l2"
    predictor: PredictorConfig = None

    def __post_init__(self):
        if self.predictor is None:
            self.predictor = PredictorConfig()


def train_style_predictor(schedule, x0s, styles, partition: LevelPartition,
                          config: PredictorTrainConfig, seed: int,
                          log_path=None):
    """Fit the noise predictor on (x0, style) rows.

    Each step draws a batch, a uniform timestep in [1, T] per sample and
    fresh unit noise, forms x_t from the closed-form marginal, and minimizes
    the configured norm between predicted and injected noise.
    """
    x0s = np.asarray(x0s, dtype=np.float64)
    styles = np.asarray(styles, dtype=np.float64)
    if x0s.shape[0] != styles.shape[0] or x0s.shape[0] == 0:
        raise ValueError("x0s and styles must pair up and be non-empty")
    seeds = np.random.SeedSequence(seed).spawn(2)
    predictor = StylePredictor(x0s.shape[1], partition, config.predictor,
                               seed=int(seeds[0].generate_state(1)[0]))
    rng = np.random.default_rng(int(seeds[1].generate_state(1)[0]))
    state = ad.AdamState(lr=config.learning_rate)
    log = []
    for step in range(config.steps + 1):
        idx = rng.integers(0, x0s.shape[0], size=config.batch_size)
        t = rng.integers(1, schedule.t_max + 1, size=config.batch_size)
        eps = rng.standard_normal((config.batch_size, x0s.shape[1]))
        x_t = q_sample(schedule, x0s[idx], t, eps)
        value, node = predictor.loss_value(x_t, t, styles[idx], eps,
                                           norm=config.loss_norm)
        if not np.isfinite(value):
            raise TrainingDiverged(f"loss {value} at step {step}")
        if step % config.eval_interval == 0 or step == config.steps:
            log.append({"step": step, "loss": value})
        if step == config.steps:
            break
        grads = ad.backward(node)
        ad.adam_step(predictor.params.arrays(), grads, state)
    if log_path is not None:
        import json
        with open(log_path, "w") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")
    return predictor, log
