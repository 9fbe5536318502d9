"""Noise schedule, closed-form forward corruption and the DDIM reverse sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .labels import LabelSequence


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    total_steps: int
    alpha: np.ndarray
    eta: float = 1.0
    inference_steps: tuple[int, ...] = ()

    def sigma(self, s: int, s_prev: int) -> float:
        a, a_prev = self.alpha[s], self.alpha[s_prev]
        if a_prev >= 1.0:
            return 0.0
        return float(self.eta * math.sqrt((1 - a_prev) / (1 - a)) * math.sqrt(1 - a / a_prev))

    def pairs(self) -> list[tuple[int, int]]:
        steps = list(self.inference_steps)
        return list(zip(steps, steps[1:] + [0]))

    def with_steps(self, n: int | None = None, eta: float | None = None) -> NoiseSchedule:
        return replace(
            self,
            inference_steps=self.inference_steps if n is None else inference_subsequence(self.total_steps, n),
            eta=self.eta if eta is None else float(eta),
        )


def inference_subsequence(total_steps: int, n: int) -> tuple[int, ...]:
    """Evenly spaced, strictly decreasing steps from ``total_steps`` down to (excluding) 0."""
    if not 1 <= n <= total_steps:
        raise ScheduleError(f"need 1 <= inference steps <= {total_steps}, got {n}")
    grid = np.round(np.linspace(total_steps, 0, n + 1)).astype(int)[:-1]
    return tuple(int(s) for s in grid)


def cosine_alpha(total_steps: int, offset: float = 0.008, max_beta: float = 0.999) -> np.ndarray:
    s = np.arange(total_steps + 1, dtype=np.float64)
    f = np.cos((s / total_steps + offset) / (1 + offset) * math.pi / 2) ** 2
    abar = f / f[0]
    betas = np.clip(1 - abar[1:] / abar[:-1], 0.0, max_beta)
    return np.concatenate([[1.0], np.cumprod(1 - betas)])


def make_schedule(total_steps: int = 1000, eta: float = 1.0, inference_steps: int = 8) -> NoiseSchedule:
    if total_steps < 1:
        raise ScheduleError("total_steps must be >= 1")
    if eta < 0:
        raise ScheduleError("eta must be >= 0")
    alpha = cosine_alpha(total_steps)
    alpha.setflags(write=False)
    return NoiseSchedule(total_steps, alpha, float(eta), inference_subsequence(total_steps, min(inference_steps, total_steps)))


def _check_step(schedule: NoiseSchedule, s: int):
    if not 0 <= s <= schedule.total_steps:
        raise ScheduleError(f"step {s} outside [0, {schedule.total_steps}]")


def forward_noise(x0: LabelSequence, s: int, schedule: NoiseSchedule, noise: np.ndarray, clip: bool = True) -> LabelSequence:
    """Corrupt clean labels to step ``s``; returns signed-domain values."""
    _check_step(schedule, s)
    if x0.domain != "binary01":
        raise ValueError("forward_noise expects binary01 labels")
    noise = np.asarray(noise)
    if noise.shape != x0.values.shape:
        raise ValueError(f"noise shape {noise.shape} != labels shape {x0.values.shape}")
    a = schedule.alpha[s]
    x = math.sqrt(a) * x0.normalized().values + math.sqrt(1 - a) * noise
    if clip:
        x = np.clip(x, -1.0, 1.0)
    return LabelSequence(x.astype(np.float32), x0.space, "signed")


def ddim_step(
    x_s: LabelSequence,
    denoised: LabelSequence,
    s: int,
    s_prev: int,
    schedule: NoiseSchedule,
    noise: np.ndarray | None = None,
) -> LabelSequence:
    """One reverse update from ``s`` to ``s_prev`` given a clean estimate in the signed domain."""
    _check_step(schedule, s)
    _check_step(schedule, s_prev)
    if not s_prev < s:
        raise ScheduleError(f"s_prev={s_prev} must be < s={s}")
    if x_s.domain != "signed" or denoised.domain != "signed":
        raise ValueError("ddim_step operates in the signed domain")
    a, a_prev = schedule.alpha[s], schedule.alpha[s_prev]
    sigma = schedule.sigma(s, s_prev)
    radicand = 1 - a_prev - sigma**2
    if radicand < -1e-12:
        raise ScheduleError(f"negative radicand {radicand:.3g} between steps {s} and {s_prev}")
    x = x_s.values.astype(np.float64)
    d = denoised.values.astype(np.float64)
    eps_hat = (x - math.sqrt(a) * d) / math.sqrt(1 - a)
    out = math.sqrt(a_prev) * d + math.sqrt(max(radicand, 0.0)) * eps_hat
    if sigma > 0:
        if noise is None:
            raise ValueError("stochastic step (eta > 0) needs a noise sample")
        out = out + sigma * noise
    return LabelSequence(out.astype(np.float32), x_s.space, "signed")


class Denoiser(Protocol):
    width: int

    def predict(self, x_s: np.ndarray, s: int, features: np.ndarray) -> np.ndarray:
        """Return clean-label scores in [0, 1] of shape ``x_s.shape``."""


def sample(model: Denoiser, features: np.ndarray, schedule: NoiseSchedule, guidance=None, seed: int = 0) -> LabelSequence:
    """Denoise from pure Gaussian noise over ``schedule.inference_steps``.

    With ``guidance`` set, each model output is rectified before it enters the
    update. The sampler state is kept clipped to [-1, 1], the range the model
    saw during training.
    """
    from .guidance import apply_guidance

    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ValueError("features must be (frames, dims)")
    rng = np.random.default_rng(seed)
    shape = (features.shape[0], model.width)
    x = LabelSequence(np.clip(rng.standard_normal(shape), -1, 1), "joint", "signed")
    for s, s_prev in schedule.pairs():
        f = LabelSequence(model.predict(x.values, s, features), "joint", "binary01")
        if guidance is not None:
            f = apply_guidance(f, guidance)
        eps = rng.standard_normal(shape) if schedule.sigma(s, s_prev) > 0 else None
        x = ddim_step(x, f.normalized(), s, s_prev, schedule, eps)
        x = LabelSequence(np.clip(x.values, -1, 1), "joint", "signed")
    return x.unit()
