"""Association guidance: rectify triplet scores with component scores routed through dependency matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .joint import LayoutError, SpaceLayout, compose, decompose
from .labels import LabelSequence
from .taxonomy import DependencyMatrices


@dataclass(frozen=True)
class GuidanceConfig:
    omega: float
    matrices: DependencyMatrices
    layout: SpaceLayout

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"guidance scale must lie in [0, 1], got {self.omega}")
        if not self.layout.has_components:
            raise LayoutError(f"guidance needs instrument, verb and target blocks; layout {self.layout.name} lacks them")


def guidance_term(f_i: np.ndarray, f_v: np.ndarray, f_t: np.ndarray, matrices: DependencyMatrices) -> np.ndarray:
    """Per-triplet product of its instrument, verb and target scores."""
    for f, m in ((f_i, matrices.m_i), (f_v, matrices.m_v), (f_t, matrices.m_t)):
        if f.ndim != 2 or f.shape[1] != m.shape[0]:
            raise ValueError(f"component scores {f.shape} do not match dependency matrix {m.shape}")
    if not f_i.shape[0] == f_v.shape[0] == f_t.shape[0]:
        raise ValueError("component scores disagree on frame count")
    return (f_i @ matrices.m_i) * (f_v @ matrices.m_v) * (f_t @ matrices.m_t)


def apply_guidance(f_joint: LabelSequence, config: GuidanceConfig) -> LabelSequence:
    if f_joint.domain != "binary01":
        raise ValueError("guidance operates on [0, 1] scores")
    parts = decompose(f_joint, config.layout)
    by_space = {p.space: p for p in parts}
    g = guidance_term(
        by_space["instrument"].values, by_space["verb"].values, by_space["target"].values, config.matrices
    )
    f = by_space["triplet"].values
    w = np.float32(config.omega)
    guided = (1 - w) * f + w * g * f
    parts[0] = LabelSequence(guided, "triplet", "binary01")
    return compose(parts, config.layout)
