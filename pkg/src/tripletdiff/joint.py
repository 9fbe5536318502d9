"""Joint label space: channel-wise concatenation of triplet and component blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import LabelSequence
from .taxonomy import Taxonomy, build_dependency_matrices, project_component, used_pair_matrix

BLOCK_SPACES = {"IVT": "triplet", "I": "instrument", "V": "verb", "T": "target", "IV": "iv", "IT": "it"}
LAYOUT_NAMES = ("IVT", "IVT+I", "IVT+V", "IVT+T", "IVT+IV", "IVT+IT", "IVT+I+V+T")
FULL = "IVT+I+V+T"


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceLayout:
    name: str
    blocks: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if not self.blocks or self.blocks[0][0] != "triplet":
            raise LayoutError("the triplet block must be present and first")
        spaces = [b[0] for b in self.blocks]
        if len(set(spaces)) != len(spaces):
            raise LayoutError(f"duplicate blocks in {spaces}")

    @property
    def width(self) -> int:
        return sum(w for _, w in self.blocks)

    @property
    def spaces(self) -> tuple[str, ...]:
        return tuple(b[0] for b in self.blocks)

    def has(self, space: str) -> bool:
        return space in self.spaces

    @property
    def has_components(self) -> bool:
        return all(self.has(c) for c in ("instrument", "verb", "target"))

    def span(self, space: str) -> slice:
        start = 0
        for name, w in self.blocks:
            if name == space:
                return slice(start, start + w)
            start += w
        raise LayoutError(f"layout {self.name} has no {space} block")


def _block_width(taxonomy: Taxonomy, space: str) -> int:
    if space == "triplet":
        return taxonomy.c_ivt
    if space in ("iv", "it"):
        return used_pair_matrix(taxonomy, space).shape[0]
    return taxonomy.component_count(space)


def make_layout(name: str, taxonomy: Taxonomy) -> SpaceLayout:
    keys = name.upper().split("+")
    if keys[0] != "IVT" or any(k not in BLOCK_SPACES for k in keys):
        raise LayoutError(f"unknown layout {name!r}; expected one of {LAYOUT_NAMES}")
    spaces = [BLOCK_SPACES[k] for k in keys]
    return SpaceLayout("+".join(keys), tuple((s, _block_width(taxonomy, s)) for s in spaces))


def ablation_layouts(taxonomy: Taxonomy) -> dict[str, SpaceLayout]:
    return {name: make_layout(name, taxonomy) for name in LAYOUT_NAMES}


def compose(parts: list[LabelSequence], layout: SpaceLayout) -> LabelSequence:
    if len(parts) != len(layout.blocks):
        raise LayoutError(f"layout {layout.name} expects {len(layout.blocks)} blocks, got {len(parts)}")
    for part, (space, width) in zip(parts, layout.blocks):
        if part.space != space or part.classes != width:
            raise LayoutError(f"block mismatch: got {part.space}[{part.classes}], expected {space}[{width}]")
    if len({p.frames for p in parts}) != 1:
        raise LayoutError("blocks disagree on frame count")
    if len({p.domain for p in parts}) != 1:
        raise LayoutError("blocks disagree on value domain")
    values = np.concatenate([p.values for p in parts], axis=1)
    return LabelSequence(values, "joint", parts[0].domain)


def decompose(joint: LabelSequence, layout: SpaceLayout) -> list[LabelSequence]:
    if joint.classes != layout.width:
        raise LayoutError(f"joint width {joint.classes} != layout {layout.name} width {layout.width}")
    return [LabelSequence(joint.values[:, layout.span(space)], space, joint.domain) for space, _ in layout.blocks]


def block_labels(triplet: np.ndarray, taxonomy: Taxonomy, space: str) -> np.ndarray:
    """Ground truth for any block, derived from triplet labels."""
    triplet = np.asarray(triplet, dtype=np.float32)
    if space == "triplet":
        return triplet
    if space in ("iv", "it"):
        return ((triplet > 0).astype(np.float32) @ used_pair_matrix(taxonomy, space).T > 0).astype(np.float32)
    return project_component(triplet, build_dependency_matrices(taxonomy), space)


def joint_targets(triplet: np.ndarray, taxonomy: Taxonomy, layout: SpaceLayout) -> LabelSequence:
    parts = [LabelSequence(block_labels(triplet, taxonomy, s), s) for s, _ in layout.blocks]
    return compose(parts, layout)
