"""Per-frame label/score matrices tagged with their label space and value domain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPACES = ("triplet", "instrument", "verb", "target", "iv", "it", "joint")
DOMAINS = ("binary01", "signed")


@dataclass(frozen=True)
class LabelSequence:
    values: np.ndarray
    space: str = "triplet"
    domain: str = "binary01"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"label sequence must be (frames, classes), got shape {v.shape}")
        if self.space not in SPACES:
            raise ValueError(f"unknown label space {self.space!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "values", v)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def classes(self) -> int:
        return self.values.shape[1]

    def normalized(self) -> LabelSequence:
        """Map [0, 1] values to the signed [-1, 1] diffusion domain."""
        if self.domain == "signed":
            return self
        return LabelSequence(self.values * 2.0 - 1.0, self.space, "signed")

    def unit(self) -> LabelSequence:
        """Map signed values back to [0, 1]."""
        if self.domain == "binary01":
            return self
        return LabelSequence(np.clip((self.values + 1.0) / 2.0, 0.0, 1.0), self.space, "binary01")
