"""Label spaces, the triplet -> (instrument, verb, target) mapping and dependency matrices."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

COMPONENTS = ("instrument", "verb", "target")
PAIRS = ("iv", "it")


class TaxonomyError(ValueError):
    pass


@dataclass(frozen=True)
class Taxonomy:
    c_i: int
    c_v: int
    c_t: int
    mapping: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "mapping", tuple(tuple(int(x) for x in m) for m in self.mapping))
        if min(self.c_i, self.c_v, self.c_t) < 1:
            raise TaxonomyError("class counts must be positive")
        if not self.mapping:
            raise TaxonomyError("taxonomy needs at least one triplet class")
        for k, (i, v, t) in enumerate(self.mapping):
            if not (0 <= i < self.c_i and 0 <= v < self.c_v and 0 <= t < self.c_t):
                raise TaxonomyError(f"triplet {k} = {(i, v, t)} out of range")
        if len(set(self.mapping)) != len(self.mapping):
            raise TaxonomyError("triplet mapping entries must be distinct")

    @property
    def c_ivt(self) -> int:
        return len(self.mapping)

    def c_j(self) -> int:
        return self.c_ivt + self.c_i + self.c_v + self.c_t

    def component_count(self, which: str) -> int:
        return {"instrument": self.c_i, "verb": self.c_v, "target": self.c_t}[which]

    def to_text(self) -> str:
        lines = [f"{self.c_i},{self.c_v},{self.c_t},{self.c_ivt}"]
        lines += [f"{k},{i},{v},{t}" for k, (i, v, t) in enumerate(self.mapping)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Taxonomy:
        rows = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                rows.append([int(x) for x in line.split(",")])
        if not rows or len(rows[0]) != 4:
            raise TaxonomyError("missing header 'c_i,c_v,c_t,c_ivt'")
        c_i, c_v, c_t, c_ivt = rows[0]
        body = rows[1:]
        if len(body) != c_ivt:
            raise TaxonomyError(f"header declares {c_ivt} triplets, found {len(body)}")
        mapping = []
        for expected_k, row in enumerate(body):
            if len(row) != 4 or row[0] != expected_k:
                raise TaxonomyError(f"bad triplet line for class {expected_k}: {row}")
            mapping.append(tuple(row[1:]))
        return cls(c_i, c_v, c_t, tuple(mapping))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Taxonomy:
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


@dataclass(frozen=True)
class DependencyMatrices:
    m_i: np.ndarray
    m_v: np.ndarray
    m_t: np.ndarray

    def for_component(self, which: str) -> np.ndarray:
        return {"instrument": self.m_i, "verb": self.m_v, "target": self.m_t}[which]


def build_dependency_matrices(taxonomy: Taxonomy) -> DependencyMatrices:
    """Hard 0/1 matrices: ``m_x[c, k] = 1`` iff triplet ``k`` contains component class ``c``."""
    counts = (taxonomy.c_i, taxonomy.c_v, taxonomy.c_t)
    mats = [np.zeros((n, taxonomy.c_ivt), dtype=np.float32) for n in counts]
    for k, triple in enumerate(taxonomy.mapping):
        for m, (c, n) in zip(mats, zip(triple, counts)):
            if not 0 <= c < n:
                raise TaxonomyError(f"triplet {k} references class {c} outside [0, {n})")
            m[c, k] = 1.0
    for m in mats:
        m.setflags(write=False)
    return DependencyMatrices(*mats)


def project_component(triplet_labels: np.ndarray, matrices: DependencyMatrices, which: str) -> np.ndarray:
    """Component class c is active at frame t iff some triplet containing c is active there."""
    m = matrices.for_component(which)
    x = np.asarray(triplet_labels)
    if x.ndim != 2 or x.shape[1] != m.shape[1]:
        raise ValueError(f"expected width {m.shape[1]} triplet labels, got shape {x.shape}")
    return ((x > 0).astype(np.float32) @ m.T > 0).astype(np.float32)


def pair_projection_matrix(taxonomy: Taxonomy, pair: str) -> np.ndarray:
    """Rows index (instrument, verb) as ``i * c_v + v`` or (instrument, target) as ``i * c_t + t``."""
    pair = pair.lower()
    if pair not in PAIRS:
        raise ValueError(f"pair must be one of {PAIRS}, got {pair!r}")
    second = taxonomy.c_v if pair == "iv" else taxonomy.c_t
    m = np.zeros((taxonomy.c_i * second, taxonomy.c_ivt), dtype=np.float32)
    for k, (i, v, t) in enumerate(taxonomy.mapping):
        m[i * second + (v if pair == "iv" else t), k] = 1.0
    return m


def used_pair_matrix(taxonomy: Taxonomy, pair: str) -> np.ndarray:
    """Pair projection restricted to pairs realised by at least one triplet."""
    m = pair_projection_matrix(taxonomy, pair)
    return m[m.sum(axis=1) > 0]
