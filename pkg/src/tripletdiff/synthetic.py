"""Controllable surrogate benchmark: random taxonomies, phase-driven triplet annotations and noisy features.

Features are a fixed linear code of the active triplets. Each triplet's code
is the sum of shared instrument/verb/target codes plus a weaker
triplet-specific code, so components are easier to read off than triplets.
Noise is Gaussian, smoothed by a trailing 5-frame moving average and rescaled
to per-element standard deviation ``feature_noise``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .taxonomy import Taxonomy, build_dependency_matrices, project_component

FORMAT_VERSION = 1
SMOOTH_WINDOW = 5


class DatasetError(ValueError):
    pass


class ChecksumError(DatasetError):
    pass


@dataclass
class TaskSpec:
    c_i: int = 4
    c_v: int = 5
    c_t: int = 6
    c_ivt: int = 20
    phases: int = 5
    p_stay: float = 0.98
    activation: list[list[float]] | None = None
    hot_triplets: int = 6
    hot_prob: tuple[float, float] = (0.02, 0.6)
    background_prob: float = 0.01
    max_concurrent: int = 1
    feature_dim: int = 32
    feature_noise: float = 1.0
    triplet_code_scale: float = 0.5
    video_length: int = 300
    video_count: int = 20
    seed: int = 0

    def __post_init__(self):
        self.hot_prob = tuple(self.hot_prob)
        if self.c_ivt > self.c_i * self.c_v * self.c_t:
            raise DatasetError(f"c_ivt={self.c_ivt} exceeds the {self.c_i * self.c_v * self.c_t} possible triples")
        if self.c_ivt < self.c_i:
            raise DatasetError("c_ivt must be >= c_i so every instrument appears in a triplet")
        if self.video_length < 1 or self.video_count < 1 or self.phases < 1:
            raise DatasetError("video_length, video_count and phases must be >= 1")
        probs = [self.p_stay, self.background_prob, *self.hot_prob]
        if self.activation is not None:
            probs += [p for row in self.activation for p in row]
            if len(self.activation) != self.phases or any(len(r) != self.c_ivt for r in self.activation):
                raise DatasetError("activation must be phases x c_ivt")
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise DatasetError("probabilities must lie in [0, 1]")
        if self.max_concurrent < 0 or self.feature_noise < 0:
            raise DatasetError("max_concurrent and feature_noise must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> TaskSpec:
        return cls(**d)


@dataclass
class VideoRecord:
    id: int
    features: np.ndarray
    labels: np.ndarray
    components: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def frames(self) -> int:
        return self.labels.shape[0]


@dataclass
class Dataset:
    spec: TaskSpec
    taxonomy: Taxonomy
    projection: np.ndarray
    activation: np.ndarray
    videos: list[VideoRecord]

    def fold_of(self, video: VideoRecord, folds: int = 5) -> int:
        return video.id % folds

    def split(self, fold: int, folds: int = 5) -> tuple[list[VideoRecord], list[VideoRecord]]:
        train = [v for v in self.videos if v.id % folds != fold]
        test = [v for v in self.videos if v.id % folds == fold]
        return train, test


def gen_taxonomy(spec: TaskSpec, seed: int | None = None) -> Taxonomy:
    """Sample ``c_ivt`` distinct triples, covering every instrument at least once."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n_all = spec.c_i * spec.c_v * spec.c_t
    if spec.c_ivt > n_all:
        raise DatasetError(f"c_ivt={spec.c_ivt} exceeds the product space {n_all}")
    if spec.c_ivt == n_all:
        chosen = set(range(n_all))
    else:
        per_instrument = spec.c_v * spec.c_t
        chosen = {i * per_instrument + int(rng.integers(per_instrument)) for i in range(spec.c_i)}
        rest = np.array(sorted(set(range(n_all)) - chosen))
        chosen |= set(rng.choice(rest, size=spec.c_ivt - len(chosen), replace=False).tolist())
    mapping = [(k // (spec.c_v * spec.c_t), (k // spec.c_t) % spec.c_v, k % spec.c_t) for k in sorted(chosen)]
    return Taxonomy(spec.c_i, spec.c_v, spec.c_t, tuple(mapping))


def gen_activation(spec: TaskSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.activation is not None:
        return np.asarray(spec.activation, dtype=np.float64)
    act = np.full((spec.phases, spec.c_ivt), spec.background_prob)
    lo, hi = spec.hot_prob
    for k in range(spec.phases):
        hot = rng.choice(spec.c_ivt, size=min(spec.hot_triplets, spec.c_ivt), replace=False)
        # log-uniform rates give a long tail of triplet frequencies
        act[k, hot] = np.exp(rng.uniform(np.log(lo), np.log(hi), size=hot.size))
    return act


def gen_projection(spec: TaskSpec, taxonomy: Taxonomy, rng: np.random.Generator) -> np.ndarray:
    """``D x c_ivt`` code matrix built from shared component codes plus triplet-specific codes."""
    d = spec.feature_dim
    codes = {n: rng.standard_normal((d, c)) / np.sqrt(d) for n, c in
             (("i", taxonomy.c_i), ("v", taxonomy.c_v), ("t", taxonomy.c_t), ("k", taxonomy.c_ivt))}
    w = np.empty((d, taxonomy.c_ivt))
    for k, (i, v, t) in enumerate(taxonomy.mapping):
        w[:, k] = codes["i"][:, i] + codes["v"][:, v] + codes["t"][:, t] + spec.triplet_code_scale * codes["k"][:, k]
    return w.astype(np.float32)


def sample_phases(spec: TaskSpec, length: int, rng: np.random.Generator) -> np.ndarray:
    phases = np.empty(length, dtype=np.int64)
    phases[0] = rng.integers(spec.phases)
    for t in range(1, length):
        if spec.phases == 1 or rng.random() < spec.p_stay:
            phases[t] = phases[t - 1]
        else:
            other = int(rng.integers(spec.phases - 1))
            phases[t] = other + (other >= phases[t - 1])
    return phases


def gen_video(spec: TaskSpec, taxonomy: Taxonomy, seed, projection: np.ndarray, activation: np.ndarray,
              video_id: int = 0, length: int | None = None) -> VideoRecord:
    rng = np.random.default_rng(seed)
    length = spec.video_length if length is None else length
    phases = sample_phases(spec, length, rng)
    labels = (rng.random((length, taxonomy.c_ivt)) < activation[phases]).astype(np.float32)
    for t in np.flatnonzero(labels.sum(axis=1) > spec.max_concurrent):
        active = np.flatnonzero(labels[t])
        keep = rng.choice(active, size=spec.max_concurrent, replace=False)
        labels[t] = 0.0
        labels[t, keep] = 1.0
    raw = rng.standard_normal((length + SMOOTH_WINDOW - 1, spec.feature_dim))
    kernel = np.ones(SMOOTH_WINDOW) / np.sqrt(SMOOTH_WINDOW)
    noise = np.stack([np.convolve(raw[:, j], kernel, mode="valid") for j in range(spec.feature_dim)], axis=1)
    features = (labels @ projection.T + spec.feature_noise * noise).astype(np.float32)
    return make_record(video_id, features, labels, taxonomy)


def make_record(video_id: int, features: np.ndarray, labels: np.ndarray, taxonomy: Taxonomy) -> VideoRecord:
    matrices = build_dependency_matrices(taxonomy)
    comps = {c: project_component(labels, matrices, c) for c in ("instrument", "verb", "target")}
    return VideoRecord(video_id, features, labels, comps)


def generate_dataset(spec: TaskSpec) -> Dataset:
    root = np.random.SeedSequence(spec.seed)
    tax_seq, world_seq, video_seq = root.spawn(3)
    taxonomy = gen_taxonomy(spec, np.random.default_rng(tax_seq).integers(2**63))
    world_rng = np.random.default_rng(world_seq)
    activation = gen_activation(spec, world_rng)
    projection = gen_projection(spec, taxonomy, world_rng)
    videos = [gen_video(spec, taxonomy, seq, projection, activation, video_id=i)
              for i, seq in enumerate(video_seq.spawn(spec.video_count))]
    return Dataset(spec, taxonomy, projection, activation, videos)


def oracle_decode(features: np.ndarray, projection: np.ndarray) -> np.ndarray:
    """Least-squares inversion of the feature code, rounded to the nearest binary code."""
    coef, *_ = np.linalg.lstsq(projection.astype(np.float64), np.asarray(features, np.float64).T, rcond=None)
    return (coef.T > 0.5).astype(np.float32)


# -- serialization -----------------------------------------------------------

def write_matrix(path: Path, m: np.ndarray) -> None:
    m = np.ascontiguousarray(m, dtype="<f4")
    path.write_bytes(struct.pack("<II", *m.shape) + m.tobytes())


def read_matrix(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if len(blob) < 8:
        raise ChecksumError(f"{path.name}: truncated header")
    rows, cols = struct.unpack_from("<II", blob)
    if len(blob) != 8 + 4 * rows * cols:
        raise ChecksumError(f"{path.name}: expected {rows}x{cols} payload, file has {len(blob) - 8} bytes")
    return np.frombuffer(blob, dtype="<f4", offset=8).reshape(rows, cols).astype(np.float32)


def write_labels_csv(path: Path, labels: np.ndarray) -> None:
    lines = ["frame,triplet_ids"]
    for t, row in enumerate(labels):
        lines.append(f"{t}," + ";".join(str(k) for k in np.flatnonzero(row > 0)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_labels_csv(path: Path, c_ivt: int) -> np.ndarray:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "frame,triplet_ids":
        raise DatasetError(f"{path.name}: bad header")
    labels = np.zeros((len(lines) - 1, c_ivt), dtype=np.float32)
    for t, line in enumerate(lines[1:]):
        frame, ids = line.split(",", 1)
        if int(frame) != t:
            raise DatasetError(f"{path.name}: frame {frame} out of order")
        for k in filter(None, ids.split(";")):
            labels[t, int(k)] = 1.0
    return labels


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _video_paths(directory: Path, video_id: int) -> tuple[Path, Path]:
    stem = f"video_{video_id:04d}"
    return directory / "videos" / f"{stem}.labels.csv", directory / "videos" / f"{stem}.features.bin"


def export_dataset(dataset: Dataset, directory: str | Path) -> None:
    directory = Path(directory)
    (directory / "videos").mkdir(parents=True, exist_ok=True)
    dataset.taxonomy.save(directory / "taxonomy.txt")
    write_matrix(directory / "projection.bin", dataset.projection)
    entries = []
    for v in dataset.videos:
        lpath, fpath = _video_paths(directory, v.id)
        write_labels_csv(lpath, v.labels)
        write_matrix(fpath, v.features)
        entries.append({"id": v.id, "frames": v.frames, "labels_sha256": _sha256(lpath),
                        "features_sha256": _sha256(fpath)})
    meta = {
        "format_version": FORMAT_VERSION,
        "spec": asdict(dataset.spec),
        "taxonomy_hash": dataset.taxonomy.hash(),
        "projection_sha256": _sha256(directory / "projection.bin"),
        "activation": dataset.activation.tolist(),
        "videos": entries,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")


def load_dataset(directory: str | Path, expected_taxonomy_hash: str | None = None) -> Dataset:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read {directory / 'meta.json'}: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"dataset format version {meta.get('format_version')} != {FORMAT_VERSION}")
    taxonomy = Taxonomy.load(directory / "taxonomy.txt")
    if taxonomy.hash() != meta["taxonomy_hash"]:
        raise ChecksumError("taxonomy.txt does not match the hash recorded in meta.json")
    if expected_taxonomy_hash is not None and expected_taxonomy_hash != taxonomy.hash():
        raise DatasetError("dataset taxonomy differs from the expected taxonomy")
    if _sha256(directory / "projection.bin") != meta["projection_sha256"]:
        raise ChecksumError("projection.bin checksum mismatch")
    videos = []
    for entry in meta["videos"]:
        lpath, fpath = _video_paths(directory, entry["id"])
        for path, key in ((lpath, "labels_sha256"), (fpath, "features_sha256")):
            if not path.exists():
                raise DatasetError(f"missing {path.name}")
            if _sha256(path) != entry[key]:
                raise ChecksumError(f"{path.name} checksum mismatch")
        labels = read_labels_csv(lpath, taxonomy.c_ivt)
        features = read_matrix(fpath)
        if labels.shape[0] != features.shape[0]:
            raise DatasetError(f"video {entry['id']}: labels and features disagree on frame count")
        # component labels are always re-derived from triplets, never stored
        videos.append(make_record(entry["id"], features, labels, taxonomy))
    spec = TaskSpec.from_dict(meta["spec"])
    return Dataset(spec, taxonomy, read_matrix(directory / "projection.bin"),
                   np.asarray(meta["activation"], dtype=np.float64), videos)
