"""Cross-validated train / sample / evaluate runs shared by the CLI and the ablation sweeps."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .config import RunConfig
from .denoiser import DenoiserModel, TrainResult, train
from .diffusion import NoiseSchedule, make_schedule, sample
from .guidance import GuidanceConfig
from .joint import FULL, LAYOUT_NAMES, SpaceLayout, make_layout
from .metrics import EvalReport, evaluate
from .numeric import load_checkpoint, save_checkpoint
from .synthetic import Dataset, VideoRecord
from .taxonomy import Taxonomy, build_dependency_matrices

log = logging.getLogger(__name__)


class ArtifactMismatch(ValueError):
    pass


def schedule_for(config: RunConfig, steps: int | None = None, eta: float | None = None) -> NoiseSchedule:
    sched = make_schedule(config.schedule.total_steps, config.schedule.eta, config.inference.steps)
    if eta is None:
        eta = config.inference.eta
    return sched.with_steps(steps, eta)


def guidance_for(layout: SpaceLayout, taxonomy: Taxonomy, omega: float) -> GuidanceConfig | None:
    if omega == 0:
        return None
    return GuidanceConfig(omega, build_dependency_matrices(taxonomy), layout)


def sampling_seed(base: int, run_seed: int, video_id: int) -> int:
    return int(np.random.SeedSequence([base, run_seed, video_id]).generate_state(1)[0])


def train_model(dataset: Dataset, videos: list[VideoRecord], config: RunConfig, layout: SpaceLayout, seed: int,
                causal: bool | None = None, on_epoch=None) -> TrainResult:
    model_cfg = replace(config.model, causal=config.model.causal if causal is None else causal)
    model = DenoiserModel(layout.width, dataset.spec.feature_dim, config.schedule.total_steps, model_cfg, seed=seed)
    train_cfg = replace(config.train, seed=seed)
    return train(model, videos, schedule_for(config), layout, train_cfg, taxonomy=dataset.taxonomy, on_epoch=on_epoch)


def predict_videos(model: DenoiserModel, videos: Iterable[VideoRecord], schedule: NoiseSchedule,
                   guidance: GuidanceConfig | None, seed: int, run_seed: int = 0) -> dict[int, np.ndarray]:
    return {v.id: sample(model, v.features, schedule, guidance, sampling_seed(seed, run_seed, v.id)).values
            for v in videos}


@dataclass(frozen=True)
class Arm:
    """One row of an ablation table: which model to train and how to sample from it."""
    name: str
    layout: str = FULL
    causal: bool = True
    omega: float = 1.0
    steps: int = 8


def axis_arms(axis: str, config: RunConfig) -> list[Arm]:
    inf = config.inference
    base = Arm("", config.layout, config.model.causal, inf.omega, inf.steps)
    if axis == "layout":
        arms = []
        for name in LAYOUT_NAMES:
            has_components = all(k in name.split("+") for k in ("I", "V", "T"))
            arms.append(replace(base, name=name, layout=name, omega=inf.omega if has_components else 0.0))
        return arms
    if axis == "omega":
        return [replace(base, name=f"omega={w:.2f}", omega=w) for w in (0.0, 0.5, 1.0)]
    if axis == "steps":
        return [replace(base, name=f"steps={n}", steps=n) for n in (1, 2, 4, 8, 16)]
    if axis == "causality":
        return [replace(base, name="causal", causal=True), replace(base, name="acausal", causal=False)]
    raise ValueError(f"unknown ablation axis {axis!r}")


def cross_validate(dataset: Dataset, config: RunConfig, arms: list[Arm], seeds: list[int] | None = None,
                   progress: Callable[[str], None] | None = None) -> dict[str, EvalReport]:
    """Run every arm over all folds and seeds; arms sharing (layout, causal) share one trained model."""
    seeds = config.seeds if seeds is None else seeds
    reports = {a.name: EvalReport() for a in arms}
    for seed in seeds:
        for fold in range(config.folds):
            train_videos, test_videos = dataset.split(fold, config.folds)
            models: dict[tuple[str, bool], DenoiserModel] = {}
            for arm in arms:
                layout = make_layout(arm.layout, dataset.taxonomy)
                key = (layout.name, arm.causal)
                if key not in models:
                    if progress:
                        progress(f"seed {seed} fold {fold}: training {layout.name} causal={arm.causal}")
                    models[key] = train_model(dataset, train_videos, config, layout, seed, arm.causal).model
                preds = predict_videos(models[key], test_videos, schedule_for(config, arm.steps),
                                       guidance_for(layout, dataset.taxonomy, arm.omega),
                                       config.inference.seed, seed)
                reports[arm.name].folds.append(evaluate(preds, test_videos, dataset.taxonomy, layout, fold, seed))
    return reports


# -- artifacts -----------------------------------------------------------------

def save_model(path: str | Path, model: DenoiserModel, meta: dict) -> None:
    path = Path(path)
    save_checkpoint(path, model.params)
    Path(f"{path}.meta.json").write_text(json.dumps({**model.metadata(), **meta}, indent=1), encoding="utf-8")


def load_model(path: str | Path, taxonomy: Taxonomy | None = None) -> tuple[DenoiserModel, dict]:
    from .denoiser import ModelConfig

    path = Path(path)
    meta = json.loads(Path(f"{path}.meta.json").read_text(encoding="utf-8"))
    if taxonomy is not None and meta.get("taxonomy_hash") != taxonomy.hash():
        raise ArtifactMismatch("checkpoint was trained on a different taxonomy")
    params = load_checkpoint(path)
    model = DenoiserModel(meta["width"], meta["feature_dim"], meta["total_steps"], ModelConfig(**meta["model"]),
                          params=params)
    return model, meta


def write_prediction(path: str | Path, scores: np.ndarray, space_tag: str) -> None:
    scores = np.ascontiguousarray(scores, dtype="<f4")
    tag = space_tag.encode("utf-8")
    Path(path).write_bytes(struct.pack("<III", *scores.shape, len(tag)) + tag + scores.tobytes())


def read_prediction(path: str | Path) -> tuple[np.ndarray, str]:
    blob = Path(path).read_bytes()
    frames, classes, n = struct.unpack_from("<III", blob)
    tag = blob[12:12 + n].decode("utf-8")
    payload = blob[12 + n:]
    if len(payload) != 4 * frames * classes:
        raise ValueError(f"{Path(path).name}: payload size does not match {frames}x{classes}")
    return np.frombuffer(payload, dtype="<f4").reshape(frames, classes).astype(np.float32), tag
