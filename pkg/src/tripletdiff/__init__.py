"""Diffusion-based surgical action triplet recognition on a synthetic benchmark."""

from .denoiser import DenoiserModel, ModelConfig, TrainConfig, bce_loss, train
from .diffusion import NoiseSchedule, ddim_step, forward_noise, make_schedule, sample
from .guidance import GuidanceConfig, apply_guidance, guidance_term
from .joint import FULL, LAYOUT_NAMES, SpaceLayout, joint_targets, make_layout
from .labels import LabelSequence
from .metrics import average_precision, evaluate
from .synthetic import Dataset, TaskSpec, generate_dataset, load_dataset, export_dataset
from .taxonomy import DependencyMatrices, Taxonomy, build_dependency_matrices

__version__ = "0.1.0"

__all__ = [
    "DenoiserModel",
    "ModelConfig",
    "TrainConfig",
    "bce_loss",
    "train",
    "NoiseSchedule",
    "ddim_step",
    "forward_noise",
    "make_schedule",
    "sample",
    "GuidanceConfig",
    "apply_guidance",
    "guidance_term",
    "FULL",
    "LAYOUT_NAMES",
    "SpaceLayout",
    "joint_targets",
    "make_layout",
    "LabelSequence",
    "average_precision",
    "evaluate",
    "Dataset",
    "TaskSpec",
    "generate_dataset",
    "load_dataset",
    "export_dataset",
    "DependencyMatrices",
    "Taxonomy",
    "build_dependency_matrices",
]
