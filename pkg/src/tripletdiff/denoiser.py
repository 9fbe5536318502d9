"""Step-conditioned temporal convolution denoiser and its BCE training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import numeric as nn
from .diffusion import NoiseSchedule, forward_noise
from .joint import SpaceLayout, joint_targets
from .labels import LabelSequence
from .numeric import AdamState, Graph, Tensor, adam_step
from .taxonomy import Taxonomy

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-7


class TrainingError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    hidden: int = 64
    blocks: int = 6
    kernel: int = 3
    causal: bool = True
    step_embed: int = 64
    norm_groups: int = 1

    @property
    def dilations(self) -> list[int]:
        return [2**b for b in range(self.blocks)]

    def receptive_field(self) -> int:
        return 1 + (self.kernel - 1) * sum(self.dilations)


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 5e-5
    weight_decay: float = 1e-5
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def step_embedding(s: int, total_steps: int, width: int) -> np.ndarray:
    """Sinusoidal code of the relative step ``s / total_steps``."""
    half = width // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    angle = 1000.0 * (s / total_steps) * freqs
    return np.concatenate([np.sin(angle), np.cos(angle)]).astype(np.float32)


class DenoiserModel:
    def __init__(self, width: int, feature_dim: int, total_steps: int, config: ModelConfig | None = None,
                 seed: int = 0, params: dict[str, np.ndarray] | None = None):
        self.width = width
        self.feature_dim = feature_dim
        self.total_steps = total_steps
        self.config = config or ModelConfig()
        self.params = params if params is not None else self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        c = self.config
        h = c.hidden

        def normal(shape, fan_in):
            return (rng.standard_normal(shape) / math.sqrt(fan_in)).astype(np.float32)

        n_in = self.width + self.feature_dim + c.step_embed
        p = {"in.w": normal((n_in, h), n_in), "in.b": np.zeros(h, np.float32)}
        for b in range(c.blocks):
            p[f"blk{b}.norm.g"] = np.ones(h, np.float32)
            p[f"blk{b}.norm.b"] = np.zeros(h, np.float32)
            p[f"blk{b}.conv.w"] = normal((c.kernel, h, h), c.kernel * h)
            p[f"blk{b}.conv.b"] = np.zeros(h, np.float32)
            p[f"blk{b}.out.w"] = normal((h, h), h)
            p[f"blk{b}.out.b"] = np.zeros(h, np.float32)
        p["head.norm.g"] = np.ones(h, np.float32)
        p["head.norm.b"] = np.zeros(h, np.float32)
        # zero head: every output starts at sigmoid(0) = 0.5
        p["head.w"] = np.zeros((h, self.width), np.float32)
        p["head.b"] = np.zeros(self.width, np.float32)
        return p

    def forward(self, graph: Graph, x_s: np.ndarray, s: int, features: np.ndarray,
                params: dict[str, Tensor] | None = None) -> Tensor:
        """Scores in (0, 1) of shape ``(L, width)``; registers parameters on ``graph`` unless given."""
        x_s = np.asarray(x_s)
        features = np.asarray(features)
        if x_s.ndim != 2 or x_s.shape[1] != self.width:
            raise ValueError(f"noisy labels must be (L, {self.width}), got {x_s.shape}")
        if features.ndim != 2 or features.shape != (x_s.shape[0], self.feature_dim):
            raise ValueError(f"features must be ({x_s.shape[0]}, {self.feature_dim}), got {features.shape}")
        if params is None:
            params = {k: graph.param(k, v) for k, v in self.params.items()}
        c = self.config
        emb = np.broadcast_to(step_embedding(s, self.total_steps, c.step_embed), (x_s.shape[0], c.step_embed))
        inp = graph.constant(np.concatenate([x_s, features, emb], axis=1))
        h = inp @ params["in.w"] + params["in.b"]
        for b, d in enumerate(c.dilations):
            z = nn.channel_norm(h, c.norm_groups) * params[f"blk{b}.norm.g"] + params[f"blk{b}.norm.b"]
            z = nn.relu(nn.conv1d(z, params[f"blk{b}.conv.w"], d, causal=c.causal) + params[f"blk{b}.conv.b"])
            h = h + (z @ params[f"blk{b}.out.w"] + params[f"blk{b}.out.b"])
        z = nn.channel_norm(h, c.norm_groups) * params["head.norm.g"] + params["head.norm.b"]
        return nn.sigmoid(z @ params["head.w"] + params["head.b"])

    def predict(self, x_s: np.ndarray, s: int, features: np.ndarray) -> np.ndarray:
        graph = Graph()
        params = {k: graph.constant(v) for k, v in self.params.items()}
        return self.forward(graph, x_s, s, features, params).data

    def copy(self) -> DenoiserModel:
        return DenoiserModel(self.width, self.feature_dim, self.total_steps, self.config,
                             params={k: v.copy() for k, v in self.params.items()})

    def metadata(self) -> dict:
        return {"width": self.width, "feature_dim": self.feature_dim, "total_steps": self.total_steps,
                "model": asdict(self.config)}


def bce_loss(pred, target):
    """Mean binary cross-entropy; log arguments clamp at 1e-7.

    Accepts a graph :class:`Tensor` (returns a scalar node) or plain arrays
    (returns a float).
    """
    x = np.asarray(target.values if isinstance(target, LabelSequence) else target, dtype=np.float64)
    p_arr = pred.data if isinstance(pred, Tensor) else np.asarray(pred.values if isinstance(pred, LabelSequence) else pred)
    if p_arr.shape != x.shape:
        raise ValueError(f"prediction {p_arr.shape} and target {x.shape} differ in shape")
    p = p_arr.astype(np.float64)
    pc = np.clip(p, LOG_CLAMP, 1 - LOG_CLAMP)
    n = x.size
    value = -np.sum(x * np.log(pc) + (1 - x) * np.log(1 - pc)) / n
    if not isinstance(pred, Tensor):
        return float(value)
    inside = (p >= LOG_CLAMP) & (p <= 1 - LOG_CLAMP)
    dtype = pred.graph.dtype

    def backward(g):
        grad = (-x / pc + (1 - x) / (1 - pc)) * inside / n
        return ((grad * g).astype(dtype),)

    return pred.graph.record("bce", np.array(value), (pred,), backward)


@dataclass
class TrainResult:
    model: DenoiserModel
    epoch_loss: list[float] = field(default_factory=list)


def train(model: DenoiserModel, dataset: Sequence, schedule: NoiseSchedule, layout: SpaceLayout,
          config: TrainConfig, taxonomy: Taxonomy | None = None,
          on_epoch: Callable[[int, DenoiserModel, float], None] | None = None) -> TrainResult:
    """Fit ``model`` in place on ``dataset`` (records with ``features`` and triplet ``labels``).

    Each iteration draws a uniform step in ``1..S``, corrupts the joint-space
    ground truth and regresses it with BCE.
    """
    if taxonomy is None:
        raise ValueError("train needs the taxonomy to build joint-space targets")
    if layout.width != model.width:
        raise ValueError(f"layout width {layout.width} != model width {model.width}")
    rng = np.random.default_rng(config.seed)
    targets = [joint_targets(v.labels, taxonomy, layout) for v in dataset]
    features = [np.asarray(v.features, dtype=np.float32) for v in dataset]
    state = AdamState(lr=config.lr, weight_decay=config.weight_decay)
    result = TrainResult(model)
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            graph = Graph()
            params = {k: graph.param(k, v) for k, v in model.params.items()}
            terms = []
            try:
                for idx in batch:
                    s = int(rng.integers(1, schedule.total_steps + 1))
                    eps = rng.standard_normal(targets[idx].values.shape)
                    x_s = forward_noise(targets[idx], s, schedule, eps)
                    out = model.forward(graph, x_s.values, s, features[idx], params)
                    terms.append(bce_loss(out, targets[idx]))
                loss = terms[0]
                for t in terms[1:]:
                    loss = loss + t
                loss = loss * (1.0 / len(terms))
            except nn.NonFiniteError as exc:
                raise TrainingError(f"non-finite value at epoch {epoch}, batch {list(batch)}: {exc}") from exc
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {list(batch)}")
            adam_step(state, model.params, graph.backward(loss))
            losses.append(value)
        result.epoch_loss.append(float(np.mean(losses)))
        log.debug("epoch %d loss %.5f", epoch, result.epoch_loss[-1])
        if on_epoch is not None:
            on_epoch(epoch, model, result.epoch_loss[-1])
    return result
