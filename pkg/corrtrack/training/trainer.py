"""Training loop: pair sampling, loss, Adam updates, logs and checkpoints."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np
import torch

from corrtrack.core.exceptions import LossError, NoPositives, SamplingError
from corrtrack.model.checkpoint import save_checkpoint
from corrtrack.model.network import CorrespondenceNet, parameter_groups
from corrtrack.sampling.pairs import (
    LONG_VIDEO_STRIDES,
    MatchSet,
    StrideSchedule,
    build_match_set,
    interleave_sources,
    sample_pair_indices,
)
from corrtrack.scenes.ground_truth import pair_from_frames
from corrtrack.scenes.models import ScenePairSample
from corrtrack.scenes.storage import StoredScene
from corrtrack.training.losses import LossBreakdown, LossConfig, backward

if TYPE_CHECKING:
    from corrtrack.scenes.dataset import LoadedSource

LOG = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
MAX_RESAMPLE = 50

TrainingItem = tuple[ScenePairSample, MatchSet]
BatchProvider = Callable[[np.random.Generator, int], list[TrainingItem]]


@dataclass(frozen=True)
class SamplingConfig:
    """Pair and match-set sampling.

    Attributes:
        ratio: Requested share r of dynamic positives
        budget: Positives per pair (padded with negatives)
        strides: Default stride schedule for sources without their own
    """

    ratio: float = 0.95
    budget: int = 4096
    strides: tuple[int, ...] = LONG_VIDEO_STRIDES

    def __post_init__(self) -> None:
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if not 0.0 <= self.ratio <= 1.0:
            raise SamplingError(f"ratio must be in [0, 1], got {self.ratio}")
        if self.budget < 1:
            raise SamplingError(f"budget must be >= 1, got {self.budget}")
        StrideSchedule(self.strides)


@dataclass(frozen=True)
class OptimConfig:
    """Optimizer and loop settings.

    Attributes:
        lr: Adam learning rate (constant)
        batch_size: Pairs per step
        steps: Number of optimizer steps
        checkpoint_every: Save every N steps (0 saves only the final state)
        log_every: INFO log line every N steps
    """

    lr: float = 5e-5
    batch_size: int = 16
    steps: int = 500
    checkpoint_every: int = 0
    log_every: int = 10

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise LossError(f"lr must be non-negative, got {self.lr}")
        if self.batch_size < 1 or self.steps < 0:
            raise LossError("batch_size must be >= 1 and steps >= 0")


@dataclass
class TrainingSource:
    """Loaded scenes of one synthetic source with its stride schedule."""

    name: str
    scenes: list[StoredScene]
    schedule: StrideSchedule

    def sample_pair(self, rng: np.random.Generator, eps: float) -> ScenePairSample:
        scene = self.scenes[int(rng.integers(0, len(self.scenes)))]
        t1, t2 = sample_pair_indices(scene.num_frames, self.schedule, rng)
        return pair_from_frames(
            scene.frames[t1],
            scene.frames[t2],
            scene.cameras[t1],
            scene.cameras[t2],
            t1,
            t2,
            eps=eps,
            source=self.name,
        )


def training_sources(
    loaded: Sequence[LoadedSource],
    default_strides: Sequence[int],
    override: Sequence[int] | None = None,
) -> list[TrainingSource]:
    """Training sources with their stride schedules.

    A source uses ``override`` when given, else its own strides, else
    ``default_strides``. Scenes too short for every stride are skipped.
    """
    result = []
    for source in loaded:
        strides = override or source.strides or default_strides
        schedule = StrideSchedule(tuple(strides))
        scenes = []
        for scene in source.scenes:
            if schedule.feasible(scene.num_frames):
                scenes.append(scene)
            else:
                LOG.warning(
                    "Skipping %s: no stride in %s fits %d frames",
                    scene.path.name,
                    schedule.strides,
                    scene.num_frames,
                )
        result.append(TrainingSource(source.name, scenes, schedule))
    return result


class SourceMixProvider:
    """Batches interleaving sources uniformly, resampling pairs without positives."""

    def __init__(
        self, sources: Sequence[TrainingSource], sampling: SamplingConfig, eps: float
    ) -> None:
        self.sources = {s.name: s for s in sources if s.scenes}
        if not self.sources:
            raise SamplingError("No training source has scenes")
        self.sampling = sampling
        self.eps = eps

    def __call__(self, rng: np.random.Generator, batch_size: int) -> list[TrainingItem]:
        names = interleave_sources(sorted(self.sources), batch_size, rng)
        return [self._draw(self.sources[name], rng) for name in names]

    def _draw(self, source: TrainingSource, rng: np.random.Generator) -> TrainingItem:
        for _ in range(MAX_RESAMPLE):
            pair = source.sample_pair(rng, self.eps)
            try:
                return pair, build_match_set(pair, self.sampling.ratio, self.sampling.budget, rng)
            except NoPositives:
                LOG.debug("Resampling %s pair (%d, %d): no positives", source.name, pair.t1, pair.t2)
        raise NoPositives(f"Source {source.name}: no pair with positives after {MAX_RESAMPLE} draws")


def make_optimizer(model: CorrespondenceNet, lr: float) -> torch.optim.Adam:
    trainable = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adam(trainable, lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def train_step(
    model: CorrespondenceNet,
    optimizer: torch.optim.Optimizer,
    batch: Sequence[TrainingItem],
    cfg: LossConfig,
) -> LossBreakdown:
    """One Adam update on the batch-mean loss.

    Raises:
        LossError: If the batch is empty
    """
    if not batch:
        raise LossError("train_step needs a non-empty batch")
    samples = [pair for pair, _ in batch]
    matches = [match for _, match in batch]
    model.train()
    _, breakdown = backward(model, samples, matches, cfg)
    optimizer.step()
    return breakdown


@dataclass
class TrainingRun:
    """Outcome of Trainer.fit."""

    steps: int
    history: list[dict[str, float]] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)

    @property
    def initial_total(self) -> float | None:
        return self.history[0]["total"] if self.history else None

    @property
    def final_total(self) -> float | None:
        return self.history[-1]["total"] if self.history else None


class Trainer:
    """Runs the training loop with a deterministic sampling stream."""

    def __init__(
        self,
        model: CorrespondenceNet,
        provider: BatchProvider,
        loss: LossConfig,
        optim: OptimConfig,
        seed: int = 0,
    ) -> None:
        self.model = model
        self.provider = provider
        self.loss = loss
        self.optim = optim
        self.rng = np.random.default_rng(seed)
        self.optimizer = make_optimizer(model, optim.lr)
        trainable = {n for n, p in model.named_parameters() if p.requires_grad}
        counts = {g: len(trainable.intersection(n)) for g, n in parameter_groups(model).items()}
        LOG.debug("Trainable tensors per component: %s", counts)

    def fit(self, out_dir: Path | None = None, checkpoint_name: str = "model.ckpt") -> TrainingRun:
        """Train for ``optim.steps`` steps.

        With an output directory, writes ``train_log.jsonl`` (one record per
        step), periodic ``step_<n>.ckpt`` files and the final checkpoint.
        """
        run = TrainingRun(steps=self.optim.steps)
        log_file = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            log_file = (out_dir / "train_log.jsonl").open("w", encoding="utf-8")

        started = time.perf_counter()
        try:
            for step in range(1, self.optim.steps + 1):
                batch = self.provider(self.rng, self.optim.batch_size)
                breakdown = train_step(self.model, self.optimizer, batch, self.loss)

                record = {
                    "step": step,
                    **breakdown.to_dict(),
                    "lr": self.optim.lr,
                    "r_actual": float(np.mean([m.r_actual for _, m in batch])),
                    "stride": float(np.mean([p.stride for p, _ in batch])),
                    "elapsed": round(time.perf_counter() - started, 3),
                }
                run.history.append(record)
                if log_file is not None:
                    log_file.write(json.dumps(record, sort_keys=True) + "\n")

                if self.optim.log_every and step % self.optim.log_every == 0:
                    LOG.info(
                        "step %d/%d total=%.4f conf=%.4f static=%.4f dynamic=%.4f vis=%.4f",
                        step,
                        self.optim.steps,
                        record["total"],
                        record["conf"],
                        record["match_static"],
                        record["match_dynamic"],
                        record["vis"],
                    )
                if (
                    out_dir is not None
                    and self.optim.checkpoint_every
                    and step % self.optim.checkpoint_every == 0
                    and step != self.optim.steps
                ):
                    run.checkpoints.append(
                        save_checkpoint(self.model, out_dir / f"step_{step}.ckpt", {"step": step})
                    )
        finally:
            if log_file is not None:
                log_file.close()

        if out_dir is not None:
            run.checkpoints.append(
                save_checkpoint(self.model, out_dir / checkpoint_name, {"step": self.optim.steps})
            )
        LOG.info("Training finished after %d steps", self.optim.steps)
        return run
