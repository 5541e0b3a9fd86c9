"""Training on the generated training sources."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Any

from corrtrack.commands.base import BaseCommand
from corrtrack.core.config import RunConfig
from corrtrack.core.protocols import CommandResult
from corrtrack.model.network import init_params
from corrtrack.training.trainer import SourceMixProvider, Trainer, training_sources

LOG = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ckpt"


class TrainCommand(BaseCommand):
    """Trains a network from seeded initial weights and writes checkpoints."""

    @property
    def name(self) -> str:
        return "train"

    @property
    def description(self) -> str:
        return "Train the correspondence network on the synthetic source mix"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--steps", type=int, help="optimizer steps (optim.steps)")
        parser.add_argument("--ratio", type=float, help="dynamic share r (sampling.ratio)")

    def config_overrides(self, args: argparse.Namespace) -> dict[str, Any]:
        return {"optim.steps": args.steps, "sampling.ratio": args.ratio}

    def run(self, config: RunConfig, args: argparse.Namespace) -> CommandResult:
        out_dir = self.output_dir(config)
        sources = training_sources(self.load_sources(config, "train"), config.sampling.strides)
        provider = SourceMixProvider(sources, config.sampling, config.loss.eps_dynamic)
        model = init_params(config.runtime.seed, config.model)

        LOG.info(
            "Training %d steps, batch %d, r=%.2f, lr=%g",
            config.optim.steps,
            config.optim.batch_size,
            config.sampling.ratio,
            config.optim.lr,
        )
        trainer = Trainer(model, provider, config.loss, config.optim, seed=config.runtime.seed)
        run = trainer.fit(out_dir, CHECKPOINT_NAME)

        checkpoint = out_dir / CHECKPOINT_NAME
        artifacts: list[Path] = [*run.checkpoints, out_dir / "train_log.jsonl"]
        summary = f"{run.steps} steps, checkpoint {checkpoint}"
        if run.history:
            summary += f", total loss {run.initial_total:.4f} -> {run.final_total:.4f}"
        return self.result(
            artifacts,
            summary,
            steps=run.steps,
            checkpoint=str(checkpoint),
            initial_total=run.initial_total,
            final_total=run.final_total,
        )
