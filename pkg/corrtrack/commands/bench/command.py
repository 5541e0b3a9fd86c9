"""Wall-clock benchmark of one batch of image pairs plus query matching."""

from __future__ import annotations

import argparse
import json
import logging
import time
from pathlib import Path
from typing import Any

import numpy as np
import torch

from corrtrack.commands.base import BaseCommand
from corrtrack.core.config import RunConfig
from corrtrack.core.exceptions import ConfigurationError, StorageError
from corrtrack.core.protocols import CommandResult
from corrtrack.geometry.interpolation import SamplingMode
from corrtrack.model.network import CorrespondenceNet, forward_batch, init_params
from corrtrack.scenes.generator import generate_scene
from corrtrack.scenes.models import SceneSpec
from corrtrack.scenes.renderer import render_all
from corrtrack.scenes.sources import derive_seed
from corrtrack.tracking.tracker import correspond

LOG = logging.getLogger(__name__)

RESULT_NAME = "bench.json"


def time_batch(
    model: CorrespondenceNet,
    images1: np.ndarray,
    images2: np.ndarray,
    queries: np.ndarray,
    sampling: SamplingMode,
) -> float:
    """Seconds for one forward pass of the batch plus argmax matching of the queries."""
    started = time.perf_counter()
    with torch.no_grad():
        outputs = forward_batch(model, images1, images2)
        for out, pixels in zip(outputs, queries):
            correspond(out.desc1, out.desc2, pixels, sampling)
    return time.perf_counter() - started


class BenchCommand(BaseCommand):
    """Times the network on a batch of pairs from a freshly generated scene."""

    @property
    def name(self) -> str:
        return "bench"

    @property
    def description(self) -> str:
        return "Report wall-clock time per batch of image pairs including query tracking"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--checkpoint",
            type=Path,
            help="weights to time (default: freshly initialised weights)",
        )
        parser.add_argument("--repeats", type=int, help="timed repetitions")

    def run(self, config: RunConfig, args: argparse.Namespace) -> CommandResult:
        plugin = self.load_plugin_config()
        batch_size = int(plugin.get("batch_size", 16))
        num_queries = int(plugin.get("num_queries", 5))
        repeats = int(args.repeats or plugin.get("repeats", 5))
        warmup = int(plugin.get("warmup", 1))
        if batch_size < 1 or num_queries < 1 or repeats < 1 or warmup < 0:
            raise ConfigurationError("bench needs batch_size, num_queries and repeats >= 1")

        seed = config.runtime.seed
        try:
            spec = SceneSpec(seed=derive_seed(seed, 0, 0), **plugin.get("scene", {}))
        except TypeError as exc:
            raise ConfigurationError(f"Invalid bench scene: {exc}") from exc
        frames = render_all(generate_scene(spec))
        rng = np.random.default_rng(seed)
        first = rng.integers(0, spec.num_frames - 1, size=batch_size)
        images1 = np.stack([frames[t].image for t in first])
        images2 = np.stack([frames[t + 1].image for t in first])
        queries = np.stack(
            [
                np.stack(
                    [
                        rng.uniform(0, spec.width - 1, num_queries),
                        rng.uniform(0, spec.height - 1, num_queries),
                    ],
                    axis=-1,
                )
                for _ in range(batch_size)
            ]
        )

        if args.checkpoint is not None:
            model = self.load_model(config, args.checkpoint)
        else:
            model = init_params(seed, config.model)
        model.eval()

        sampling = config.tracking.sampling
        for _ in range(warmup):
            time_batch(model, images1, images2, queries, sampling)
        timings = [time_batch(model, images1, images2, queries, sampling) for _ in range(repeats)]

        result: dict[str, Any] = {
            "batch_size": batch_size,
            "num_queries": num_queries,
            "repeats": repeats,
            "resolution": [spec.width, spec.height],
            "arch": config.model.to_dict(),
            "torch_threads": torch.get_num_threads(),
            "seconds": timings,
            "mean_seconds": float(np.mean(timings)),
            "std_seconds": float(np.std(timings)),
            "min_seconds": float(np.min(timings)),
        }
        out_path = self.output_dir(config) / RESULT_NAME
        try:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(json.dumps(result, indent=2, sort_keys=True))
        except OSError as exc:
            raise StorageError(f"Failed to write {out_path}: {exc}") from exc

        LOG.info(
            "Batch of %d pairs: %.1f ms (+/- %.1f) over %d repeats",
            batch_size,
            1000 * result["mean_seconds"],
            1000 * result["std_seconds"],
            repeats,
        )
        return self.result(
            [out_path],
            f"{1000 * result['mean_seconds']:.1f} ms per batch of {batch_size} pairs",
            mean_seconds=result["mean_seconds"],
            std_seconds=result["std_seconds"],
        )
