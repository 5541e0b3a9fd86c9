"""Deterministic fan-out over worker threads."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Sequence, TypeVar

LOG = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Apply ``fn`` to every item and return results in input order.

    With ``workers <= 1`` items run sequentially in the calling thread.
    Exceptions raised by ``fn`` propagate after all submitted work finishes.
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    results: dict[int, R] = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {executor.submit(fn, item): idx for idx, item in enumerate(items)}
        for future in as_completed(future_to_index):
            results[future_to_index[future]] = future.result()
    return [results[idx] for idx in range(len(items))]
