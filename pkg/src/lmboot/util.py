"""Shared helpers: stable per-item random streams and a bounded worker map."""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def derive_rng(seed: int, item_id: str) -> random.Random:
    """Random stream keyed on (seed, item id).

    sha256-based so the stream is identical across runs, platforms and
    worker processes; parallel fan-out therefore cannot change any output.
    """
    digest = hashlib.sha256(f"{seed}\x00{item_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def parallel_map(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """Map fn over items preserving input order; jobs > 1 fans out to processes.

    fn must be picklable (module-level function or functools.partial over one).
    """
    if jobs <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunk = max(1, len(items) // (jobs * 4))
        return list(pool.map(fn, items, chunksize=chunk))


def fmt6(value: float) -> str:
    return f"{value:.6f}"


def read_lines(path) -> Iterable[tuple[int, str]]:
    """Yield (1-based line number, stripped line), skipping blank lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line.strip():
                yield lineno, line
