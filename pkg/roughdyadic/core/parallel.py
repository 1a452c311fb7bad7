import asyncio
import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")

# spawn-key stream reserved for per-path seeds; functional streams start at 1
PATH_STREAM = 0


@dataclass(frozen=True)
class Chunk:
    index: int
    start: int
    size: int
    seed: int
    stream: int

    def rng(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, self.index))
        return np.random.Generator(np.random.Philox(seq))


def plan_chunks(samples: int, chunk_size: int, seed: int, stream: int = 1) -> list[Chunk]:
    """Split `samples` into fixed-size chunks; the split never depends on the thread count."""
    chunks = []
    for index, start in enumerate(range(0, samples, chunk_size)):
        size = min(chunk_size, samples - start)
        chunks.append(Chunk(index=index, start=start, size=size, seed=seed, stream=stream))
    return chunks


def path_seeds(seed: int, count: int) -> np.ndarray:
    """Per-path 64-bit seeds shared by every path-based check, so samples are paired."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(PATH_STREAM,))
    return seq.generate_state(count, dtype=np.uint64)


async def _gather_chunks(fn: Callable[[T], object], items: Sequence[T], threads: int) -> list:
    loop = asyncio.get_running_loop()
    sem = asyncio.Semaphore(threads)

    with ThreadPoolExecutor(max_workers=threads) as pool:

        async def run_one(item: T) -> object:
            async with sem:
                return await loop.run_in_executor(pool, fn, item)

        # gather keeps submission order, so reductions stay deterministic
        return await asyncio.gather(*(run_one(item) for item in items))


def map_chunks(fn: Callable[[T], object], items: Sequence[T], threads: int = 1) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("Running %d chunks on %d threads", len(items), threads)
    return list(asyncio.run(_gather_chunks(fn, items, threads)))
