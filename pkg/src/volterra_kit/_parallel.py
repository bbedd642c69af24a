from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

# Work is always split into fixed blocks; the worker count only changes scheduling,
# never the arithmetic, so results are identical for any number of threads.
PATH_BLOCK = 4096


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def path_blocks(n_paths: int, block: int = PATH_BLOCK) -> list[slice]:
    return [slice(a, min(a + block, n_paths)) for a in range(0, n_paths, block)]
