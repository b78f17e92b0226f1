"""Ordered fan-out over fixed work chunks.

Work is always cut into the same chunks whatever the worker count, and results
come back in chunk order, so callers get identical output for 1 or N workers.
"""
import logging
from multiprocessing.pool import ThreadPool
from typing import Callable, List, Optional, Sequence, TypeVar

from misre.core.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def chunk_ranges(total: int, size: int) -> List[range]:
    size = max(1, int(size))
    return [range(start, min(start + size, total)) for start in range(0, total, size)]


def resolve_workers(workers: Optional[int] = None) -> int:
    if workers is None:
        return settings.effective_workers
    return max(1, int(workers))


def ordered_map(func: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """map() that may run on a thread pool; result order follows `items`."""
    n_workers = min(resolve_workers(workers), max(1, len(items)))
    if n_workers == 1:
        return [func(item) for item in items]
    # numpy releases the GIL inside matmul/partition, which is where the time goes.
    with ThreadPool(processes=n_workers) as pool:
        return pool.map(func, items)
