"""Worker-count resolution and an order-preserving thread pool map.

Results always come back in submission order, so aggregates built from them
do not depend on how many workers ran.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "INDIVAR_WORKERS"


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: INDIVAR_WORKERS wins, then the request, then logical cores"""
    load_dotenv()
    env_value = os.environ.get(WORKERS_ENV)
    if env_value:
        try:
            workers = int(env_value)
            if workers >= 1:
                return workers
            logger.warning(f"[WORKERS] Ignoring {WORKERS_ENV}={env_value!r} (must be >= 1)")
        except ValueError:
            logger.warning(f"[WORKERS] Ignoring non-integer {WORKERS_ENV}={env_value!r}")
    if requested is not None and requested >= 1:
        return int(requested)
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """Apply fn to every item, concurrently when workers > 1, keeping input order"""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as executor:
        return list(executor.map(fn, items))
