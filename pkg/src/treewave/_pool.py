"""Thread-pool helper shared by the peeling stages and the experiment ensembles."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def threads():
    """Worker cap from TREEWAVE_THREADS (unset or 0 means serial)."""
    try:
        return max(1, int(os.environ.get("TREEWAVE_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    """Ordered map, concurrent when TREEWAVE_THREADS > 1."""
    items = list(items)
    n = threads()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(min(n, len(items))) as pool:
        return list(pool.map(fn, items))
