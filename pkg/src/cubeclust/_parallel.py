from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def pmap(fn, items, workers: int = 1) -> list:
    """Ordered map, threaded when ``workers > 1``. Output order never depends on workers."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def batches(seq, workers: int, per_worker: int = 4) -> list:
    seq = list(seq)
    if not seq:
        return []
    n = max(1, min(len(seq), workers * per_worker))
    size = -(-len(seq) // n)
    return [seq[i : i + size] for i in range(0, len(seq), size)]
