from concurrent.futures import ProcessPoolExecutor


def pmap(fn, tasks, workers=1):
    """Ordered map; a process pool when workers > 1. Output order never depends on workers."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))
