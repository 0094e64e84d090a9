"""Ordered map over independent tasks, optionally in worker processes."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

_shared = None


def _install(shared):
    global _shared
    _shared = shared


def _call(args):
    fn, task = args
    return fn(_shared, task)


def parallel_map(fn, tasks, workers: int = 1, shared=None) -> list:
    """``[fn(shared, t) for t in tasks]``, fanned out to ``workers`` processes when > 1.

    ``shared`` is sent to each worker once rather than with every task.
    Results come back in task order, so output never depends on scheduling.
    """
    tasks = list(tasks)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or len(tasks) <= 1:
        return [fn(shared, t) for t in tasks]
    with ProcessPoolExecutor(
        max_workers=min(workers, len(tasks)), initializer=_install, initargs=(shared,)
    ) as ex:
        return list(ex.map(_call, [(fn, t) for t in tasks]))
