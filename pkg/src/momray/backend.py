"""Kernel backend selection and the worker pool.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Set ``MRT_PURE_PYTHON=1`` to force the fallback.
``MRT_THREADS`` caps the number of worker threads (0 or unset = one per CPU).
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from . import _kernels_py

__all__ = ["kernels", "NAME", "get_kernels", "worker_count", "map_chunks"]


def _load_compiled():
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = None if os.environ.get("MRT_PURE_PYTHON", "") not in ("", "0") else _load_compiled()
kernels = _compiled if _compiled is not None else _kernels_py
NAME = "compiled" if _compiled is not None else "python"


def get_kernels(name=None):
    """Kernel module by name ("compiled" or "python"); ``None`` gives the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        mod = _load_compiled()
        if mod is None:
            raise RuntimeError("compiled kernels are not built")
        return mod
    raise ValueError(f"unknown backend {name!r}")


_thread_override = None


def set_threads(n):
    """Override MRT_THREADS for this process (None restores the environment value)."""
    global _thread_override
    _thread_override = n


def worker_count():
    n = _thread_override
    if n is None:
        try:
            n = int(os.environ.get("MRT_THREADS", "0"))
        except ValueError:
            n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def map_chunks(func, n_items, min_chunk=64):
    """Apply ``func(slice)`` over contiguous chunks of ``range(n_items)``.

    Results come back in chunk order so reductions downstream are
    independent of the number of workers.
    """
    workers = worker_count()
    if workers == 1 or n_items <= min_chunk:
        return [func(slice(0, n_items))]
    nchunks = min(workers * 4, max(1, n_items // min_chunk))
    bounds = [n_items * i // nchunks for i in range(nchunks + 1)]
    slices = [slice(bounds[i], bounds[i + 1]) for i in range(nchunks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, slices))
