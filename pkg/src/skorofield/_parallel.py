"""Replicate-chunk parallelism with order-independent reduction.

Chunk boundaries are fixed by the caller (not by the worker count), every
chunk derives its randomness from (master_seed, replicate_index), and the
reduction is a sum of integer counts, so any worker count yields identical
results.
"""

from __future__ import annotations

import multiprocessing


def map_chunks(fn, chunks, workers: int = 1):
    if workers <= 1 or len(chunks) <= 1:
        return [fn(chunk) for chunk in chunks]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(min(workers, len(chunks))) as pool:
        return pool.map(fn, chunks)
