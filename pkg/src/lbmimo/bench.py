"""Micro-benchmarks of the transmitter search and the receivers against stream count.

Timings are informational: the search grows super-polynomially with the
number of streams, the modulo receiver linearly and the ML receiver by at
least a factor ``M`` per added stream.
"""

import time

import numpy as np

from .channel import substream
from .experiments import ResultRecord, ResultRow
from .lattice import DEFAULT_RADIUS, QAM4, perturb_batch, qam_modulate
from .link import receive_lb, receive_ml


def _problems(rng, streams, count):
    h = (rng.standard_normal((count, streams, streams)) + 1j * rng.standard_normal((count, streams, streams))) / np.sqrt(2)
    s = qam_modulate(rng.integers(0, 2, (count, 2 * streams)))
    return h, np.linalg.inv(h), s


def _best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_receivers(dims=(1, 2, 3, 4), vectors=20000, repeats=3, seed=0):
    """Seconds per received vector for the modulo and ML receivers.

    Each call processes a stack of ``vectors`` so that the per-vector work,
    not Python call overhead, is what gets timed.
    """
    rows = []
    for n in dims:
        h, g, s = _problems(substream(seed, n), n, vectors)
        y = np.einsum("tij,tj->ti", h, s)
        gamma = np.ones(vectors)
        sec_lb = _best_of(lambda: receive_lb(y, gamma), repeats) / vectors
        sec_ml = _best_of(lambda: receive_ml(y, h), repeats) / vectors
        rows.append(ResultRow(f"bench[L={n}]", "receive_lb", None, "seconds_per_vector", sec_lb, vectors, None, seed))
        rows.append(ResultRow(f"bench[L={n}]", "receive_ml", None, "seconds_per_vector", sec_ml, vectors, None, seed))
    return rows


def bench_perturb_scaling(dims=(1, 2, 3, 4), radius=DEFAULT_RADIUS, problems=2000, repeats=3, seed=0):
    """Seconds per perturbation search for each stream count in ``dims``.

    Problems are solved in one compiled batch so the search itself dominates.
    """
    rows = []
    for n in dims:
        h, g, s = _problems(substream(seed, n), n, problems)
        perturb_batch(s[:1], g[:1], QAM4, radius)  # JIT warm-up
        sec = _best_of(lambda: perturb_batch(s, g, QAM4, radius), repeats) / problems
        rows.append(ResultRow(f"bench[L={n}]", "perturb", None, "seconds_per_call", sec, problems, None, seed))
    return rows


def run_bench(dims=(1, 2, 3, 4), radius=DEFAULT_RADIUS, seed=0):
    rows = bench_perturb_scaling(dims, radius, seed=seed) + bench_receivers(dims, seed=seed)
    meta = {"kind": "bench", "dims": list(dims), "radius": radius, "seed": seed}
    return ResultRecord(meta, rows)
