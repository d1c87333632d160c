"""Wall-clock scaling benchmarks for the four attention kernels.

Each grid point runs the dense and landmark affinity kernels and the
dense and sparse aggregation kernels on seeded random unit features,
recording the median wall time over the requested repetitions together
with the instrumented MAC counts.  Oversized points that fail to
allocate are skipped with a record rather than aborting the run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attention import affinity_dense, affinity_laa, sample_landmarks
from .counters import MacCounter
from .exceptions import ParameterError
from .linalg import l2_normalize_rows
from .neighbors import aggregate_dense, aggregate_sparse, reciprocal_mask, rns_weights, topk_mask

KERNELS = ("dense_affinity", "laa_affinity", "dense_aggregate", "sparse_aggregate")

STATUS_OK = "ok"
STATUS_SKIPPED = "skipped"


@dataclass
class BenchRecord:
    n: int
    d: int
    l: int
    k: int
    reps: int
    status: str = STATUS_OK
    macs: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)


def _median_time(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def bench_scaling(grid, reps: int = 3, seed: int = 0) -> list[BenchRecord]:
    """Run the kernel suite over a grid of (n, d, l, k) points.

    Repetitions run sequentially per kernel; only the kernel call itself
    is timed.  MAC counts come from one instrumented run per kernel.
    """
    grid = list(grid)
    if not grid:
        raise ParameterError("benchmark grid must be non-empty")
    if reps < 1:
        raise ParameterError(f"reps must be >= 1, got {reps}")

    records = []
    for n, d, l, k in grid:
        record = BenchRecord(n=int(n), d=int(d), l=int(l), k=int(k), reps=int(reps))
        try:
            rng = np.random.default_rng(seed)
            z = l2_normalize_rows(rng.normal(size=(n, d)))
            landmarks = sample_landmarks(n, l, seed)

            counter = MacCounter()
            dense = affinity_dense(z, z, scale=True, counter=counter)
            record.seconds["dense_affinity"] = _median_time(
                lambda: affinity_dense(z, z, scale=True), reps
            )

            laa = affinity_laa(z, z, landmarks, scale=True, counter=counter)
            record.seconds["laa_affinity"] = _median_time(
                lambda: affinity_laa(z, z, landmarks, scale=True), reps
            )

            # Dense aggregation uses a full softmax of the dense affinity;
            # the softmax itself is not part of the timed kernel.
            shifted = dense.values - dense.values.max(axis=1, keepdims=True)
            expd = np.exp(shifted)
            soft = expd / expd.sum(axis=1, keepdims=True)
            aggregate_dense(soft, z, counter=counter)
            record.seconds["dense_aggregate"] = _median_time(
                lambda: aggregate_dense(soft, z), reps
            )

            att = rns_weights(laa, reciprocal_mask(topk_mask(laa, min(k, n))))
            aggregate_sparse(att, z, counter=counter)
            record.seconds["sparse_aggregate"] = _median_time(
                lambda: aggregate_sparse(att, z), reps
            )

            record.macs = {kernel: counter.get(kernel) for kernel in KERNELS}
        except MemoryError:
            record.status = STATUS_SKIPPED
            record.macs = {}
            record.seconds = {}
        records.append(record)
    return records


CSV_HEADER = (
    "n,d,l,k,reps,status,"
    "dense_affinity_macs,laa_affinity_macs,dense_aggregate_macs,sparse_aggregate_macs,"
    "dense_affinity_seconds,laa_affinity_seconds,dense_aggregate_seconds,sparse_aggregate_seconds"
)

TIMING_COLUMNS = tuple(f"{kernel}_seconds" for kernel in KERNELS)


def records_to_csv(records: list[BenchRecord]) -> str:
    """Serialize benchmark records; floats use repr so parsing round-trips."""
    lines = [CSV_HEADER]
    for r in records:
        mac_cells = [str(r.macs.get(kernel, "")) for kernel in KERNELS]
        sec_cells = [repr(r.seconds[kernel]) if kernel in r.seconds else "" for kernel in KERNELS]
        lines.append(",".join([str(r.n), str(r.d), str(r.l), str(r.k), str(r.reps), r.status]
                              + mac_cells + sec_cells))
    return "\n".join(lines) + "\n"


def records_from_csv(text: str) -> list[BenchRecord]:
    lines = [line for line in text.strip().splitlines() if line]
    if not lines or lines[0] != CSV_HEADER:
        raise ParameterError("unrecognized benchmark CSV header")
    records = []
    for line in lines[1:]:
        cells = line.split(",")
        n, d, l, k, reps = (int(c) for c in cells[:5])
        status = cells[5]
        record = BenchRecord(n=n, d=d, l=l, k=k, reps=reps, status=status)
        if status == STATUS_OK:
            record.macs = {kernel: int(cells[6 + i]) for i, kernel in enumerate(KERNELS)}
            record.seconds = {kernel: float(cells[10 + i]) for i, kernel in enumerate(KERNELS)}
        records.append(record)
    return records
