"""Multiply-accumulate instrumentation for the attention kernels.

A MAC (one multiply plus one add) is the counting unit throughout the
package; reported FLOPs are always 2x the MAC count.  Kernels that accept
a counter record the work they actually perform, so sparse kernels report
their true support sizes rather than worst-case bounds.
"""

from __future__ import annotations


class MacCounter:
    """Tallies multiply-accumulate operations keyed by kernel name."""

    def __init__(self):
        self.counts: dict[str, int] = {}

    def add(self, kernel: str, macs: int) -> None:
        self.counts[kernel] = self.counts.get(kernel, 0) + int(macs)

    def get(self, kernel: str) -> int:
        return self.counts.get(kernel, 0)

    def total(self) -> int:
        return sum(self.counts.values())

    def reset(self) -> None:
        self.counts.clear()

    def __repr__(self) -> str:
        items = ", ".join(f"{k}={v}" for k, v in sorted(self.counts.items()))
        return f"MacCounter({items})"
