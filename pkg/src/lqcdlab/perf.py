"""Performance model: arithmetic intensity, roofline, bandwidth accounting.

The kernel moves, per site and rhs, 168 complex values that scale with b and
114 that do not (gauge links and clover blocks are shared across the block),
at 16 bytes each, while doing 2574 flops.  Everything here is small exact
arithmetic on those constants plus a STREAM-style micro-benchmark whose
kernels are verified after timing so the work cannot be optimized away.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import numpy as np

from .dirac import BYTES_PER_VALUE, FLOPS_PER_SITE_RHS, VALUES_PER_SITE_FIXED, VALUES_PER_SITE_RHS

STREAM_KINDS = ("copy", "scale", "add", "triad")
STREAM_SCALAR = 3.0
DEFAULT_LLC_BYTES = 32 * 1024 * 1024


@dataclass(frozen=True)
class RooflineInputs:
    stream_triad_bw: float
    stream_copy_bw: float = 0.0
    measured_perf: float = 0.0
    b: int = 1

    def __post_init__(self) -> None:
        if self.stream_triad_bw <= 0:
            raise ValueError("stream_triad_bw must be positive")
        if self.stream_copy_bw < 0 or self.measured_perf < 0:
            raise ValueError("bandwidth and performance must be nonnegative")
        if self.b < 1:
            raise ValueError("b must be >= 1")


@dataclass(frozen=True)
class CounterSample:
    l2_refill: int
    l2_writeback: int
    cycles: int
    frequency: float
    cache_line: int = 256
    ranks: int = 1

    def __post_init__(self) -> None:
        if self.l2_refill < 0 or self.l2_writeback < 0:
            raise ValueError("counters must be nonnegative")
        if self.cycles <= 0:
            raise ValueError("cycles must be positive")
        if self.frequency <= 0 or self.cache_line <= 0 or self.ranks < 1:
            raise ValueError("frequency, cache_line, ranks must be positive")


def arithmetic_intensity(b: int) -> Fraction:
    """Flops per byte moved for a b-rhs operator application."""
    if b < 1:
        raise ValueError("b must be >= 1")
    return Fraction(
        FLOPS_PER_SITE_RHS * b,
        (VALUES_PER_SITE_RHS * b + VALUES_PER_SITE_FIXED) * BYTES_PER_VALUE,
    )


def theoretical_perf(bw: float, b: int) -> float:
    """Bandwidth-bound performance ceiling in flops/second."""
    if bw <= 0:
        raise ValueError("bandwidth must be positive")
    return bw * float(arithmetic_intensity(b))


def arch_efficiency(measured: float, theoretical: float) -> float:
    if theoretical <= 0:
        raise ValueError("theoretical performance must be positive")
    if measured < 0:
        raise ValueError("measured performance must be nonnegative")
    return measured / theoretical


def effective_bandwidth(sample: CounterSample) -> float:
    """Bytes/second implied by cache refill and writeback counters."""
    moved = (sample.l2_refill + sample.l2_writeback) * sample.cache_line
    return moved * sample.frequency / sample.cycles * sample.ranks


def read_write_ratio(b: int) -> Fraction:
    """Read-to-write traffic ratio of the operator, (204 b + 330) : 204 b."""
    if b < 1:
        raise ValueError("b must be >= 1")
    return Fraction(204 * b + 330, 204 * b)


# -- STREAM micro-benchmark -------------------------------------------------


@dataclass
class StreamResult:
    kind: str
    bandwidth: float
    best_seconds: float
    times: list[float]
    bytes_per_rep: int
    threads: int
    verified: bool

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "bandwidth_bytes_per_s": self.bandwidth,
            "bandwidth_gb_per_s": self.bandwidth / 1e9,
            "best_seconds": self.best_seconds,
            "times": self.times,
            "bytes_per_rep": self.bytes_per_rep,
            "threads": self.threads,
            "verified": self.verified,
        }


def _stream_slices(n: int, threads: int) -> list[slice]:
    bounds = np.linspace(0, n, threads + 1).astype(np.int64)
    return [slice(int(bounds[i]), int(bounds[i + 1])) for i in range(threads)]


def stream_bench(
    kind: str,
    array_bytes: int,
    repetitions: int = 10,
    threads: int = 1,
    llc_bytes: int = DEFAULT_LLC_BYTES,
) -> StreamResult:
    """Best-of-N bandwidth for one STREAM kernel, with post-run verification.

    copy  c = a           (2 arrays moved)
    scale b = q*c         (2)
    add   c = a + b       (3)
    triad a = b + q*c     (3)
    """
    if kind not in STREAM_KINDS:
        raise ValueError(f"unknown stream kind {kind!r}")
    if repetitions < 1 or threads < 1:
        raise ValueError("repetitions and threads must be >= 1")
    if array_bytes < 4 * llc_bytes:
        raise ValueError(
            f"array_bytes {array_bytes} below 4x last-level cache {llc_bytes}; "
            "results would measure cache, not memory"
        )
    n = array_bytes // 8
    a = np.full(n, 1.0)
    b = np.full(n, 2.0)
    c = np.full(n, 4.0)
    q = STREAM_SCALAR

    def body(sl: slice) -> None:
        if kind == "copy":
            c[sl] = a[sl]
        elif kind == "scale":
            b[sl] = q * c[sl]
        elif kind == "add":
            c[sl] = a[sl] + b[sl]
        else:
            a[sl] = b[sl] + q * c[sl]

    slices = _stream_slices(n, threads)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    times = []
    try:
        for _ in range(repetitions):
            t0 = time.perf_counter()
            if pool is None:
                body(slices[0])
            else:
                list(pool.map(body, slices))
            times.append(time.perf_counter() - t0)
    finally:
        if pool is not None:
            pool.shutdown()

    if kind == "copy":
        ok = bool(np.array_equal(c, a))
    elif kind == "scale":
        ok = bool(np.array_equal(b, q * np.full(n, 4.0)))
    elif kind == "add":
        ok = bool(np.array_equal(c, np.full(n, 3.0)))
    else:
        ok = bool(np.array_equal(a, np.full(n, 2.0 + q * 4.0)))
    if not ok:
        raise RuntimeError(f"stream {kind} kernel produced wrong values")

    n_arrays = 2 if kind in ("copy", "scale") else 3
    bytes_per_rep = n_arrays * n * 8
    best = min(times)
    return StreamResult(
        kind=kind,
        bandwidth=bytes_per_rep / best,
        best_seconds=best,
        times=times,
        bytes_per_rep=bytes_per_rep,
        threads=threads,
        verified=True,
    )


# -- roofline report --------------------------------------------------------

ROOFLINE_COLUMNS = ("b", "layout", "ai", "gflops", "theor_gflops", "arch_eff")


@dataclass
class RooflineRow:
    b: int
    layout: int
    ai: float
    gflops: float
    theor_gflops: float
    arch_eff: float


@dataclass
class RooflineReport:
    rows: list[RooflineRow]
    warnings: list[str] = dc_field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(ROOFLINE_COLUMNS)
        for r in self.rows:
            writer.writerow([r.b, r.layout, repr(r.ai), repr(r.gflops), repr(r.theor_gflops), repr(r.arch_eff)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows": [r.__dict__ for r in self.rows],
                "warnings": self.warnings,
            },
            indent=2,
        )


def roofline_report(runs, inputs: RooflineInputs) -> RooflineReport:
    """Arrange kernel perf records against the bandwidth ceiling.

    Each run needs b, layout, and gflops; dicts and perf-record objects both
    work.  Efficiencies above 1 contradict the memory-bound model and are
    reported as warnings rather than clipped.
    """
    rows = []
    warnings = []
    for run in runs:
        if isinstance(run, dict):
            b, layout, gflops = int(run["b"]), int(run["layout"]), float(run["gflops"])
        else:
            b, layout, gflops = int(run.b), int(run.layout), float(run.gflops)
        theor = theoretical_perf(inputs.stream_triad_bw, b) / 1e9
        eff = arch_efficiency(gflops, theor)
        rows.append(RooflineRow(b, layout, float(arithmetic_intensity(b)), gflops, theor, eff))
        if eff > 1.0:
            warnings.append(
                f"arch_eff {eff:.3f} > 1 for b={b} layout={layout}: "
                "measured exceeds the bandwidth-bound model"
            )
    return RooflineReport(rows=rows, warnings=warnings)
