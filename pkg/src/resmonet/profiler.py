"""Latency (RTE) and peak-memory (MMU) measurement of a model runner.

RTE protocol: within each run the runner is invoked repeatedly for the run
duration, recording each task's wall-clock elapsed time (monotonic
``perf_counter``); the reported RTE is the mean over all samples of all
runs, with per-run means and counts retained.  MMU is the peak resident
set observed while the runner executes, in MB (10^6 bytes), sampled from a
watcher thread plus a reading after every task.  Numbers are
environment-relative, so every report embeds an environment note.
"""

from __future__ import annotations

import platform
import threading
import time
from dataclasses import dataclass, field

from .errors import ConfigError, MeasurementError

try:
    import psutil
    _PROCESS = psutil.Process()
except Exception:  # pragma: no cover - psutil is a hard dependency normally
    _PROCESS = None

MB = 1_000_000.0


def rss_bytes() -> int | None:
    """Current resident set size, or None when the platform offers none."""
    if _PROCESS is None:
        return None
    try:
        return int(_PROCESS.memory_info().rss)
    except Exception:  # pragma: no cover - process gone / unsupported OS
        return None


def environment_note() -> str:
    res = time.get_clock_info("perf_counter").resolution
    return (f"{platform.system()} {platform.machine()}, "
            f"python {platform.python_version()}, "
            f"perf_counter resolution {res:g}s")


@dataclass(frozen=True)
class RteResult:
    mean_seconds: float
    per_run_means: list[float]
    per_run_counts: list[int]
    per_run_totals: list[float]
    run_duration: float

    @property
    def total_samples(self) -> int:
        return sum(self.per_run_counts)


@dataclass(frozen=True)
class MmuResult:
    supported: bool
    peak_megabytes: float | None
    baseline_megabytes: float | None
    samples: int
    note: str = ""

    @property
    def delta_megabytes(self) -> float | None:
        if not self.supported:
            return None
        return self.peak_megabytes - self.baseline_megabytes


@dataclass
class ProfileReport:
    rte_seconds: float
    rte_samples: int
    per_run_means: list[float]
    per_run_counts: list[int]
    runs: int
    run_duration: float
    mmu_megabytes: float | None
    mmu_baseline_megabytes: float | None
    mmu_supported: bool
    sampling_period: float
    environment: str = field(default_factory=environment_note)

    def summary(self) -> str:
        lines = [
            f"RTE: {self.rte_seconds:.6f} s mean over {self.rte_samples} samples "
            f"({self.runs} runs x {self.run_duration:g} s)",
            "per-run means: " + ", ".join(f"{m:.6f}" for m in self.per_run_means),
            "per-run samples: " + ", ".join(str(c) for c in self.per_run_counts),
        ]
        if self.mmu_supported:
            lines.append(f"MMU: peak {self.mmu_megabytes:.2f} MB "
                         f"(baseline {self.mmu_baseline_megabytes:.2f} MB, "
                         f"sampling period {self.sampling_period:g} s)")
        else:
            lines.append("MMU: unsupported on this platform")
        lines.append(f"environment: {self.environment}")
        return "\n".join(lines)


def _timed_run(runner, duration: float) -> tuple[float, int]:
    """One run: invoke until `duration` elapses; returns (time sum, count)."""
    total = 0.0
    count = 0
    start = time.perf_counter()
    while time.perf_counter() - start < duration:
        t0 = time.perf_counter()
        runner()
        total += time.perf_counter() - t0
        count += 1
    return total, count


def measure_rte(runner, runs: int = 5, run_duration: float = 10.0) -> RteResult:
    """Mean per-recognition latency over `runs` timed runs."""
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")
    if run_duration < 0:
        raise ConfigError(f"run_duration must be >= 0, got {run_duration}")
    totals, counts = [], []
    for i in range(runs):
        total, count = _timed_run(runner, run_duration)
        if count == 0:
            raise MeasurementError(f"run {i + 1}: no recognitions completed "
                                   f"within {run_duration:g} s")
        totals.append(total)
        counts.append(count)
    return RteResult(
        mean_seconds=sum(totals) / sum(counts),
        per_run_means=[t / c for t, c in zip(totals, counts)],
        per_run_counts=counts,
        per_run_totals=totals,
        run_duration=run_duration,
    )


class _MemoryWatcher:
    """Samples process RSS on a background thread; peak folded with the
    readings the caller reports via observe()."""

    def __init__(self, period: float):
        self.period = period
        self.peak = -1
        self.samples = 0
        self._stop = threading.Event()
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._loop, daemon=True)

    def _loop(self):
        while not self._stop.is_set():
            self.observe()
            self._stop.wait(self.period)

    def observe(self):
        rss = rss_bytes()
        if rss is not None:
            with self._lock:
                self.samples += 1
                if rss > self.peak:
                    self.peak = rss

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()


def measure_mmu(runner, sampling_period: float = 0.01,
                duration: float = 2.0) -> MmuResult:
    """Peak resident memory while the runner executes, in MB (10^6 bytes).

    When the platform exposes no resident-set reading the result says so
    explicitly (``supported=False``); a peak of 0 is never reported.
    """
    if sampling_period <= 0:
        raise ConfigError(f"sampling_period must be > 0, got {sampling_period}")
    baseline = rss_bytes()
    if baseline is None:
        return MmuResult(False, None, None, 0,
                         note="resident-memory reading unavailable on this platform")
    with _MemoryWatcher(sampling_period) as watcher:
        start = time.perf_counter()
        while True:
            runner()
            watcher.observe()
            if time.perf_counter() - start >= duration:
                break
    return MmuResult(True, watcher.peak / MB, baseline / MB, watcher.samples)


def profile_model(runner, runs: int = 5, run_duration: float = 10.0,
                  sampling_period: float = 0.01) -> ProfileReport:
    """Full protocol: timed RTE runs with the memory watcher active."""
    baseline = rss_bytes()
    supported = baseline is not None
    if supported:
        with _MemoryWatcher(sampling_period) as watcher:
            rte = measure_rte(runner, runs, run_duration)
        peak_mb = watcher.peak / MB if watcher.peak >= 0 else None
        supported = peak_mb is not None
    else:
        rte = measure_rte(runner, runs, run_duration)
        peak_mb = None
    return ProfileReport(
        rte_seconds=rte.mean_seconds,
        rte_samples=rte.total_samples,
        per_run_means=rte.per_run_means,
        per_run_counts=rte.per_run_counts,
        runs=runs,
        run_duration=run_duration,
        mmu_megabytes=peak_mb,
        mmu_baseline_megabytes=(baseline / MB) if baseline is not None else None,
        mmu_supported=supported,
        sampling_period=sampling_period,
    )
