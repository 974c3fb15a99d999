"""Deterministic discrete-event kernel.

Events are totally ordered by ``(time, seq)`` where ``seq`` is a counter
assigned at scheduling, so same-instant events fire in the order they were
scheduled. Each node owns one CPU modelled as a single FIFO server; the
kernel records every task so utilization and memory timelines can be
derived after the run.
"""

from __future__ import annotations

import heapq
import itertools
import math
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

MESSAGE = "message"
CPU_COMPLETE = "cpu-complete"
TIMER = "timer"


class KernelError(RuntimeError):
    pass


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    target: str
    kind: str
    payload: Any = None


@dataclass(frozen=True)
class CpuTask:
    enqueued: float
    start: float
    end: float


@dataclass(frozen=True)
class CpuProfile:
    """CPU service times in simulated seconds."""

    cost_endorse: float = 0.3
    cost_validate_per_tx: float = 0.1
    cost_validate_per_block: float = 0.0
    cost_order_per_tx: float = 0.05
    cost_client_per_response: float = 0.01

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")


@dataclass(frozen=True)
class MemoryModel:
    """Reported-only memory level: a per-role base plus a per-queued-task step."""

    base: dict = field(default_factory=lambda: {
        "endorser": 0.60, "committer": 0.57, "orderer": 0.57, "client": 0.50,
    })
    per_queued_task: float = 0.0005
    ceiling: float = 1.0

    def level(self, role: str, queued: int) -> float:
        return min(self.ceiling, self.base.get(role, 0.5) + self.per_queued_task * queued)


@dataclass
class UtilizationTimeline:
    width: float
    horizon: float
    busy: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    def peak(self, node: str) -> float:
        return max((f for _, f in self.busy.get(node, [])), default=0.0)


def rng_for(seed: int, stream: str) -> np.random.Generator:
    """Independent generator for one subsystem, derived from the run seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(stream.encode()),))
    return np.random.Generator(np.random.PCG64(ss))


class Kernel:
    def __init__(self) -> None:
        self.now = 0.0
        self._queue: list[tuple[float, int, Event]] = []
        self._seq = itertools.count()
        self._handlers: dict[str, Callable[[Event], None]] = {}
        self._cpu_tail: dict[str, float] = defaultdict(float)
        self._cancelled: set[int] = set()
        self.tasks: dict[str, list[CpuTask]] = defaultdict(list)
        self.dispatched = 0

    def on(self, kind: str, handler: Callable[[Event], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, time: float, target: str, kind: str, payload: Any = None) -> Event:
        if time < self.now:
            raise KernelError(f"event at t={time} scheduled in the past (now={self.now})")
        event = Event(time, next(self._seq), target, kind, payload)
        heapq.heappush(self._queue, (time, event.seq, event))
        return event

    def cancel(self, event: Event) -> None:
        """Drop a scheduled event; cancelled events never fire or move the clock."""
        self._cancelled.add(event.seq)

    def occupy_cpu(self, node: str, duration: float, payload: Any = None) -> float:
        """Queue a task on ``node``'s CPU; a ``cpu-complete`` event fires at the end."""
        if duration < 0:
            raise KernelError("negative CPU duration")
        start = max(self.now, self._cpu_tail[node])
        end = start + duration
        self._cpu_tail[node] = end
        self.tasks[node].append(CpuTask(self.now, start, end))
        self.schedule(end, node, CPU_COMPLETE, payload)
        return end

    def pending(self) -> int:
        return len(self._queue) - len(self._cancelled)

    def run(self, until: float | None = None) -> float:
        while self._queue:
            time, _, event = self._queue[0]
            if until is not None and time > until:
                break
            heapq.heappop(self._queue)
            if event.seq in self._cancelled:
                self._cancelled.discard(event.seq)
                continue
            self.now = time
            self.dispatched += 1
            handler = self._handlers.get(event.kind)
            if handler is None:
                raise KernelError(f"no handler for event kind {event.kind!r}")
            handler(event)
        return self.now

    def busy_seconds(self, node: str) -> float:
        return sum(t.end - t.start for t in self.tasks.get(node, ()))

    def utilization(self, nodes, width: float = 1.0, horizon: float | None = None) -> UtilizationTimeline:
        if horizon is None:
            last = max((t.end for ts in self.tasks.values() for t in ts), default=0.0)
            horizon = max(self.now, last)
        n_windows = max(1, math.ceil(horizon / width - 1e-12)) if horizon > 0 else 0
        timeline = UtilizationTimeline(width, horizon)
        for node in nodes:
            acc = [0.0] * n_windows
            for task in self.tasks.get(node, ()):
                s, e = task.start, min(task.end, horizon)
                if e <= s:
                    continue
                i = int(s // width)
                while i < n_windows and i * width < e:
                    lo, hi = max(s, i * width), min(e, (i + 1) * width)
                    if hi > lo:
                        acc[i] += hi - lo
                    i += 1
            timeline.busy[node] = [
                (i * width, min(1.0, max(0.0, b / width))) for i, b in enumerate(acc)
            ]
        return timeline

    def memory(self, node: str, role: str, model: MemoryModel, width: float, n_windows: int):
        """Per-window memory level from the peak number of queued CPU tasks."""
        changes = []
        for t in self.tasks.get(node, ()):
            if t.end > t.enqueued:
                changes.append((t.enqueued, 1))
                changes.append((t.end, -1))
        changes.sort()
        peaks = [0] * n_windows
        level = 0
        idx = 0
        for w in range(n_windows):
            lo, hi = w * width, (w + 1) * width
            # changes stamped exactly at the window start belong to this window
            while idx < len(changes) and changes[idx][0] <= lo:
                level += changes[idx][1]
                idx += 1
            peak = level
            while idx < len(changes) and changes[idx][0] < hi:
                level += changes[idx][1]
                peak = max(peak, level)
                idx += 1
            peaks[w] = peak
        return [(w * width, model.level(role, peaks[w])) for w in range(n_windows)]
