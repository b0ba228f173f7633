"""Processor contract, registry, per-session instances, and the
latest-frame-wins dispatch mailbox.

Extension point: subclass Processor, override process(), register a
descriptor plus factory at startup. The registry is frozen once the first
session is created, so concurrent reads need no locking.
"""
from __future__ import annotations

import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .model import (
    Annotation,
    ContractViolation,
    Description,
    Frame,
    Priority,
    ProcessResult,
    TimingBreakdown,
)

_ID_RE = re.compile(r"[a-z0-9_]{1,64}$")
_KEY_RE = re.compile(r"[a-z_]{1,32}$")


class RegistryError(Exception):
    pass


class DuplicateProcessor(RegistryError):
    pass


class UnknownProcessor(RegistryError):
    pass


class BadOptions(RegistryError):
    pass


class ProcessorOptions:
    """Ordered key=value options parsed from "k=v;k=v". Last key wins."""

    def __init__(self, pairs: Optional[List[Tuple[str, str]]] = None):
        self.pairs: List[Tuple[str, str]] = pairs or []
        self._map: Dict[str, str] = dict(self.pairs)
        self.unrecognized_warnings = 0

    @classmethod
    def parse(cls, text: str) -> "ProcessorOptions":
        pairs = []
        for item in text.split(";"):
            if not item:
                continue
            key, sep, value = item.partition("=")
            if not sep or not _KEY_RE.match(key):
                raise BadOptions(f"bad option item {item!r}")
            pairs.append((key, value))
        return cls(pairs)

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self._map.get(key, default)

    def warn_unrecognized(self, recognized: set) -> None:
        for key in self._map:
            if key not in recognized:
                self.unrecognized_warnings += 1

    def __repr__(self):
        return f"ProcessorOptions({self.pairs!r})"


@dataclass(frozen=True)
class ProcessorDescriptor:
    id: str
    display_name: str
    remote: bool = False

    def __post_init__(self):
        if not _ID_RE.match(self.id):
            raise ContractViolation(f"bad processor id {self.id!r}")
        if not self.display_name:
            raise ContractViolation("display_name must be non-empty")


@dataclass(frozen=True)
class ResultBody:
    """What a processor returns: annotations plus an optional description."""
    annotations: Tuple[Annotation, ...] = ()
    description: Optional[Tuple[str, Priority]] = None  # (text, priority)


class Processor:
    """One pluggable frame-processing unit, confined to a single session.

    A fresh instance carries no state from prior sessions. Instances are
    never shared between dispatchers.
    """

    def __init__(self, options: ProcessorOptions):
        self.options = options

    def process(self, frame: Frame) -> ResultBody:
        raise NotImplementedError


ProcessorFactory = Callable[[ProcessorOptions], Processor]


class ProcessorRegistry:
    """Startup-only registry of processors keyed by id."""

    def __init__(self):
        self._entries: Dict[str, Tuple[ProcessorDescriptor, ProcessorFactory]] = {}
        self._order: List[str] = []
        self._frozen = False

    def register(self, desc: ProcessorDescriptor, factory: ProcessorFactory) -> None:
        if self._frozen:
            raise RegistryError("registration after startup is not allowed")
        if desc.id in self._entries:
            raise DuplicateProcessor(desc.id)
        self._entries[desc.id] = (desc, factory)
        self._order.append(desc.id)

    def freeze(self) -> None:
        self._frozen = True

    def list_processors(self) -> List[ProcessorDescriptor]:
        return [self._entries[i][0] for i in self._order]

    def descriptor(self, id: str) -> ProcessorDescriptor:
        try:
            return self._entries[id][0]
        except KeyError:
            raise UnknownProcessor(id) from None

    def create_for_session(self, id: str, opts: ProcessorOptions) -> Processor:
        """Build a fresh, isolated instance configured from opts."""
        if id not in self._entries:
            raise UnknownProcessor(id)
        _, factory = self._entries[id]
        return factory(opts)


class Mailbox:
    """Capacity-1 pending-frame slot: a newer frame replaces an unprocessed
    older one. Freshness beats completeness for live assistance."""

    def __init__(self):
        self._cond = threading.Condition()
        self._slot: Optional[Frame] = None
        self._enqueue_ts: float = 0.0
        self.replaced_count = 0

    def submit(self, frame: Frame) -> bool:
        """Store a frame; returns True iff a pending frame was discarded."""
        with self._cond:
            replaced = self._slot is not None
            if replaced:
                self.replaced_count += 1
            self._slot = frame
            self._enqueue_ts = time.monotonic()
            self._cond.notify()
            return replaced

    def take(self, timeout: Optional[float] = None) -> Optional[Tuple[Frame, float]]:
        """Remove and return (frame, enqueue_monotonic_ts), or None on timeout."""
        with self._cond:
            if self._slot is None and not self._cond.wait_for(
                lambda: self._slot is not None, timeout
            ):
                return None
            frame = self._slot
            self._slot = None
            return frame, self._enqueue_ts

    def peek_pending(self) -> bool:
        with self._cond:
            return self._slot is not None

    def wake(self) -> None:
        with self._cond:
            self._cond.notify_all()


class DispatchSession:
    """Single-dispatcher pipeline: mailbox in, ProcessResult out.

    switch() swaps in a fresh instance; the frame currently being processed
    (if any) completes under the old processor id. A failing processor is
    replaced by a fresh instance before the next dispatch, and the failure
    is surfaced as an INTERRUPT description so the listener hears that
    assistance degraded.
    """

    def __init__(self, registry: ProcessorRegistry, processor_id: str,
                 opts: Optional[ProcessorOptions] = None):
        self._registry = registry
        self._lock = threading.Lock()
        self.mailbox = Mailbox()
        opts = opts or ProcessorOptions()
        self._current_id = processor_id
        self._current_opts = opts
        self._instance = registry.create_for_session(processor_id, opts)
        self.on_error: Optional[Callable[[str], None]] = None

    @property
    def current_id(self) -> str:
        with self._lock:
            return self._current_id

    def switch(self, processor_id: str, opts: ProcessorOptions,
               before_effect: Optional[Callable[[], None]] = None) -> None:
        """Replace the current processor; old instance state is discarded.

        before_effect runs under the switch lock, after the new instance is
        built but before any dispatch can observe the new id (used by the
        server to send the ACK first).
        """
        instance = self._registry.create_for_session(processor_id, opts)
        with self._lock:
            if before_effect is not None:
                before_effect()
            self._current_id = processor_id
            self._current_opts = opts
            self._instance = instance

    def dispatch_once(self, timeout: Optional[float] = None) -> Optional[ProcessResult]:
        """Take one frame from the mailbox and run it; None when idle."""
        taken = self.mailbox.take(timeout)
        if taken is None:
            return None
        frame, enqueue_ts = taken
        with self._lock:
            instance = self._instance
            processor_id = self._current_id
        start = time.monotonic()
        recv_to_dispatch_us = int((start - enqueue_ts) * 1e6)
        try:
            body = instance.process(frame)
        except Exception:
            # Recreate before the next dispatch; never reuse a failed instance.
            with self._lock:
                if self._instance is instance:
                    self._instance = self._registry.create_for_session(
                        self._current_id, self._current_opts)
            if self.on_error is not None:
                self.on_error(processor_id)
            body = ResultBody(
                annotations=(),
                description=(f"processor error: {processor_id}", Priority.INTERRUPT),
            )
        process_us = int((time.monotonic() - start) * 1e6)
        description = None
        if body.description is not None:
            text, priority = body.description
            description = Description(text=text, priority=priority,
                                      source=processor_id, frame_seq=frame.seq)
        return ProcessResult(
            frame_seq=frame.seq,
            processor=processor_id,
            annotations=tuple(body.annotations),
            description=description,
            timing=TimingBreakdown(recv_to_dispatch_us=recv_to_dispatch_us,
                                   process_us=process_us),
        )
