"""Label-read audit trail.

Every mask read in the toolkit is routed through an AuditLog so a run can
prove that no ground-truth labels were touched while optimizing in the
adaptation phase. Events carry the currently open phase name; phases nest.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class AuditEvent:
    phase: str
    event: str
    detail: str


@dataclass
class AuditLog:
    path: Path | None = None
    events: list[AuditEvent] = field(default_factory=list)
    _phases: list[str] = field(default_factory=list)

    @contextmanager
    def phase(self, name: str):
        self._phases.append(name)
        try:
            yield self
        finally:
            self._phases.pop()

    @property
    def current_phase(self) -> str:
        return "/".join(self._phases) if self._phases else "idle"

    def record(self, event: str, detail: str = "") -> None:
        ev = AuditEvent(phase=self.current_phase, event=event, detail=detail)
        self.events.append(ev)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(f"phase={ev.phase}\tevent={ev.event}\t{ev.detail}\n")

    def mask_reads(self, phase_substring: str | None = None) -> list[AuditEvent]:
        reads = [e for e in self.events if e.event == "mask_read"]
        if phase_substring is not None:
            reads = [e for e in reads if phase_substring in e.phase]
        return reads
