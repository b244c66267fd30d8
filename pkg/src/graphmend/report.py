"""Run reports: per-file site outcomes, totals, and stable serialization.

The structured format is a single JSON document with a version field so
external harnesses can consume it without scraping the text rendering.
Two runs over identical inputs produce identical documents apart from
the timing block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .transform import FileOutcome

REPORT_VERSION = 1


@dataclass
class RunReport:
    files: list[FileOutcome] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)

    def add(self, outcome: FileOutcome) -> None:
        self.files.append(outcome)

    def sort(self) -> None:
        self.files.sort(key=lambda f: f.path)

    # -- totals ---------------------------------------------------------------

    @property
    def found(self) -> int:
        return sum(f.found for f in self.files)

    @property
    def fixed(self) -> int:
        return sum(f.fixed for f in self.files)

    @property
    def skipped(self) -> int:
        return sum(f.skipped_count for f in self.files)

    @property
    def unfixable(self) -> int:
        return sum(f.unfixable for f in self.files)

    @property
    def predicted_residual(self) -> int:
        return sum(f.predicted_residual for f in self.files)

    def has_errors(self) -> bool:
        return any(f.status in ("error", "aborted") for f in self.files)

    def has_unfixed(self) -> bool:
        return any(f.found - f.fixed > 0 for f in self.files)

    def exit_code(self) -> int:
        if self.has_errors():
            return 2
        if self.has_unfixed():
            return 1
        return 0

    # -- rendering --------------------------------------------------------------

    def phase_totals(self) -> dict[str, float]:
        phases: dict[str, float] = {}
        for f in self.files:
            for name, seconds in f.phase_s.items():
                phases[name] = phases.get(name, 0.0) + seconds
        return {k: round(v, 6) for k, v in sorted(phases.items())}

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "files": [
                {
                    "path": f.path,
                    "status": f.status,
                    "entry_points": f.entry_points,
                    "detail": f.detail,
                    "notes": f.notes,
                    "edit_count": f.edit_count,
                    "found": f.found,
                    "fixed": f.fixed,
                    "skipped": f.skipped_count,
                    "unfixable": f.unfixable,
                    "predicted_residual": f.predicted_residual,
                    "sites": [
                        {
                            "line": s.line,
                            "col": s.col,
                            "kind": s.kind,
                            "status": s.status,
                            "reason": s.reason,
                            "runtime_effective": s.runtime_effective,
                        }
                        for s in f.sites
                    ],
                }
                for f in self.files
            ],
            "totals": {
                "found": self.found,
                "fixed": self.fixed,
                "skipped": self.skipped,
                "unfixable": self.unfixable,
                "predicted_residual": self.predicted_residual,
            },
            "timing": {**self.timing, **self.phase_totals()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines: list[str] = []
        for f in self.files:
            if f.status == "skipped":
                lines.append(f"{f.path}: skipped ({f.detail})")
                continue
            if f.status == "error":
                lines.append(f"{f.path}: error ({f.detail})")
                continue
            if f.status == "aborted":
                lines.append(f"{f.path}: aborted ({f.detail})")
            head = (
                f"{f.path}: {f.found} break(s), {f.fixed} fixed, "
                f"{f.skipped_count} skipped, {f.unfixable} unfixable"
            )
            lines.append(head)
            for s in f.sites:
                why = f" ({s.reason})" if s.reason else ""
                lines.append(f"  {s.line}:{s.col} {s.kind}: {s.status}{why}")
        pct = 100.0 * self.fixed / self.found if self.found else 100.0
        lines.append(
            f"total: {self.found} found, {self.fixed} fixed ({pct:.0f}%), "
            f"{self.skipped} skipped, {self.unfixable} unfixable, "
            f"predicted residual {self.predicted_residual}"
        )
        return "\n".join(lines) + "\n"
