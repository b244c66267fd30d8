"""Batch driver: discover files, run the pipeline, present results.

`analyze` never writes source; `fix` writes according to its output mode
(--in-place, --out DIR, --diff, --check). Exit codes: 0 when no breaks
remain (none found or all fixed), 1 when unfixed breaks remain, 2 when
any file failed to parse, verify, or be read/written.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
import time
from dataclasses import dataclass, field

from .analysis import (
    TorchAttrTable,
    default_dynamic_shape_ops,
    load_dynamic_shape_ops,
)
from .frontend import SourceModule, unified_diff
from .report import RunReport
from .transform import FileOutcome, default_allowlist, fix_file, load_allowlist
from .uniir import Uniir, VerificationError, dump_ir

PY_EXT = ".py"


@dataclass
class RunConfig:
    paths: list[str]
    mode: str = "analyze"          # analyze | fix
    output: str = "check"          # in-place | out-dir | diff | check
    out_dir: str | None = None
    report_format: str = "text"    # text | json
    attr_table_path: str | None = None
    allowlist_path: str | None = None
    dynamic_shape_ops_path: str | None = None
    jobs: int = 1
    dump_ir: bool = False
    stream: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.stream is None:
            self.stream = sys.stdout


def discover(paths: list[str]) -> list[str]:
    """Files given directly plus *.py under directories; hidden dirs skipped."""
    out: list[str] = []
    for p in paths:
        if os.path.isdir(p):
            for root, dirs, names in os.walk(p):
                dirs[:] = sorted(d for d in dirs if not d.startswith("."))
                for name in sorted(names):
                    if name.endswith(PY_EXT):
                        out.append(os.path.join(root, name))
        else:
            out.append(p)
    return sorted(dict.fromkeys(out))


def _load_tables(config: RunConfig):
    attr_path = config.attr_table_path or os.environ.get("GRAPHMEND_ATTR_TABLE")
    attr_table = TorchAttrTable.load(attr_path) if attr_path else TorchAttrTable.default()
    allow = (
        load_allowlist(config.allowlist_path)
        if config.allowlist_path
        else default_allowlist()
    )
    dso = (
        load_dynamic_shape_ops(config.dynamic_shape_ops_path)
        if config.dynamic_shape_ops_path
        else default_dynamic_shape_ops()
    )
    return attr_table, allow, dso


def _process_one(path: str, config: RunConfig, tables) -> tuple[FileOutcome, str, str]:
    """Returns (outcome, original_text, new_text); errors become outcomes."""
    attr_table, allow, dso = tables
    try:
        source = SourceModule.load(path)
    except (OSError, UnicodeDecodeError) as exc:
        return FileOutcome(path, "error", 0, detail=f"read failed: {exc}"), "", ""
    try:
        new_text, outcome = fix_file(source, attr_table, allow, dso)
    except SyntaxError as exc:
        detail = f"syntax error at line {exc.lineno}, col {exc.offset}: {exc.msg}"
        return FileOutcome(path, "error", 0, detail=detail), source.text, source.text
    except VerificationError as exc:
        return (
            FileOutcome(path, "error", 0, detail=f"verification failed: {exc}"),
            source.text,
            source.text,
        )
    return outcome, source.text, new_text


def run(config: RunConfig) -> int:
    """Execute one batch run and write the report to the configured stream."""
    t0 = time.perf_counter()
    files = discover(config.paths)
    tables = _load_tables(config)
    report = RunReport()

    def work(path: str):
        return _process_one(path, config, tables)

    if config.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(config.jobs) as pool:
            results = list(pool.map(work, files))
    else:
        results = [work(p) for p in files]

    diff_chunks: list[str] = []
    for path, (outcome, old_text, new_text) in zip(files, results):
        report.add(outcome)
        if config.mode != "fix" or outcome.status in ("error", "aborted", "skipped"):
            continue
        if config.output == "in-place" and new_text != old_text:
            try:
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(new_text)
            except OSError as exc:
                outcome.status = "error"
                outcome.detail = f"write failed: {exc}"
        elif config.output == "out-dir":
            dest = os.path.join(config.out_dir, os.path.basename(path))
            try:
                os.makedirs(config.out_dir, exist_ok=True)
                with open(dest, "w", encoding="utf-8") as fh:
                    fh.write(new_text)
            except OSError as exc:
                outcome.status = "error"
                outcome.detail = f"write failed: {exc}"
        elif config.output == "diff" and new_text != old_text:
            diff_chunks.append(unified_diff(old_text, new_text, path))

    report.sort()
    report.timing = {"total_s": round(time.perf_counter() - t0, 6)}

    stream = config.stream
    if config.dump_ir:
        for path in files:
            try:
                ir = Uniir.build(SourceModule.load(path))
                stream.write(dump_ir(ir))
            except (OSError, SyntaxError) as exc:
                stream.write(f"{path}: cannot dump IR ({exc})\n")
    for chunk in diff_chunks:
        stream.write(chunk)
    if config.report_format == "json":
        stream.write(report.to_json())
    else:
        stream.write(report.to_text())
    return report.exit_code()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphmend",
        description="Detect and rewrite torch.compile graph-break patterns in source.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("paths", nargs="+", help="files or directories")
        p.add_argument("--format", choices=["text", "json"], default="text")
        p.add_argument("--attr-table", metavar="FILE")
        p.add_argument("--allowlist", metavar="FILE")
        p.add_argument("--dynamic-shape-ops", metavar="FILE")
        p.add_argument("--jobs", type=int, default=1)

    p_analyze = sub.add_parser("analyze", help="report break sites without writing")
    common(p_analyze)
    p_analyze.add_argument("--dump-ir", action="store_true")

    p_fix = sub.add_parser("fix", help="rewrite fixable break sites")
    common(p_fix)
    mode = p_fix.add_mutually_exclusive_group(required=True)
    mode.add_argument("--in-place", action="store_true")
    mode.add_argument("--out", metavar="DIR")
    mode.add_argument("--diff", action="store_true")
    mode.add_argument("--check", action="store_true")
    return parser


def config_from_args(argv: list[str]) -> RunConfig:
    args = _build_parser().parse_args(argv)
    if args.command == "analyze":
        output = "check"
    elif args.in_place:
        output = "in-place"
    elif args.out:
        output = "out-dir"
    elif args.diff:
        output = "diff"
    else:
        output = "check"
    return RunConfig(
        paths=args.paths,
        mode=args.command,
        output=output,
        out_dir=getattr(args, "out", None),
        report_format=args.format,
        attr_table_path=args.attr_table,
        allowlist_path=args.allowlist,
        dynamic_shape_ops_path=args.dynamic_shape_ops,
        jobs=args.jobs,
        dump_ir=getattr(args, "dump_ir", False),
    )


def main(argv: list[str] | None = None) -> int:
    config = config_from_args(sys.argv[1:] if argv is None else argv)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
