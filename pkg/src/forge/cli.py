"""Command-line front-end.

    forge build  [-d DIR] [-o OUT] [-j K] [-g GROUP]... [-x GROUP]... [-a] [-R] [SESSIONS...]
    forge import [-d DIR] [-o OUT] [-j K] [-w N] [-g GROUP]... [-x GROUP]... [-a] [-R] [SESSIONS...]
    forge server -p PORT [-q HTTP_PORT] [-j K]
    forge stats  [-d DIR] [-o OUT]

Exit codes: 0 success, 1 plan/build failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import report as report_mod
from .depgraph import Selection
from .engine import Engine, EngineConfig, factor, load_corpus, plan, run_build
from .errors import ForgeError
from .server import ForgeServer
from .store import Store


def _add_selection_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-d", metavar="DIR", default=".", help="corpus directory")
    parser.add_argument("-o", metavar="OUT", default="out", help="output directory")
    parser.add_argument("-j", metavar="K", type=int, default=1, help="worker count")
    parser.add_argument("-g", metavar="GROUP", action="append", default=[],
                        help="include session group (repeatable)")
    parser.add_argument("-x", metavar="GROUP", action="append", default=[],
                        help="exclude session group (repeatable)")
    parser.add_argument("-a", action="store_true", help="select all sessions")
    parser.add_argument("-R", action="store_true",
                        help="close selection under ancestor sessions")
    parser.add_argument("sessions", nargs="*", metavar="SESSIONS")


def _selection(args: argparse.Namespace) -> Selection:
    return Selection.of(
        include_groups=args.g,
        exclude_groups=args.x,
        sessions=args.sessions,
        all=args.a,
        requirements=args.R,
    )


def _build_log(bplan, rep) -> dict:
    sessions = []
    for session in bplan.selected_sessions:
        theories = []
        for theory in bplan.catalog.sessions[session].theories:
            timing = rep.timings[theory]
            theories.append({
                "name": theory,
                "status": rep.statuses[theory].value,
                "elapsed_ms": timing.elapsed_ms,
                "cpu_ms": timing.cpu_ms,
            })
        sessions.append({
            "name": session,
            "theories": theories,
            "elapsed_ms": sum(t["elapsed_ms"] for t in theories),
            "cpu_ms": sum(t["cpu_ms"] for t in theories),
        })
    return {
        "sessions": sessions,
        "totals": {
            "elapsed_ms": rep.wall_ms,
            "cpu_ms": rep.cpu_ms,
            "factor": factor(rep.wall_ms, rep.cpu_ms),
        },
    }


def _write_build_log(out_dir: Path, bplan, rep) -> None:
    log_dir = out_dir / "log"
    log_dir.mkdir(parents=True, exist_ok=True)
    log = _build_log(bplan, rep)
    (log_dir / "build.json").write_text(json.dumps(log, indent=2) + "\n")
    report_mod.render_build_figure(rep.timings, rep.statuses, log_dir / "build.png")


def _print_failures(rep) -> None:
    for theory in sorted(rep.statuses):
        if rep.statuses[theory].value == "finished_failed":
            for diag in rep.diagnostics[theory]:
                pos = diag.pos
                print(f"{pos.file}:{pos.line}:{pos.column}: {diag.severity}: "
                      f"{diag.message}", file=sys.stderr)


def cmd_build(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="forge build")
    _add_selection_flags(parser)
    args = parser.parse_args(argv)
    catalog, sources = load_corpus(args.d)
    bplan = plan(catalog, _selection(args), sources)
    if not bplan.selected_sessions:
        print("nothing selected", file=sys.stderr)
        return 1
    out_dir = Path(args.o)
    store = Store(out_dir)
    store.set_order(bplan.canonical_order)
    owner = catalog.theory_owner
    rep = run_build(
        bplan,
        EngineConfig(workers=args.j),
        on_commit=lambda theory, payload: store.write(owner[theory], theory, payload),
    )
    _write_build_log(out_dir, bplan, rep)
    _print_failures(rep)
    print(f"built {rep.ok} ok, {rep.failed} failed in {rep.wall_ms}ms "
          f"(cpu {rep.cpu_ms}ms, factor {rep.factor():.1f})")
    return 0 if rep.all_ok else 1


def cmd_import(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="forge import")
    _add_selection_flags(parser)
    parser.add_argument("-w", metavar="N", type=int, default=64,
                        help="purge watermark (max resident nodes)")
    args = parser.parse_args(argv)
    catalog, sources = load_corpus(args.d)
    cfg = EngineConfig(workers=args.j, purge_watermark=args.w)
    out_dir = Path(args.o)
    store = Store(out_dir)
    owner = catalog.theory_owner
    engine = Engine.load(
        catalog, sources, _selection(args), cfg,
        on_commit=lambda theory, payload: store.write(owner[theory], theory, payload),
    )
    if not engine.plan.selected_sessions:
        print("nothing selected", file=sys.stderr)
        return 1
    store.set_order(engine.canonical)
    rep = engine.process()
    _print_failures(rep)
    residents = len([s for s in rep.statuses.values()
                     if s.value in ("finished_ok", "committed")])
    print(json.dumps({
        "committed": len(rep.committed),
        "purged": len(rep.purged),
        "residents": residents,
        "ok": rep.ok,
        "failed": rep.failed,
    }))
    return 0 if rep.all_ok else 1


def cmd_server(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="forge server")
    parser.add_argument("-p", metavar="PORT", type=int, required=True)
    parser.add_argument("-q", metavar="HTTP_PORT", type=int, default=None)
    parser.add_argument("-j", metavar="K", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        server = ForgeServer(args.p, EngineConfig(workers=args.j), http_port=args.q)
    except OSError as exc:
        print(f"cannot bind: {exc}", file=sys.stderr)
        return 1
    print(f"forge server listening on {server.port}"
          + (f", http on {server.http_port}" if server.http_port else ""))
    server.serve_forever()
    return 0


def cmd_stats(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="forge stats")
    parser.add_argument("-d", metavar="DIR", default=".", help="corpus directory")
    parser.add_argument("-o", metavar="OUT", default=None,
                        help="also write stats.json/stats.csv/stats.png here")
    args = parser.parse_args(argv)
    catalog, sources = load_corpus(args.d)
    stats = report_mod.compute_stats(catalog, sources)
    json_text = report_mod.stats_json(stats)
    csv_text = report_mod.stats_csv(stats)
    print(json_text)
    print(csv_text, end="")
    if args.o is not None:
        out_dir = Path(args.o)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "stats.json").write_text(json_text)
        (out_dir / "stats.csv").write_text(csv_text)
        report_mod.render_stats_figure(stats, out_dir / "stats.png")
    return 0


_COMMANDS = {
    "build": cmd_build,
    "import": cmd_import,
    "server": cmd_server,
    "stats": cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(__doc__.strip())
        return 0 if argv else 2
    command = argv[0]
    if command not in _COMMANDS:
        print(f"unknown command {command!r}; one of: {', '.join(_COMMANDS)}",
              file=sys.stderr)
        return 2
    try:
        return _COMMANDS[command](argv[1:])
    except ForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
