"""Corpus statistics and report rendering.

The stats path emits machine-readable JSON and CSV (one row per session)
plus bar-chart figures of the same numbers; the build path renders a
timeline of node processing next to the JSON log. Figures are written as
PNG files; matplotlib is imported lazily so library users who never plot
pay nothing.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from . import syntax
from .errors import ForgeError
from .model import Catalog, Const, Definition, Theorem


def compute_stats(catalog: Catalog, sources: dict[str, bytes]) -> dict:
    """Session/theory/declaration counts, source byte totals, and
    per-group aggregates. Unparseable or missing sources still count
    their bytes and theories."""
    kind_counts: dict[str, dict[str, int]] = {}
    for theory in catalog.theory_owner:
        counts = {"const": 0, "definition": 0, "theorem": 0}
        source = sources.get(theory)
        if source is not None:
            try:
                doc = syntax.parse_theory(source, f"{theory}.thy")
            except ForgeError:
                doc = None
            if doc is not None:
                for cmd in doc.commands:
                    if isinstance(cmd, Const):
                        counts["const"] += 1
                    elif isinstance(cmd, Definition):
                        counts["definition"] += 1
                    elif isinstance(cmd, Theorem):
                        counts["theorem"] += 1
        kind_counts[theory] = counts

    per_session = []
    for name, spec in catalog.sessions.items():
        row = {
            "name": name,
            "groups": sorted(spec.groups),
            "parent": spec.parent,
            "theory_count": len(spec.theories),
            "const_count": sum(kind_counts[t]["const"] for t in spec.theories),
            "definition_count": sum(kind_counts[t]["definition"] for t in spec.theories),
            "theorem_count": sum(kind_counts[t]["theorem"] for t in spec.theories),
            "bytes": sum(len(sources.get(t, b"")) for t in spec.theories),
        }
        per_session.append(row)

    groups: dict[str, dict[str, int]] = {}
    for row in per_session:
        for group in row["groups"]:
            agg = groups.setdefault(group, {"sessions": 0, "theories": 0, "bytes": 0})
            agg["sessions"] += 1
            agg["theories"] += row["theory_count"]
            agg["bytes"] += row["bytes"]

    return {
        "session_count": len(catalog.sessions),
        "theory_count": len(catalog.theory_owner),
        "const_count": sum(r["const_count"] for r in per_session),
        "definition_count": sum(r["definition_count"] for r in per_session),
        "theorem_count": sum(r["theorem_count"] for r in per_session),
        "total_bytes": sum(r["bytes"] for r in per_session),
        "groups": {g: groups[g] for g in sorted(groups)},
        "sessions": per_session,
    }


def stats_json(stats: dict) -> str:
    return json.dumps(stats, indent=2, sort_keys=True) + "\n"


def stats_csv(stats: dict) -> str:
    """One row per session; groups joined with ';' so the file stays one
    flat table for external plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["session", "groups", "parent", "theories", "consts", "definitions",
         "theorems", "bytes"]
    )
    for row in stats["sessions"]:
        writer.writerow([
            row["name"],
            ";".join(row["groups"]),
            row["parent"] or "",
            row["theory_count"],
            row["const_count"],
            row["definition_count"],
            row["theorem_count"],
            row["bytes"],
        ])
    return buf.getvalue()


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_stats_figure(stats: dict, path: str | Path) -> None:
    """Two panels: source bytes per session and declaration counts by kind."""
    plt = _pyplot()
    rows = stats["sessions"]
    names = [r["name"] for r in rows]
    fig, (ax_bytes, ax_decls) = plt.subplots(
        2, 1, figsize=(max(6, 0.6 * len(names) + 2), 7), sharex=True
    )
    xs = range(len(names))
    ax_bytes.bar(xs, [r["bytes"] for r in rows], color="#4878d0")
    ax_bytes.set_ylabel("source bytes")
    ax_bytes.set_title("corpus size per session")
    bottom = [0] * len(rows)
    for kind, color in (("const_count", "#4878d0"), ("definition_count", "#ee854a"),
                        ("theorem_count", "#6acc64")):
        values = [r[kind] for r in rows]
        ax_decls.bar(xs, values, bottom=bottom, label=kind.removesuffix("_count"),
                     color=color)
        bottom = [b + v for b, v in zip(bottom, values)]
    ax_decls.set_ylabel("declarations")
    ax_decls.set_xticks(list(xs))
    ax_decls.set_xticklabels(names, rotation=45, ha="right")
    ax_decls.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_build_figure(timings: dict, statuses: dict, path: str | Path) -> None:
    """Horizontal timeline of node processing from the recorded schedule."""
    plt = _pyplot()
    items = sorted(timings.items(), key=lambda kv: (kv[1].scheduled_at, kv[0]))
    names = [name for name, _ in items]
    fig, ax = plt.subplots(figsize=(8, max(3, 0.3 * len(names) + 1)))
    for i, (name, timing) in enumerate(items):
        width = max(timing.finished_at - timing.scheduled_at, 1)
        ok = statuses[name].value in ("finished_ok", "committed", "purged")
        ax.barh(i, width, left=timing.scheduled_at,
                color="#6acc64" if ok else "#d65f5f")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("ms")
    ax.set_title("build timeline")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
