"""Report serialization: CSV plus an aligned human-readable table.

The CSV starts with ``# key=value`` comment lines echoing the fully resolved
configuration, then a header row and one row per variant. Floats are written
with full round-trip precision so reruns can be compared bytewise.
"""

import csv
import io
from pathlib import Path


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_csv(config: dict, header: list[str], rows: list[list]) -> str:
    out = io.StringIO()
    for key in sorted(config):
        out.write(f"# {key}={config[key]}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return out.getvalue()


def format_text(title: str, config: dict, header: list[str], rows: list[list]) -> str:
    cells = [[_cell(v) for v in row] for row in rows]
    widths = [
        max(len(header[i]), *(len(r[i]) for r in cells)) if cells else len(header[i])
        for i in range(len(header))
    ]
    lines = [title, "=" * len(title), "", "config:"]
    for key in sorted(config):
        lines.append(f"  {key} = {config[key]}")
    lines.append("")
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    lines.append("")
    return "\n".join(lines)


def write_report(prefix, title: str, config: dict, header: list[str],
                 rows: list[list]) -> tuple[Path, Path]:
    """Write ``<prefix>.csv`` and ``<prefix>.txt``; returns both paths."""
    prefix = Path(prefix)
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.with_suffix(".csv")
    txt_path = prefix.with_suffix(".txt")
    csv_path.write_text(format_csv(config, header, rows))
    txt_path.write_text(format_text(title, config, header, rows))
    return csv_path, txt_path
