"""Result serialization: ray dumps (CSV / JSON lines) and plot data.

Column order is fixed so dumps diff cleanly; floats are written with
repr (shortest round-trip form), making output bytes a pure function
of the numbers themselves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

KIND_CODES = {"incident": 0, "diffracted": 1, "geometric": 2, "glancing": 3}


def dump_columns(b, f):
    cols = ["ray_id", "branch_id", "branch_kind", "s", "t", "x"]
    cols += ["y%d" % (i + 1) for i in range(b)]
    cols += ["z%d" % (a + 1) for a in range(f)]
    cols += ["tau", "xi"]
    cols += ["eta%d" % (i + 1) for i in range(b)]
    cols += ["zeta%d" % (a + 1) for a in range(f)]
    cols += ["p_residual", "sup_order"]
    return cols


@dataclass
class RayDump:
    b: int
    f: int
    rows: list           # one list per sample, matching dump_columns

    @property
    def columns(self):
        return dump_columns(self.b, self.f)


def build_dump(spec, traced):
    """Assemble a RayDump from (ray_id, GbbPath, RegularityRecord) triples.

    Rows are grouped by (ray_id, branch_id) with s monotone within each
    group; the regularity record supplies the sup_order column.
    """
    b, f = spec.b, spec.f
    rows = []
    for ray_id, path, record in traced:
        for branch_id in path.branch_ids():
            branch = path.branches[branch_id]
            segment = branch.segment
            if segment is None:
                continue
            order = ""
            if record is not None and branch_id in record.per_branch:
                order = str(record.per_branch[branch_id].sup_order)
            p_rel = segment.conserved_log()["p_rel"]
            for i, s in enumerate(segment.s):
                state = segment.states[i]
                row = [ray_id, branch_id, branch.kind, float(s)]
                row += [float(v) for v in state[:2 + b + f]]
                row += [float(v) for v in state[2 + b + f:]]
                row += [abs(float(p_rel[i])), order]
                rows.append(row)
    return RayDump(b=b, f=f, rows=rows)


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(dump):
    lines = [",".join(dump.columns)]
    for row in dump.rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def to_jsonl(dump):
    cols = dump.columns
    lines = []
    for row in dump.rows:
        lines.append(json.dumps(dict(zip(cols, row)), sort_keys=True))
    return "\n".join(lines) + "\n"


def serialize_dump(dump, fmt):
    if fmt == "csv":
        return to_csv(dump)
    if fmt == "jsonl":
        return to_jsonl(dump)
    raise ConfigError("unknown dump format %r" % fmt)


PROJECTIONS = ("tx", "yx", "fiber-angle")


def emit_plot_data(dump, projection, branches=None):
    """Columnar plot text: one block per (ray, branch), kind encoded.

    Projections: tx -> (t, x); yx -> (y1, x); fiber-angle -> (t, z1).
    branches optionally restricts to specific branch ids.
    """
    if projection not in PROJECTIONS:
        raise ConfigError("unknown projection %r (have: %s)"
                          % (projection, ", ".join(PROJECTIONS)))
    cols = dump.columns
    it, ix = cols.index("t"), cols.index("x")
    if projection == "tx":
        pick = (it, ix)
    elif projection == "yx":
        if dump.b < 1:
            raise ConfigError("yx projection needs a base coordinate")
        pick = (cols.index("y1"), ix)
    else:
        pick = (it, cols.index("z1"))
    blocks = []
    current_key = None
    lines = []
    for row in dump.rows:
        if branches is not None and row[1] not in branches:
            continue
        key = (row[0], row[1])
        if key != current_key:
            if lines:
                blocks.append("\n".join(lines))
            lines = []
            current_key = key
        kind = KIND_CODES.get(row[2], -1)
        lines.append("%s %s %d" % (_fmt(row[pick[0]]), _fmt(row[pick[1]]),
                                   kind))
    if lines:
        blocks.append("\n".join(lines))
    if not blocks:
        raise ConfigError("no rows matched the plot selection")
    return "\n\n".join(blocks) + "\n"
