"""Text formats: columnar step functions, operators and ensembles, CSV rows, run configs."""
import configparser
import io as _io
import re

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .gamma_space import StepFunction, TimeGrid
from .sectorial import SectorialOp
from .space_model import SpaceModel

FMT = "%.17g"


def fmt(x):
    return FMT % x


def _header(line, kind):
    m = re.match(r"#\s*" + re.escape(kind) + r"\s+v1\s*;(.*)$", line.strip())
    if not m:
        raise InvalidInputError(f"expected a '# {kind} v1' header, got {line.strip()!r}")
    out = {}
    for part in m.group(1).split(";"):
        if not part.strip():
            continue
        key, _, val = part.partition("=")
        out[key.strip()] = val.strip()
    return out


def _rows(lines):
    rows = [np.array(ln.split(), dtype=float) for ln in lines if ln.strip() and not ln.startswith("#")]
    return rows


def dump_step(f):
    """Columnar text: header, then `t_i t_(i+1) y_i[0] ... y_i[n-1]` per interval."""
    if f.is_operator or np.iscomplexobj(f.values):
        raise InvalidInputError("only real vector-valued step functions serialize")
    q = f.target.q
    buf = [f"# gamma-step v1; dim={f.dim}; q={'inf' if q == float('inf') else fmt(q)}; "
           f"weight={f.grid.weight}"]
    for a, b, y in zip(f.grid.left, f.grid.right, f.values):
        buf.append(" ".join([fmt(a), fmt(b)] + [fmt(v) for v in y]))
    return "\n".join(buf) + "\n"


def load_step(text):
    lines = text.splitlines()
    head = _header(lines[0], "gamma-step")
    n = int(head["dim"])
    rows = _rows(lines[1:])
    if not rows or any(r.size != n + 2 for r in rows):
        raise InvalidInputError(f"rows must carry 2 + {n} numbers")
    data = np.stack(rows)
    if not np.array_equal(data[1:, 0], data[:-1, 1]):
        raise InvalidInputError("intervals are not contiguous")
    knots = np.concatenate([data[:, 0], data[-1:, 1]])
    q = float(head.get("q", "2"))
    grid = TimeGrid(knots, head.get("weight", "lebesgue"))
    return StepFunction(grid, data[:, 2:], SpaceModel(n, q))


def dump_operator(A):
    M = np.asarray(A.matrix if isinstance(A, SectorialOp) else A)
    if np.iscomplexobj(M):
        raise InvalidInputError("only real operators serialize")
    buf = [f"# sect-op v1; dim={M.shape[0]}"]
    buf += [" ".join(fmt(v) for v in row) for row in M]
    return "\n".join(buf) + "\n"


def load_operator(text):
    lines = text.splitlines()
    n = int(_header(lines[0], "sect-op")["dim"])
    rows = _rows(lines[1:])
    if len(rows) != n or any(r.size != n for r in rows):
        raise InvalidInputError(f"expected {n} rows of {n} numbers")
    return SectorialOp(np.stack(rows))


def dump_ensemble(ens, m=1):
    """Header then one row per (sample, knot): `sample t u[0] ... u[n-1]`."""
    S, J, n = ens.paths.shape
    buf = [f"# ensemble v1; samples={S}; dim={n}; m={m}"]
    t = ens.grid.knots
    for s in range(S):
        for j in range(J):
            buf.append(" ".join([str(s), fmt(t[j])] + [fmt(v) for v in ens.paths[s, j]]))
    return "\n".join(buf) + "\n"


def load_ensemble(text):
    from .stochastic import PathEnsemble
    lines = text.splitlines()
    head = _header(lines[0], "ensemble")
    S, n = int(head["samples"]), int(head["dim"])
    data = np.stack(_rows(lines[1:]))
    if data.shape[1] != n + 2 or data.shape[0] % S:
        raise InvalidInputError("ensemble rows do not match the header")
    J = data.shape[0] // S
    knots = data[:J, 1]
    return PathEnsemble(TimeGrid(knots), data[:, 2:].reshape(S, J, n), ("loaded",))


def csv_text(columns, rows):
    """Comma-separated, header row, %.17g floats, LF line endings."""
    out = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = r[c] if isinstance(r, dict) else r[columns.index(c)]
            if isinstance(v, (bool, np.bool_)):
                cells.append("1" if v else "0")
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            elif isinstance(v, (float, np.floating)):
                cells.append(fmt(float(v)))
            else:
                cells.append(str(v))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def write_csv(path, columns, rows):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(csv_text(columns, rows))


def read_config(source):
    """Parse `key = value` lines under `[section]` headers into a ConfigParser.

    ``source`` is a path or the text itself. Syntax errors become
    InvalidConfigError carrying the line number.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (K, M)
    text = source
    if "\n" not in str(source) and "=" not in str(source):
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as e:
            raise InvalidConfigError(f"cannot read config {source}: {e}") from None
    try:
        cp.read_file(_io.StringIO(text))
    except configparser.Error as e:
        raise InvalidConfigError(f"config parse error: {e}") from None
    return cp
