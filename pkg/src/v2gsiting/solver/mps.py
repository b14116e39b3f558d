"""Fixed-format MPS export (and a matching reader for round trips).

Card layout (1-based columns): field 1 in 2-3, field 2 in 5-12, field 3 in
15-22, field 4 in 25-36, field 5 in 40-47, field 6 in 50-61.  Names are
mangled to 8 characters -- ``C`` or ``R`` plus the index in base 36 -- and
the objective row is ``COST``.  :func:`names_table` gives the mapping back to
readable labels.  Integer columns sit between ``INTORG``/``INTEND`` markers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .lp import LPProblem

OBJ_ROW = "COST"
_DIGITS = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _base36(k: int, width: int = 7) -> str:
    if k < 0 or k >= 36 ** width:
        raise ValueError(f"index {k} does not fit in {width} base-36 digits")
    out = []
    for _ in range(width):
        k, r = divmod(k, 36)
        out.append(_DIGITS[r])
    return "".join(reversed(out))


def column_name(j: int) -> str:
    return "C" + _base36(j)


def row_name(i: int) -> str:
    return "R" + _base36(i)


def format_number(v: float) -> str:
    """Shortest text of at most 12 characters that represents ``v``."""
    v = float(v)
    if not math.isfinite(v):
        raise ValueError("MPS numbers must be finite")
    if v == int(v) and abs(v) < 1e11:
        return str(int(v))
    text = repr(v)
    if len(text) <= 12:
        return text
    for digits in range(11, 0, -1):
        text = f"{v:.{digits}g}"
        if len(text) <= 12:
            return text
    raise ValueError(f"cannot format {v} in 12 characters")


def _card(f1: str = "", f2: str = "", f3: str = "", f4: str = "", f5: str = "",
          f6: str = "") -> str:
    line = (" " + f1.ljust(2) + " " + f2.ljust(8) + "  " + f3.ljust(8) + "  " + f4.ljust(12)
            + "   " + f5.ljust(8) + "  " + f6)
    return line.rstrip()


def export_mps(model, sink: TextIO | None = None) -> str:
    """Write ``model`` (anything with ``lp`` and ``integrality``) as fixed MPS text.

    Columns appear in column order, entries within a column in row order
    with the objective first.  Returns the text and also writes it to
    ``sink`` when given.
    """
    lp: LPProblem = model.lp
    integ = np.asarray(model.integrality, dtype=bool)
    name = getattr(model, "name", "MODEL")[:8]
    cards = [f"NAME          {name}", "ROWS", _card("N", OBJ_ROW)]
    for i, s in enumerate(lp.senses):
        cards.append(_card(str(s), row_name(i)))

    cards.append("COLUMNS")
    A = lp.A.tocsc()
    in_int = False
    marker = 0
    for j in range(lp.n_cols):
        if integ[j] != in_int:
            tag = "'INTORG'" if integ[j] else "'INTEND'"
            cards.append(_card("", f"MARKER{marker:02d}"[:8], "'MARKER'", "", tag))
            marker += 1
            in_int = bool(integ[j])
        lo, hi = A.indptr[j], A.indptr[j + 1]
        order = np.argsort(A.indices[lo:hi], kind="stable")
        entries = []
        if lp.c[j] != 0:
            entries.append((OBJ_ROW, lp.c[j]))
        entries += [(row_name(int(A.indices[lo + k])), A.data[lo + k]) for k in order]
        if not entries:
            # keep the column visible to readers
            entries.append((OBJ_ROW, 0.0))
        cname = column_name(j)
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            fields = [pair[0][0], format_number(pair[0][1])]
            if len(pair) == 2:
                fields += [pair[1][0], format_number(pair[1][1])]
            cards.append(_card("", cname, *fields))
    if in_int:
        cards.append(_card("", f"MARKER{marker:02d}"[:8], "'MARKER'", "", "'INTEND'"))

    cards.append("RHS")
    nz = [(row_name(i), v) for i, v in enumerate(lp.rhs) if v != 0]
    for k in range(0, len(nz), 2):
        pair = nz[k:k + 2]
        fields = [pair[0][0], format_number(pair[0][1])]
        if len(pair) == 2:
            fields += [pair[1][0], format_number(pair[1][1])]
        cards.append(_card("", "RHS", *fields))

    cards.append("RANGES")
    cards.append("BOUNDS")
    for j in range(lp.n_cols):
        cname = column_name(j)
        lo, hi = float(lp.lb[j]), float(lp.ub[j])
        if integ[j] and lo == 0 and hi == 1:
            cards.append(_card("BV", "BND", cname))
        elif lo == hi:
            cards.append(_card("FX", "BND", cname, format_number(lo)))
        elif lo == -math.inf and hi == math.inf:
            cards.append(_card("FR", "BND", cname))
        else:
            if lo == -math.inf:
                cards.append(_card("MI", "BND", cname))
            elif lo != 0:
                cards.append(_card("LO", "BND", cname, format_number(lo)))
            if hi != math.inf:
                cards.append(_card("UP", "BND", cname, format_number(hi)))
    cards.append("ENDATA")
    text = "\n".join(cards) + "\n"
    if sink is not None:
        sink.write(text)
    return text


def names_table(model) -> str:
    """``mangled-name  label`` lines for every row and column."""
    reg = getattr(model, "registry", None)
    labels = getattr(model, "row_labels", None)
    lines = []
    for i in range(model.lp.n_rows):
        lab = f"{labels[i][0]}[{','.join(map(str, labels[i][1]))}]" if labels else f"row{i}"
        lines.append(f"{row_name(i)} {lab}")
    for j in range(model.lp.n_cols):
        lab = reg.label(j) if reg is not None else f"col{j}"
        lines.append(f"{column_name(j)} {lab}")
    return "\n".join(lines) + "\n"


@dataclass(eq=False)
class ParsedMPS:
    name: str
    lp: LPProblem
    integrality: np.ndarray
    row_names: list[str]
    column_names: list[str]


class MPSFormatError(ValueError):
    pass


def read_mps(text: str) -> ParsedMPS:
    """Parse MPS text written by :func:`export_mps` (free spacing accepted)."""
    section = None
    name = ""
    obj = None
    rows: dict[str, int] = {}
    senses: list[str] = []
    cols: dict[str, int] = {}
    cost: dict[int, float] = {}
    entries: list[tuple[int, int, float]] = []
    integer: list[bool] = []
    rhs: dict[int, float] = {}
    bounds: list[tuple[str, int, float]] = []
    in_int = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        tok = raw.split()
        if not raw[0].isspace():
            section = tok[0]
            if section == "NAME":
                name = tok[1] if len(tok) > 1 else ""
            elif section == "ENDATA":
                break
            elif section not in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS"):
                raise MPSFormatError(f"line {lineno}: unknown section {section!r}")
            continue
        try:
            if section == "ROWS":
                kind, rname = tok
                if kind == "N":
                    if obj is None:
                        obj = rname
                    continue
                if kind not in ("L", "G", "E"):
                    raise MPSFormatError(f"line {lineno}: bad row type {kind!r}")
                rows[rname] = len(senses)
                senses.append(kind)
            elif section == "COLUMNS":
                if len(tok) >= 3 and tok[1] == "'MARKER'":
                    in_int = tok[2] == "'INTORG'"
                    continue
                cname = tok[0]
                if cname not in cols:
                    cols[cname] = len(cols)
                    integer.append(in_int)
                j = cols[cname]
                for rname, val in zip(tok[1::2], tok[2::2]):
                    if rname == obj:
                        cost[j] = cost.get(j, 0.0) + float(val)
                    else:
                        entries.append((rows[rname], j, float(val)))
            elif section == "RHS":
                for rname, val in zip(tok[1::2], tok[2::2]):
                    if rname != obj:
                        rhs[rows[rname]] = float(val)
            elif section == "RANGES":
                raise MPSFormatError(f"line {lineno}: ranged rows are not supported")
            elif section == "BOUNDS":
                kind, cname = tok[0], tok[2]
                val = float(tok[3]) if len(tok) > 3 else 0.0
                bounds.append((kind, cols[cname], val))
            else:
                raise MPSFormatError(f"line {lineno}: data outside a section")
        except (KeyError, ValueError) as exc:
            if isinstance(exc, MPSFormatError):
                raise
            raise MPSFormatError(f"line {lineno}: {exc}") from None

    m, n = len(senses), len(cols)
    c = np.zeros(n)
    for j, v in cost.items():
        c[j] = v
    r, k, v = (zip(*entries) if entries else ((), (), ()))
    A = sp.csr_matrix((np.array(v, dtype=float), (np.array(r, dtype=int), np.array(k, dtype=int))),
                      shape=(m, n))
    b = np.zeros(m)
    for i, val in rhs.items():
        b[i] = val
    lb, ub = np.zeros(n), np.full(n, np.inf)
    for kind, j, val in bounds:
        if kind == "UP":
            ub[j] = val
        elif kind == "LO":
            lb[j] = val
        elif kind == "FX":
            lb[j] = ub[j] = val
        elif kind == "FR":
            lb[j], ub[j] = -np.inf, np.inf
        elif kind == "MI":
            lb[j] = -np.inf
        elif kind == "PL":
            ub[j] = np.inf
        elif kind == "BV":
            lb[j], ub[j] = 0.0, 1.0
        else:
            raise MPSFormatError(f"unsupported bound type {kind!r}")
    lp = LPProblem(c=c, A=A, senses=np.array(senses, dtype="<U1"), rhs=b, lb=lb, ub=ub)
    return ParsedMPS(name=name, lp=lp, integrality=np.array(integer, dtype=bool),
                     row_names=list(rows), column_names=list(cols))
