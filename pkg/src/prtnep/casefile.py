"""Plain-text case files.

A case file is a sequence of ``[section]`` blocks.  ``[case]`` and
``[limits]`` hold ``key = value`` lines; ``[buses]``, ``[generators]``,
``[corridors]`` and ``[uncertainty]`` are whitespace-separated tables whose
first line names the columns.  ``#`` starts a comment and ``-`` marks an empty
cell.  Example::

    [buses]
    id kind  p_demand q_demand
    1  slack 80       16

``[uncertainty]`` rows are ``wind <generator-id>``, ``load <bus-id>`` or
``line <corridor-id>``; ``*`` as target applies a load/line row to every
loaded bus / every corridor.
"""

from __future__ import annotations

import io
from dataclasses import fields, replace
from pathlib import Path

from .network import Bus, CaseError, Corridor, Generator, NetworkCase, WindSpec

SECTIONS = ("case", "limits", "buses", "generators", "corridors", "uncertainty")
BUNDLED = Path(__file__).with_name("data")

_BUS_COLS = {"id": int, "kind": str, "p_demand": float, "q_demand": float, "q_reac": float, "v_set": float,
             "v_min": float, "v_max": float, "v_min_outage": float, "v_max_outage": float}
_GEN_COLS = {"id": int, "bus": int, "kind": str, "p_min": float, "p_max": float, "q_min": float, "q_max": float,
             "p_base": float, "participation": float}
_COR_COLS = {"id": int, "from": int, "to": int, "r": float, "x": float, "b": float, "s_max": float,
             "cost": float, "n0": int, "n_bar": int}
_UNC_COLS = {"kind": str, "target": str, "alpha": float, "beta": float, "u_ci": float, "u_rt": float,
             "u_co": float, "p_rt": float, "sigma_pct": float, "for_rate": float}
_REQUIRED = {
    "buses": ("id", "kind"),
    "generators": ("id", "bus", "kind", "p_min", "p_max"),
    "corridors": ("id", "from", "to", "x", "s_max", "cost", "n0", "n_bar"),
    "uncertainty": ("kind", "target"),
}


class CaseFileError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0, source: str = "<case>"):
        super().__init__(f"{source}:{line}:{column}: {message}")
        self.line = line
        self.column = column


def resolve_case_path(name_or_path: str | Path) -> Path:
    """Accept a path or the name of a bundled case (``garver6``, ``ieee24-ac``...)."""
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = BUNDLED / f"{name_or_path}.case"
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"no case file or bundled case named {str(name_or_path)!r}")


def _split(raw: str) -> str:
    return raw.split("#", 1)[0].rstrip()


def _tokens(line: str) -> list[tuple[str, int]]:
    """Tokens with their 1-based column."""
    out, col = [], 0
    for tok in line.split():
        col = line.index(tok, col)
        out.append((tok, col + 1))
        col += len(tok)
    return out


def _read_sections(text: str, source: str) -> dict[str, list[tuple[int, str]]]:
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = _split(raw)
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise CaseFileError("unterminated section header", n, 1, source)
            current = stripped[1:-1].strip().lower()
            if current not in SECTIONS:
                raise CaseFileError(f"unknown section [{current}]", n, 2, source)
            if current in sections:
                raise CaseFileError(f"duplicate section [{current}]", n, 2, source)
            sections[current] = []
            continue
        if current is None:
            raise CaseFileError("content before the first section header", n, 1, source)
        sections[current].append((n, line))
    return sections


def _keyvals(rows: list[tuple[int, str]], source: str) -> dict[str, tuple[str, int]]:
    out = {}
    for n, line in rows:
        if "=" not in line:
            raise CaseFileError("expected 'key = value'", n, 1, source)
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = (value, n)
    return out


def _table(name: str, rows: list[tuple[int, str]], columns: dict, source: str) -> list[dict]:
    if not rows:
        return []
    header_line, header = rows[0]
    cols = _tokens(header)
    for col, c in cols:
        if col not in columns:
            raise CaseFileError(f"unknown column {col!r} in [{name}]", header_line, c, source)
    names = [c for c, _ in cols]
    for req in _REQUIRED.get(name, ()):
        if req not in names:
            raise CaseFileError(f"[{name}] lacks required column {req!r}", header_line, 1, source)
    records = []
    for n, line in rows[1:]:
        toks = _tokens(line)
        if len(toks) != len(names):
            col = toks[min(len(toks), len(names)) - 1][1] if toks else 1
            raise CaseFileError(f"expected {len(names)} fields, found {len(toks)}", n, col, source)
        rec = {"_line": n}
        for (tok, c), col in zip(toks, names):
            if tok == "-":
                continue
            conv = columns[col]
            if col == "target":
                conv = str
            try:
                rec[col] = conv(tok)
            except ValueError:
                raise CaseFileError(f"bad value {tok!r} for column {col!r}", n, c, source) from None
        records.append(rec)
    return records


def _num(kv: dict, key: str, default, conv, source: str):
    if key not in kv:
        return default
    value, n = kv[key]
    try:
        return conv(value)
    except ValueError:
        raise CaseFileError(f"bad value {value!r} for {key}", n, 1, source) from None


def parse_case(text: str, source: str = "<case>") -> NetworkCase:
    sec = _read_sections(text, source)
    for required in ("buses", "generators", "corridors"):
        if required not in sec:
            raise CaseFileError(f"missing section [{required}]", 0, 0, source)
    head = _keyvals(sec.get("case", []), source)
    lim = _keyvals(sec.get("limits", []), source)
    name = head.get("name", (Path(source).stem, 0))[0]
    base = _num(head, "base_mva", 100.0, float, source)
    n_samples = _num(head, "n_samples", 10_000, int, source)
    vdef = {k: _num(lim, k, d, float, source) for k, d in
            (("v_min", 0.95), ("v_max", 1.05), ("v_min_outage", 0.90), ("v_max_outage", 1.10))}

    buses = []
    for rec in _table("buses", sec["buses"], _BUS_COLS, source):
        n = rec.pop("_line")
        kind = rec["kind"].lower()
        if kind not in ("slack", "pv", "pq"):
            raise CaseFileError(f"bus kind {kind!r} not in slack/pv/pq", n, 1, source)
        rec["kind"] = kind
        buses.append(Bus(**{**vdef, **rec}))

    gens = []
    for rec in _table("generators", sec["generators"], _GEN_COLS, source):
        n = rec.pop("_line")
        if rec["kind"] not in ("thermal", "wind"):
            raise CaseFileError(f"generator kind {rec['kind']!r} not in thermal/wind", n, 1, source)
        gens.append(Generator(**rec))

    corridors = []
    for rec in _table("corridors", sec["corridors"], _COR_COLS, source):
        rec.pop("_line")
        rec["from_bus"] = rec.pop("from")
        rec["to_bus"] = rec.pop("to")
        rec.setdefault("r", 0.0)
        rec.setdefault("b", 0.0)
        corridors.append(Corridor(**rec))

    wind, sigma, for_rate = [], {}, {}
    gen_ids = {g.id for g in gens}
    cor_ids = {c.id for c in corridors}
    loaded = [b.id for b in buses if b.p_demand > 0]
    for rec in _table("uncertainty", sec.get("uncertainty", []), _UNC_COLS, source):
        n = rec.pop("_line")
        kind, target = rec.pop("kind"), rec.pop("target")
        try:
            if kind == "wind":
                gid = int(target)
                if gid not in gen_ids:
                    raise CaseFileError(f"wind row names unknown generator {gid}", n, 1, source)
                wind.append(WindSpec(gid, **{k: rec[k] for k in ("alpha", "beta", "u_ci", "u_rt", "u_co", "p_rt")}))
            elif kind == "load":
                for bid in (loaded if target == "*" else [int(target)]):
                    sigma[bid] = rec["sigma_pct"]
            elif kind == "line":
                for cid in (sorted(cor_ids) if target == "*" else [int(target)]):
                    if cid not in cor_ids:
                        raise CaseFileError(f"line row names unknown corridor {cid}", n, 1, source)
                    for_rate[cid] = rec["for_rate"]
            else:
                raise CaseFileError(f"uncertainty kind {kind!r} not in wind/load/line", n, 1, source)
        except KeyError as exc:
            raise CaseFileError(f"{kind} row lacks {exc.args[0]!r}", n, 1, source) from None
        except ValueError as exc:
            if isinstance(exc, CaseFileError):
                raise
            raise CaseFileError(f"bad target {target!r}", n, 1, source) from None
    corridors = [replace(c, for_rate=for_rate.get(c.id, c.for_rate)) for c in corridors]
    try:
        return NetworkCase(name, base, tuple(buses), tuple(gens), tuple(corridors), tuple(wind), sigma, n_samples)
    except CaseError as exc:
        raise CaseFileError(str(exc), 0, 0, source) from None


def load_case(name_or_path: str | Path) -> NetworkCase:
    path = resolve_case_path(name_or_path)
    return parse_case(path.read_text(), str(path))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_table(buf: io.StringIO, name: str, header: list[str], rows: list[list]) -> None:
    buf.write(f"[{name}]\n")
    table = [header] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    for r in table:
        buf.write("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() + "\n")
    buf.write("\n")


def serialize_case(case: NetworkCase) -> str:
    buf = io.StringIO()
    buf.write("[case]\n")
    buf.write(f"name = {case.name}\nbase_mva = {_fmt(float(case.base_mva))}\nn_samples = {case.n_samples}\n\n")
    bus_cols = [f.name for f in fields(Bus)]
    _write_table(buf, "buses", bus_cols, [[getattr(b, c) for c in bus_cols] for b in case.buses])
    gen_cols = [f.name for f in fields(Generator)]
    _write_table(buf, "generators", gen_cols, [[getattr(g, c) for c in gen_cols] for g in case.generators])
    cor_cols = ["id", "from", "to", "r", "x", "b", "s_max", "cost", "n0", "n_bar"]
    _write_table(buf, "corridors", cor_cols, [
        [c.id, c.from_bus, c.to_bus, c.r, c.x, c.b, c.s_max, c.cost, c.n0, c.n_bar] for c in case.corridors
    ])
    unc_cols = list(_UNC_COLS)
    rows = []
    for w in case.wind:
        rows.append(["wind", w.generator, w.alpha, w.beta, w.u_ci, w.u_rt, w.u_co, w.p_rt, "-", "-"])
    for bid, pct in sorted(case.load_sigma_pct.items()):
        rows.append(["load", bid, "-", "-", "-", "-", "-", "-", pct, "-"])
    for c in case.corridors:
        if c.for_rate:
            rows.append(["line", c.id, "-", "-", "-", "-", "-", "-", "-", c.for_rate])
    _write_table(buf, "uncertainty", unc_cols, rows)
    return buf.getvalue()
