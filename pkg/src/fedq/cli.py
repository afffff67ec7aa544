"""Command-line front end: ``fedq <command> [options]``."""
from __future__ import annotations

import argparse
import itertools
import json
import os
import random
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .fedosov import (AbelianState, DegreeError, abelian_generic, abelian_induced_fast, structural_report,
                      validate_abelian)
from .geometry import (BaseMetric, LinearConnection, Report, ShapeError, build_induced, build_riemannian_induced,
                       build_special_atlas, check_homogeneity, curvature, is_induced_shape, levi_civita, ricci,
                       validate_curvature)
from .presets import Preset, get_preset, random_poly
from .quantize import flatness_residual, lift, moyal_bracket, star, structural_audit
from .scalars import GaussianRational, Ring, RingElement, StructuralError, dumps, ring_from_json
from .weyl import WeylSeries

COMMANDS = ("build", "curvature", "abelian", "lift", "star", "bracket", "audit")
PRESET_NAMES = ("flat", "sphere", "jet3", "poly2", "random")


class UsageError(Exception):
    """Bad command line, config or expression; exit status 2."""


class ParseError(UsageError):
    def __init__(self, message: str, column: int, text: str):
        self.column = column
        super().__init__(f"{message} at column {column}: {text!r}")


# ---------------------------------------------------------------------------
# expressions

_TOKEN = re.compile(r"\s*(?:(\d+)|(G\d+_\d\d(?:\[\d+(?:,\d+)*\])?)|([A-Za-z_][A-Za-z_0-9]*)|(\S))")


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        num, jet, name, sym = m.groups()
        col = m.start(m.lastindex) + 1
        if num is not None:
            out.append(("num", int(num), col))
        elif jet is not None:
            out.append(("jet", jet, col))
        elif name is not None:
            out.append(("name", name, col))
        else:
            out.append(("op", sym, col))
        pos = m.end()
    out.append(("end", None, len(text) + 1))
    return out


class _Parser:
    def __init__(self, text: str, ring: Ring):
        self.text = text
        self.ring = ring
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, tok[2], self.text)

    def parse(self) -> RingElement:
        if self.peek()[0] == "end":
            self.fail("empty expression")
        v = self.expr()
        if self.peek()[0] != "end":
            self.fail("unexpected token")
        return v

    def expr(self):
        v = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            w = self.term()
            v = v + w if op == "+" else v - w
        return v

    def term(self):
        v = self.unary()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.take()
            w = self.unary()
            if op[1] == "*":
                v = v * w
            else:
                if not w.is_constant() or not w:
                    self.fail("division only by a nonzero number", op)
                v = v.scale(GaussianRational(1) / w.constant_value())
        return v

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base_tok = self.peek()
        v = self.atom()
        if self.peek()[:2] != ("op", "^"):
            return v
        self.take()
        neg = False
        if self.peek()[:2] == ("op", "-"):
            self.take()
            neg = True
        t = self.peek()
        if t[0] != "num":
            self.fail("exponent must be an integer")
        self.take()
        e = t[1]
        if not neg:
            return v ** e
        name = base_tok[1] if base_tok[0] == "name" else None
        sym = self.ring.symbols.get(name) if name else None
        if sym is None or not sym.invertible or v != self.ring.fsym(name):
            self.fail("negative exponent needs an invertible symbol", base_tok)
        return self.ring.fsym(name, -e)

    def atom(self):
        t = self.take()
        kind, val, col = t
        ring = self.ring
        n = ring.n
        if kind == "num":
            return ring.const(val)
        if kind == "op" and val == "(":
            v = self.expr()
            if self.peek()[:2] != ("op", ")"):
                self.fail("missing closing parenthesis")
            self.take()
            return v
        if kind == "jet":
            if not ring.jets:
                self.fail("jet symbols need a ring in jet mode", t)
            m = re.fullmatch(r"G(\d+)_(\d)(\d)(?:\[([\d,]+)\])?", val)
            e, a, b = int(m.group(1)), int(m.group(2)), int(m.group(3))
            jet = tuple(int(x) for x in m.group(4).split(",")) if m.group(4) else None
            try:
                return ring.jet(e, a, b, jet)
            except StructuralError as exc:
                self.fail(str(exc), t)
        if kind == "name":
            m = re.fullmatch(r"([qp])(\d+)", val)
            if m:
                idx = int(m.group(2))
                if not 1 <= idx <= n:
                    self.fail(f"coordinate index out of range 1..{n}", t)
                return ring.q(idx) if m.group(1) == "q" else ring.p(idx)
            if val in ring.symbols:
                return ring.fsym(val)
            if val == "i":
                return ring.const(GaussianRational(0, 1))
            self.fail(f"unknown symbol {val!r}", t)
        self.fail("unexpected token", t)


def parse_expr(text: str, ring: Ring) -> RingElement:
    """Parse q1..qn, p1..pn, declared symbols, jet symbols, integers, + - * / ^ and parentheses."""
    return _Parser(text, ring).parse()


# ---------------------------------------------------------------------------
# configuration


def load_schema(name: str) -> dict:
    with resources.files("fedq").joinpath("schemas", name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_json(doc, schema_name: str):
    """Raise UsageError naming the JSON pointer of the first schema violation."""
    schema = load_schema(schema_name)
    validator = jsonschema.Draft202012Validator(schema)
    err = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if err is not None:
        raise UsageError(f"schema violation at {_pointer(err.absolute_path)}: {err.message}")


@dataclass
class Config:
    n: int = 2
    mode: str = "polynomial"
    connection: dict = field(default_factory=lambda: {"kind": "preset", "preset": "flat"})
    Z: int | None = None
    N: int | None = None
    inputs: list = field(default_factory=list)
    output: str = "json"
    seed: int = 0


def parse_config(source) -> Config:
    """Read a config from a path, '-' for stdin, or an already-loaded dict."""
    if isinstance(source, dict):
        doc = source
    else:
        try:
            if source == "-":
                doc = json.load(sys.stdin)
            else:
                with open(source, encoding="utf-8") as fh:
                    doc = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    validate_json(doc, "config.schema.json")
    conn = doc.get("connection", {"kind": "preset", "preset": "flat"})
    if isinstance(conn, str):
        conn = {"kind": "preset", "preset": conn}
    deg = doc.get("degrees", {})
    return Config(n=doc.get("n", 2), mode=doc.get("mode", "polynomial"), connection=conn,
                  Z=deg.get("Z"), N=deg.get("N"), inputs=list(doc.get("inputs", [])),
                  output=doc.get("output", "json"), seed=doc.get("seed", 0))


def _index_key(key: str, arity: int, n: int, where: str) -> tuple:
    parts = key.split(",")
    idx = tuple(int(x) for x in parts)
    if len(idx) != arity or not all(1 <= x <= n for x in idx):
        raise UsageError(f"bad index key {key!r} at {where}")
    return idx


def _value(x, ring: Ring, where: str) -> RingElement:
    if isinstance(x, str):
        try:
            return parse_expr(x, ring)
        except ParseError as exc:
            raise UsageError(f"{where}: {exc}") from None
    try:
        return ring_from_json(ring, x)
    except (StructuralError, TypeError, ValueError) as exc:
        raise UsageError(f"bad ring element at {where}: {exc}") from None


def resolve_connection(cfg: Config) -> Preset:
    conn = cfg.connection
    kind = conn.get("kind", "preset")
    if kind == "preset":
        name = conn.get("preset", "flat")
        if name == "random":
            return random_poly(cfg.seed, cfg.n)
        if name not in PRESET_NAMES:
            raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
        return get_preset(name, cfg.n if name == "flat" else None)
    ring = Ring(cfg.n, jets=cfg.mode == "jet", name="config")
    if cfg.mode == "jet" and kind != "riemannian":
        G = LinearConnection.from_jets(ring)
    elif kind == "riemannian" and "metric" in conn:
        rows = conn["metric"]
        if len(rows) != cfg.n or any(len(r) != cfg.n for r in rows):
            raise UsageError("schema violation at /connection/metric: metric must be n x n")
        g = BaseMetric(ring, [[_value(x, ring, f"/connection/metric/{a}/{b}") for b, x in enumerate(row)]
                              for a, row in enumerate(rows)])
        G = levi_civita(g)
    else:
        coeffs = {}
        for key, x in conn.get("gamma_base", {}).items():
            where = "/connection/gamma_base/" + key
            coeffs[_index_key(key, 3, cfg.n, where)] = _value(x, ring, where)
        G = LinearConnection(ring, coeffs)
    if kind == "riemannian":
        return Preset("config", ring, G, build_riemannian_induced(G), "riemannian")
    if kind == "special-atlas":
        return Preset("config", ring, G, build_special_atlas(G), "special")
    f = {}
    for key, x in conn.get("f", {}).items():
        where = "/connection/f/" + key
        e, *abd = _index_key(key, 4, cfg.n, where)
        v = _value(x, ring, where)
        # one entry per unordered (a, b, d); the others follow by symmetry
        for perm in set(itertools.permutations(abd)):
            if f.get((e,) + perm, v) != v:
                raise UsageError(f"conflicting f entries at {where}")
            f[(e,) + perm] = v
    return Preset("config", ring, G, build_induced(G, f), "generic")


# ---------------------------------------------------------------------------
# output helpers


def _threads() -> int:
    raw = os.environ.get("FEDQ_THREADS", "1")
    try:
        v = int(raw)
    except ValueError:
        raise UsageError(f"FEDQ_THREADS must be a positive integer, got {raw!r}") from None
    if v < 1:
        raise UsageError(f"FEDQ_THREADS must be a positive integer, got {raw!r}")
    return v


def build_state(preset: Preset, Z: int) -> AbelianState:
    Z = max(Z, 3)
    if is_induced_shape(preset.gamma):
        return abelian_induced_fast(preset.gamma, Z)
    return abelian_generic(preset.gamma, Z)


def _table_text(rows: list) -> str:
    if not rows:
        return "(empty)"
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _report_json(rep: Report) -> dict:
    return {"passed": rep.passed, "checks": dict(sorted(rep.checks.items())),
            "failures": {k: str(v) for k, v in sorted(rep.failures.items())}}


def _series_rows(s: WeylSeries) -> list:
    rows = []
    for (k, j, f), c in s.sorted_items():
        label = f"h^{k} y{list(j)}" + (f" dx{list(f)}" if f else "")
        rows.append((label, c.to_text()))
    return rows


# ---------------------------------------------------------------------------
# commands


def cmd_build(preset: Preset, cfg: Config):
    table = {",".join(map(str, k)): v for k, v in sorted(preset.gamma.table.items())}
    doc = {"preset": preset.name, "n": preset.ring.n, "mode": preset.mode,
           "gamma": {k: v.to_json() for k, v in table.items()}}
    text = _table_text([(f"gamma[{k}]", v.to_text()) for k, v in table.items()])
    return doc, text, True


def cmd_curvature(preset: Preset, cfg: Config):
    K = curvature(preset.gamma)
    rep = validate_curvature(K, preset.gamma)
    ric, flat = ricci(K)
    canon = {",".join(map(str, k)): v for k, v in sorted(K.canonical().items())}
    doc = {"K": {k: v.to_json() for k, v in canon.items()},
           "ricci": {",".join(map(str, k)): v.to_json() for k, v in sorted(ric.items())},
           "ricci_flat": flat, "report": _report_json(rep)}
    rows = [(f"K[{k}]", v.to_text()) for k, v in canon.items()]
    rows += [(f"Ric[{a},{b}]", v.to_text()) for (a, b), v in sorted(ric.items())]
    rows += [(line.split(" ", 1)[1], line.split(" ", 1)[0]) for line in rep.lines()]
    return doc, _table_text(rows), rep.passed


def cmd_abelian(preset: Preset, cfg: Config):
    st = build_state(preset, cfg.Z or 4)
    left = st.classify() if st.mode == "generic" else {}
    doc = st.to_json()
    rows = []
    for part, tables in (("r", st.r_tables), ("R", st.R_tables)):
        for z in sorted(tables):
            for kind in sorted(tables[z]):
                for key, c in sorted(tables[z][kind].items(), key=lambda kv: str(kv[0])):
                    rows.append((f"{part}[{z}] {kind} {key}", c.to_text()))
    # terms outside the induced-shape tables (generic connections) are kept verbatim
    if left:
        doc["unclassified"] = {f"{part}{z}": s.to_json() for (part, z), s in sorted(left.items())}
        for (part, z), s in sorted(left.items()):
            rows += [(f"{part}[{z}] {lab}", v) for lab, v in _series_rows(s)]
    return doc, _table_text(rows), True


def _inputs(cfg: Config, args, ring: Ring, count: int) -> list:
    texts = [t for t in (args.a, args.b) if t is not None]
    if not texts:
        texts = list(cfg.inputs)
    if len(texts) < count:
        raise UsageError(f"this command needs {count} input expression(s) (--a/--b or config inputs)")
    return [parse_expr(t, ring) for t in texts[:count]]


def cmd_lift(preset: Preset, cfg: Config, args):
    (a0,) = _inputs(cfg, args, preset.ring, 1)
    Z = cfg.Z or 4
    st = build_state(preset, Z)
    sec = lift(a0, st, Z)
    res = flatness_residual(sec, st)
    doc = {"a0": a0.to_json(), "Z": Z, "series": sec.series.to_json(), "flat": res.is_zero()}
    return doc, _table_text(_series_rows(sec.series)), res.is_zero()


def _star_like(preset: Preset, cfg: Config, args, bracket: bool):
    a0, b0 = _inputs(cfg, args, preset.ring, 2)
    N = cfg.N if cfg.N is not None else 2
    Z = cfg.Z if cfg.Z is not None else 2 * N
    if Z < 2 * N:
        raise DegreeError(f"insufficient degree: Z = {Z} but ħ^{N} needs Z >= 2N = {2 * N} "
                          f"(B_i uses a[z_a], b[z_b] with z_a + z_b = 2i)")
    st = build_state(preset, Z)
    if bracket:
        exp = moyal_bracket(a0, b0, st, N)
    else:
        with ThreadPoolExecutor(max_workers=min(2, _threads())) as pool:
            fa, fb = pool.submit(lift, a0, st, 2 * N), pool.submit(lift, b0, st, 2 * N)
            lifts = (fa.result(), fb.result())
        exp = star(a0, b0, st, N, lifts=lifts)
    return exp.to_json(), exp.to_text(), True


def cmd_audit(preset: Preset, cfg: Config, args):
    rep = Report()
    K = curvature(preset.gamma)
    rep.merge(validate_curvature(K, preset.gamma), "curvature.")
    if preset.gamma.induced:
        rep.merge(check_homogeneity(preset.gamma), "homogeneity.")
    Z = cfg.Z or 4
    st = build_state(preset, Z)
    rng = random.Random(cfg.seed)
    ring = preset.ring
    sections = []
    for _ in range(2):
        a = WeylSeries(ring, Z)
        for _ in range(4):
            j = [0] * (2 * ring.n)
            for _ in range(rng.randint(0, 2)):
                j[rng.randrange(2 * ring.n)] += 1
            a._add_term((0, tuple(j), ()), ring.const(rng.randint(-3, 3)) * ring.q(rng.randint(1, ring.n)))
        sections.append(a)
    rep.merge(validate_abelian(st, sections), "abelian.")
    if st.mode != "generic":
        rep.merge(structural_report(st, riemannian=preset.mode == "riemannian"), "tables.")
    for text in (cfg.inputs or ["q1", "p1"]):
        a0 = parse_expr(text, ring)
        sec = lift(a0, st, Z)
        rep.record(f"lift.flat[{text}]", flatness_residual(sec, st).is_zero())
        rep.merge(structural_audit(sec), f"lift[{text}].")
    doc = _report_json(rep)
    return doc, "\n".join(rep.lines()), rep.passed


def run(command: str, cfg: Config, args) -> int:
    preset = resolve_connection(cfg)
    if command == "build":
        doc, text, ok = cmd_build(preset, cfg)
    elif command == "curvature":
        doc, text, ok = cmd_curvature(preset, cfg)
    elif command == "abelian":
        doc, text, ok = cmd_abelian(preset, cfg)
    elif command == "lift":
        doc, text, ok = cmd_lift(preset, cfg, args)
    elif command in ("star", "bracket"):
        doc, text, ok = _star_like(preset, cfg, args, command == "bracket")
    else:
        doc, text, ok = cmd_audit(preset, cfg, args)
    if cfg.output == "json":
        sys.stdout.write(dumps(doc) + "\n")
    else:
        sys.stdout.write(text + "\n")
    return 0 if ok else 1


SCHEMA_FOR = {"build": "build.schema.json", "curvature": "curvature.schema.json",
              "abelian": "abelian_state.schema.json", "lift": "lift.schema.json",
              "star": "star_expansion.schema.json", "bracket": "star_expansion.schema.json",
              "audit": "audit.schema.json"}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedq", description="Exact Fedosov star products on cotangent bundles.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file ('-' for stdin)")
    p.add_argument("--preset", help="connection preset: " + ", ".join(PRESET_NAMES))
    p.add_argument("--n", type=int, help="base dimension for the flat and random presets")
    p.add_argument("--Z", type=int, help="Abelian connection degree")
    p.add_argument("--N", type=int, help="highest power of h in star products")
    p.add_argument("--a", help="first base function")
    p.add_argument("--b", help="second base function")
    p.add_argument("--output", choices=("json", "text"))
    p.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = parse_config(args.config) if args.config else Config()
        if args.preset:
            cfg.connection = {"kind": "preset", "preset": args.preset}
        for name in ("n", "Z", "N", "output", "seed"):
            v = getattr(args, name)
            if v is not None:
                setattr(cfg, name, v)
        if cfg.n < 1:
            raise UsageError("--n must be positive")
        if cfg.Z is not None and cfg.Z < 1:
            raise UsageError("--Z must be positive")
        if cfg.N is not None and cfg.N < 0:
            raise UsageError("--N must be non-negative")
        return run(args.command, cfg, args)
    except UsageError as exc:
        print(f"fedq: error: {exc}", file=sys.stderr)
        return 2
    except DegreeError as exc:
        print(f"fedq: error: {exc}", file=sys.stderr)
        return 2
    except (StructuralError, ShapeError) as exc:
        print(f"fedq: validation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
