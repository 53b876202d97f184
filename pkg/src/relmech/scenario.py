"""Scenario files: a line-oriented section/key-value format.

Example::

    [scenario]
    name = rotating
    dim = 2

    [constants]
    omega = 1

    [equation free]
    xi1 = "0"
    xi2 = "0"

    [frame rotating]
    g1 = "-omega*q2"
    g2 = "omega*q1"

    [chart R]
    forward1 = "q1*cos(omega*t) + q2*sin(omega*t)"
    ...

    [task to-rotating]
    kind = transform
    equation = free
    chart = R

Values are quoted strings (expressions), numbers, comma-separated number
lists, or ``;``-separated rows of a matrix.  ``#`` starts a comment outside
quotes.  Tasks run in file order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .bundle import ChartError, CoordinateChange, SampleBox
from .connections import DynamicEquation, ReferenceFrame
from .expr import ExpressionError, parse_expression
from .frames import galilei_chart

__all__ = ["ScenarioError", "Value", "Task", "Scenario", "parse_scenario", "load_scenario", "TASK_KINDS"]

TASK_KINDS = ("transform", "coriolis", "check-free", "integrate", "geodesic", "adapted-check", "report")

# required and optional keys per task kind
_TASK_KEYS = {
    "transform": ({"equation", "chart"}, {"point_t", "point_q", "point_v", "save_as", "expect*"}),
    "coriolis": ({"equation", "frame"}, {"point_t", "point_q", "point_v", "expect_a"}),
    "check-free": ({"equation"}, {"expect"}),
    "integrate": ({"equation", "t0", "q0", "v0", "t_end", "step"}, {"chart"}),
    "geodesic": ({"equation", "frame"}, {"expect", "point_t", "point_q"}),
    "adapted-check": ({"frame", "chart"}, {"expect"}),
    "report": ({"equation", "frame", "point_t", "point_q", "point_v"}, set()),
}

_REFS = {"equation": "equations", "frame": "frames", "chart": "charts"}


class ScenarioError(ValueError):
    """Parse or validation failure, located by file line."""

    def __init__(self, message: str, line: int | None = None, path: str = ""):
        self.line = line
        loc = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(loc + message)


@dataclass(frozen=True)
class Value:
    raw: str
    line: int
    quoted: bool

    def text(self) -> str:
        return self.raw

    def number(self) -> float:
        """A literal or a constant expression such as ``2*pi``."""
        try:
            return float(self.raw)
        except ValueError:
            pass
        try:
            e = parse_expression(self.raw, 1)
        except ExpressionError:
            e = None
        if e is None or e.variables:
            raise ScenarioError(f"expected a number, found {self.raw!r}", self.line)
        return float(e(0.0, [0.0], [0.0]))

    def numbers(self) -> list[float]:
        try:
            return [float(x) for x in self.raw.split(",") if x.strip()]
        except ValueError:
            raise ScenarioError(f"expected a list of numbers, found {self.raw!r}", self.line) from None

    def matrix(self) -> list[list[float]]:
        rows = [r for r in self.raw.split(";") if r.strip()]
        try:
            return [[float(x) for x in r.split(",")] for r in rows]
        except ValueError:
            raise ScenarioError(f"expected a matrix, found {self.raw!r}", self.line) from None


@dataclass
class Task:
    kind: str
    name: str
    params: dict[str, Value]
    line: int

    def get(self, key: str, default=None):
        return self.params.get(key, default)

    def echo(self) -> dict:
        return {k: v.raw for k, v in sorted(self.params.items())}


@dataclass
class Scenario:
    name: str
    m: int
    seed: int
    constants: dict[str, float]
    box: SampleBox
    equations: dict[str, DynamicEquation] = field(default_factory=dict)
    frames: dict[str, ReferenceFrame] = field(default_factory=dict)
    charts: dict[str, CoordinateChange] = field(default_factory=dict)
    tasks: list[Task] = field(default_factory=list)
    path: str = ""


_SECTION = re.compile(r"^\[\s*([A-Za-z][\w-]*)(?:\s+([\w.-]+))?\s*\]$")
_KEY = re.compile(r"^([A-Za-z_][\w]*)\s*=\s*(.*)$")


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out).strip()


def _raw_sections(text: str, path: str):
    sections = []
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = _strip_comment(line)
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = (m.group(1), m.group(2), lineno, {})
            sections.append(current)
            continue
        m = _KEY.match(line)
        if not m:
            raise ScenarioError(f"cannot parse line {line!r}", lineno, path)
        if current is None:
            raise ScenarioError("key outside of any section", lineno, path)
        key, raw = m.group(1), m.group(2).strip()
        quoted = len(raw) >= 2 and raw[0] == raw[-1] == '"'
        if quoted:
            raw = raw[1:-1]
        elif '"' in raw:
            raise ScenarioError(f"unbalanced quotes in {raw!r}", lineno, path)
        if key in current[3]:
            raise ScenarioError(f"duplicate key {key!r}", lineno, path)
        current[3][key] = Value(raw, lineno, quoted)
    return sections


def _components(section, prefix: str, m: int, path: str) -> list[str]:
    kind, name, line, keys = section
    out = []
    for i in range(1, m + 1):
        v = keys.get(f"{prefix}{i}")
        if v is None:
            raise ScenarioError(f"{kind} {name!r}: missing {prefix}{i}", line, path)
        out.append(v.raw)
    extra = [k for k in keys if re.fullmatch(rf"{prefix}\d+", k) and not 1 <= int(k[len(prefix):]) <= m]
    if extra:
        raise ScenarioError(f"{kind} {name!r}: component {extra[0]} exceeds dimension {m}", keys[extra[0]].line, path)
    return out


def parse_scenario(text: str, path: str = "<scenario>", seed: int | None = None) -> Scenario:
    sections = _raw_sections(text, path)
    head = [s for s in sections if s[0] == "scenario"]
    if len(head) != 1:
        raise ScenarioError("exactly one [scenario] section is required", None, path)
    hk = head[0][3]
    if "dim" not in hk:
        raise ScenarioError("[scenario] needs 'dim'", head[0][2], path)
    m = int(hk["dim"].number())
    if m < 1:
        raise ScenarioError("dim must be positive", hk["dim"].line, path)
    seed = int(hk["seed"].number()) if seed is None and "seed" in hk else (seed or 0)
    name = hk["name"].raw if "name" in hk else Path(path).stem

    constants: dict[str, float] = {}
    for s in sections:
        if s[0] == "constants":
            for k, v in s[3].items():
                constants[k] = v.number()

    box = SampleBox(seed=seed)
    for s in sections:
        if s[0] == "box":
            k = s[3]
            box = SampleBox(
                tuple(k["t"].numbers()) if "t" in k else box.t,
                tuple(k["q"].numbers()) if "q" in k else box.q,
                tuple(k["v"].numbers()) if "v" in k else box.v,
                int(k["points"].number()) if "points" in k else box.n,
                seed,
            )
    sc = Scenario(name, m, seed, constants, box, path=path)

    seen: dict[str, int] = {}
    for s in sections:
        kind, sname, line, keys = s
        if kind in ("scenario", "constants", "box"):
            continue
        if kind not in ("equation", "frame", "chart", "task"):
            raise ScenarioError(f"unknown section kind {kind!r}", line, path)
        if not sname:
            raise ScenarioError(f"[{kind}] section needs a name", line, path)
        key = f"{kind}:{sname}"
        if key in seen:
            raise ScenarioError(f"{kind} {sname!r} defined twice", line, path)
        seen[key] = line
        try:
            if kind == "equation":
                sc.equations[sname] = DynamicEquation.from_strings(_components(s, "xi", m, path), constants, sname)
            elif kind == "frame":
                sc.frames[sname] = ReferenceFrame.from_strings(_components(s, "g", m, path), constants, sname)
            elif kind == "chart":
                sc.charts[sname] = _chart(s, m, constants, box, path)
            else:
                sc.tasks.append(_task(s, path))
        except (ExpressionError, ChartError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"{kind} {sname!r}: {exc}", line, path) from None
    _check_references(sc)
    return sc


def _chart(section, m, constants, box, path) -> CoordinateChange:
    kind, name, line, keys = section
    chart_box = box.with_points(64)
    if "type" in keys and keys["type"].raw == "galilei":
        k = keys["k"].matrix() if "k" in keys else [[float(i == j) for j in range(m)] for i in range(m)]
        u = keys["u"].numbers() if "u" in keys else [0.0] * m
        a = keys["a"].numbers() if "a" in keys else [0.0] * m
        ch = galilei_chart(k, u, a, chart_box)
        return CoordinateChange(m, ch.forward, ch.inverse, 0.0, name, chart_box, False)
    offset = keys["time_offset"].number() if "time_offset" in keys else 0.0
    return CoordinateChange.from_strings(
        _components(section, "forward", m, path),
        _components(section, "inverse", m, path),
        m,
        offset,
        constants,
        name,
        chart_box,
    )


def _task(section, path) -> Task:
    _, name, line, keys = section
    if "kind" not in keys:
        raise ScenarioError(f"task {name!r} needs 'kind'", line, path)
    kind = keys["kind"].raw
    if kind not in _TASK_KEYS:
        raise ScenarioError(f"task {name!r}: unknown kind {kind!r}", keys["kind"].line, path)
    required, optional = _TASK_KEYS[kind]
    params = {k: v for k, v in keys.items() if k != "kind"}
    missing = sorted(required - params.keys())
    if missing:
        raise ScenarioError(f"task {name!r} ({kind}) is missing {', '.join(missing)}", line, path)
    for k, v in params.items():
        ok = k in required or k in optional or ("expect*" in optional and k.startswith("expect"))
        if not ok:
            raise ScenarioError(f"task {name!r} ({kind}): unexpected key {k!r}", v.line, path)
    return Task(kind, name, params, line)


def _check_references(sc: Scenario) -> None:
    saved: set[str] = set()
    for task in sc.tasks:
        for key, table in _REFS.items():
            v = task.get(key)
            if v is None:
                continue
            names = getattr(sc, table).keys() | (saved if key == "equation" else set())
            if v.raw not in names:
                raise ScenarioError(
                    f"task {task.name!r}: undefined {key} {v.raw!r}", v.line, sc.path
                )
        if task.kind == "transform" and task.get("save_as") is not None:
            saved.add(task.get("save_as").raw)


def load_scenario(path, seed: int | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", None, str(path)) from None
    return parse_scenario(text, str(path), seed)
