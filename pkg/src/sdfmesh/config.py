"""Run configuration: defaults, ``key = value`` text format and shape expressions.

Shape grammar::

    shape  := circle CX CY R
            | rect X0 X1 Y0 Y1
            | contour PATH
            | (union | difference | intersection) ( shape , shape )

Sizing grammar (``sizing = ...``)::

    constant | auto [K=V] | linear A B shape

``linear`` sizes elements as ``A + B * sdf(shape)``.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .exceptions import ParseError, ValidationError
from .sdf import Circle, Combined, Contour, Rectangle, Shape


@dataclass
class Config:
    n_total: int = 1000
    shape: str = "circle 0.5 0.5 0.4"
    sizing: str = "constant"
    K: float = 0.005
    algorithm: str = "hybrid"
    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    threads: int = 1
    seed: int = 0
    output_interval: int = 0
    output_dir: str = "."
    max_iter: int = 2000
    fixed_points: tuple = ()
    n_opt: float = 3.3
    fac_grid: int = 5
    fac_s: float = 0.5
    n_grid: int = 5
    n_nei_thres: int = 3
    fac_nei: float = 2.0
    eta: float = 0.5
    fac_init: float | None = None
    t_add_quality: float = 0.002
    fac_add: float = 0.6
    fac_retria: float = 0.1
    fac_end: float = 0.001
    fac_pt: float = 0.4
    fac_geps: float = 0.01
    t_depth_adf: int = 10
    fac_etol_adf: float = 0.1
    t_end_quality: float = 0.001
    t_end_alpha_max: float = 0.005
    fac_voro_bound: float = 5.0
    t_tria_ccircum: float = 0.4
    t_switch_quality: float = 0.0015
    damping: float = 1.0
    t_newton_ct: int = 10
    fac_f: float = 1.2
    k_spring: float = 1.0
    dt: float = 0.2
    base_dir: str = field(default=".", compare=False, repr=False)

    def __post_init__(self):
        self.domain = tuple(float(v) for v in self.domain)
        self.fixed_points = tuple(tuple(float(c) for c in p) for p in self.fixed_points)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def resolved_fac_init(self):
        """Explicit ``fac_init`` or the default for this shape and sizing."""
        if self.fac_init is not None:
            return self.fac_init
        simple = self.sizing.strip() == "constant" and self.shape.split()[0] in ("circle", "rect")
        return 1.0 if simple else 0.2

    def build_shape(self) -> Shape:
        return parse_shape(self.shape, self.base_dir, self.domain)

    def validate(self):
        validate_config(self)
        return self


_INT_FIELDS = {"n_total", "threads", "seed", "output_interval", "max_iter", "fac_grid", "n_grid",
               "n_nei_thres", "t_depth_adf", "t_newton_ct"}
_STR_FIELDS = {"shape", "sizing", "algorithm", "output_dir"}
_POSITIVE = {
    "n_opt", "fac_grid", "fac_s", "n_grid", "n_nei_thres", "fac_nei", "eta", "t_add_quality",
    "fac_add", "fac_retria", "fac_end", "fac_pt", "fac_geps", "t_depth_adf", "fac_etol_adf",
    "t_end_quality", "t_end_alpha_max", "fac_voro_bound", "t_tria_ccircum", "t_switch_quality",
    "damping", "t_newton_ct", "fac_f", "k_spring", "dt", "threads", "max_iter",
}
FIELD_NAMES = [f.name for f in fields(Config) if f.name != "base_dir"]


def validate_config(cfg: Config):
    for name in _POSITIVE:
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ValidationError(f"{name} must be positive, got {v!r}")
    if not (isinstance(cfg.n_total, int) and cfg.n_total >= 3):
        raise ValidationError(f"n_total must be an integer >= 3, got {cfg.n_total!r}")
    if cfg.algorithm not in ("dm", "cvd", "hybrid"):
        raise ValidationError(f"algorithm must be dm, cvd or hybrid, got {cfg.algorithm!r}")
    if cfg.output_interval < -1:
        raise ValidationError("output_interval must be -1, 0 or positive")
    if cfg.K < 0 or not math.isfinite(cfg.K):
        raise ValidationError("K must be non-negative")
    if cfg.fac_init is not None and not (0 < cfg.fac_init <= 1):
        raise ValidationError("fac_init must lie in (0, 1]")
    if cfg.fac_add > 1e6:
        raise ValidationError("fac_add is unreasonably large")
    ax, bx, ay, by = cfg.domain
    if not (bx > ax and by > ay):
        raise ValidationError(f"invalid domain {cfg.domain}")
    kind = cfg.sizing.split()[0] if cfg.sizing.strip() else ""
    if kind not in ("constant", "auto", "linear"):
        raise ValidationError(f"unknown sizing {cfg.sizing!r}")
    return cfg


# ----------------------------------------------------------- shapes ---------

_TOKEN = re.compile(r"\s*([(),]|[^\s(),]+)")


def _tokenize(text):
    pos = 0
    out = []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"cannot tokenize shape near {text[pos:]!r}")
        out.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return out


def _number(tok):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}") from None


def parse_shape(text, base_dir=".", domain=None) -> Shape:
    """Build a signed distance field from a shape expression."""
    tokens = _tokenize(text)
    shape, rest = _parse_shape_tokens(tokens, Path(base_dir), domain)
    if rest:
        raise ParseError(f"unexpected trailing tokens {' '.join(rest)!r} in shape")
    return shape


def _parse_shape_tokens(tokens, base_dir, domain):
    if not tokens:
        raise ParseError("empty shape expression")
    head, rest = tokens[0], tokens[1:]
    if head == "circle":
        if len(rest) < 3:
            raise ParseError("circle needs CX CY R")
        cx, cy, r = (_number(t) for t in rest[:3])
        return Circle((cx, cy), r), rest[3:]
    if head == "rect":
        if len(rest) < 4:
            raise ParseError("rect needs X0 X1 Y0 Y1")
        return Rectangle(*(_number(t) for t in rest[:4])), rest[4:]
    if head == "contour":
        if not rest or rest[0] in "(),":
            raise ParseError("contour needs a file path")
        path = Path(rest[0])
        if not path.is_absolute():
            path = base_dir / path
        box = domain if domain is not None else None
        return Contour.from_file(path, box=box), rest[1:]
    if head in Combined.OPS:
        if not rest or rest[0] != "(":
            raise ParseError(f"{head} needs '(' after the operator")
        left, rest = _parse_shape_tokens(rest[1:], base_dir, domain)
        if not rest or rest[0] != ",":
            raise ParseError(f"{head} needs ',' between operands")
        right, rest = _parse_shape_tokens(rest[1:], base_dir, domain)
        if not rest or rest[0] != ")":
            raise ParseError(f"{head} needs a closing ')'")
        return Combined(head, left, right), rest[1:]
    raise ParseError(f"unknown shape {head!r}")


def parse_sizing(text, base_dir=".", domain=None):
    """Returns ``(kind, params)``; ``params`` holds ``K`` or ``(A, B, shape)``."""
    parts = text.strip().split(None, 1)
    if not parts:
        raise ParseError("empty sizing")
    kind = parts[0]
    rest = parts[1] if len(parts) > 1 else ""
    if kind == "constant":
        if rest:
            raise ParseError("constant sizing takes no arguments")
        return "constant", {}
    if kind == "auto":
        params = {}
        for item in rest.split():
            m = re.fullmatch(r"K=(\S+)", item)
            if not m:
                raise ParseError(f"unexpected sizing argument {item!r}")
            params["K"] = _number(m.group(1))
        return "auto", params
    if kind == "linear":
        toks = rest.split(None, 2)
        if len(toks) < 3:
            raise ParseError("linear sizing needs A B SHAPE")
        a, b = _number(toks[0]), _number(toks[1])
        return "linear", {"A": a, "B": b, "shape": parse_shape(toks[2], base_dir, domain)}
    raise ParseError(f"unknown sizing {kind!r}")


# -------------------------------------------------------- text format -------

def _convert(name, raw, lineno):
    try:
        if name == "domain":
            vals = tuple(float(v) for v in raw.replace(",", " ").split())
            if len(vals) != 4:
                raise ValueError("domain needs 4 numbers")
            return vals
        if name == "fixed_points":
            pts = []
            for chunk in raw.split(";"):
                chunk = chunk.strip()
                if chunk:
                    xy = [float(v) for v in chunk.replace(",", " ").split()]
                    if len(xy) != 2:
                        raise ValueError("fixed point needs 2 numbers")
                    pts.append(tuple(xy))
            return tuple(pts)
        if name == "fac_init":
            return None if raw.lower() in ("auto", "none", "") else float(raw)
        if name in _INT_FIELDS:
            v = float(raw)
            if v != int(v):
                raise ValueError("expected an integer")
            return int(v)
        if name in _STR_FIELDS:
            return raw
        return float(raw)
    except ValueError as exc:
        raise ParseError(f"bad value for {name}: {exc}", lineno) from None


def parse_config(text: str, base_dir=".", overrides=None, validate=True) -> Config:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in FIELD_NAMES:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key == "sizing":
            try:
                kind, params = parse_sizing(raw, base_dir)
            except ParseError as exc:
                raise ParseError(str(exc), lineno) from None
            except (OSError, ValueError) as exc:
                raise ParseError(f"bad sizing: {exc}", lineno) from None
            if kind == "auto":
                raw = "auto"
                if "K" in params:
                    values["K"] = params["K"]
        elif key == "shape":
            try:
                _tokenize(raw)
            except ParseError as exc:
                raise ParseError(str(exc), lineno) from None
        values[key] = _convert(key, raw, lineno)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = Config(**values, base_dir=str(base_dir))
    if validate:
        validate_config(cfg)
    return cfg


def load_config(path, overrides=None) -> Config:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent, overrides=overrides)


def format_config(cfg: Config) -> str:
    """Text form that :func:`parse_config` reads back to an equal Config."""
    lines = []
    for name in FIELD_NAMES:
        v = getattr(cfg, name)
        if name == "domain":
            s = " ".join(repr(float(x)) for x in v)
        elif name == "fixed_points":
            s = "; ".join(f"{p[0]!r} {p[1]!r}" for p in v)
        elif name == "fac_init":
            s = "auto" if v is None else repr(float(v))
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        lines.append(f"{name} = {s}")
    return "\n".join(lines) + "\n"
