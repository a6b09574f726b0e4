"""Flat key-value configuration files.

Grammar (one assignment per line, ``#`` starts a comment):

    key = value
    scalar   1e-7, 0.12, 20
    vector   0.07, 0.13, 0.17          (comma-separated numbers)
    matrix   1e-4, 0, 0; 0, 1e-3, 0; 0, 0, 1e-3   (rows split by ';')
    word     explicit-dual             (kinds, mode)
    words    nominal, robust           (comma-separated)

Unknown keys are rejected. Every parameter defaults to the baseline
three-heap scenario; ``gamma`` wins over ``epsilon`` when both are given,
otherwise ``epsilon`` is mapped through the standard-normal quantile.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ParseError, ValidationError
from .ocp import FormulationKind
from .plant import SystemParams
from .stochastic import inverse_normal_cdf

MODES = ("single", "campaign", "alpha-sweep")

_DEFAULT_P0 = ((1e-4, 0.0, 0.0), (0.0, 1e-3, 0.0), (0.0, 0.0, 1e-3))
_DEFAULT_Q = ((1e-7, 0.0, 0.0), (0.0, 1e-7, 0.0), (0.0, 0.0, 1e-7))


@dataclass(frozen=True)
class Config:
    """Validated run configuration; plain tuples so round-trips compare exactly."""

    x0: tuple = (0.07, 0.13, 0.17)
    p0: tuple = _DEFAULT_P0
    q: tuple = _DEFAULT_Q
    r: float = 2e-6
    prices: tuple = (2.0, 1.0, 1.0)
    y_max: float = 0.12
    gamma: float = 2.0
    u_min: float | tuple = 0.0
    u_max: float | tuple = 1.0
    alpha: float = 100.0
    alphas: tuple = ()
    horizon: int = 15
    casts: int = 20
    kind: str = "explicit-dual"
    kinds: tuple = ("nominal", "robust", "implicit-dual", "explicit-dual")
    seed: int = 0
    runs: int = 1000
    workers: int = 1
    mode: str = "single"
    out_dir: str = ""
    x_hat0: tuple | None = None

    def to_params(self) -> SystemParams:
        import numpy as np

        return SystemParams(
            x0_true=np.asarray(self.x0, dtype=float),
            p0=np.asarray(self.p0, dtype=float),
            q=np.asarray(self.q, dtype=float),
            r=self.r,
            prices=np.asarray(self.prices, dtype=float),
            y_max=self.y_max,
            gamma=self.gamma,
            u_min=self.u_min,
            u_max=self.u_max,
            horizon=self.horizon,
            n_casts=self.casts,
            alpha=self.alpha,
        )

    def validate(self) -> "Config":
        self.to_params()  # SystemParams owns the numeric invariants
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for k in (self.kind, *self.kinds):
            try:
                FormulationKind(k)
            except ValueError:
                raise ValidationError(f"unknown formulation kind {k!r}") from None
        if self.runs < 1:
            raise ValidationError("n_runs must be at least 1")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")
        if self.x_hat0 is not None and len(self.x_hat0) != len(self.x0):
            raise ValidationError("x_hat0 must have the same length as x0")
        if any(a < 0 for a in self.alphas):
            raise ValidationError("alpha must be nonnegative")
        return self


_SCALAR_KEYS = {"r", "y_max", "gamma", "epsilon", "alpha"}
_INT_KEYS = {"horizon", "casts", "seed", "runs", "workers"}
_VECTOR_KEYS = {"x0", "prices", "alphas", "x_hat0"}
_VECTOR_OR_SCALAR_KEYS = {"u_min", "u_max"}
_MATRIX_KEYS = {"p0", "q"}
_WORD_KEYS = {"kind", "mode", "out_dir"}
_WORDS_KEYS = {"kinds"}
ALL_KEYS = (
    _SCALAR_KEYS
    | _INT_KEYS
    | _VECTOR_KEYS
    | _VECTOR_OR_SCALAR_KEYS
    | _MATRIX_KEYS
    | _WORD_KEYS
    | _WORDS_KEYS
)


def _parse_number(text: str, key: str, line_no: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"line {line_no}: key {key!r}: {text!r} is not a number") from None


def _parse_vector(text: str, key: str, line_no: int) -> tuple:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise ParseError(f"line {line_no}: key {key!r}: empty vector")
    return tuple(_parse_number(p, key, line_no) for p in items)


def parse_text(text: str) -> Config:
    """Parse and validate configuration text; see the module docstring."""
    raw: dict = {}
    epsilon = None
    gamma_given = False
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in ALL_KEYS:
            raise ParseError(f"line {line_no}: unknown key {key!r}")
        if key in raw or (key == "epsilon" and epsilon is not None):
            raise ParseError(f"line {line_no}: duplicate key {key!r}")
        if key == "epsilon":
            epsilon = _parse_number(value, key, line_no)
            continue
        if key in _SCALAR_KEYS:
            raw[key] = _parse_number(value, key, line_no)
            if key == "gamma":
                gamma_given = True
        elif key in _INT_KEYS:
            num = _parse_number(value, key, line_no)
            if num != int(num):
                raise ParseError(f"line {line_no}: key {key!r} must be an integer")
            raw[key] = int(num)
        elif key in _VECTOR_KEYS:
            raw[key] = _parse_vector(value, key, line_no)
        elif key in _VECTOR_OR_SCALAR_KEYS:
            vec = _parse_vector(value, key, line_no)
            raw[key] = vec[0] if len(vec) == 1 else vec
        elif key in _MATRIX_KEYS:
            rows = [r.strip() for r in value.split(";") if r.strip()]
            mat = tuple(_parse_vector(r, key, line_no) for r in rows)
            if len({len(r) for r in mat}) != 1:
                raise ParseError(f"line {line_no}: key {key!r}: ragged matrix rows")
            raw[key] = mat
        elif key in _WORDS_KEYS:
            raw[key] = tuple(w.strip() for w in value.split(",") if w.strip())
        else:
            raw[key] = value
    if not gamma_given and epsilon is not None:
        if not 0.0 < epsilon < 1.0:
            raise ValidationError("epsilon must lie strictly between 0 and 1")
        raw["gamma"] = inverse_normal_cdf(1.0 - epsilon)
    try:
        cfg = Config(**raw)
    except TypeError as exc:
        raise ParseError(str(exc)) from None
    return cfg.validate()


def parse_config(path) -> Config:
    """Read, parse and validate a configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_text(fh.read())


def _fmt_scalar(x) -> str:
    return repr(x) if isinstance(x, float) else str(x)


def _fmt(value) -> str:
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(_fmt_scalar(x) for x in row) for row in value)
        return ", ".join(_fmt_scalar(x) for x in value)
    return _fmt_scalar(value)


def write_config(cfg: Config) -> str:
    """Canonical text form; parse_text(write_config(c)) == c for valid c."""
    lines = []
    for f in fields(Config):
        value = getattr(cfg, f.name)
        if value is None or (f.name == "alphas" and value == ()):
            continue
        if f.name == "out_dir" and value == "":
            continue
        lines.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"
