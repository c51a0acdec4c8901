"""JSON problem descriptions.

A problem file describes one algebroid in a single chart, an optional fiber
metric and an optional connection.  Layout (0-based indices):

* ``anchor[a][i]``: ``rho_a^i``, an ``m x n`` table of expression strings.
* ``brackets[c][a][b]`` for ``b < a``: ``L^c_ab``; row ``a`` of block ``c``
  has ``a`` entries.  The ``a < b`` half follows by antisymmetry.
* ``metric``: ragged upper triangle (row ``a`` holds ``g_ab`` for ``b >= a``).
* ``connection``: ``gamma[beta][alpha][a] = Gamma^beta_{alpha a}`` or the
  string ``"levi-civita"``.

Numbers are accepted wherever an expression string is.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .algebroid import LieAlgebroid
from .connection import AConnection, RiemannMetric
from .levi_civita import LeviCivitaConnection
from .scalar_field import ExprError, parse_expr

__all__ = ["ConfigError", "ProblemConfig", "load_schema", "TOLERANCE_DEFAULTS"]

TOLERANCE_DEFAULTS = {
    "validate": 1e-10,
    "admissibility": 1e-6,
    "isometry": 1e-6,
    "compatibility": 1e-5,
    "consistency": 1e-6,
    "determinant": 1e-6,
    "spd_eps": 1e-8,
}


class ConfigError(ValueError):
    """Schema or content violation, located by a JSON path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def load_schema(name: str) -> dict:
    text = resources.files("lieconn").joinpath("schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _check_expr(value, path, n):
    try:
        parse_expr(str(value), n)
    except ExprError as exc:
        raise ConfigError(path, str(exc)) from None


def _check_shape(table, dims, path, n):
    """Walk a nested list with the expected dimensions and parse every leaf."""
    if not dims:
        _check_expr(table, path, n)
        return
    if not isinstance(table, list) or len(table) != dims[0]:
        got = len(table) if isinstance(table, list) else type(table).__name__
        raise ConfigError(path, f"expected a list of length {dims[0]}, got {got}")
    for i, sub in enumerate(table):
        _check_shape(sub, dims[1:], f"{path}[{i}]", n)


@dataclass
class ProblemConfig:
    base_dim: int
    fiber_rank: int
    anchor: list
    domain: list
    name: str = ""
    description: str = ""
    bundle_rank: int | None = None
    brackets: list | None = None
    metric: list | None = None
    connection: object = None
    seed: int = 0
    x0: list | None = None
    tolerances: dict = field(default_factory=dict)

    # -- (de)serialization --------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        try:
            jsonschema.validate(data, load_schema("config"))
        except jsonschema.ValidationError as exc:
            raise ConfigError(_json_path(exc.absolute_path), exc.message) from None
        data = copy.deepcopy(data)
        cfg = cls(**data)
        cfg._check()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ProblemConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ProblemConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def to_dict(self) -> dict:
        out = {
            "name": self.name, "description": self.description,
            "base_dim": self.base_dim, "fiber_rank": self.fiber_rank,
            "anchor": self.anchor, "domain": self.domain, "seed": self.seed,
            "tolerances": dict(self.tolerances),
        }
        for key in ("bundle_rank", "brackets", "metric", "connection", "x0"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return copy.deepcopy(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # -- checks -------------------------------------------------------------

    @property
    def k(self) -> int:
        return self.fiber_rank if self.bundle_rank is None else self.bundle_rank

    def _check(self):
        n, m, k = self.base_dim, self.fiber_rank, self.k
        _check_shape(self.anchor, [m, n], "$.anchor", n)
        if len(self.domain) != n:
            raise ConfigError("$.domain", f"expected {n} intervals, got {len(self.domain)}")
        for i, (lo, hi) in enumerate(self.domain):
            if not lo < hi:
                raise ConfigError(f"$.domain[{i}]", "interval must satisfy lo < hi")
        if self.brackets is not None:
            if len(self.brackets) != m:
                raise ConfigError("$.brackets", f"expected {m} blocks (one per c)")
            for c, block in enumerate(self.brackets):
                if not isinstance(block, list) or len(block) != m:
                    raise ConfigError(f"$.brackets[{c}]", f"expected {m} rows")
                for a, row in enumerate(block):
                    _check_shape(row, [a], f"$.brackets[{c}][{a}]", n)
        if self.metric is not None:
            if len(self.metric) != k:
                raise ConfigError("$.metric", f"expected {k} rows")
            for a, row in enumerate(self.metric):
                _check_shape(row, [k - a], f"$.metric[{a}]", n)
        if isinstance(self.connection, str):
            if self.connection != "levi-civita":
                raise ConfigError("$.connection", "string form must be 'levi-civita'")
            if self.metric is None:
                raise ConfigError("$.connection", "'levi-civita' needs a metric")
            if k != m:
                raise ConfigError("$.connection", "'levi-civita' needs bundle_rank == fiber_rank")
        elif self.connection is not None:
            _check_shape(self.connection, [k, k, m], "$.connection", n)
        if self.x0 is not None and len(self.x0) != n:
            raise ConfigError("$.x0", f"expected {n} coordinates")
        for key in self.tolerances:
            if key not in TOLERANCE_DEFAULTS:
                raise ConfigError(f"$.tolerances.{key}", "unknown tolerance")

    # -- builders -----------------------------------------------------------

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, TOLERANCE_DEFAULTS[key]))

    def algebroid(self) -> LieAlgebroid:
        n, m = self.base_dim, self.fiber_rank
        brackets = {}
        for c, block in enumerate(self.brackets or []):
            for a, row in enumerate(block):
                for b, val in enumerate(row):
                    # stored L^c_ab with b < a; the constructor takes the (b, a) entry
                    brackets.setdefault((b, a), ["0"] * m)[c] = _negated(val)
        return LieAlgebroid(n, m, self.anchor, brackets, name=self.name, domain=self.domain)

    def metric_obj(self) -> RiemannMetric | None:
        if self.metric is None:
            return None
        return RiemannMetric(self.metric, self.base_dim, name=self.name)

    def connection_obj(self, A: LieAlgebroid | None = None):
        """The configured connection; a metric alone implies its Levi-Civita connection."""
        A = A or self.algebroid()
        if self.connection is None or self.connection == "levi-civita":
            g = self.metric_obj()
            if g is None or self.k != self.fiber_rank:
                return None
            return LeviCivitaConnection(A, g, name=f"levi-civita({self.name})")
        return AConnection(self.connection, self.base_dim, self.fiber_rank, name=self.name)

    def base_point(self, x0=None):
        if x0 is not None:
            if len(x0) != self.base_dim:
                raise ConfigError("--x0", f"expected {self.base_dim} coordinates")
            return [float(v) for v in x0]
        if self.x0 is not None:
            return [float(v) for v in self.x0]
        return [0.5 * (lo + hi) for lo, hi in self.domain]


def _negated(val):
    if isinstance(val, (int, float)):
        return -val
    return f"-({val})"
