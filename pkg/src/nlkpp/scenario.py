"""Scenario files: TOML (or JSON) descriptions of one experiment setup.

Grammar (TOML shown; JSON uses the same nesting)::

    name = "quasi_periodic"          # required
    experiments = ["lyapunov", "entire"]
    seed = 0

    [domain]                         # required
    kind = "torus"                   # "torus" | "box"
    bounds = [[0, "2*pi"]]           # one [lo, hi] per axis
    counts = [256]

    [kernel]                         # required
    family = "gaussian"              # "gaussian" (sigma) | "bump" (radius)
    sigma = 1.0
    threshold = 1e-12                # optional

    [a]                              # required; b optional (linear model if absent)
    constant = 0.3
    [[a.modes]]
    frequency = 1.0
    phase = "-pi/2"
    profile = { constant = 0.5, modes = [{ wavevector = [1.0], amplitude = 0.15 }] }

    [initial]                        # kind: constant | cosine | random | indicator
    kind = "constant"
    value = 0.1

    [simulate] / [lyapunov] / [eigen] / [entire]   # per-experiment parameters

    [expect]                         # embedded assertions on the summaries
    "entire.floor" = { min = 1e-3 }
    "eigen.estimate" = { value = 1.5, tol = 1e-10 }

Every number may also be written as a string holding an arithmetic
expression in ``pi``, ``e`` and ``sqrt``.
"""

from __future__ import annotations

import ast
import json
import math
import operator
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .almost_periodic import APCoefficient, SpatialMode, SpatialProfile, TemporalMode
from .evolution import Model
from .kernel_domain import Domain, Kernel, build_domain, kernel_family, sample_kernel

EXPERIMENTS = ("simulate", "lyapunov", "eigen", "entire")


class ScenarioError(ValueError):
    """Unreadable or inconsistent scenario file; the message names the location."""


# ---------------------------------------------------------------------------
# numbers
# ---------------------------------------------------------------------------

_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval_node(node.operand))
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
            and len(node.args) == 1 and not node.keywords):
        return _FUNCS[node.func.id](_eval_node(node.args[0]))
    raise ValueError("unsupported expression")


def number(value, where: str) -> float:
    """A float from a number or an arithmetic string such as ``"2*pi"``."""
    if isinstance(value, bool):
        raise ScenarioError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(_eval_node(ast.parse(value.strip(), mode="eval")))
        except (SyntaxError, ValueError, ZeroDivisionError) as exc:
            raise ScenarioError(f"{where}: cannot evaluate {value!r} ({exc})") from None
    raise ScenarioError(f"{where}: expected a number, got {type(value).__name__}")


def _numbers(values, where: str) -> list[float]:
    if not isinstance(values, (list, tuple)):
        values = [values]
    return [number(v, f"{where}[{i}]") for i, v in enumerate(values)]


def _section(raw: dict, key: str, where: str = "", required: bool = True) -> dict:
    path = f"{where}.{key}" if where else key
    if key not in raw:
        if required:
            raise ScenarioError(f"missing section or field '{path}'")
        return {}
    val = raw[key]
    if not isinstance(val, dict):
        raise ScenarioError(f"'{path}' must be a table")
    return val


# ---------------------------------------------------------------------------
# coefficient parsing
# ---------------------------------------------------------------------------


def parse_profile(raw, where: str) -> SpatialProfile:
    if not isinstance(raw, dict):
        return SpatialProfile(number(raw, where))
    modes = []
    for i, m in enumerate(raw.get("modes", [])):
        w = f"{where}.modes[{i}]"
        if not isinstance(m, dict) or "amplitude" not in m or "wavevector" not in m:
            raise ScenarioError(f"{w}: needs 'wavevector' and 'amplitude'")
        modes.append(SpatialMode(tuple(_numbers(m["wavevector"], f"{w}.wavevector")),
                                 number(m["amplitude"], f"{w}.amplitude"),
                                 number(m.get("phase", 0.0), f"{w}.phase")))
    try:
        return SpatialProfile(number(raw.get("constant", 0.0), f"{where}.constant"), tuple(modes))
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def parse_coefficient(raw, where: str) -> APCoefficient:
    if not isinstance(raw, dict):
        return APCoefficient.const(number(raw, where))
    modes = []
    for i, m in enumerate(raw.get("modes", [])):
        w = f"{where}.modes[{i}]"
        if not isinstance(m, dict) or "frequency" not in m:
            raise ScenarioError(f"{w}: needs 'frequency'")
        modes.append(TemporalMode(number(m["frequency"], f"{w}.frequency"),
                                  parse_profile(m.get("profile", 1.0), f"{w}.profile"),
                                  number(m.get("phase", 0.0), f"{w}.phase")))
    try:
        return APCoefficient(number(raw.get("constant", 0.0), f"{where}.constant"), tuple(modes))
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    domain: Domain
    kernel_spec: dict
    a: APCoefficient
    b: APCoefficient | None
    experiments: list[str]
    seed: int
    initial: dict
    params: dict[str, dict] = field(default_factory=dict)
    expect: dict[str, dict] = field(default_factory=dict)
    source: str = "<memory>"
    description: str = ""

    def kernel(self, domain: Domain | None = None) -> Kernel:
        spec = dict(self.kernel_spec)
        fam = kernel_family(spec.pop("family"), **{k: v for k, v in spec.items() if k != "threshold"})
        return sample_kernel(fam, domain or self.domain, spec.get("threshold", 1e-12))

    def model(self, linear: bool = False) -> Model:
        return Model(self.kernel(), self.a, None if linear else self.b)

    def get(self, experiment: str, key: str, default=None):
        return self.params.get(experiment, {}).get(key, default)

    def initial_field(self, seed: int | None = None) -> np.ndarray:
        return make_initial(self.domain, self.initial, self.seed if seed is None else seed)


def make_initial(domain: Domain, spec: dict, seed: int = 0) -> np.ndarray:
    kind = spec.get("kind", "constant")
    mesh = domain.mesh()
    if kind == "constant":
        return np.full(domain.shape, float(spec.get("value", 1.0)))
    if kind == "cosine":
        base, amp = float(spec.get("value", 1.0)), float(spec.get("amplitude", 0.5))
        phase = sum(2 * math.pi * (x - lo) / (hi - lo) for x, lo, hi in zip(mesh, domain.lower, domain.upper))
        return base + amp * np.cos(phase)
    if kind == "random":
        lo, hi = float(spec.get("lo", 0.05)), float(spec.get("hi", 1.0))
        return lo + (hi - lo) * np.random.default_rng(seed).random(domain.shape)
    if kind == "indicator":
        c = np.broadcast_to(np.asarray(spec.get("center", 0.0), dtype=float), (domain.dim,))
        r = float(spec.get("radius", 0.5))
        dist = np.sqrt(sum((x - ci) ** 2 for x, ci in zip(mesh, c)))
        h = min(domain.spacing)
        out = np.where(dist < r - 1e-9 * h, 1.0, 0.0)
        # value 1/2 on the boundary so the trapezoid mass equals the ball's measure in 1-D
        return np.where(np.abs(dist - r) <= 1e-9 * h, 0.5, out) * float(spec.get("value", 1.0))
    raise ScenarioError(f"initial.kind: unknown kind {kind!r}")


def _parse_initial(raw: dict) -> dict:
    out = {}
    for key, val in raw.items():
        if key == "kind":
            if val not in ("constant", "cosine", "random", "indicator"):
                raise ScenarioError(f"initial.kind: unknown kind {val!r}")
            out[key] = val
        elif key == "center":
            out[key] = _numbers(val, "initial.center")
        else:
            out[key] = number(val, f"initial.{key}")
    return out


def _param(val, where: str):
    if isinstance(val, bool):
        return val
    if isinstance(val, str):
        try:
            return number(val, where)
        except ScenarioError:
            return val  # a keyword such as a method name
    if isinstance(val, list):
        return [_param(v, f"{where}[{i}]") for i, v in enumerate(val)]
    if isinstance(val, dict):
        return {k: _param(v, f"{where}.{k}") for k, v in val.items()}
    return number(val, where)


def _parse_params(raw: dict, name: str) -> dict:
    return {key: _param(val, f"{name}.{key}") for key, val in raw.items()}


def _parse_expect(raw: dict) -> dict:
    out = {}
    for key, val in raw.items():
        where = f"expect.{key}"
        if "." not in key or key.split(".", 1)[0] not in EXPERIMENTS:
            raise ScenarioError(f"{where}: keys look like '<experiment>.<field>'")
        if isinstance(val, (bool, int, float)):
            val = {"value": val}
        if not isinstance(val, dict) or not set(val) <= {"value", "tol", "min", "max"} or not val:
            raise ScenarioError(f"{where}: use value/tol or min/max")
        out[key] = {k: (bool(v) if isinstance(v, bool) else number(v, f"{where}.{k}")) for k, v in val.items()}
    return out


def scenario_from_dict(raw: dict, source: str = "<memory>") -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("top level must be a table")
    if "name" not in raw or not isinstance(raw["name"], str):
        raise ScenarioError("missing field 'name'")
    dom_raw = _section(raw, "domain")
    for key in ("kind", "bounds", "counts"):
        if key not in dom_raw:
            raise ScenarioError(f"missing field 'domain.{key}'")
    bounds = dom_raw["bounds"]
    if not isinstance(bounds, list) or not bounds:
        raise ScenarioError("domain.bounds: expected a list of [lo, hi] pairs")
    if not isinstance(bounds[0], list):
        bounds = [bounds]
    bounds = [_numbers(b, f"domain.bounds[{i}]") for i, b in enumerate(bounds)]
    counts = dom_raw["counts"] if isinstance(dom_raw["counts"], list) else [dom_raw["counts"]]
    if not all(isinstance(c, int) and not isinstance(c, bool) for c in counts):
        raise ScenarioError("domain.counts: expected integers")
    try:
        domain = build_domain(str(dom_raw["kind"]), bounds, counts)
    except ValueError as exc:
        raise ScenarioError(f"domain: {exc}") from None

    k_raw = _section(raw, "kernel")
    if "family" not in k_raw:
        raise ScenarioError("missing field 'kernel.family'")
    kernel_spec = {"family": str(k_raw["family"]).lower()}
    for key, val in k_raw.items():
        if key != "family":
            kernel_spec[key] = number(val, f"kernel.{key}")
    try:
        fam_args = {k: v for k, v in kernel_spec.items() if k not in ("family", "threshold")}
        kernel_family(kernel_spec["family"], **fam_args)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"kernel: {exc}") from None

    if "a" not in raw:
        raise ScenarioError("missing section or field 'a'")
    a = parse_coefficient(raw["a"], "a")
    b = parse_coefficient(raw["b"], "b") if "b" in raw else None
    if b is not None and not b.inf_bound() > 0:
        raise ScenarioError("b: lower bound must be > 0")

    exps = raw.get("experiments", [])
    if isinstance(exps, str):
        exps = [exps]
    for e in exps:
        if e not in EXPERIMENTS:
            raise ScenarioError(f"experiments: unknown experiment {e!r}")
    if b is None and any(e in ("simulate", "entire") for e in exps):
        raise ScenarioError("b: required by the simulate and entire experiments")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ScenarioError("seed: expected a nonnegative integer")
    params = {e: _parse_params(_section(raw, e, required=False), e) for e in EXPERIMENTS}
    return Scenario(
        name=raw["name"],
        domain=domain,
        kernel_spec=kernel_spec,
        a=a,
        b=b,
        experiments=list(exps),
        seed=seed,
        initial=_parse_initial(_section(raw, "initial", required=False)),
        params=params,
        expect=_parse_expect(_section(raw, "expect", required=False)),
        source=source,
        description=str(raw.get("description", "")),
    )


def load_scenario(path) -> Scenario:
    """Parse a scenario file; a bare name resolves to a shipped scenario."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        shipped = resources.files("nlkpp") / "scenarios" / f"{path}.toml"
        if shipped.is_file():
            p = Path(str(shipped))
    if not p.exists():
        raise ScenarioError(f"{path}: no such file")
    text = p.read_text()
    try:
        raw: Any = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{p}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return scenario_from_dict(raw, str(p))
    except ScenarioError as exc:
        raise ScenarioError(f"{p}: {exc}") from None


def shipped_scenarios() -> list[str]:
    root = resources.files("nlkpp") / "scenarios"
    return sorted(Path(str(f)).stem for f in root.iterdir() if str(f).endswith(".toml"))
