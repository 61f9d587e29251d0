"""Scenario configuration files (YAML).

Example::

    scenario_id: ex3a
    model:
      family: poisson
    design:
      statistic: sample_mean
      transform: identity
    units: {m: 100, n: 2}
    spaces:
      agent1: [5, 4.5]
      agent2: [4]
    simulation: {reps: 100000, seed: 7}
    analysis: {k_list: [50, 200]}

Numbers must be written in plain base-10 notation; hex, octal, binary and
underscore-separated literals are rejected.  Every error carries the line
number of the offending entry.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, ICDesignError
from .outcome_models import Action, ActionSpace, Family, OutcomeModel
from .scoring import ScoreFunction, Statistic, Transform
from .simulator import Aggregation, Scenario

_INT_RE = re.compile(r"^[-+]?(0|[1-9][0-9]*)$")
_FLOAT_RE = re.compile(r"^[-+]?(([0-9]+\.[0-9]*|\.[0-9]+)([eE][-+]?[0-9]+)?|[0-9]+[eE][-+]?[0-9]+)$")


class _Loader(yaml.SafeLoader):
    """SafeLoader whose implicit numbers are base-10 only."""


_Loader.yaml_implicit_resolvers = {
    ch: [(tag, rx) for tag, rx in res if tag not in ("tag:yaml.org,2002:int", "tag:yaml.org,2002:float")]
    for ch, res in yaml.SafeLoader.yaml_implicit_resolvers.items()
}
_Loader.add_implicit_resolver("tag:yaml.org,2002:int", _INT_RE, list("-+0123456789"))
_Loader.add_implicit_resolver("tag:yaml.org,2002:float", _FLOAT_RE, list("-+0123456789."))


@dataclass(frozen=True)
class _Value:
    value: Any
    line: int


def _plain(node, loader, path):
    """Node tree -> nested dict/list of _Value leaves, keeping line numbers."""
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for knode, vnode in node.value:
            key = loader.construct_object(knode)
            if not isinstance(key, str):
                raise ConfigError(f"keys must be strings, got {key!r}", knode.start_mark.line + 1, path)
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", knode.start_mark.line + 1, path)
            out[key] = _plain(vnode, loader, path)
        return _Value(out, line)
    if isinstance(node, yaml.SequenceNode):
        return _Value([_plain(v, loader, path) for v in node.value], line)
    return _Value(loader.construct_object(node), line)


SCHEMA = {
    "scenario_id": None,
    "model": {"family", "gamma"},
    "design": {"statistic", "transform", "aggregation", "compare_transform"},
    "units": {"m", "n", "blocks"},
    "spaces": None,
    "simulation": {"reps", "seed", "workers", "profile"},
    "analysis": {
        "k_list",
        "transforms",
        "ic_margin",
        "var_tolerance",
        "quad_tol",
        "n_knots",
        "max_cells",
        "range",
    },
}
REQUIRED = {"model": {"family"}, "units": {"m", "n"}, "spaces": None}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated contents of one scenario file."""

    scenario_id: str
    family: Family
    gamma: float | None
    statistic: Statistic
    transform: str
    m: int
    n: int
    spaces: tuple  # [block][agent] -> tuple of parameter tuples
    blocks: int = 1
    aggregation: Aggregation = Aggregation.SUMMED
    compare_transform: str | None = None
    reps: int = 10_000
    seed: int = 0
    workers: int = 1
    profile: tuple[int, ...] | None = None  # 0-based grid indices; None = natural actions
    k_list: tuple[int, ...] | None = None
    transforms: tuple[str, ...] | None = None
    ic_margin: float = 1e-9
    var_tolerance: float = 1e-6
    quad_tol: float = 1e-10
    n_knots: int = 201
    max_cells: int = 5000
    range: tuple[float, float] | None = None
    base_dir: Path | None = field(default=None, compare=False)

    # ---- derived objects -------------------------------------------------

    def model(self) -> OutcomeModel:
        return OutcomeModel(self.family, self.gamma)

    def get_transform(self, spec: str | None = None) -> Transform:
        return Transform.parse(spec or self.transform, self.base_dir)

    def score_fn(self, transform: str | None = None) -> ScoreFunction:
        return ScoreFunction(self.statistic, self.get_transform(transform))

    def action_spaces(self) -> list[list[ActionSpace]]:
        return [[ActionSpace.of(self.family, grid) for grid in block] for block in self.spaces]

    def scenario(self, transform: str | None = None, m: int | None = None) -> Scenario:
        return Scenario(
            self.model(),
            self.score_fn(transform),
            self.action_spaces(),
            self.m if m is None else m,
            self.n,
            self.blocks,
            self.aggregation,
        )

    def units_for_k(self, k: int) -> int:
        """Total units m giving ``k`` units per cell."""
        if self.family is Family.POISSON_FIG2:
            return 4 * k
        return k * self.n * self.blocks

    @property
    def k(self) -> int:
        if self.family is Family.POISSON_FIG2:
            return self.m // 4
        return self.m // (self.n * self.blocks)

    @property
    def ks(self) -> tuple[int, ...]:
        return self.k_list or (self.k,)

    @property
    def transform_list(self) -> tuple[str, ...]:
        return self.transforms or (self.transform,)

    def profiles(self):
        """Per-block action profiles to simulate (natural actions by default)."""
        from .outcome_models import ActionProfile

        out = []
        for spaces in self.action_spaces():
            if self.profile is None:
                out.append(ActionProfile(tuple(s.natural for s in spaces)))
            else:
                out.append(ActionProfile(tuple(s[i] for s, i in zip(spaces, self.profile))))
        return out


# ---- parsing -----------------------------------------------------------


class _Ctx:
    def __init__(self, path):
        self.path = path

    def err(self, msg, line=None):
        return ConfigError(msg, line, self.path)


def _section(ctx, root, name):
    if name not in root.value:
        return None
    sec = root.value[name]
    allowed = SCHEMA[name]
    if allowed is not None:
        if not isinstance(sec.value, dict):
            raise ctx.err(f"[{name}] must be a mapping", sec.line)
        for key, v in sec.value.items():
            if key not in allowed:
                raise ctx.err(f"unknown key {name}.{key} (allowed: {', '.join(sorted(allowed))})", v.line)
    return sec


def _num(ctx, v: _Value, what, kind=float):
    x = v.value
    if isinstance(x, str):
        s = x.strip()
        if not (_INT_RE.match(s) or _FLOAT_RE.match(s)):
            raise ctx.err(f"{what}: {x!r} is not a base-10 number", v.line)
        x = float(s) if kind is float else s
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise ctx.err(f"{what}: expected a number, got {x!r}", v.line)
    if kind is int:
        if isinstance(x, float):
            if not x.is_integer():
                raise ctx.err(f"{what}: expected an integer, got {x!r}", v.line)
            x = int(x)
        return int(x)
    return float(x)


def _get(ctx, sec, key, kind, default=None, required=False, section=""):
    if sec is None or key not in sec.value:
        if required:
            line = sec.line if sec is not None else None
            raise ctx.err(f"missing required key {section}.{key}", line)
        return default
    v = sec.value[key]
    if kind in (int, float):
        return _num(ctx, v, f"{section}.{key}", kind)
    if kind is str:
        if not isinstance(v.value, str):
            raise ctx.err(f"{section}.{key}: expected a string, got {v.value!r}", v.line)
        return v.value
    return v


def _enum(ctx, sec, key, enum, default, section):
    raw = _get(ctx, sec, key, str, None, section=section)
    if raw is None:
        return default
    try:
        return enum(raw)
    except ValueError:
        choices = ", ".join(e.value for e in enum)
        raise ctx.err(f"{section}.{key}: unknown value {raw!r} (choose from {choices})", sec.value[key].line) from None


def _num_list(ctx, v: _Value, what, kind=float):
    if v is None:
        return None
    if not isinstance(v.value, list) or not v.value:
        raise ctx.err(f"{what}: expected a non-empty list", v.line)
    return tuple(_num(ctx, x, what, kind) for x in v.value)


def _grid(ctx, v: _Value, what, family: Family):
    if not isinstance(v.value, list) or not v.value:
        raise ctx.err(f"{what}: expected a non-empty list of actions", v.line)
    arity = len(family.param_names)
    grid = []
    for item in v.value:
        if isinstance(item.value, list):
            params = tuple(_num(ctx, p, what) for p in item.value)
        else:
            params = (_num(ctx, item, what),)
        if len(params) != arity:
            names = ", ".join(family.param_names)
            raise ctx.err(f"{what}: action needs {arity} parameter(s) ({names}), got {len(params)}", item.line)
        try:
            OutcomeModel(family, 0.0 if family.interference else None).validate(Action(params))
        except ICDesignError as exc:
            raise ctx.err(f"{what}: {exc}", item.line) from None
        grid.append(params)
    return tuple(grid)


def _block_spaces(ctx, v: _Value, n, family, what):
    if not isinstance(v.value, dict):
        raise ctx.err(f"{what}: expected a mapping agent1..agent{n}", v.line)
    expected = [f"agent{i + 1}" for i in range(n)]
    for key, item in v.value.items():
        if key not in expected:
            raise ctx.err(f"{what}: unknown key {key!r} (expected {', '.join(expected)})", item.line)
    for key in expected:
        if key not in v.value:
            raise ctx.err(f"{what}: missing required key {key}", v.line)
    return tuple(_grid(ctx, v.value[key], f"{what}.{key}", family) for key in expected)


def parse_config(text: str, path: str | Path | None = None) -> ScenarioConfig:
    ctx = _Ctx(str(path) if path is not None else None)
    try:
        loader = _Loader(text)
        try:
            node = loader.get_single_node()
            if node is None:
                raise ctx.err("empty configuration")
            root = _plain(node, loader, ctx.path)
        finally:
            loader.dispose()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ctx.err(f"YAML syntax error: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None
    if not isinstance(root.value, dict):
        raise ctx.err("top level must be a mapping", root.line)
    for key, v in root.value.items():
        if key not in SCHEMA:
            raise ctx.err(f"unknown section {key!r} (allowed: {', '.join(SCHEMA)})", v.line)
    for name in ("model", "units", "spaces"):
        if name not in root.value:
            raise ctx.err(f"missing required section [{name}]", 1)

    model = _section(ctx, root, "model")
    design = _section(ctx, root, "design")
    units = _section(ctx, root, "units")
    sim = _section(ctx, root, "simulation")
    analysis = _section(ctx, root, "analysis")

    family = _enum(ctx, model, "family", Family, None, "model")
    if family is None:
        raise ctx.err("missing required key model.family", model.line)
    gamma = _get(ctx, model, "gamma", float, section="model")
    try:
        OutcomeModel(family, gamma)
    except ICDesignError as exc:
        line = model.value["gamma"].line if "gamma" in model.value else model.line
        raise ctx.err(f"model: {exc}", line) from None

    m = _get(ctx, units, "m", int, required=True, section="units")
    n = _get(ctx, units, "n", int, required=True, section="units")
    blocks = _get(ctx, units, "blocks", int, 1, section="units")
    if n < 1 or blocks < 1 or m < 1:
        raise ctx.err("units: m, n and blocks must be positive", units.line)

    spaces_v = root.value["spaces"]
    if isinstance(spaces_v.value, list):
        if len(spaces_v.value) != blocks:
            raise ctx.err(f"spaces: {len(spaces_v.value)} block entries for units.blocks={blocks}", spaces_v.line)
        spaces = tuple(
            _block_spaces(ctx, b, n, family, f"spaces[{i + 1}]") for i, b in enumerate(spaces_v.value)
        )
    else:
        spaces = (_block_spaces(ctx, spaces_v, n, family, "spaces"),) * blocks

    statistic = _enum(ctx, design, "statistic", Statistic, Statistic.SAMPLE_MEAN, "design")
    aggregation = _enum(ctx, design, "aggregation", Aggregation, Aggregation.SUMMED, "design")
    transform = _get(ctx, design, "transform", str, "identity", section="design")
    compare = _get(ctx, design, "compare_transform", str, section="design")

    profile_v = _get(ctx, sim, "profile", None, section="simulation")
    profile = None
    if profile_v is not None:
        idx = _num_list(ctx, profile_v, "simulation.profile", int)
        if len(idx) != n:
            raise ctx.err(f"simulation.profile: need {n} grid positions", profile_v.line)
        for b in spaces:
            for i, g in zip(idx, b):
                if not 1 <= i <= len(g):
                    raise ctx.err(f"simulation.profile: position {i} outside grid of size {len(g)}", profile_v.line)
        profile = tuple(i - 1 for i in idx)

    transforms_v = _get(ctx, analysis, "transforms", None, section="analysis")
    transforms = None
    if transforms_v is not None:
        if not isinstance(transforms_v.value, list) or not all(isinstance(t.value, str) for t in transforms_v.value):
            raise ctx.err("analysis.transforms: expected a list of transform names", transforms_v.line)
        transforms = tuple(t.value for t in transforms_v.value)

    range_v = _get(ctx, analysis, "range", None, section="analysis")
    rng = _num_list(ctx, range_v, "analysis.range") if range_v is not None else None
    if rng is not None and (len(rng) != 2 or not rng[1] > rng[0]):
        raise ctx.err("analysis.range: expected [lo, hi] with hi > lo", range_v.line)

    k_v = _get(ctx, analysis, "k_list", None, section="analysis")
    k_list = _num_list(ctx, k_v, "analysis.k_list", int) if k_v is not None else None
    if k_list is not None and min(k_list) < 1:
        raise ctx.err("analysis.k_list: entries must be >= 1", k_v.line)

    cfg = ScenarioConfig(
        scenario_id=str(_get(ctx, root, "scenario_id", None).value) if "scenario_id" in root.value else (
            Path(path).stem if path is not None else "scenario"
        ),
        family=family,
        gamma=gamma,
        statistic=statistic,
        transform=transform,
        m=m,
        n=n,
        spaces=spaces,
        blocks=blocks,
        aggregation=aggregation,
        compare_transform=compare,
        reps=_get(ctx, sim, "reps", int, 10_000, section="simulation"),
        seed=_get(ctx, sim, "seed", int, 0, section="simulation"),
        workers=_get(ctx, sim, "workers", int, 1, section="simulation"),
        profile=profile,
        k_list=k_list,
        transforms=transforms,
        ic_margin=_get(ctx, analysis, "ic_margin", float, 1e-9, section="analysis"),
        var_tolerance=_get(ctx, analysis, "var_tolerance", float, 1e-6, section="analysis"),
        quad_tol=_get(ctx, analysis, "quad_tol", float, 1e-10, section="analysis"),
        n_knots=_get(ctx, analysis, "n_knots", int, 201, section="analysis"),
        max_cells=_get(ctx, analysis, "max_cells", int, 5000, section="analysis"),
        range=rng,
        base_dir=Path(path).resolve().parent if path is not None else None,
    )
    if cfg.reps < 1:
        raise ctx.err("simulation.reps must be >= 1", sim.value["reps"].line)
    # transforms and dimensions are checked by building the objects once
    checks = [(transform, design, "transform"), (compare, design, "compare_transform")]
    checks += [(t, analysis, "transforms") for t in transforms or ()]
    for name, sec, key in checks:
        if name is None:
            continue
        line = sec.value[key].line if key in sec.value else sec.line
        try:
            cfg.get_transform(name)
        except ICDesignError as exc:
            raise ctx.err(str(exc), line) from None
        except OSError as exc:
            raise ctx.err(f"cannot read tabulated transform: {exc}", line) from None
    try:
        cfg.scenario()
    except ICDesignError as exc:
        raise ctx.err(str(exc), units.line) from None
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, path)


# ---- dumping -----------------------------------------------------------


def _action_out(params):
    return params[0] if len(params) == 1 else list(params)


def to_dict(cfg: ScenarioConfig) -> dict:
    def block(b):
        return {f"agent{i + 1}": [_action_out(p) for p in grid] for i, grid in enumerate(b)}

    shared = all(b == cfg.spaces[0] for b in cfg.spaces)
    model = {"family": cfg.family.value}
    if cfg.gamma is not None:
        model["gamma"] = cfg.gamma
    design = {"statistic": cfg.statistic.value, "transform": cfg.transform, "aggregation": cfg.aggregation.value}
    if cfg.compare_transform:
        design["compare_transform"] = cfg.compare_transform
    sim = {"reps": cfg.reps, "seed": cfg.seed, "workers": cfg.workers}
    if cfg.profile is not None:
        sim["profile"] = [i + 1 for i in cfg.profile]
    analysis = {
        "ic_margin": cfg.ic_margin,
        "var_tolerance": cfg.var_tolerance,
        "quad_tol": cfg.quad_tol,
        "n_knots": cfg.n_knots,
        "max_cells": cfg.max_cells,
    }
    if cfg.k_list is not None:
        analysis["k_list"] = list(cfg.k_list)
    if cfg.transforms is not None:
        analysis["transforms"] = list(cfg.transforms)
    if cfg.range is not None:
        analysis["range"] = list(cfg.range)
    return {
        "scenario_id": cfg.scenario_id,
        "model": model,
        "design": design,
        "units": {"m": cfg.m, "n": cfg.n, "blocks": cfg.blocks},
        "spaces": block(cfg.spaces[0]) if shared else [block(b) for b in cfg.spaces],
        "simulation": sim,
        "analysis": analysis,
    }


class _Dumper(yaml.SafeDumper):
    pass


def _float_repr(dumper, value):
    # repr() round-trips exactly and is always plain base-10
    text = repr(float(value))
    if text in ("inf", "-inf", "nan"):
        text = {"inf": ".inf", "-inf": "-.inf", "nan": ".nan"}[text]
    elif "." not in text and "e" not in text:
        text += ".0"
    elif "e" in text and "." not in text.split("e")[0]:
        mant, exp = text.split("e")
        text = f"{mant}.0e{exp}"
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_Dumper.add_representer(float, _float_repr)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.dump(to_dict(cfg), Dumper=_Dumper, sort_keys=False, default_flow_style=None)


def with_overrides(cfg: ScenarioConfig, **kw) -> ScenarioConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
