"""Flat ``[section] key = value`` run configuration, parsed strictly."""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .elliptic import REGULARIZED, VERIFICATION, EllipticSolveSettings, resolve_h
from .geometry import DomainLayout, GeometryError, build_layered_mesh
from .lifespan import AprioriParams, LifespanReport, lifespan_pipeline
from .params import (
    BoundaryCurrent,
    HypothesisViolation,
    PhysParams,
    PowerLawKappa,
    TabulatedKappa,
    validate,
)
from .parabolic import Problem, TimeStepSettings


class ConfigError(ValueError):
    """Config could not be turned into a run; ``errors`` lists every problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# allowed keys per section, with converters
_FLOAT, _INT, _STR, _BOOL = float, int, str, "bool"
SCHEMA = {
    "domain": {
        "anode": _FLOAT, "separator": _FLOAT, "cathode": _FLOAT,
        "cells_anode": _INT, "cells_separator": _INT, "cells_cathode": _INT,
    },
    "params": {
        "alpha1": _FLOAT, "alpha2": _FLOAT, "alpha3": _FLOAT, "alpha4": _FLOAT, "d": _FLOAT,
        "K": _FLOAT, "U": _FLOAT, "sigma_a": _FLOAT, "sigma_c": _FLOAT,
        "eps_e": _FLOAT, "D": _FLOAT, "C0": _FLOAT, "h": _FLOAT,
        "kappa": _STR, "kappa_c0": _FLOAT, "kappa_alpha0": _FLOAT, "kappa_knee": _FLOAT,
        "kappa_points": _STR, "kappa_values": _STR,
        "current_anode_left": _FLOAT, "current_anode_right": _FLOAT,
        "current_cathode_left": _FLOAT, "current_cathode_right": _FLOAT,
        "require_positivity": _BOOL,
    },
    "regularization": {"tau": _FLOAT, "continuation_levels": _INT, "mode": _STR},
    "time": {"dt": _FLOAT, "T_end": _STR, "steps": _INT, "output_stride": _INT},
    "solver": {
        "tol": _FLOAT, "rtol": _FLOAT, "max_iter": _INT, "damping": _FLOAT,
        "max_backtracks": _INT, "picard_relaxation": _FLOAT, "linear_tol": _FLOAT,
        "conc_tol": _FLOAT, "max_newton": _INT, "tol_C": _FLOAT, "max_outer": _INT,
        "relaxation": _FLOAT,
    },
    "apriori": {"N": _INT, "q": _FLOAT, "d": _FLOAT, "alpha0": _FLOAT, "c": _FLOAT, "m": _FLOAT, "delta": _FLOAT},
    "output": {"directory": _STR, "formats": _STR},
}

# hypothesis tag -> keys to point at
_TAG_KEYS = {
    "(H1)": [("params", "kappa_c0"), ("params", "kappa_alpha0"), ("params", "kappa")],
    "(H2)": [("params", "sigma_a"), ("params", "sigma_c"), ("params", "eps_e"), ("params", "D")],
    "(H4)": [("params", f"alpha{i}") for i in range(1, 5)],
    "(hb)": [("params", "K")],
    "(H6)": [("params", "h"), ("params", "K")],
    "(H7)": [("params", "C0")],
    "(H8)": [("params", "d"), ("params", "alpha1"), ("params", "alpha2")],
    "(H9)": [("domain", "separator")],
    "(bcs2)": [("params", "current_anode_left"), ("params", "current_cathode_right")],
}


def demo_config_path() -> Path:
    return Path(str(resources.files("cellspan") / "data" / "demo.cfg"))


@dataclass
class RunConfig:
    path: str
    layout: DomainLayout
    cells: tuple
    params: PhysParams
    tau: float = 1e-3
    continuation_levels: int = 3
    mode: str = REGULARIZED
    dt: float = 1e-3
    n_steps: int = 100
    T_end: float = 0.1
    output_stride: int = 1
    elliptic: EllipticSolveSettings = field(default_factory=EllipticSolveSettings)
    steps: TimeStepSettings = field(default_factory=TimeStepSettings)
    apriori: AprioriParams = field(default_factory=AprioriParams)
    out_dir: str = "out"
    formats: tuple = ("csv",)

    def mesh(self):
        return build_layered_mesh(self.layout, self.cells)

    def problem(self, tau: float | None = None, mode: str | None = None) -> Problem:
        mesh = self.mesh()
        return Problem(mesh, self.params, resolve_h(mesh, self.params), self.tau if tau is None else tau,
                       self.mode if mode is None else mode)

    def step_settings(self) -> TimeStepSettings:
        return self.steps

    def tau_schedule(self) -> list[float]:
        return [self.tau * 2.0**-k for k in range(self.continuation_levels)]

    def lifespan(self) -> LifespanReport:
        return lifespan_pipeline(self.apriori)


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, from a plain scan of the file."""
    index = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = no
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip()), no)
    return index


def _convert(kind, raw):
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw)


def _floats(raw):
    return tuple(float(v) for v in raw.replace(",", " ").split())


def parse_config(path) -> RunConfig:
    """Read and validate a run configuration; raises :class:`ConfigError`."""
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror or exc})"]) from None
    return parse_config_text(text, path)


def parse_config_text(text: str, path: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        detail = exc.message.splitlines()[0]
        if lineno is None and getattr(exc, "errors", None):
            lineno, bad = exc.errors[0]
            detail = f"cannot parse {bad}"
        where = f" line {lineno}:" if lineno else ""
        raise ConfigError([f"{path}:{where} syntax error: {detail}"]) from None

    lines = _line_index(text)
    errors = []

    def at(section, key=None):
        no = lines.get((section, key)) or lines.get((section, None))
        return f"{path}: line {no}" if no else path

    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            errors.append(f"{at(section)}: unknown section [{section}]")
            continue
        for key, raw in cp.items(section):
            kind = SCHEMA[section].get(key)
            if kind is None:
                errors.append(f"{at(section, key)}: unknown key {key!r} in [{section}]")
                continue
            try:
                values[(section, key)] = _convert(kind, raw)
            except ValueError:
                errors.append(f"{at(section, key)}: bad value {raw!r} for {key}")
    if errors:
        raise ConfigError(errors)

    def get(section, key, default):
        return values.get((section, key), default)

    try:
        layout = DomainLayout(get("domain", "anode", 1.0), get("domain", "separator", 0.1), get("domain", "cathode", 1.0))
    except GeometryError as exc:
        raise ConfigError([f"{at('domain')}: {exc}"]) from None
    cells = tuple(get("domain", f"cells_{r}", 100) for r in ("anode", "separator", "cathode"))
    if min(cells) < 2:
        errors.append(f"{at('domain')}: need at least 2 cells per layer, got {cells}")

    # kinetics exponent: either alpha1 or d = alpha1*alpha2
    alpha2 = get("params", "alpha2", 1.0)
    if ("params", "d") in values and ("params", "alpha1") in values:
        errors.append(f"{at('params', 'd')}: give either d or alpha1, not both")
    alpha1 = values[("params", "d")] / alpha2 if ("params", "d") in values and alpha2 else get("params", "alpha1", 1.0)

    kind = get("params", "kappa", "power").lower()
    kc0, ka0, kknee = get("params", "kappa_c0", 1.0), get("params", "kappa_alpha0", 1.0), get("params", "kappa_knee", 1.0)
    try:
        if kind == "power":
            kappa = PowerLawKappa(kc0, ka0, kknee)
        elif kind == "table":
            kappa = TabulatedKappa(_floats(get("params", "kappa_points", "")), _floats(get("params", "kappa_values", "")), kc0, ka0, kknee)
        else:
            raise ValueError(f"kappa must be 'power' or 'table', got {kind!r}")
    except ValueError as exc:
        errors.append(f"{at('params', 'kappa')}: {exc}")
        kappa = PowerLawKappa()

    params = PhysParams(
        alpha1=alpha1,
        alpha2=alpha2,
        alpha3=get("params", "alpha3", 1.0),
        alpha4=get("params", "alpha4", 1.0),
        K=get("params", "K", 5.0),
        U=get("params", "U", 1.0),
        sigma_a=get("params", "sigma_a", 1.0),
        sigma_c=get("params", "sigma_c", 1.0),
        eps_e=get("params", "eps_e", 1.0),
        D=get("params", "D", 1.0),
        kappa=kappa,
        C0=get("params", "C0", 1.0),
        h=values.get(("params", "h")),
        current=BoundaryCurrent(
            get("params", "current_anode_left", 0.0),
            get("params", "current_anode_right", 0.0),
            get("params", "current_cathode_left", 0.0),
            get("params", "current_cathode_right", 0.0),
        ),
        require_positivity=get("params", "require_positivity", True),
    )
    try:
        validate(params, layout)
    except HypothesisViolation as exc:
        for msg in exc.violations:
            tag = msg.split(" ", 1)[0]
            keys = [k for k in _TAG_KEYS.get(tag, []) if k in lines]
            where = at(*keys[0]) if keys else path
            errors.append(f"{where}: {msg}")

    mode = get("regularization", "mode", REGULARIZED).lower()
    if mode not in (REGULARIZED, VERIFICATION):
        errors.append(f"{at('regularization', 'mode')}: mode must be {REGULARIZED!r} or {VERIFICATION!r}")
    tau = get("regularization", "tau", 1e-3)
    if not 0 < tau < 1:
        errors.append(f"{at('regularization', 'tau')}: tau must lie in (0, 1)")

    try:
        apriori = AprioriParams(
            N=get("apriori", "N", 3),
            q=get("apriori", "q", 4.0),
            d=get("apriori", "d", params.d),
            alpha0=get("apriori", "alpha0", kappa.alpha0),
            c=get("apriori", "c", 1.0),
            m=values.get(("apriori", "m")),
            delta=values.get(("apriori", "delta")),
        )
    except ValueError as exc:
        errors.append(f"{at('apriori')}: [apriori] {exc}")
        apriori = AprioriParams()

    try:
        ell = EllipticSolveSettings(
            tol=get("solver", "tol", 1e-10),
            rtol=get("solver", "rtol", 1e-12),
            max_iter=get("solver", "max_iter", 60),
            damping=get("solver", "damping", 0.5),
            max_backtracks=get("solver", "max_backtracks", 3),
            picard_relaxation=get("solver", "picard_relaxation", 0.5),
            linear_tol=get("solver", "linear_tol", 1e-12),
        )
        steps = TimeStepSettings(
            elliptic=ell,
            tol=get("solver", "conc_tol", 1e-10),
            rtol=get("solver", "rtol", 1e-12),
            max_newton=get("solver", "max_newton", 50),
            tol_C=get("solver", "tol_C", 1e-10),
            max_outer=get("solver", "max_outer", 50),
            relaxation=get("solver", "relaxation", 1.0),
        )
    except ValueError as exc:
        errors.append(f"{at('solver')}: {exc}")
        ell, steps = EllipticSolveSettings(), TimeStepSettings()

    # time grid: T_end may be the literal "tmax" (the lifespan horizon)
    raw_end = get("time", "T_end", "0.1").strip()
    T_end = None
    if raw_end.lower() == "tmax":
        if not errors:
            T_end = lifespan_pipeline(apriori).Tmax
    else:
        try:
            T_end = float(raw_end)
        except ValueError:
            errors.append(f"{at('time', 'T_end')}: T_end must be a number or 'tmax'")
    dt = values.get(("time", "dt"))
    n_steps = values.get(("time", "steps"))
    if T_end is not None:
        if not T_end > 0:
            errors.append(f"{at('time', 'T_end')}: T_end must be positive")
        elif n_steps is not None and dt is not None:
            errors.append(f"{at('time', 'dt')}: give at most one of dt and steps")
        elif n_steps is not None:
            if n_steps < 1:
                errors.append(f"{at('time', 'steps')}: steps must be >= 1")
            else:
                dt = T_end / n_steps
        else:
            dt = 1e-3 if dt is None else dt
            if not dt > 0:
                errors.append(f"{at('time', 'dt')}: dt must be positive")
            else:
                n_steps = max(1, int(math.ceil(T_end / dt - 1e-9)))
                dt = T_end / n_steps
    stride = get("time", "output_stride", 1)
    if stride < 1:
        errors.append(f"{at('time', 'output_stride')}: output_stride must be >= 1")

    formats = tuple(f.strip().lower() for f in get("output", "formats", "csv").split(",") if f.strip())
    if set(formats) - {"csv"}:
        errors.append(f"{at('output', 'formats')}: only 'csv' output is supported")

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        path=path,
        layout=layout,
        cells=cells,
        params=params,
        tau=tau,
        continuation_levels=get("regularization", "continuation_levels", 3),
        mode=mode,
        dt=dt,
        n_steps=n_steps,
        T_end=T_end,
        output_stride=stride,
        elliptic=ell,
        steps=steps,
        apriori=apriori,
        out_dir=get("output", "directory", "out"),
        formats=formats,
    )


__all__ = ["ConfigError", "RunConfig", "SCHEMA", "demo_config_path", "parse_config", "parse_config_text"]
