"""Experiment configuration files.

The format is a flat ``key = value`` file with ``[section]`` headers and
``#`` comments.  Every key must be known; typos are errors that report the
line number.  Field-valued keys (``drift.K``, ``diffusion.K.Q``,
``initial``) use the separable expression syntax of
:mod:`htlmm.fields`; repeating such a key adds the terms.

A ``[full]`` section holds ``section.key = value`` overrides that apply only
when the run is started with ``--full``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .fields import SeparableField

SCHEMES = ("fd2", "fourier")
METHODS = {"ab1": 1, "ab2": 2, "ab3": 3, "euler": 1}
REPRESENTATIONS = ("ht", "dense")
STABILITY_KINDS = ("growth", "cfl")


@dataclass(frozen=True)
class PDEConfig:
    dimension: int = 2
    scheme: str = "fourier"
    n: int = 16
    length: float = 2 * math.pi


@dataclass(frozen=True)
class CoefficientConfig:
    drift: dict[int, SeparableField] = field(default_factory=dict)
    diffusion: dict[tuple[int, int], SeparableField] = field(default_factory=dict)
    initial: SeparableField | None = None
    initial_kind: str = "field"  # "field" | "random_rank1"


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "ab2"
    dt: float = 0.0025
    T: float = 1.0
    cap: int | None = None
    rel_tol: float | None = None
    representation: str = "ht"
    tau_caps: tuple[int, ...] = ()

    @property
    def s(self) -> int:
        return METHODS[self.method]

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class OutputConfig:
    stride: int = 1
    marginal_modes: tuple[int, ...] = ()
    marginal_stride: int = 0
    checkpoint_stride: int = 0


@dataclass(frozen=True)
class StabilityConfig:
    kind: str = "growth"
    n_values: tuple[int, ...] = (4, 8, 16, 32)
    schemes: tuple[str, ...] = ("fd2", "fourier")
    k_max: int = 2000
    samples: int = 60
    dims: tuple[int, ...] = (1, 2, 3)
    ht_dims: tuple[int, ...] = ()
    ht_cap: int = 4
    margins: tuple[float, ...] = (0.9, 1.1)
    steps: int = 500
    bisect: bool = True
    coefficient: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    pde: PDEConfig = field(default_factory=PDEConfig)
    coefficients: CoefficientConfig = field(default_factory=CoefficientConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    stability: StabilityConfig | None = None
    source: str = "<string>"


# ---------------------------------------------------------------------------
# value parsers


def _number(text: str) -> float:
    """Plain float, or a constant expression such as ``2*pi``."""
    try:
        return float(text)
    except ValueError:
        pass
    f = SeparableField.parse(text)
    if not f.is_constant:
        raise ValueError(f"{text!r} is not a constant")
    return f.constant_value if f.terms else 0.0


def _int(text: str) -> int:
    v = _number(text)
    if not float(v).is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _pos_int(text: str) -> int:
    v = _int(text)
    if v < 1:
        raise ValueError(f"expected a positive integer, got {text!r}")
    return v


def _nonneg_int(text: str) -> int:
    v = _int(text)
    if v < 0:
        raise ValueError(f"expected a non-negative integer, got {text!r}")
    return v


def _pos_float(text: str) -> float:
    v = _number(text)
    if not v > 0:
        raise ValueError(f"expected a positive number, got {text!r}")
    return v


def _choice(options):
    def parse(text: str) -> str:
        v = text.strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return v

    return parse


def _list(item):
    def parse(text: str) -> tuple:
        parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        return tuple(item(p) for p in parts)

    return parse


def _cap(text: str) -> int | None:
    if text.strip().lower() in ("inf", "none", "unbounded"):
        return None
    return _pos_int(text)


def _rel_tol(text: str) -> float | None:
    if text.strip().lower() in ("none", "0"):
        return None
    v = _number(text)
    if not 0 <= v < 1:
        raise ValueError("rel_tol must lie in [0, 1)")
    return v


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


_SCALAR_KEYS = {
    "pde": {
        "dimension": ("dimension", _pos_int),
        "scheme": ("scheme", _choice(SCHEMES)),
        "n": ("n", _pos_int),
        "length": ("length", _pos_float),
    },
    "integrator": {
        "method": ("method", _choice(tuple(METHODS))),
        "dt": ("dt", _pos_float),
        "t": ("T", _pos_float),
        "cap": ("cap", _cap),
        "rel_tol": ("rel_tol", _rel_tol),
        "representation": ("representation", _choice(REPRESENTATIONS)),
        "tau_caps": ("tau_caps", _list(_pos_int)),
    },
    "output": {
        "stride": ("stride", _pos_int),
        "marginal_modes": ("marginal_modes", _list(_pos_int)),
        "marginal_stride": ("marginal_stride", _nonneg_int),
        "checkpoint_stride": ("checkpoint_stride", _nonneg_int),
    },
    "stability": {
        "kind": ("kind", _choice(STABILITY_KINDS)),
        "n_values": ("n_values", _list(_pos_int)),
        "schemes": ("schemes", _list(_choice(SCHEMES))),
        "k_max": ("k_max", _pos_int),
        "samples": ("samples", _pos_int),
        "dims": ("dims", _list(_pos_int)),
        "ht_dims": ("ht_dims", _list(_pos_int)),
        "ht_cap": ("ht_cap", _pos_int),
        "margins": ("margins", _list(_pos_float)),
        "steps": ("steps", _pos_int),
        "bisect": ("bisect", _bool),
        "coefficient": ("coefficient", _pos_float),
    },
}

_DRIFT = re.compile(r"^drift\.(\d+)$")
_DIFF = re.compile(r"^diffusion\.(\d+)\.(\d+)$")


@dataclass
class _Line:
    number: int
    section: str
    key: str
    value: str


def _lex(text: str, source: str) -> list[_Line]:
    out = []
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[\s*([A-Za-z_]\w*)\s*\]", line)
        if m:
            section = m.group(1).lower()
            if section not in _SCALAR_KEYS and section not in ("coefficients", "full"):
                raise ConfigError(f"unknown section [{section}]", number, source)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", number, source)
        if section is None:
            raise ConfigError("key outside of any section", number, source)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"empty key or value in {line!r}", number, source)
        out.append(_Line(number, section, key.lower(), value))
    return out


def _apply_full(lines: list[_Line], source: str) -> list[_Line]:
    overrides = {}
    for ln in lines:
        if ln.section != "full":
            continue
        if "." not in ln.key:
            raise ConfigError(f"[full] keys look like section.key, got {ln.key!r}", ln.number, source)
        sec, key = ln.key.split(".", 1)
        overrides[(sec, key)] = ln
    out = []
    used = set()
    for ln in lines:
        if ln.section == "full":
            continue
        o = overrides.get((ln.section, ln.key))
        if o is not None:
            out.append(_Line(o.number, ln.section, ln.key, o.value))
            used.add((ln.section, ln.key))
        else:
            out.append(ln)
    for (sec, key), o in overrides.items():
        if (sec, key) not in used:
            out.append(_Line(o.number, sec, key, o.value))
    return out


def parse_config(text: str, source: str = "<string>", full: bool = False) -> ExperimentConfig:
    lines = _lex(text, source)
    lines = _apply_full(lines, source) if full else [ln for ln in lines if ln.section != "full"]
    values: dict[str, dict] = {s: {} for s in _SCALAR_KEYS}
    line_of: dict[tuple[str, str], int] = {}
    drift: dict[int, SeparableField] = {}
    diffusion: dict[tuple[int, int], SeparableField] = {}
    initial: SeparableField | None = None
    initial_kind = "field"
    for ln in lines:
        if ln.section == "coefficients":
            try:
                if ln.key == "initial":
                    if ln.value.strip().lower() == "random_rank1":
                        initial_kind = "random_rank1"
                        continue
                    f = SeparableField.parse(ln.value)
                    initial = f if initial is None else initial + f
                elif m := _DRIFT.match(ln.key):
                    k = int(m.group(1)) - 1
                    if k < 0:
                        raise ValueError("components are numbered from 1")
                    f = SeparableField.parse(ln.value)
                    drift[k] = drift[k] + f if k in drift else f
                elif m := _DIFF.match(ln.key):
                    k, q = int(m.group(1)) - 1, int(m.group(2)) - 1
                    if k < 0 or q < 0:
                        raise ValueError("components are numbered from 1")
                    f = SeparableField.parse(ln.value)
                    diffusion[(k, q)] = diffusion[(k, q)] + f if (k, q) in diffusion else f
                else:
                    raise ConfigError(f"unknown key {ln.key!r} in [coefficients]", ln.number, source)
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{ln.key}: {exc}", ln.number, source) from None
            continue
        table = _SCALAR_KEYS[ln.section]
        if ln.key not in table:
            raise ConfigError(f"unknown key {ln.key!r} in [{ln.section}]", ln.number, source)
        if (ln.section, ln.key) in line_of:
            raise ConfigError(
                f"duplicate key {ln.key!r} (first set on line {line_of[(ln.section, ln.key)]})",
                ln.number,
                source,
            )
        attr, parse = table[ln.key]
        try:
            values[ln.section][attr] = parse(ln.value)
        except ValueError as exc:
            raise ConfigError(f"{ln.key}: {exc}", ln.number, source) from None
        line_of[(ln.section, ln.key)] = ln.number

    cfg = ExperimentConfig(
        pde=PDEConfig(**values["pde"]),
        coefficients=CoefficientConfig(drift, diffusion, initial, initial_kind),
        integrator=IntegratorConfig(**values["integrator"]),
        output=OutputConfig(**values["output"]),
        stability=StabilityConfig(**values["stability"]) if values["stability"] or any(
            ln.section == "stability" for ln in lines
        ) else None,
        source=source,
    )
    _check(cfg, line_of)
    return cfg


def _check(cfg: ExperimentConfig, line_of: dict) -> None:
    d = cfg.pde.dimension
    src = cfg.source
    pde_line = line_of.get(("pde", "dimension"))
    for k in cfg.coefficients.drift:
        if k >= d:
            raise ConfigError(f"drift.{k + 1} exceeds dimension {d}", pde_line, src)
    for k, q in cfg.coefficients.diffusion:
        if k >= d or q >= d:
            raise ConfigError(f"diffusion.{k + 1}.{q + 1} exceeds dimension {d}", pde_line, src)
    for (k, q), f in cfg.coefficients.diffusion.items():
        other = cfg.coefficients.diffusion.get((q, k))
        if k != q and other is not None and other != f:
            raise ConfigError(f"diffusion.{k + 1}.{q + 1} and diffusion.{q + 1}.{k + 1} differ", None, src)
    fields = list(cfg.coefficients.drift.values()) + list(cfg.coefficients.diffusion.values())
    if cfg.coefficients.initial is not None:
        fields.append(cfg.coefficients.initial)
    for f in fields:
        if f.max_mode >= d:
            raise ConfigError(f"expression uses x{f.max_mode + 1} in a {d}-dimensional problem", None, src)
    if cfg.pde.scheme == "fd2" and cfg.pde.n < 3:
        raise ConfigError("fd2 needs n >= 3", line_of.get(("pde", "n")), src)
    ig = cfg.integrator
    if abs(ig.steps * ig.dt - ig.T) > 1e-9 * ig.T:
        raise ConfigError(
            f"T = {ig.T} is not a whole number of steps of dt = {ig.dt}", line_of.get(("integrator", "t")), src
        )
    for m in cfg.output.marginal_modes:
        if m > d:
            raise ConfigError(f"marginal mode {m} exceeds dimension {d}", line_of.get(("output", "marginal_modes")), src)
    if ig.representation == "ht" and d < 2:
        raise ConfigError("the HT representation needs dimension >= 2", line_of.get(("integrator", "representation")), src)


# ---------------------------------------------------------------------------
# loading


def preset_names() -> list[str]:
    root = resources.files("htlmm") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    path = resources.files("htlmm") / "presets" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return path.read_text()


def load_config(path_or_preset: str | Path, full: bool = False) -> ExperimentConfig:
    """Read a config file, or a packaged preset when given a bare preset name."""
    p = Path(path_or_preset)
    if p.is_file():
        return parse_config(p.read_text(), str(p), full)
    name = str(path_or_preset)
    if name.endswith(".cfg"):
        name = name[:-4]
    if "/" not in name and name in preset_names():
        return parse_config(preset_text(name), f"{name}.cfg", full)
    raise ConfigError(f"no such config file or preset: {path_or_preset}")


def with_overrides(cfg: ExperimentConfig, **sections) -> ExperimentConfig:
    """Copy of ``cfg`` with fields replaced per section, e.g.
    ``with_overrides(cfg, pde={"n": 8}, integrator={"T": 0.1})``."""
    kw = {}
    for name, changes in sections.items():
        kw[name] = replace(getattr(cfg, name), **changes)
    return replace(cfg, **kw)
