"""Run configuration read from an INI-style key-value file.

Keys in a subcommand section (``[bowen]``, ``[verify]``, ``[render]``,
``[staircase]``, ``[survey]``) override the shared ``[run]`` section::

    [run]
    generators = z^2 - 1; 0.09*z^2
    params = c = 0.1
    seed = 7
    depth = auto            # or an integer
    max_leaves = 16777216
    base_point = auto       # or a complex number such as 0.3+1.1i

    [render]
    resolution = 512x512
    viewport = -2, 2, -2, 2
    points = 1000000
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .maps import ParseError, parse_constant
from .semigroup import Annulus, Disk, DiskUnion, MultiMap
from .thermo import MAX_LEAVES, ROOT_TOL

COMMANDS = ("bowen", "verify", "render", "staircase", "survey")
MAX_PIXELS = 8192


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    generators: list[str]
    params: dict[str, complex] = field(default_factory=dict)
    seed: int = 0
    depth: int | None = None
    max_leaves: int = MAX_LEAVES
    base_point: complex | None = None
    tolerance: float = ROOT_TOL
    samples: int = 10000
    words: int = 2000
    out: str = "out"
    width: int = 512
    height: int = 512
    viewport: tuple[float, float, float, float] = (-2.0, 2.0, -2.0, 2.0)
    points: int = 1_000_000
    burn_in: int = 50
    weights: tuple[float, ...] | None = None
    trials: int = 200
    steps: int = 200
    osc_region: object | None = None
    survey_param: str | None = None
    survey_grid: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    survey_shape: tuple[int, int] = (1, 1)

    def semigroup(self, params: dict[str, complex] | None = None) -> MultiMap:
        try:
            return MultiMap.parse(self.generators, params if params is not None else self.params)
        except (ParseError, ValueError) as exc:
            raise ConfigError(f"generators: {exc}") from exc

    def echo(self) -> dict:
        """Config values in a fixed order, JSON-compatible."""
        region = self.osc_region
        return {
            "command": self.command,
            "generators": list(self.generators),
            "params": {k: [v.real, v.imag] for k, v in sorted(self.params.items())},
            "seed": self.seed,
            "depth": self.depth,
            "max_leaves": self.max_leaves,
            "base_point": None if self.base_point is None else [self.base_point.real, self.base_point.imag],
            "tolerance": self.tolerance,
            "samples": self.samples,
            "words": self.words,
            "resolution": [self.width, self.height],
            "viewport": list(self.viewport),
            "points": self.points,
            "burn_in": self.burn_in,
            "weights": None if self.weights is None else list(self.weights),
            "trials": self.trials,
            "steps": self.steps,
            "osc_region": None if region is None else repr(region),
            "survey": {
                "param": self.survey_param,
                "grid": list(self.survey_grid),
                "shape": list(self.survey_shape),
            },
        }


def _complex(text: str, key: str, params=None) -> complex:
    literal = text.strip().replace(" ", "")
    if literal.endswith(("i", "j")):
        try:  # plain literals such as 0.3+1.1i
            return complex(literal[:-1] + "j")
        except ValueError:
            pass
    try:
        return parse_constant(text, params or {})
    except (ParseError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _params(text: str) -> dict[str, complex]:
    out: dict[str, complex] = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise ConfigError(f"params: expected name = value, got {item!r}")
        name, value = (s.strip() for s in item.split("=", 1))
        if not name.isidentifier():
            raise ConfigError(f"params: bad name {name!r}")
        out[name] = _complex(value, f"params.{name}", out)
    return out


def _floats(text: str, n: int, key: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.replace(";", ",").split(","))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    if len(vals) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def _region(text: str):
    kind, *rest = text.split()
    nums = [float(v) for v in " ".join(rest).replace(",", " ").split()]
    kind = kind.lower()
    if kind == "disk" and len(nums) == 3:
        return Disk(complex(nums[0], nums[1]), nums[2])
    if kind == "annulus" and len(nums) == 4:
        return Annulus(complex(nums[0], nums[1]), nums[2], nums[3])
    if kind == "disks" and nums and len(nums) % 3 == 0:
        return DiskUnion(tuple(Disk(complex(nums[i], nums[i + 1]), nums[i + 2]) for i in range(0, len(nums), 3)))
    raise ConfigError(f"osc_region: cannot parse {text!r} (disk cx cy r | annulus cx cy r_in r_out | disks ...)")


def _int(text: str, key: str, lo: int = 0) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    if v < lo:
        raise ConfigError(f"{key}: must be >= {lo}")
    return v


def load_config(path: str | Path | None, command: str, text: str | None = None) -> RunConfig:
    """Read ``path`` (or ``text``) and resolve the keys for ``command``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc
    values: dict[str, str] = {}
    for section in ("run", command):
        if cp.has_section(section):
            values.update(cp.items(section))
    return from_mapping(command, values)


def from_mapping(command: str, values: dict[str, str]) -> RunConfig:
    v = dict(values)
    if "generators" not in v:
        raise ConfigError("missing key: generators")
    gens = [g.strip() for g in v.pop("generators").split(";") if g.strip()]
    if not gens:
        raise ConfigError("generators: empty list")
    cfg = RunConfig(command, gens)
    cfg.params = _params(v.pop("params", ""))
    if "seed" in v:
        cfg.seed = _int(v.pop("seed"), "seed")
    depth = v.pop("depth", "auto").strip().lower()
    cfg.depth = None if depth == "auto" else _int(depth, "depth", 3)
    if "max_leaves" in v:
        cfg.max_leaves = _int(v.pop("max_leaves"), "max_leaves", 8)
    bp = v.pop("base_point", "auto").strip().lower()
    cfg.base_point = None if bp == "auto" else _complex(bp, "base_point", cfg.params)
    if "tolerance" in v:
        try:
            cfg.tolerance = float(v.pop("tolerance"))
        except ValueError as exc:
            raise ConfigError(f"tolerance: {exc}") from exc
        if not 0 < cfg.tolerance < 1e-2:
            raise ConfigError("tolerance: must lie in (0, 1e-2)")
    for key in ("samples", "words", "points", "burn_in", "trials", "steps"):
        if key in v:
            setattr(cfg, key, _int(v.pop(key), key, 1))
    if "out" in v:
        cfg.out = v.pop("out").strip()
    if "resolution" in v:
        parts = v.pop("resolution").lower().replace(" ", "").split("x")
        if len(parts) != 2:
            raise ConfigError("resolution: expected WIDTHxHEIGHT")
        cfg.width, cfg.height = (_int(p, "resolution", 1) for p in parts)
        if max(cfg.width, cfg.height) > MAX_PIXELS:
            raise ConfigError(f"resolution: at most {MAX_PIXELS} per side")
    if "viewport" in v:
        vp = _floats(v.pop("viewport"), 4, "viewport")
        if not (vp[1] > vp[0] and vp[3] > vp[2]) or not all(map(math.isfinite, vp)):
            raise ConfigError("viewport: need xmin < xmax and ymin < ymax")
        cfg.viewport = vp
    if "weights" in v:
        text = v.pop("weights").strip().lower()
        if text not in ("", "auto"):
            w = tuple(float(x) for x in text.replace(";", ",").split(","))
            if len(w) != len(gens) or abs(sum(w) - 1) > 1e-12 or any(not 0 < x <= 1 for x in w):
                raise ConfigError("weights: need one positive weight per generator summing to 1")
            cfg.weights = w
    if "osc_region" in v:
        text = v.pop("osc_region").strip()
        cfg.osc_region = None if text.lower() in ("", "none") else _region(text)
    if "parameter" in v:
        cfg.survey_param = v.pop("parameter").strip()
    if "grid" in v:
        cfg.survey_grid = _floats(v.pop("grid"), 4, "grid")
    if "shape" in v:
        parts = v.pop("shape").lower().replace(" ", "").split("x")
        if len(parts) != 2:
            raise ConfigError("shape: expected NREAL x NIMAG")
        cfg.survey_shape = tuple(_int(p, "shape", 1) for p in parts)
        if max(cfg.survey_shape) > 64:
            raise ConfigError("shape: at most 64 x 64")
    if v:
        raise ConfigError(f"unknown keys: {', '.join(sorted(v))}")
    if command == "survey":
        if not cfg.survey_param:
            raise ConfigError("survey: missing key 'parameter'")
        if not cfg.survey_param.isidentifier():
            raise ConfigError(f"parameter: bad name {cfg.survey_param!r}")
        cfg.semigroup({**cfg.params, cfg.survey_param: 0j})  # fail early on bad formulas
    else:
        cfg.semigroup()
    return cfg
