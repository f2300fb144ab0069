"""Flat ``key = value`` run configuration.

Example::

    schema_version = 1
    site_name = siegen
    latitude = 50.9
    longitude = 8.0
    data = ghi.csv
    learn_years = 7
    families = gaussian, gumbel, bb1
    variants = C1, C2
    m = 1000
    seed = 2024

Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .copulas import FAMILIES
from .errors import ConfigError

CONFIG_SCHEMA_VERSION = 1
_SECTION = "run"


def _hours(text: str) -> tuple[int, ...]:
    text = text.strip()
    if "-" in text and "," not in text:
        a, b = (int(x) for x in text.split("-"))
        return tuple(range(a, b + 1))
    return tuple(int(x) for x in text.split(","))


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = CONFIG_SCHEMA_VERSION
    site_name: str = "site"
    latitude: float = 50.9
    longitude: float = 8.0
    data: str | None = None
    learn_years: int = 7
    test_years: int | None = None
    tau_upper: float = 0.75
    tau_lower: float = 0.75
    families: tuple[str, ...] = ("gaussian", "gumbel", "bb1")
    variants: tuple[str, ...] = ("C1", "C2")
    m: int = 1000
    seed: int | None = None
    out: str = "out"
    main_hours: tuple[int, ...] = tuple(range(10, 17))
    kappa_hours: tuple[int, ...] = tuple(range(10, 16))
    synthetic_years: int = 10
    daily_m: int = 1000
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"config schema_version {self.schema_version}, expected {CONFIG_SCHEMA_VERSION}")
        if self.m < 1 or self.daily_m < 1:
            raise ConfigError("m must be at least 1")
        if self.learn_years < 1:
            raise ConfigError("learn_years must be at least 1")
        if self.test_years is not None and self.test_years < 1:
            raise ConfigError("test_years must be at least 1 when given")
        for tau in (self.tau_upper, self.tau_lower):
            if not 0 < tau < 1:
                raise ConfigError("tau levels must lie in (0, 1)")
        bad = [f for f in self.families if f not in FAMILIES or f == "independence"]
        if bad or not self.families:
            raise ConfigError(f"unknown copula families {bad}")
        if not self.variants or any(v not in ("C1", "C2") for v in self.variants):
            raise ConfigError("variants must be drawn from C1, C2")
        for hrs in (self.main_hours, self.kappa_hours):
            if not hrs or min(hrs) < 0 or max(hrs) > 23:
                raise ConfigError("hour windows must lie within 0..23")

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "RunConfig":
        data = {**asdict(self), **{k: v for k, v in kw.items() if v is not None}}
        return RunConfig(**data)

    def split(self, years: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Learn years first, test years after; the two sets are disjoint and non-empty."""
        learn = years[: self.learn_years]
        rest = years[self.learn_years:]
        test = rest if self.test_years is None else rest[: self.test_years]
        if len(learn) < self.learn_years or not test:
            raise ConfigError(f"{len(years)} data years cannot hold {self.learn_years} learn years and a test period")
        return learn, test


_PARSERS = {
    "schema_version": int, "latitude": float, "longitude": float, "learn_years": int, "test_years": int,
    "tau_upper": float, "tau_lower": float, "m": int, "seed": int, "synthetic_years": int, "daily_m": int,
    "families": lambda s: tuple(x.lower() for x in _names(s)),
    "variants": lambda s: tuple(x.upper() for x in _names(s)),
    "main_hours": _hours, "kappa_hours": _hours,
}


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    extra = [s for s in parser.sections() if s != _SECTION]
    if extra:
        raise ConfigError(f"config takes flat key = value lines, found sections {extra}")
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    raw = dict(parser[_SECTION])
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    if "schema_version" not in raw:
        raise ConfigError("config must declare schema_version")
    values = {}
    for key, val in raw.items():
        try:
            values[key] = _PARSERS.get(key, str)(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {val!r}") from exc
    return RunConfig(**values, base_dir=base_dir)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    return parse_config(path.read_text(), str(path.parent))


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for key, val in cfg.to_dict().items():
        if val is None:
            continue
        if isinstance(val, tuple):
            val = ", ".join(str(v) for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
