"""INI-style run configuration.

Sections: ``[run]`` (seed, jobs) and one section per command.  Values are
parsed into typed fields; :meth:`RunConfig.to_ini` writes the canonical form
whose SHA-256 digest is embedded in every report.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


def _ints(text: str) -> list[int]:
    text = text.strip()
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.replace(",", " ").split()]


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _words(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split()]


@dataclass
class RunSection:
    seed: int = 0
    jobs: int = 1


@dataclass
class LpSection:
    suites: list[str] = field(default_factory=lambda: ["flat"])
    tolerance: float = 1e-3
    alhol_tolerance: float = 5e-3
    k_values: list[int] = field(default_factory=lambda: [1, 2, 3])
    lambdas: list[float] = field(default_factory=lambda: [0.025, 0.05, 0.1])
    resolution: int = 64


@dataclass
class BmSection:
    n: int = 2
    suites: list[str] = field(default_factory=lambda: ["flat"])
    tolerance: float = 2e-2
    empty_tolerance: float = 1e-3


@dataclass
class ConvergeSection:
    n: int = 1
    k_values: list[int] = field(default_factory=lambda: list(range(1, 11)))
    family: str = "exact"
    strength: float = 0.2
    eta: float = 0.1
    b: float = 1.0


@dataclass
class AtomicSection:
    map: str = "z2"
    resolution: int = 64


PARSERS = {int: int, float: float, str: str, "list[int]": _ints, "list[float]": _floats, "list[str]": _words}
SECTIONS = {"run": RunSection, "verify-lp": LpSection, "verify-bm": BmSection, "converge": ConvergeSection,
            "atomic-probe": AtomicSection}


def _type_key(f) -> object:
    t = f.type
    return t if t in PARSERS else {"int": int, "float": float, "str": str}.get(t, t)


def _render(v) -> str:
    if isinstance(v, list):
        return " ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    lp: LpSection = field(default_factory=LpSection)
    bm: BmSection = field(default_factory=BmSection)
    converge: ConvergeSection = field(default_factory=ConvergeSection)
    atomic: AtomicSection = field(default_factory=AtomicSection)

    _attr = {"run": "run", "verify-lp": "lp", "verify-bm": "bm", "converge": "converge", "atomic-probe": "atomic"}

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as err:
            raise ConfigError(f"cannot parse configuration: {err}") from err
        cfg = cls()
        for name in cp.sections():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]")
            sec = getattr(cfg, cls._attr[name])
            known = {f.name: f for f in fields(sec)}
            for key, raw in cp.items(name):
                key_n = key.replace("-", "_")
                if key_n not in known:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                parser = PARSERS[_type_key(known[key_n])]
                try:
                    setattr(sec, key_n, parser(raw))
                except ValueError as err:
                    raise ConfigError(f"bad value for {name}.{key}: {raw!r}") from err
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"configuration file not found: {p}")
        return cls.from_text(p.read_text())

    def validate(self) -> None:
        for name in ("tolerance", "alhol_tolerance"):
            if getattr(self.lp, name) < 0:
                raise ConfigError(f"verify-lp.{name} must be non-negative")
        for name in ("tolerance", "empty_tolerance"):
            if getattr(self.bm, name) < 0:
                raise ConfigError(f"verify-bm.{name} must be non-negative")
        if self.run.jobs < 1:
            raise ConfigError("run.jobs must be at least 1")

    def to_ini(self, include_jobs: bool = True) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name, attr in self._attr.items():
            sec = getattr(self, attr)
            cp[name] = {f.name: _render(getattr(sec, f.name)) for f in fields(sec)
                        if include_jobs or (name, f.name) != ("run", "jobs")}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        """SHA-256 of the canonical text; the worker count does not change results and is left out."""
        return hashlib.sha256(self.to_ini(include_jobs=False).encode()).hexdigest()
