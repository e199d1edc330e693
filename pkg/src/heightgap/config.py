"""Run configuration, lattice-spec files and the results cache."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import re
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .nfield import NumberField
from .qalg import LatticeSpec, make_algebra, make_lattice

FORMAT_VERSION = 1
ARTIFACT_VERSION = "0.1.0"

COMMANDS = (
    "height", "nheight", "covol", "generic-search", "disc-decompose",
    "gap-check", "gap-scan", "margulis-scan", "zeta", "mobius-inspect",
)


class ConfigError(ValueError):
    """A configuration problem, with the offending field in the message."""


_RATIONAL = re.compile(r"^\s*[+-]?\d+(\s*/\s*[+-]?\d+)?\s*$")


def parse_rational(value: Any, where: str) -> Fraction:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a rational, got a boolean")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str) and _RATIONAL.match(value):
        try:
            return Fraction(value.replace(" ", ""))
        except ZeroDivisionError:
            raise ConfigError(f"{where}: zero denominator in {value!r}") from None
    raise ConfigError(f"{where}: malformed rational {value!r}")


def parse_element(K: NumberField, value: Any, where: str):
    """A rational or a coefficient vector (low-to-high in the generator)."""
    if isinstance(value, list):
        if len(value) > K.degree:
            raise ConfigError(f"{where}: {len(value)} coefficients for a degree-{K.degree} field")
        return K([parse_rational(c, f"{where}[{i}]") for i, c in enumerate(value)] or [0])
    return K(parse_rational(value, where))


def parse_matrix(K: NumberField, value: Any, where: str):
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(r, list) and len(r) == 2 for r in value)):
        raise ConfigError(f"{where}: expected a 2x2 array")
    return [[parse_element(K, value[i][j], f"{where}[{i}][{j}]") for j in range(2)] for i in range(2)]


def parse_field(value: Any, where: str = "field") -> NumberField:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a table with minpoly")
    _reject_unknown(value, {"minpoly", "precision_bits"}, where)
    if "minpoly" not in value:
        raise ConfigError(f"{where}.minpoly: missing")
    mp_ = value["minpoly"]
    if not (isinstance(mp_, list) and mp_ and all(isinstance(c, int) and not isinstance(c, bool) for c in mp_)):
        raise ConfigError(f"{where}.minpoly: expected a list of integers (low-to-high)")
    bits = value.get("precision_bits", 192)
    _check_range(f"{where}.precision_bits", bits, 64, 8192)
    try:
        return NumberField(mp_, precision_bits=bits)
    except ValueError as exc:
        raise ConfigError(f"{where}.minpoly: {exc}") from None


def _reject_unknown(d: dict, allowed: set, where: str):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def _check_range(name, value, lo, hi):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if not lo <= value <= hi:
        raise ConfigError(f"{name}: {value} outside [{lo}, {hi}]")


def _places(value, where):
    out = []
    if not isinstance(value, list):
        raise ConfigError(f"{where}: expected a list")
    for i, p in enumerate(value):
        if isinstance(p, int) and not isinstance(p, bool):
            out.append(p)
        elif isinstance(p, list) and len(p) == 2 and all(isinstance(x, int) for x in p):
            out.append(tuple(p))
        else:
            raise ConfigError(f"{where}[{i}]: expected a prime or [prime, place index]")
    return out


def load_lattice_spec(path: str | os.PathLike, precision_bits: int | None = None) -> LatticeSpec:
    """Read a lattice spec from TOML.

    ::

        format_version = 1
        name = "bianchi-1"
        [field]
        minpoly = [1, 0, 1]
        [algebra]
        ram_f = []             # primes, or [prime, place index]
        split_real_places = []
        [lattice]
        S = []
        index_hint = "1"       # optional
        generators = [[["1", "1"], ["0", "1"]], [["1", [0, 1]], ["0", "1"]]]
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"spec file {str(p)!r} does not exist")
    try:
        data = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return spec_from_dict(data, precision_bits)


def spec_from_dict(data: dict, precision_bits: int | None = None) -> LatticeSpec:
    _reject_unknown(data, {"format_version", "name", "field", "algebra", "lattice"}, "spec")
    fv = data.get("format_version", FORMAT_VERSION)
    if fv != FORMAT_VERSION:
        raise ConfigError(f"spec.format_version: unsupported version {fv!r}")
    fdata = dict(data.get("field", {}))
    if precision_bits is not None:
        fdata["precision_bits"] = precision_bits
    K = parse_field(fdata, "field")
    alg = data.get("algebra", {})
    _reject_unknown(alg, {"ram_f", "split_real_places"}, "algebra")
    lat = data.get("lattice", {})
    _reject_unknown(lat, {"S", "index_hint", "generators"}, "lattice")
    gens = lat.get("generators")
    if not isinstance(gens, list) or not gens:
        raise ConfigError("lattice.generators: expected a nonempty list of 2x2 matrices")
    rows = [parse_matrix(K, g, f"lattice.generators[{i}]") for i, g in enumerate(gens)]
    hint = lat.get("index_hint")
    hint = None if hint is None else parse_rational(hint, "lattice.index_hint")
    try:
        algebra = make_algebra(K, _places(alg.get("ram_f", []), "algebra.ram_f"), alg.get("split_real_places", []))
        return make_lattice(algebra, _places(lat.get("S", []), "lattice.S"), rows, hint, data.get("name", ""))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def element_json(x) -> list[str]:
    return [str(c) for c in x.coeffs()]


def spec_to_dict(spec: LatticeSpec) -> dict:
    K = spec.algebra.field
    out = {
        "format_version": FORMAT_VERSION,
        "name": spec.name,
        "field": {"minpoly": list(K.minpoly), "precision_bits": K.precision_bits},
        "algebra": {
            "ram_f": [[P.p, P.index] for P in spec.algebra.ram_f],
            "split_real_places": list(spec.algebra.split_real_places),
        },
        "lattice": {
            "S": [[P.p, P.index] for P in spec.S],
            "generators": [[[element_json(x) for x in r] for r in g.matrix.rows()] for g in spec.generators],
        },
    }
    if spec.index_hint is not None:
        out["lattice"]["index_hint"] = str(spec.index_hint)
    return out


# run configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    spec: str | None = None
    input: str | None = None
    matrices: list | None = None
    minpoly: list[int] | None = None
    root: int | None = None
    word: str | None = None
    bianchi: list[int] | None = None
    n_max: int = 8
    eig_words: int = 20000
    budget: int = 200000
    epsilon: float = 0.2
    eps_grid: list[float] | None = None
    radius: int = 8
    precision_bits: int = 192
    zeta_bound: int = 1000000
    seed: int = 42
    mode: str = "direct"
    workers: int = 1
    output: str | None = None
    csv: str | None = None
    cache: bool = True

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown command {self.command!r}")
        _check_range("n_max", self.n_max, 1, 64)
        _check_range("eig_words", self.eig_words, 1, 10**7)
        _check_range("budget", self.budget, 1, 10**8)
        _check_range("epsilon", self.epsilon, 1e-6, 100)
        _check_range("radius", self.radius, 0, 20)
        _check_range("precision_bits", self.precision_bits, 64, 8192)
        _check_range("zeta_bound", self.zeta_bound, 2, 10**8)
        _check_range("workers", self.workers, 1, 256)
        if self.root is not None:
            _check_range("root", self.root, 0, 10**6)
        if self.mode not in ("direct", "squares", "double-commutator"):
            raise ConfigError(f"mode: expected direct, squares or double-commutator, got {self.mode!r}")
        for i, e in enumerate(self.eps_grid or []):
            _check_range(f"eps_grid[{i}]", e, 1e-6, 100)
        for i, D in enumerate(self.bianchi or []):
            _check_range(f"bianchi[{i}]", D, 1, 10**6)
        if self.minpoly is not None and not all(isinstance(c, int) and not isinstance(c, bool) for c in self.minpoly):
            raise ConfigError("minpoly: expected a list of integers")
        return self

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, where: str = "config") -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        _reject_unknown(d, names, where)
        if "command" not in d:
            raise ConfigError(f"{where}: missing command")
        return cls(**d).validate()

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        return cls.from_dict(tomli.loads(text))


CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(RunConfig))


def load_config_file(path: str | os.PathLike) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {str(p)!r} does not exist")
    try:
        data = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    _reject_unknown(data, set(CONFIG_KEYS), str(p))
    return data


def resolve(command: str, file_values: dict, flag_values: dict) -> tuple[RunConfig, list[str]]:
    """Merge file values and explicit flags; flags win and each conflict is reported."""
    warnings = []
    merged = dict(file_values)
    if "command" in merged and merged["command"] != command:
        warnings.append(f"config command {merged['command']!r} overridden by {command!r}")
    merged["command"] = command
    for k, v in flag_values.items():
        if v is None:
            continue
        if k in file_values and file_values[k] != v:
            warnings.append(f"{k}: flag value {v!r} overrides config value {file_values[k]!r}")
        merged[k] = v
    return RunConfig.from_dict(merged), warnings


# cache ---------------------------------------------------------------------------

def cache_dir() -> Path:
    env = os.environ.get("HEIGHTGAP_CACHE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "heightgap"


def cache_key(cfg: RunConfig) -> str:
    """SHA-256 of the resolved config, the contents of referenced files and the artifact version."""
    payload = {"config": cfg.to_dict(), "version": ARTIFACT_VERSION}
    payload["config"].pop("output", None)
    payload["config"].pop("csv", None)
    payload["config"].pop("cache", None)
    for k in ("spec", "input"):
        path = getattr(cfg, k)
        if path and Path(path).is_file():
            payload[k + "_sha256"] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def cache_get(key: str) -> dict | None:
    d = cache_dir() / key
    if not (d / "result.json").is_file():
        return None
    out = {"json": (d / "result.json").read_text()}
    if (d / "result.csv").is_file():
        out["csv"] = (d / "result.csv").read_text()
    if (d / "exit_code").is_file():
        out["exit_code"] = int((d / "exit_code").read_text())
    return out


def cache_put(key: str, text: str, csv_text: str | None, exit_code: int):
    d = cache_dir() / key
    d.mkdir(parents=True, exist_ok=True)
    (d / "result.json").write_text(text)
    if csv_text is not None:
        (d / "result.csv").write_text(csv_text)
    (d / "exit_code").write_text(str(exit_code))
