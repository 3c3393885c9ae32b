"""Model configuration and the sectioned key-value config file reader.

File grammar (``configparser`` INI dialect, no interpolation)::

    # comment
    [model]
    family = third_party      ; pgg | third_party | threat | ethnocentrism
    [game]
    b = 1.5
    lambda = 1
    ...

Every key belongs to exactly one section (see ``SECTIONS``). Unknown
sections or keys are rejected. Keys left out take the family default.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import re
from dataclasses import dataclass, field

from . import games
from .topology import MOORE, VON_NEUMANN

FAMILIES = ("pgg", "third_party", "threat", "ethnocentrism")
TOPOLOGIES = ("well_mixed", "grid", "small_world")

COOP_BY_LABEL = {v: k for k, v in games.COOP_LABELS.items()}
PUNISH_BY_LABEL = {v: k for k, v in games.PUNISH_LABELS.items()}


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        self.message = message
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class ModelConfig:
    family: str
    # game
    b: float = 3.0
    c: float = 1.0
    k: int = 5
    lam: float = 1.0
    rho: float = 3.0
    iota: float = 1.0
    tau: float = 0.0
    base_pay: float = 30.0
    fitness_scale: float = 0.1
    d: float | None = None  # listed with the threat model's parameters; carried but unused
    pd_matrix: tuple[float, float, float, float] = (5.0, 3.0, 1.0, 0.0)
    # dynamics
    mu: float = 0.01
    s: float = 0.5
    # population
    topology: str = "well_mixed"
    size: int = 400
    width: int = 20
    height: int = 20
    neighborhood: str = VON_NEUMANN
    wraparound: bool = True
    mean_degree: int = 4
    rewire_prob: float = 0.1
    regenerate_graph: bool = True
    graph_seed: int = 0
    m: float = 0.0
    n_groups: int = 4
    inherit_tags: bool = True  # imitators copy the model's group tag along with its program
    cooperation: tuple[str, ...] = ("C", "D", "OC", "OD")
    punishment: tuple[str, ...] = ("R", "A", "S", "N")
    # run
    generations: int = 1000
    seed: int = 0
    burn_in: float = 0.0
    rounds: int = 1

    @classmethod
    def for_family(cls, family: str, **overrides) -> "ModelConfig":
        if family not in FAMILIES:
            raise ConfigError(f"unknown model family {family!r}; expected one of {FAMILIES}", key="family")
        values = {**FAMILY_DEFAULTS[family], **overrides}
        cfg = cls(family=family, **values)
        cfg.validate()
        return cfg

    def replace(self, **changes) -> "ModelConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    # -- derived objects -------------------------------------------------

    @property
    def population(self) -> int:
        if self.topology == "grid":
            return self.width * self.height
        return self.size

    def pgg_params(self) -> games.PggParams:
        k = 2 if self.family == "third_party" else self.k
        return games.PggParams(k, self.c, self.b, self.lam, self.rho, self.iota)

    def threat_params(self) -> games.ThreatParams:
        return games.ThreatParams(self.base_pay, self.tau, self.fitness_scale)

    def pd(self) -> games.PdMatrix:
        return games.PdMatrix(*self.pd_matrix)

    def universe(self):
        if self.family == "ethnocentrism":
            return games.ENTITATIVE_UNIVERSE
        return games.pgg_universe(
            [COOP_BY_LABEL[x] for x in self.cooperation], [PUNISH_BY_LABEL[x] for x in self.punishment]
        )

    def strategy_labels(self) -> list[str]:
        if self.family == "ethnocentrism":
            return [games.EntitativeProgram.from_code(c).label for c in self.universe()]
        return [games.pgg_label(c) for c in self.universe()]

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(msg, key=key)

        need(self.family in FAMILIES, "family", f"must be one of {FAMILIES}")
        need(self.c > 0, "c", "contribution c must be > 0")
        need(self.b > 1, "b", "benefit factor must be > 1")
        need(0 < self.lam < self.rho, "lambda", f"need 0 < lambda < rho, got lambda={self.lam}, rho={self.rho}")
        need(0 <= self.iota <= 1, "iota", "reputation probability must lie in [0, 1]")
        need(self.tau >= 0, "tau", "threat level must be >= 0")
        need(self.fitness_scale > 0, "fitness_scale", "must be > 0")
        need(0 <= self.mu <= 1, "mu", "exploration rate must lie in [0, 1]")
        need(self.s >= 0, "s", "selection strength must be >= 0")
        need(0 <= self.m <= 1, "m", "mobility must lie in [0, 1]")
        need(self.generations >= 0, "generations", "must be >= 0")
        need(0 <= self.burn_in < 1, "burn_in", "burn-in fraction must lie in [0, 1)")
        need(self.rounds >= 1, "rounds", "must be >= 1")
        need(self.topology in TOPOLOGIES, "topology", f"must be one of {TOPOLOGIES}")
        need(self.neighborhood in (VON_NEUMANN, MOORE), "neighborhood", f"must be {VON_NEUMANN} or {MOORE}")
        pd = self.pd_matrix
        need(len(pd) == 4 and pd[0] > pd[1] > pd[2] > pd[3], "pd_matrix", "need T > R > P > S")
        need(len(self.punishment) > 0, "punishment", "at least one punishment strategy")
        need(len(self.cooperation) > 0, "cooperation", "at least one cooperation strategy")
        for p in self.punishment:
            need(p in PUNISH_BY_LABEL, "punishment", f"unknown punishment strategy {p!r}; use R, A, S, N")

        if self.topology == "grid":
            need(self.width >= 2, "width", "grid width must be >= 2")
            need(self.height >= 2, "height", "grid height must be >= 2")
        else:
            need(self.size >= 2, "size", "population size must be >= 2")
        if self.topology == "small_world":
            need(self.mean_degree >= 2 and self.mean_degree % 2 == 0, "mean_degree", "must be an even integer >= 2")
            need(self.size > self.mean_degree, "mean_degree", "must be smaller than the population size")
            need(0 <= self.rewire_prob <= 1, "rewire_prob", "must lie in [0, 1]")

        allowed_coop = ("C", "D", "OC", "OD") if self.family == "pgg" else ("C", "D", "O")
        if self.family != "ethnocentrism":
            for x in self.cooperation:
                need(x in allowed_coop, "cooperation", f"{x!r} is not available in family {self.family}; use {allowed_coop}")

        if self.family == "pgg":
            need(self.k >= 2, "k", "group size must be >= 2")
            if self.topology == "well_mixed":
                need(self.size % self.k == 0, "size", f"well-mixed population {self.size} must be divisible by k={self.k}")
            else:
                need(self.k <= self.population, "k", "group size exceeds population")
        elif self.family == "third_party":
            need(self.k == 2, "k", "the third-party model plays pairwise games, k must be 2")
            need(self.topology != "well_mixed", "topology", "third-party punishment needs a network")
        elif self.family == "threat":
            need(self.topology == "grid", "topology", "the threat model runs on a grid")
            deg = 4 if self.neighborhood == VON_NEUMANN else 8
            need(self.wraparound, "wraparound", "threat groups need equal-size neighborhoods; use a torus")
            need(self.k == deg + 1, "k", f"k is 1 + grid degree = {deg + 1} for this neighborhood")
        elif self.family == "ethnocentrism":
            need(self.topology != "well_mixed", "topology", "the ethnocentrism model needs a network")
            need(self.n_groups >= 1, "n_groups", "must be >= 1")


FAMILY_DEFAULTS: dict[str, dict] = {
    "pgg": dict(
        topology="well_mixed", size=400, k=5, b=3.0, c=1.0, lam=1.0, rho=3.0, iota=0.9, mu=0.01, s=0.5,
        cooperation=("C", "D", "OC", "OD"), generations=2000,
    ),
    "third_party": dict(
        topology="small_world", size=1000, mean_degree=4, rewire_prob=0.1, k=2, b=1.8, c=1.0, lam=1.0,
        rho=3.0, mu=0.01, s=0.5, m=0.0, cooperation=("C", "D", "O"), generations=5000,
    ),
    "threat": dict(
        topology="grid", width=20, height=20, k=5, b=3.0, c=1.0, lam=0.5, rho=1.5, mu=0.1, s=0.5,
        base_pay=30.0, tau=0.0, d=0.1, cooperation=("C", "D", "O"), generations=5000,
    ),
    "ethnocentrism": dict(
        topology="grid", width=20, height=20, n_groups=4, pd_matrix=(5.0, 3.0, 1.0, 0.0), mu=0.01, s=0.5,
        m=0.0, generations=5000,
    ),
}


# ---------------------------------------------------------------------------
# file reader


def _as_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _as_int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _as_labels(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _as_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in _as_labels(text))


# section -> {file key: (field name, parser)}
SECTIONS: dict[str, dict[str, tuple[str, object]]] = {
    "model": {"family": ("family", str.strip)},
    "game": {
        "b": ("b", float),
        "r": ("b", float),
        "c": ("c", float),
        "k": ("k", _as_int),
        "lambda": ("lam", float),
        "rho": ("rho", float),
        "iota": ("iota", float),
        "tau": ("tau", float),
        "base_pay": ("base_pay", float),
        "fitness_scale": ("fitness_scale", float),
        "d": ("d", float),
        "pd_matrix": ("pd_matrix", _as_floats),
    },
    "dynamics": {"mu": ("mu", float), "s": ("s", float)},
    "population": {
        "topology": ("topology", str.strip),
        "size": ("size", _as_int),
        "width": ("width", _as_int),
        "height": ("height", _as_int),
        "neighborhood": ("neighborhood", str.strip),
        "wraparound": ("wraparound", _as_bool),
        "mean_degree": ("mean_degree", _as_int),
        "rewire_prob": ("rewire_prob", float),
        "regenerate_graph": ("regenerate_graph", _as_bool),
        "graph_seed": ("graph_seed", _as_int),
        "m": ("m", float),
        "n_groups": ("n_groups", _as_int),
        "inherit_tags": ("inherit_tags", _as_bool),
        "cooperation": ("cooperation", _as_labels),
        "punishment": ("punishment", _as_labels),
    },
    "run": {
        "generations": ("generations", _as_int),
        "seed": ("seed", _as_int),
        "burn_in": ("burn_in", float),
        "rounds": ("rounds", _as_int),
    },
    "sweep": {
        "parameter": ("parameter", str.strip),
        "values": ("values", _as_floats),
        "runs": ("runs", _as_int),
        "seed_base": ("seed_base", _as_int),
    },
}

FIELD_TO_KEY = {f: key for sec in SECTIONS.values() for key, (f, _) in sec.items() if key != "r"}


def parse_value(key: str, text: str):
    """Parse ``text`` for a config ``key`` (any section); returns (field name, value)."""
    for sec in SECTIONS.values():
        if key in sec:
            fname, parser = sec[key]
            try:
                return fname, parser(text)
            except ValueError as exc:
                raise ConfigError(f"bad value {text!r}: {exc}", key=key) from None
    raise ConfigError("unknown key", key=key)


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """(section, key) -> 1-based line number, for error messages."""
    lines = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if m := re.match(r"^\[([^\]]+)\]", line):
            section = m.group(1).strip()
        elif m := re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line):
            lines.setdefault((section, m.group(1).strip().lower()), i)
    return lines


@dataclass
class ConfigFile:
    model: ModelConfig
    sweep: dict = field(default_factory=dict)


def read_config_file(path: str | os.PathLike) -> ConfigFile:
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text)


def parse_config_text(text: str) -> ConfigFile:
    parser = configparser.ConfigParser(interpolation=None, default_section="\0none")
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", line=exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key in section [{exc.section}]", key=exc.option, line=exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("cannot parse line", line=lineno) from None

    lines = _key_lines(text)
    values: dict = {}
    sweep: dict = {}
    for section in parser.sections():
        if section not in SECTIONS:
            sec_line = next((i for i, raw in enumerate(text.splitlines(), 1) if raw.strip().startswith(f"[{section}")), None)
            raise ConfigError(f"unknown section [{section}]; expected one of {sorted(SECTIONS)}", line=sec_line)
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key in section [{section}]", key=key, line=line)
            fname, conv = SECTIONS[section][key]
            try:
                value = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value {raw!r}: {exc}", key=key, line=line) from None
            (sweep if section == "sweep" else values)[fname] = (value, key, line)

    if "family" not in values:
        raise ConfigError("missing required key [model] family", key="family")
    family, _, fline = values.pop("family")
    if family not in FAMILIES:
        raise ConfigError(f"unknown model family {family!r}; expected one of {FAMILIES}", key="family", line=fline)

    overrides = {fname: v for fname, (v, _, _) in values.items()}
    try:
        model = ModelConfig.for_family(family, **overrides)
    except ConfigError as exc:
        # point at the offending line when the key came from the file
        fname = "lam" if exc.key == "lambda" else exc.key
        line = values[fname][2] if fname in values else None
        raise ConfigError(exc.message, key=exc.key, line=line) from None
    return ConfigFile(model, {fname: v for fname, (v, _, _) in sweep.items()})


def load_config(path: str | os.PathLike) -> ModelConfig:
    """Read and validate a config file; the [sweep] section, if any, is ignored here."""
    return read_config_file(path).model
