"""INI experiment configuration with line-aware diagnostics.

Example::

    [graph]
    kind = random_geometric
    M = 10
    radius = 0.5
    seed = 0

    [problem]
    family = classification
    B = 200
    K = 10

    [algorithm]
    names = dgpda, xfilter, dsg

    [stopping]
    max_rounds = 200

    [sweep]
    graph.M = 6, 12, 24
"""
from __future__ import annotations

import configparser
import copy
import itertools
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import graphs as G

OUT_ENV = "DISTOPT_OUT"
MAX_SWEEP = 1000

ALGOS = ("dgpda", "xfilter", "dsg")
FAMILIES = ("classification", "hard")
MEASURES = ("h_star", "e_val")


class ConfigError(ValueError):
    pass


@dataclass
class GraphSpec:
    kind: str = "random_geometric"
    M: int = 10
    seed: int = 0
    radius: float = 0.5
    D: Optional[int] = None
    path: Optional[str] = None

    def opts(self) -> dict:
        o = {"radius": self.radius}
        if self.D is not None:
            o["D"] = self.D
        if self.path is not None:
            o["path"] = self.path
        return o


@dataclass
class ProblemSpec:
    family: str = "classification"
    B: int = 200
    K: int = 10
    lambda_reg: float = 1e-3
    alpha: float = 1.0
    seed: int = 0
    lipschitz: str = "analytic"
    uniform_L: bool = False
    data_file: Optional[str] = None
    # hard instance
    T: int = 5
    U: float = 0.5
    eps: float = 0.1
    layout: str = "path"


@dataclass
class AlgorithmSpec:
    names: Tuple[str, ...] = ALGOS
    choice: str = "I"
    Q: Optional[int] = None
    inner: str = "rounds"
    step: Optional[float] = None
    rule: str = "constant"


@dataclass
class StoppingSpec:
    max_rounds: int = 1000
    target_eps: Optional[float] = None
    measure: str = "h_star"
    record_potential: bool = True


@dataclass
class OutputSpec:
    dir: str = "out"
    prefix: str = "run"
    timing: bool = False


@dataclass
class ExperimentConfig:
    graph: GraphSpec = field(default_factory=GraphSpec)
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    algorithm: AlgorithmSpec = field(default_factory=AlgorithmSpec)
    stopping: StoppingSpec = field(default_factory=StoppingSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    sweep: Dict[str, list] = field(default_factory=dict)
    source: str = "<defaults>"

    def out_dir(self, override: Optional[str] = None) -> str:
        return override or os.environ.get(OUT_ENV) or self.output.dir

    def with_seed(self, seed: int) -> "ExperimentConfig":
        c = copy.deepcopy(self)
        c.graph.seed = seed
        c.problem.seed = seed
        return c

    def expand(self) -> List[Tuple[dict, "ExperimentConfig"]]:
        """Cartesian product of the sweep lists, in file order."""
        keys = list(self.sweep)
        combos = list(itertools.product(*(self.sweep[k] for k in keys))) if keys else [()]
        out = []
        for combo in combos:
            c = copy.deepcopy(self)
            c.sweep = {}
            setting = dict(zip(keys, combo))
            for key, val in setting.items():
                sec, name = key.split(".", 1)
                setattr(getattr(c, sec), _FIELD_ALIASES.get(name, name), val)
            out.append((setting, c))
        return out


_SECTIONS = {
    "graph": GraphSpec,
    "problem": ProblemSpec,
    "algorithm": AlgorithmSpec,
    "stopping": StoppingSpec,
    "output": OutputSpec,
}
_FIELD_ALIASES = {"lambda": "lambda_reg", "target": "target_eps"}
_CHOICES = {
    ("graph", "kind"): G.KINDS,
    ("problem", "family"): FAMILIES,
    ("problem", "lipschitz"): ("analytic", "sampled"),
    ("problem", "layout"): ("path", "path_star", "general_graph"),
    ("algorithm", "choice"): ("I", "II"),
    ("algorithm", "inner"): ("rounds", "operator"),
    ("algorithm", "rule"): ("constant", "sqrt"),
    ("stopping", "measure"): MEASURES,
}
_POSITIVE = {"M", "B", "K", "T", "U", "eps", "radius", "max_rounds", "target_eps",
             "Q", "step", "D", "alpha"}


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    sec = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            sec = m.group(1).strip()
            if key is None and sec == section:
                return n
            continue
        if sec == section and key is not None:
            k = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            if k.lower() == key.lower():
                return n
    return 0


def _where(src, text, section, key=None) -> str:
    n = _line_of(text, section, key)
    loc = f"{src}:{n}" if n else src
    return f"{loc}: [{section}]" + (f" {key}" if key else "")


def _convert(raw: str, default, name: str):
    """Parse a raw string to the type implied by the field default."""
    raw = raw.strip()
    if name == "names":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if raw.lower() in ("", "none"):
        return None
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int) or name in ("D", "Q", "M", "seed"):
        return int(raw)
    if isinstance(default, float) or name in ("target_eps", "step"):
        return float(raw)
    return raw


def _check_value(sec, name, val):
    allowed = _CHOICES.get((sec, name))
    if allowed is not None and val is not None and val not in allowed:
        raise ValueError(f"must be one of {', '.join(allowed)}; got {val!r}")
    if name == "names":
        bad = [a for a in val if a not in ALGOS]
        if bad or not val:
            raise ValueError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGOS)}")
    if name in _POSITIVE and val is not None and not val > 0:
        raise ValueError(f"must be positive; got {val!r}")


def parse(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = ExperimentConfig(source=source)
    for sec in cp.sections():
        if sec == "sweep":
            continue
        if sec not in _SECTIONS:
            raise ConfigError(f"{_where(source, text, sec)}: unknown section")
        section = getattr(cfg, sec)
        for key, raw in cp.items(sec):
            name = _FIELD_ALIASES.get(key, key)
            if not hasattr(section, name):
                raise ConfigError(f"{_where(source, text, sec, key)}: unknown field")
            try:
                val = _convert(raw, getattr(section, name), name)
                _check_value(sec, name, val)
            except ValueError as exc:
                raise ConfigError(f"{_where(source, text, sec, key)}: {exc}") from None
            setattr(section, name, val)
    if cp.has_section("sweep"):
        total = 1
        for key, raw in cp.items("sweep"):
            if "." not in key:
                raise ConfigError(f"{_where(source, text, 'sweep', key)}: "
                                  "sweep keys look like section.field")
            sec, name = key.split(".", 1)
            fname = _FIELD_ALIASES.get(name, name)
            if sec not in _SECTIONS or not hasattr(getattr(cfg, sec), fname):
                raise ConfigError(f"{_where(source, text, 'sweep', key)}: no such field")
            default = getattr(getattr(cfg, sec), fname)
            vals = []
            try:
                for part in raw.split(","):
                    v = _convert(part, default, fname)
                    _check_value(sec, fname, v)
                    vals.append(v)
            except ValueError as exc:
                raise ConfigError(f"{_where(source, text, 'sweep', key)}: {exc}") from None
            cfg.sweep[key] = vals
            total *= len(vals)
        if total > MAX_SWEEP:
            raise ConfigError(f"{_where(source, text, 'sweep')}: {total} runs exceeds "
                              f"the limit of {MAX_SWEEP}")
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    g, p = cfg.graph, cfg.problem
    src = cfg.source
    if g.kind == "from_edge_list":
        if not g.path or not os.path.exists(g.path):
            raise ConfigError(f"{src}: [graph] path: edge-list file not found: {g.path!r}")
    if g.kind == "path_star" and g.D is None:
        raise ConfigError(f"{src}: [graph] D: required for path_star graphs")
    if p.data_file and not os.path.exists(p.data_file):
        raise ConfigError(f"{src}: [problem] data_file: file not found: {p.data_file!r}")
    if p.family == "hard":
        if g.M % 3:
            raise ConfigError(f"{src}: [graph] M: hard instances need a multiple of 3")
        if p.T % 2 == 0:
            raise ConfigError(f"{src}: [problem] T: chain length must be odd")
        if not 0 < p.U < 1:
            raise ConfigError(f"{src}: [problem] U: must lie in (0, 1)")
        if p.layout == "general_graph" and "dgpda" in cfg.algorithm.names:
            raise ConfigError(f"{src}: [algorithm] names: dgpda needs every L_i > 0, "
                              "but general_graph hard instances have zero-L nodes")


def load(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse(text, source=path)
