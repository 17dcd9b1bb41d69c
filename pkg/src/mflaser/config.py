"""Run configuration: key = value text files (or JSON) and initial-state presets.

Text grammar, one setting per line::

    # comment
    key = value

Recognised keys are the fields of :class:`SimConfig` plus the physical
constants ``omega, g, kappa`` and either ``gamma, d`` or
``kappa_plus, kappa_minus``.

Initial-state presets:

``vacuum-ground``          |0⟩ ⊗ e₋
``vacuum-atom-steady``     |0⟩⟨0| ⊗ diag((1+d)/2, (1-d)/2)
``fock(n)-ground``         |n⟩ ⊗ e₋
``mixed(p)``               |0⟩⟨0| ⊗ diag(p, 1-p)
``coherent(re,im,p,c)``    coherent field ⊗ [[p, c], [c, 1-p]]
``desk``                   ``coherent(0.5,0,0.7,0.3)``
``file:PATH``              complex matrix, one row per line, entries ``re,im``
                           separated by whitespace
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParamsError
from .hilbert import SpaceDescriptor, coherent_amplitudes
from .lindblad import LaserParams
from .master import DEFAULT_LEAKAGE_BOUND

SCHEMA_VERSION = "mfl-1"
SCENARIOS = ("master-direct", "master-lorenz", "lorenz", "sse-linear", "sse-meanfield", "verify-all")


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = f"line {line}: " if line is not None else ""
        where += f"{key}: " if key else ""
        super().__init__(where + message)
        self.line = line
        self.key = key


@dataclass
class SimConfig:
    params: LaserParams = field(default_factory=lambda: LaserParams.from_gamma_d(0.5, 0.8, 1.0, 2.0, -0.2))
    n_max: int = 30
    dt: float = 1e-3
    t_final: float = 2.0
    initial_state: str = "desk"
    scenario: str = "verify-all"
    trajectories: int = 4000
    seed: int = 1
    out: str = "out"
    leakage_threshold: float = DEFAULT_LEAKAGE_BOUND
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {', '.join(SCENARIOS)}",
                              key="scenario")
        if not self.dt > 0:
            raise ConfigError("dt must be > 0", key="dt")
        if not self.t_final > 0:
            raise ConfigError("t_final must be > 0", key="t_final")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1", key="n_max")
        if self.trajectories < 1:
            raise ConfigError("trajectories must be >= 1", key="trajectories")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer", key="seed")
        if self.initial_state.startswith("file:") and not Path(self.initial_state[5:]).exists():
            raise ConfigError(f"initial state file {self.initial_state[5:]!r} does not exist", key="initial_state")

    @property
    def space(self) -> SpaceDescriptor:
        return SpaceDescriptor(self.n_max)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "params"}
        p = self.params
        d.update(omega=p.omega, g=p.g, kappa=p.kappa, kappa_plus=p.kappa_plus, kappa_minus=p.kappa_minus)
        return d

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})


_INT_KEYS = {"n_max", "trajectories", "seed", "workers"}
_FLOAT_KEYS = {"dt", "t_final", "leakage_threshold"}
_STR_KEYS = {"initial_state", "scenario", "out"}
_PARAM_KEYS = {"omega", "g", "kappa", "gamma", "d", "kappa_plus", "kappa_minus"}
_ALIASES = {"M": "trajectories", "leakage": "leakage_threshold"}


def _build(values: dict, lines: dict) -> SimConfig:
    defaults = SimConfig()
    p = defaults.params
    phys = dict(omega=p.omega, g=p.g, kappa=p.kappa)
    for k in ("omega", "g", "kappa"):
        phys[k] = values.pop(k, phys[k])
    rates = {k: values.pop(k) for k in ("gamma", "d", "kappa_plus", "kappa_minus") if k in values}
    try:
        if {"kappa_plus", "kappa_minus"} & rates.keys():
            if {"gamma", "d"} & rates.keys():
                raise ConfigError("give either gamma/d or kappa_plus/kappa_minus, not both",
                                  line=lines.get("gamma", lines.get("d")), key="gamma")
            params = LaserParams(kappa_plus=rates.get("kappa_plus", p.kappa_plus),
                                 kappa_minus=rates.get("kappa_minus", p.kappa_minus), **phys)
        else:
            params = LaserParams.from_gamma_d(gamma=rates.get("gamma", p.gamma), d=rates.get("d", p.d), **phys)
    except InvalidParamsError as exc:
        key = str(exc).split()[0]
        raise ConfigError(str(exc), line=lines.get(key), key=key) from None
    try:
        return SimConfig(params=params, **values)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], line=lines.get(exc.key), key=exc.key) from None


def _coerce(key, raw, line):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS or key in _PARAM_KEYS:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse {raw!r}", line=line, key=key) from None


def parse_config_text(text: str) -> SimConfig:
    values, lines = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _PARAM_KEYS:
            raise ConfigError("unknown key", line=lineno, key=key)
        if key in values:
            raise ConfigError("duplicate key", line=lineno, key=key)
        values[key] = _coerce(key, raw, lineno)
        lines[key] = lineno
    return _build(values, lines)


def config_from_dict(doc: dict) -> SimConfig:
    if "config" in doc:  # a summary JSON written by a previous run
        doc = doc["config"]
    values = {}
    for key, raw in doc.items():
        key = _ALIASES.get(key, key)
        if key not in _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _PARAM_KEYS:
            raise ConfigError("unknown key", key=key)
        values[key] = _coerce(key, raw, None)
    if {"kappa_plus", "kappa_minus"} <= values.keys():
        values.pop("gamma", None)
        values.pop("d", None)
    return _build(values, {})


def load_config(path) -> SimConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        return config_from_dict(doc)
    return parse_config_text(text)


_PRESET = re.compile(r"^(?P<name>[a-z-]+?)(?:\((?P<args>[^)]*)\))?(?P<tail>-ground)?$")


def _field_projector(space, amps):
    amps = np.asarray(amps, dtype=complex)
    return np.outer(amps, amps.conj())


def _fock(space, n):
    if not 0 <= n <= space.n_max:
        raise ConfigError(f"Fock level {n} outside 0..{space.n_max}", key="initial_state")
    v = np.zeros(space.n_max + 1, dtype=complex)
    v[n] = 1
    return v


def initial_density(spec: str, space: SpaceDescriptor, params: LaserParams) -> np.ndarray:
    """Density matrix for an initial-state preset name (see module docstring)."""
    spec = spec.strip()
    ground = np.diag([0.0, 1.0])
    if spec.startswith("file:"):
        return load_matrix(spec[5:], space)
    if spec == "desk":
        spec = "coherent(0.5,0,0.7,0.3)"
    m = _PRESET.match(spec)
    if not m:
        raise ConfigError(f"unknown initial state {spec!r}", key="initial_state")
    name, args = m["name"], m["args"]
    nums = [float(x) for x in args.split(",")] if args else []
    vac = _fock(space, 0)
    if spec == "vacuum-ground":
        return space.embed(_field_projector(space, vac), ground)
    if spec == "vacuum-atom-steady":
        d = params.d
        return space.embed(_field_projector(space, vac), np.diag([(1 + d) / 2, (1 - d) / 2]))
    if name == "fock" and m["tail"] and len(nums) == 1 and float(nums[0]).is_integer():
        return space.embed(_field_projector(space, _fock(space, int(nums[0]))), ground)
    if name == "mixed" and len(nums) == 1 and 0 <= nums[0] <= 1:
        return space.embed(_field_projector(space, vac), np.diag([nums[0], 1 - nums[0]]))
    if name == "coherent" and len(nums) == 4:
        re_, im_, p, c = nums
        atom = np.array([[p, c], [c, 1 - p]])
        if np.linalg.eigvalsh(atom)[0] < -1e-12:
            raise ConfigError("atomic block of coherent(...) is not positive", key="initial_state")
        amps = coherent_amplitudes(complex(re_, im_), space.n_max + 1)
        return space.embed(_field_projector(space, amps), atom)
    raise ConfigError(f"unknown initial state {spec!r}", key="initial_state")


def load_matrix(path, space: SpaceDescriptor) -> np.ndarray:
    """Read a complex matrix written as rows of whitespace-separated ``re,im`` pairs."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([complex(float(a), float(b)) for a, b in (tok.split(",") for tok in line.split())])
        except ValueError:
            raise ConfigError(f"{path}: bad matrix entry", line=lineno) from None
    mat = np.array(rows, dtype=complex)
    if mat.shape != (space.dim, space.dim):
        raise ConfigError(f"{path}: matrix has shape {mat.shape}, expected {(space.dim, space.dim)}")
    return mat


def save_matrix(path, mat) -> None:
    with open(path, "w") as fh:
        for row in np.asarray(mat):
            fh.write(" ".join(f"{z.real:.17g},{z.imag:.17g}" for z in row) + "\n")
