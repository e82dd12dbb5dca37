"""Coupling and adapter configuration files.

Coupling config (JSON)::

    {
      "scheme": "serial-implicit" | "serial-explicit",
      "participants": ["First", "Second"],
      "time_window_size": 0.1,
      "max_time": 1.0,
      "max_iterations": 50,
      "convergence_tolerance": 1e-12,
      "acceleration": {"kind": "aitken", "omega": 0.5, "omega_min": 0.001, "omega_max": 1.0},
      "exchanges": [{"data": "HeatFlux", "from": "First", "to": "Second", "mapping": "consistent"}],
      "metadata": {}
    }

Adapter config (JSON), key-compatible with the FEniCS-preCICE adapter::

    {
      "participant_name": "Dirichlet",
      "config_file_name": "coupling-config.json",
      "interface": {"coupling_mesh_name": "...", "write_data_name": "...", "read_data_name": "..."}
    }
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigInvalid, ConfigNotFound
from .mapping import MappingKind


class Scheme(str, enum.Enum):
    SERIAL_IMPLICIT = "serial-implicit"
    SERIAL_EXPLICIT = "serial-explicit"

    @property
    def implicit(self) -> bool:
        return self is Scheme.SERIAL_IMPLICIT


@dataclass(frozen=True)
class Exchange:
    data: str
    source: str
    target: str
    mapping: MappingKind = MappingKind.CONSISTENT

    def to_json(self) -> dict:
        return {"data": self.data, "from": self.source, "to": self.target, "mapping": self.mapping.value}


@dataclass(frozen=True)
class CouplingConfig:
    scheme: Scheme
    participants: tuple[str, str]
    time_window_size: float
    max_time: float
    max_iterations: int = 50
    convergence_tolerance: float = 1e-6
    acceleration: dict = field(default_factory=lambda: {"kind": "constant", "omega": 1.0})
    exchanges: tuple[Exchange, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        problems = _check_coupling(self)
        if problems:
            raise ConfigInvalid(problems)

    @property
    def first_participant(self) -> str:
        return self.participants[0]

    @property
    def second_participant(self) -> str:
        return self.participants[1]

    def peer_of(self, participant: str) -> str:
        if participant not in self.participants:
            raise ConfigInvalid(f"participant: {participant!r} is not one of {list(self.participants)}")
        return self.participants[1] if participant == self.participants[0] else self.participants[0]

    def exchange_from(self, participant: str) -> Exchange | None:
        return next((e for e in self.exchanges if e.source == participant), None)

    def exchange_to(self, participant: str) -> Exchange | None:
        return next((e for e in self.exchanges if e.target == participant), None)

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "participants": list(self.participants),
            "time_window_size": self.time_window_size,
            "max_time": self.max_time,
            "max_iterations": self.max_iterations,
            "convergence_tolerance": self.convergence_tolerance,
            "acceleration": dict(self.acceleration),
            "exchanges": [e.to_json() for e in self.exchanges],
            "metadata": dict(self.metadata),
        }

    def canonical_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_json(cls, doc: dict) -> CouplingConfig:
        problems = []
        if not isinstance(doc, dict):
            raise ConfigInvalid("<root>: expected a JSON object")
        for key in ("scheme", "participants", "time_window_size", "max_time", "exchanges"):
            if key not in doc:
                problems.append(f"{key}: missing")
        if problems:
            raise ConfigInvalid(problems)
        try:
            scheme = Scheme(doc["scheme"])
        except ValueError:
            raise ConfigInvalid(f"scheme: unknown scheme {doc['scheme']!r}") from None
        parts = doc["participants"]
        if not isinstance(parts, list) or len(parts) != 2:
            raise ConfigInvalid("participants: expected exactly two names")
        exchanges = []
        for i, ex in enumerate(doc["exchanges"]):
            missing = [k for k in ("data", "from", "to") if k not in ex]
            if missing:
                problems.extend(f"exchanges[{i}].{k}: missing" for k in missing)
                continue
            try:
                mapping = MappingKind(ex.get("mapping", "consistent"))
            except ValueError:
                problems.append(f"exchanges[{i}].mapping: unknown mapping {ex['mapping']!r}")
                continue
            exchanges.append(Exchange(ex["data"], ex["from"], ex["to"], mapping))
        if problems:
            raise ConfigInvalid(problems)
        try:
            return cls(
                scheme=scheme,
                participants=(parts[0], parts[1]),
                time_window_size=float(doc["time_window_size"]),
                max_time=float(doc["max_time"]),
                max_iterations=int(doc.get("max_iterations", 50)),
                convergence_tolerance=float(doc.get("convergence_tolerance", 1e-6)),
                acceleration=dict(doc.get("acceleration") or {"kind": "constant", "omega": 1.0}),
                exchanges=tuple(exchanges),
                metadata=dict(doc.get("metadata") or {}),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"<root>: {exc}") from None

    @classmethod
    def load(cls, path) -> CouplingConfig:
        return cls.from_json(_read_json(path))


def _check_coupling(cfg: CouplingConfig) -> list[str]:
    problems = []
    a, b = cfg.participants
    if not a or not b or not isinstance(a, str) or not isinstance(b, str):
        problems.append("participants: names must be non-empty strings")
    elif a == b:
        problems.append("participants: names must be distinct")
    if not cfg.time_window_size > 0:
        problems.append("time_window_size: must be > 0")
    if not cfg.max_time >= cfg.time_window_size:
        problems.append("max_time: must be >= time_window_size")
    if cfg.max_iterations < 1:
        problems.append("max_iterations: must be >= 1")
    if not cfg.convergence_tolerance > 0:
        problems.append("convergence_tolerance: must be > 0")
    kind = cfg.acceleration.get("kind", "constant")
    if kind not in ("constant", "aitken"):
        problems.append(f"acceleration.kind: unknown kind {kind!r}")
    elif kind == "constant" and not 0 < cfg.acceleration.get("omega", 1.0) <= 1:
        problems.append("acceleration.omega: must satisfy 0 < omega <= 1")
    if not cfg.exchanges:
        problems.append("exchanges: at least one exchange is required")
    names = set(cfg.participants)
    for i, ex in enumerate(cfg.exchanges):
        if ex.source not in names or ex.target not in names or ex.source == ex.target:
            problems.append(f"exchanges[{i}]: must go from one participant to the other")
    for p in cfg.participants:
        if sum(e.source == p for e in cfg.exchanges) > 1:
            problems.append(f"exchanges: {p!r} sends more than one data field")
    if cfg.scheme.implicit and len(cfg.exchanges) != 2:
        problems.append("exchanges: implicit coupling needs one exchange in each direction")
    return problems


def _read_json(path) -> Any:
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"config file {str(path)!r} not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"<file>: not valid JSON ({exc})") from None


@dataclass(frozen=True)
class AdapterConfig:
    participant_name: str
    config_file_name: Path
    coupling_mesh_name: str
    write_data_name: str | None
    read_data_name: str | None
    coupling: CouplingConfig

    @classmethod
    def load(cls, path, coupling_config=None) -> AdapterConfig:
        """Read and validate an adapter config.

        ``coupling_config`` (a path or a :class:`CouplingConfig`) overrides
        ``config_file_name``, which is otherwise resolved relative to the
        adapter config's directory.
        """
        path = Path(path)
        doc = _read_json(path)
        problems = []
        if not isinstance(doc, dict):
            raise ConfigInvalid("<root>: expected a JSON object")
        for key in ("participant_name", "config_file_name", "interface"):
            if key not in doc:
                problems.append(f"{key}: missing")
        iface = doc.get("interface", {})
        if not isinstance(iface, dict):
            problems.append("interface: expected an object")
            iface = {}
        if "coupling_mesh_name" not in iface:
            problems.append("interface.coupling_mesh_name: missing")
        for key in ("read_data_name", "write_data_name"):
            plural = key.replace("_name", "_names")
            if plural in iface or isinstance(iface.get(key), list):
                problems.append(f"interface.{key}: only one read and one write data field are supported")
            elif key not in iface:
                problems.append(f"interface.{key}: missing")
        for key in ("participant_name",):
            if key in doc and not doc[key]:
                problems.append(f"{key}: must be non-empty")
        for key in ("coupling_mesh_name", "read_data_name", "write_data_name"):
            if key in iface and not isinstance(iface[key], list) and not iface[key]:
                problems.append(f"interface.{key}: must be non-empty")
        if problems:
            raise ConfigInvalid(problems)

        if isinstance(coupling_config, CouplingConfig):
            coupling = coupling_config
            cfg_path = Path(doc["config_file_name"])
        else:
            cfg_path = Path(coupling_config) if coupling_config is not None else Path(doc["config_file_name"])
            if coupling_config is None and not cfg_path.is_absolute():
                cfg_path = path.parent / cfg_path
            coupling = CouplingConfig.load(cfg_path)

        name = doc["participant_name"]
        if name not in coupling.participants:
            problems.append(f"participant_name: {name!r} is not a participant of the coupling config")
        else:
            out_ex = coupling.exchange_from(name)
            in_ex = coupling.exchange_to(name)
            if out_ex is None or out_ex.data != iface["write_data_name"]:
                problems.append(f"interface.write_data_name: {iface['write_data_name']!r} is not sent by {name!r}")
            if in_ex is None or in_ex.data != iface["read_data_name"]:
                problems.append(f"interface.read_data_name: {iface['read_data_name']!r} is not received by {name!r}")
        if problems:
            raise ConfigInvalid(problems)
        return cls(name, cfg_path, iface["coupling_mesh_name"], iface["write_data_name"], iface["read_data_name"], coupling)
