"""JSON run configuration with JSON-pointer validation errors."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Optional

from ..generator import GeneratorParams, generate_manifold
from ..gradient import ElasticityConfig
from ..mesh import load_msh
from ..optimizer import OptimizerConfig
from ..physics import DARCY2D, FULL2D, MODELS, DarcyParams, PhysicalParams

BODY_FORCES = ("off", "manufactured")
TOP_LEVEL = ("model", "mesh", "physical", "darcy", "cost", "elasticity", "optimizer", "supg", "output_dir", "verification")


class ConfigError(ValueError):
    """Invalid configuration; ``pointer`` locates the offending value."""

    def __init__(self, pointer, message):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


@dataclasses.dataclass(frozen=True)
class MeshSource:
    path: Optional[str] = None
    generator: Optional[GeneratorParams] = None

    def build(self, height, darcy, base_dir=None):
        if self.path is not None:
            p = Path(self.path)
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            return load_msh(p, height, darcy=darcy)
        return generate_manifold(self.generator or GeneratorParams(), height=height, darcy=darcy)


@dataclasses.dataclass(frozen=True)
class CostSpec:
    q_des: Optional[float] = None
    q_des_relative: Optional[float] = 0.05


@dataclasses.dataclass(frozen=True)
class VerificationSpec:
    body_force: str = "off"


@dataclasses.dataclass(frozen=True)
class RunConfig:
    model: str = FULL2D
    mesh: MeshSource = dataclasses.field(default_factory=lambda: MeshSource(generator=GeneratorParams()))
    physical: PhysicalParams = dataclasses.field(default_factory=PhysicalParams)
    darcy: Optional[DarcyParams] = None
    cost: CostSpec = dataclasses.field(default_factory=CostSpec)
    elasticity: ElasticityConfig = dataclasses.field(default_factory=ElasticityConfig)
    optimizer: OptimizerConfig = dataclasses.field(default_factory=OptimizerConfig)
    supg: bool = True
    output_dir: str = "output"
    verification: VerificationSpec = dataclasses.field(default_factory=VerificationSpec)
    base_dir: Optional[str] = dataclasses.field(default=None, compare=False)

    @property
    def is_darcy(self):
        return self.model == DARCY2D

    def build_mesh(self):
        return self.mesh.build(self.physical.h, self.is_darcy, self.base_dir)

    def to_dict(self):
        return {
            "model": self.model,
            "mesh": {"path": self.mesh.path}
            if self.mesh.path is not None
            else {"generator": dataclasses.asdict(self.mesh.generator or GeneratorParams())},
            "physical": dataclasses.asdict(self.physical),
            "darcy": None if self.darcy is None else {**dataclasses.asdict(self.darcy), "channel_axis": list(self.darcy.channel_axis)},
            "cost": {"q_des": self.cost.q_des} if self.cost.q_des is not None else {"q_des_relative": self.cost.q_des_relative},
            "elasticity": {f: getattr(self.elasticity, f) for f in ("mu", "lam", "delta", "c_aniso")},
            "optimizer": dataclasses.asdict(self.optimizer),
            "supg": self.supg,
            "output_dir": self.output_dir,
            "verification": dataclasses.asdict(self.verification),
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)


# -- parsing ---------------------------------------------------------------------


def _object(data, pointer):
    if not isinstance(data, dict):
        raise ConfigError(pointer, f"expected an object, got {type(data).__name__}")
    return data


def _number(value, pointer, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(pointer, f"expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(pointer, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _section(cls, data, pointer, skip=()):
    """Build dataclass ``cls`` from a JSON object, checking keys and numeric types."""
    data = _object(data, pointer)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"{pointer}/{key}", f"unknown key (expected one of {sorted(fields)})")
        default = fields[key].default
        if isinstance(default, tuple):
            if not isinstance(value, list) or len(value) != len(default):
                raise ConfigError(f"{pointer}/{key}", f"expected a list of {len(default)} numbers")
            kwargs[key] = tuple(_number(v, f"{pointer}/{key}/{i}") for i, v in enumerate(value))
        else:
            kwargs[key] = _number(value, f"{pointer}/{key}", integer=isinstance(default, int))
    try:
        obj = cls(**kwargs)
        if hasattr(obj, "validate"):
            obj.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(pointer, str(exc)) from exc
    return obj


def _mesh(data):
    data = _object(data, "/mesh")
    extra = set(data) - {"path", "generator"}
    if extra:
        raise ConfigError(f"/mesh/{sorted(extra)[0]}", "unknown key (expected path or generator)")
    if ("path" in data) == ("generator" in data):
        raise ConfigError("/mesh", "exactly one of path or generator is required")
    if "path" in data:
        if not isinstance(data["path"], str):
            raise ConfigError("/mesh/path", "expected a string")
        return MeshSource(path=data["path"])
    return MeshSource(generator=_section(GeneratorParams, data["generator"], "/mesh/generator"))


def _cost(data):
    data = _object(data, "/cost")
    extra = set(data) - {"q_des", "q_des_relative"}
    if extra:
        raise ConfigError(f"/cost/{sorted(extra)[0]}", "unknown key (expected q_des or q_des_relative)")
    if "q_des" in data and "q_des_relative" in data:
        raise ConfigError("/cost", "q_des and q_des_relative are mutually exclusive")
    if "q_des" in data:
        q = _number(data["q_des"], "/cost/q_des")
        if q < 0:
            raise ConfigError("/cost/q_des", "must be non-negative")
        return CostSpec(q_des=q, q_des_relative=None)
    rel = _number(data.get("q_des_relative", 0.05), "/cost/q_des_relative")
    if rel <= -1:
        raise ConfigError("/cost/q_des_relative", "must exceed -1")
    return CostSpec(q_des_relative=rel)


def parse_config(data, base_dir=None):
    """Validate a decoded JSON document and return a :class:`RunConfig`."""
    data = _object(data, "")
    for key in data:
        if key not in TOP_LEVEL:
            raise ConfigError(f"/{key}", "unknown key")
    model = data.get("model", FULL2D)
    if model not in MODELS:
        raise ConfigError("/model", f"expected one of {list(MODELS)}, got {model!r}")
    darcy_data = data.get("darcy")
    if model == DARCY2D and darcy_data is None:
        raise ConfigError("/darcy", "required when model is darcy2d")
    if model == FULL2D and darcy_data is not None:
        raise ConfigError("/darcy", "only allowed when model is darcy2d")
    supg = data.get("supg", True)
    if not isinstance(supg, bool):
        raise ConfigError("/supg", "expected a boolean")
    out = data.get("output_dir", "output")
    if not isinstance(out, str) or not out:
        raise ConfigError("/output_dir", "expected a non-empty string")
    ver = _object(data.get("verification", {}), "/verification")
    for key in ver:
        if key != "body_force":
            raise ConfigError(f"/verification/{key}", "unknown key")
    body = ver.get("body_force", "off")
    if body not in BODY_FORCES:
        raise ConfigError("/verification/body_force", f"expected one of {list(BODY_FORCES)}, got {body!r}")
    return RunConfig(
        model=model,
        mesh=_mesh(data["mesh"]) if "mesh" in data else MeshSource(generator=GeneratorParams()),
        physical=_section(PhysicalParams, data.get("physical", {}), "/physical"),
        darcy=None if darcy_data is None else _section(DarcyParams, darcy_data, "/darcy"),
        cost=_cost(data.get("cost", {})),
        elasticity=_section(ElasticityConfig, data.get("elasticity", {}), "/elasticity", skip=("nu",)),
        optimizer=_section(OptimizerConfig, data.get("optimizer", {}), "/optimizer"),
        supg=supg,
        output_dir=out,
        verification=VerificationSpec(body),
        base_dir=None if base_dir is None else str(base_dir),
    )


def loads(text, base_dir=None):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return parse_config(data, base_dir)


def load(path):
    path = Path(path)
    return loads(path.read_text(), base_dir=path.parent)
