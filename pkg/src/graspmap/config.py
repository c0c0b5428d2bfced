"""Pipeline configuration: a flat TOML-style key/value file with a
versioned schema field. Serialization round-trips exactly."""

from dataclasses import dataclass, fields

from ._util import atomic_write
from .errors import ConfigError
from .fmap import FmapConfig
from .grasp import GripperSpec, ReplanConfig

SCHEMA_VERSION = 1
METHODS = ("fm", "cpd", "icp")


@dataclass
class PipelineConfig:
    """Every tunable the CLI pipeline exposes, with validated ranges."""

    schema: int = SCHEMA_VERSION
    k: int = 100
    d: int = 50
    sigma_factor: float = 7.0
    w_desc: float = 1.0
    w_lap: float = 1e-3
    w_opcomm: float = 1.0
    w_orient: float = 0.0
    opcomm_step: int = 5
    refine_iters: int = 10
    bijective: bool = False
    n_clusters: int = 7
    seed: int = 0
    mu1: float = 0.2
    mu2: float = 0.8
    psi: float = 1e6
    gripper_path: str = ""
    method: str = "fm"

    def validate(self):
        checks = [
            ("schema", self.schema == SCHEMA_VERSION, f"must be {SCHEMA_VERSION}"),
            ("k", self.k >= 2, "must be >= 2"),
            ("d", self.d >= 1, "must be >= 1"),
            ("sigma_factor", self.sigma_factor > 0, "must be > 0"),
            ("w_desc", self.w_desc > 0, "must be > 0"),
            ("w_lap", self.w_lap >= 0, "must be >= 0"),
            ("w_opcomm", self.w_opcomm >= 0, "must be >= 0"),
            ("w_orient", self.w_orient >= 0, "must be >= 0"),
            ("opcomm_step", self.opcomm_step >= 1, "must be >= 1"),
            ("refine_iters", self.refine_iters >= 1, "must be >= 1"),
            ("n_clusters", self.n_clusters >= 1, "must be >= 1"),
            ("mu1", self.mu1 >= 0, "must be >= 0"),
            ("mu2", self.mu2 >= 0, "must be >= 0"),
            ("psi", self.psi > 0, "must be > 0"),
            ("method", self.method in METHODS, f"must be one of {METHODS}"),
        ]
        problems = [f"{name}: {msg}" for name, ok, msg in checks if not ok]
        if problems:
            raise ConfigError("invalid config: " + "; ".join(problems))
        return self

    def fmap_config(self):
        return FmapConfig(
            w_desc=self.w_desc,
            w_lap=self.w_lap,
            w_opcomm=self.w_opcomm,
            w_orient=self.w_orient,
            refine_iters=self.refine_iters,
            bijective=self.bijective,
            opcomm_step=self.opcomm_step,
        )

    def replan_config(self):
        return ReplanConfig(mu1=self.mu1, mu2=self.mu2, psi=self.psi)

    def gripper(self):
        if self.gripper_path:
            return GripperSpec.load(self.gripper_path)
        return GripperSpec()

    def to_text(self):
        lines = ["# graspmap pipeline configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with atomic_write(path) as out:
            out.write(self.to_text())

    @classmethod
    def from_text(cls, text):
        field_types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in field_types:
                raise ConfigError(f"line {lineno}: unknown key '{key}'")
            try:
                values[key] = _parse_value(value.strip(), field_types[key])
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {key}: {exc}")
        if "schema" not in values:
            raise ConfigError("config missing required 'schema' field")
        return cls(**values).validate()

    @classmethod
    def load(cls, path):
        with open(path) as handle:
            return cls.from_text(handle.read())


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(token, field_type):
    if field_type in ("bool", bool):
        if token not in ("true", "false"):
            raise ValueError(f"expected true/false, got '{token}'")
        return token == "true"
    if field_type in ("int", int):
        return int(token)
    if field_type in ("float", float):
        return float(token)
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        return token[1:-1]
    raise ValueError(f"expected quoted string, got '{token}'")
