"""Run configuration: YAML in, schema-checked, defaults expanded, JSON out."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .errors import ConfigError, ModelError
from .geometry import Box, Lattice, ModelParams
from .potentials import from_record


def schema() -> dict:
    text = resources.files("glauber").joinpath("schema/run_config.json").read_text()
    return json.loads(text)


def _apply_defaults(sch: dict, data: Any) -> Any:
    if not isinstance(data, dict) or sch.get("type") != "object":
        return data
    for key, sub in sch.get("properties", {}).items():
        if key not in data and "default" in sub:
            data[key] = copy.deepcopy(sub["default"])
        if key in data:
            data[key] = _apply_defaults(sub, data[key])
    return data


def _coerce_numbers(sch: dict, data: Any) -> Any:
    """Store integers given for ``number`` fields as floats, so ``1`` and ``1.0`` hash alike."""
    types = sch.get("type")
    types = types if isinstance(types, list) else [types]
    if isinstance(data, int) and not isinstance(data, bool) and "number" in types and "integer" not in types:
        return float(data)
    if isinstance(data, dict):
        props = sch.get("properties", {})
        return {k: _coerce_numbers(props.get(k, {}), v) for k, v in data.items()}
    if isinstance(data, list) and isinstance(sch.get("items"), dict):
        return [_coerce_numbers(sch["items"], v) for v in data]
    return data


def _node_at(root, path):
    """Deepest YAML node along ``path`` (mapping keys / sequence indices)."""
    node = root
    for part in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == part:
                    nxt = v
                    break
            if nxt is None:
                return node
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
        else:
            return node
    return node


def _where(source: str, node) -> str:
    if node is None:
        return source
    mark = node.start_mark
    return f"{source}:{mark.line + 1}:{mark.column + 1}"


def _dotted(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with every default filled in."""

    data: dict
    source: str = "<string>"

    @classmethod
    def from_text(cls, text: str, source: str = "<string>") -> "RunConfig":
        try:
            root = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            loc = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
            raise ConfigError(f"{loc}: not valid YAML: {getattr(exc, 'problem', exc)}") from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{source}:1:1: top level must be a mapping")
        sch = schema()
        validator = jsonschema.Draft202012Validator(sch)
        errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
        if errors:
            # report the deepest, most specific failure first
            err = max(errors, key=lambda e: len(e.absolute_path))
            for e in errors:
                if e.validator in ("required", "additionalProperties"):
                    err = e
                    break
            node = _node_at(root, list(err.absolute_path))
            raise ConfigError(f"{_where(source, node)}: {_dotted(err.absolute_path)}: {err.message}")
        data = _coerce_numbers(sch, _apply_defaults(sch, copy.deepcopy(data)))
        cfg = cls(data, source)
        cfg.params()  # surface dimension mismatches now
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
        return cls.from_text(text, str(path))

    def with_seed(self, seed: int) -> "RunConfig":
        data = copy.deepcopy(self.data)
        data["run"]["seed"] = int(seed)
        return RunConfig(data, self.source)

    def __getitem__(self, key):
        return self.data[key]

    def params(self) -> ModelParams:
        m = self.data["model"]
        box = Box(tuple(float(s) for s in m["box"]["sides"]), m["box"].get("boundary", "periodic"))
        lattice = None
        if "lattice" in m:
            shape = tuple(m["lattice"]["shape"])
            if len(shape) != box.dim:
                raise ConfigError(f"{self.source}: model.lattice.shape has {len(shape)} entries "
                                  f"for a {box.dim}-dimensional box")
            lattice = Lattice(shape, int(m["lattice"]["cap"]))
        try:
            pot = from_record(m["potential"])
        except ModelError as exc:
            raise ConfigError(f"{self.source}: model.potential: {exc}") from None
        return ModelParams(float(m["z"]), pot, box, lattice)

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

    @property
    def hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def write_resolved(self, out_dir) -> Path:
        out = Path(out_dir) / "resolved_config.json"
        record = dict(self.data, config_hash=self.hash, source=self.source)
        out.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
        return out
