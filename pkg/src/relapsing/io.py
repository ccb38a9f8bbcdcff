"""JSON model files, state files and sweep specifications."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParametersError
from .model import SCALAR_FIELDS, VECTOR_FIELDS, Finding, ModelParams, StateVec

__all__ = [
    "MODEL_KEYS",
    "SWEEP_OUTPUTS",
    "SweepSpec",
    "load_model",
    "parse_model",
    "load_state",
    "parse_state",
    "load_sweep",
    "parse_sweep",
    "set_param",
]

MODEL_KEYS = ("j", *SCALAR_FIELDS, *VECTOR_FIELDS)
OPTIONAL_KEYS = ("theta",)
SWEEP_OUTPUTS = ("r0", "ee", "dfe_spectrum", "a", "b")
_PATH = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\[(\d+)\])?$")


def _bad(field: str, message: str) -> InvalidParametersError:
    return InvalidParametersError([Finding("schema", field, message)])


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise _bad(str(path), f"not valid JSON: {exc}") from None


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def parse_model(data) -> ModelParams:
    """Build :class:`ModelParams` from a decoded JSON object.

    Keys must match the parameter names exactly; ``theta`` may be omitted.
    """
    if not isinstance(data, dict):
        raise _bad("model", "top level must be a JSON object")
    findings = [Finding("schema", k, "unknown key") for k in data if k not in MODEL_KEYS]
    findings += [Finding("schema", k, "missing key") for k in MODEL_KEYS
                 if k not in data and k not in OPTIONAL_KEYS]
    for key, value in data.items():
        if key not in MODEL_KEYS:
            continue
        if key in VECTOR_FIELDS:
            if not isinstance(value, list) or not all(_is_number(x) for x in value):
                findings.append(Finding("schema", key, "must be an array of numbers"))
        elif key == "j":
            if not (_is_number(value) and float(value).is_integer()):
                findings.append(Finding("schema", key, "must be an integer"))
        elif not _is_number(value):
            findings.append(Finding("schema", key, "must be a number"))
    if findings:
        raise InvalidParametersError(findings)
    kwargs = {k: (float(v) if _is_number(v) and k != "j" else v) for k, v in data.items()}
    kwargs["j"] = int(data["j"])
    return ModelParams(**kwargs)


def load_model(path) -> ModelParams:
    return parse_model(_read_json(path))


def parse_state(data, j: int) -> StateVec:
    """State from ``{"S", "I", "R", "S_v", "I_v"}`` (the ``StateVec.to_dict`` layout)."""
    keys = ("S", "I", "R", "S_v", "I_v")
    if not isinstance(data, dict) or set(data) != set(keys):
        raise _bad("initial", f"state must be an object with keys {', '.join(keys)}")
    if not isinstance(data["I"], list) or len(data["I"]) != j:
        raise _bad("initial.I", f"must be an array of length j={j}")
    return StateVec(S=data["S"], I=tuple(data["I"]), R=data["R"], S_v=data["S_v"], I_v=data["I_v"])


def load_state(path, j: int) -> StateVec:
    return parse_state(_read_json(path), j)


def _resolve(path: str):
    m = _PATH.match(path)
    if not m:
        raise _bad("param", f"cannot parse parameter path {path!r}")
    name, index = m.group(1), m.group(2)
    if name not in MODEL_KEYS or name == "j":
        raise _bad("param", f"{name!r} is not a sweepable parameter")
    if (name in VECTOR_FIELDS) != (index is not None):
        raise _bad("param", f"{path!r}: array parameters need an index, scalars must not have one")
    return name, None if index is None else int(index)


def set_param(params: ModelParams, path: str, value: float) -> ModelParams:
    """Copy of ``params`` with the scalar or indexed entry at ``path`` set."""
    _get_param(params, path)
    name, index = _resolve(path)
    if index is None:
        return params.replace(**{name: value})
    seq = list(getattr(params, name))
    seq[index] = value
    return params.replace(**{name: seq})


def _get_param(params: ModelParams, path: str) -> float:
    name, index = _resolve(path)
    value = getattr(params, name)
    if index is None:
        return value
    if index >= len(value):
        raise _bad("param", f"{path!r}: index out of range for length {len(value)}")
    return value[index]


@dataclass(frozen=True)
class SweepSpec:
    """Parameter grid for the ``sweep`` command.

    With a single ``param`` each value replaces that parameter.  When
    ``param`` is a list, every value is a common factor multiplying all the
    listed parameters (used for joint rescaling such as ``S_bar`` and
    ``Sv_bar``).
    """

    params: tuple
    values: tuple
    outputs: tuple

    @property
    def scaled(self) -> bool:
        return len(self.params) > 1

    @property
    def label(self) -> str:
        return "scale" if self.scaled else self.params[0]

    def apply(self, base: ModelParams, value: float) -> ModelParams:
        if not self.scaled:
            return set_param(base, self.params[0], value)
        p = base
        for path in self.params:
            p = set_param(p, path, _get_param(base, path) * value)
        return p


def parse_sweep(data, base: ModelParams | None = None) -> SweepSpec:
    if not isinstance(data, dict):
        raise _bad("sweep", "top level must be a JSON object")
    allowed = {"param", "from", "to", "steps", "values", "outputs"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise InvalidParametersError([Finding("schema", k, "unknown key") for k in unknown])

    param = data.get("param")
    paths = tuple(param) if isinstance(param, list) else (param,)
    if not paths or not all(isinstance(x, str) for x in paths):
        raise _bad("param", "must be a parameter path or a list of them")
    for path in paths:
        _resolve(path)
    if base is not None:
        for path in paths:
            _get_param(base, path)

    if "values" in data:
        if any(k in data for k in ("from", "to", "steps")):
            raise _bad("values", "give either values or from/to/steps, not both")
        values = data["values"]
        if not isinstance(values, list) or not values or not all(_is_number(x) for x in values):
            raise _bad("values", "must be a nonempty array of numbers")
        values = tuple(float(x) for x in values)
    else:
        missing = [k for k in ("from", "to", "steps") if k not in data]
        if missing:
            raise _bad(missing[0], "missing key (or give values)")
        lo, hi, steps = data["from"], data["to"], data["steps"]
        if not (_is_number(lo) and _is_number(hi)) or not lo < hi:
            raise _bad("from", "from and to must be numbers with from < to")
        if not _is_number(steps) or int(steps) != steps or steps < 2:
            raise _bad("steps", "must be an integer >= 2")
        values = tuple(float(x) for x in np.linspace(lo, hi, int(steps)))
    if not all(math.isfinite(x) for x in values):
        raise _bad("values", "must be finite")

    outputs = data.get("outputs", ["r0"])
    if not isinstance(outputs, list) or not outputs or any(o not in SWEEP_OUTPUTS for o in outputs):
        raise _bad("outputs", f"must be a nonempty subset of {', '.join(SWEEP_OUTPUTS)}")
    return SweepSpec(params=paths, values=values, outputs=tuple(dict.fromkeys(outputs)))


def load_sweep(path, base: ModelParams | None = None) -> SweepSpec:
    return parse_sweep(_read_json(path), base)
