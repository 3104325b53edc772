"""Case files: versioned JSON with the unit in every numeric field name.

Top level::

    schema_version   1
    name             str
    horizon_h        int
    buses            [{name, load_mw[T]}]
    lines            [{from_bus, to_bus, reactance_pu, limit_mw}]
    generators       [{name, bus, p_min_mw, p_max_mw, ramp_mw_per_h,
                       startup_cost_usd, marginal_cost_usd_per_mwh, initial_on}]
    storages         [{name, bus, energy_mwh, soc_min_frac, soc_max_frac,
                       charge_max_mw, discharge_max_mw, charge_cost_usd_per_mwh,
                       discharge_cost_usd_per_mwh, round_trip_efficiency_frac,
                       initial_soc_frac}]
    res_units        [{name, bus, capacity_mw, forecast_mw[T], error, encoding}]
      error          {kind: "normal", mean_pu, std_pu}
                     | {kind: "mixture", components: [{weight, mean_pu, std_pu}]}
      encoding       {m1, n1}

Unknown fields are rejected (strict mode) with their path.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .dispatch import Bus, CaseError, DispatchCase, Generator, Line, ResUnit, Storage
from .uqae import EncodingError, GaussianMixture, GridEncoding, Normal

SCHEMA_VERSION = 1
BUNDLED = ("micro6", "ieee6-like", "tiny1", "overload2")


def _fields(obj, path: str, required: dict, optional: dict | None = None, strict: bool = True) -> dict:
    if not isinstance(obj, dict):
        raise CaseError(f"{path}: expected an object")
    optional = optional or {}
    out = {}
    for key, typ in required.items():
        if key not in obj:
            raise CaseError(f"{path}.{key}: missing field")
        out[key] = _typed(obj[key], typ, f"{path}.{key}")
    for key, (typ, default) in optional.items():
        out[key] = _typed(obj[key], typ, f"{path}.{key}") if key in obj else default
    if strict:
        for key in obj:
            if key not in required and key not in optional:
                raise CaseError(f"{path}.{key}: unknown field")
    return out


def _typed(value, typ, path):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise CaseError(f"{path}: expected a number")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise CaseError(f"{path}: expected an integer")
        return value
    if typ is bool:
        if not isinstance(value, bool):
            raise CaseError(f"{path}: expected true/false")
        return value
    if typ is str:
        if not isinstance(value, (str, int)) or isinstance(value, bool):
            raise CaseError(f"{path}: expected a string")
        return str(value)
    if typ == "floats":
        if not isinstance(value, list):
            raise CaseError(f"{path}: expected a list of numbers")
        return [_typed(v, float, f"{path}[{i}]") for i, v in enumerate(value)]
    if typ in (list, dict):
        if not isinstance(value, typ):
            raise CaseError(f"{path}: expected a {typ.__name__}")
        return value
    raise TypeError(typ)


def _error(obj, path, strict):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise CaseError(f"{path}.kind: missing field")
    try:
        if obj["kind"] == "normal":
            f = _fields(obj, path, {"kind": str, "mean_pu": float, "std_pu": float}, strict=strict)
            return Normal(f["mean_pu"], f["std_pu"])
        if obj["kind"] == "mixture":
            f = _fields(obj, path, {"kind": str, "components": list}, strict=strict)
            comps = []
            for i, c in enumerate(f["components"]):
                cf = _fields(c, f"{path}.components[{i}]", {"weight": float, "mean_pu": float, "std_pu": float},
                             strict=strict)
                comps.append((cf["weight"], cf["mean_pu"], cf["std_pu"]))
            return GaussianMixture(tuple(comps))
    except EncodingError as exc:
        raise CaseError(f"{path}: {exc}") from None
    raise CaseError(f"{path}.kind: unknown error distribution {obj['kind']!r}")


def case_from_dict(doc: dict, strict: bool = True) -> DispatchCase:
    top = _fields(doc, "$", {"schema_version": int, "name": str, "horizon_h": int, "buses": list,
                             "lines": list, "generators": list},
                  {"storages": (list, []), "res_units": (list, []), "description": (str, "")}, strict)
    if top["schema_version"] != SCHEMA_VERSION:
        raise CaseError(f"$.schema_version: expected {SCHEMA_VERSION}, got {top['schema_version']}")
    buses = [Bus(**_fields(b, f"$.buses[{i}]", {"name": str, "load_mw": "floats"}, strict=strict))
             for i, b in enumerate(top["buses"])]
    lines = [Line(**_fields(ln, f"$.lines[{i}]", {"from_bus": str, "to_bus": str, "reactance_pu": float,
                                                   "limit_mw": float}, strict=strict))
             for i, ln in enumerate(top["lines"])]
    gens = [Generator(**_fields(g, f"$.generators[{i}]", {
        "name": str, "bus": str, "p_min_mw": float, "p_max_mw": float, "ramp_mw_per_h": float,
        "startup_cost_usd": float, "marginal_cost_usd_per_mwh": float, "initial_on": bool}, strict=strict))
        for i, g in enumerate(top["generators"])]
    stores = []
    for i, s in enumerate(top["storages"]):
        f = _fields(s, f"$.storages[{i}]", {
            "name": str, "bus": str, "energy_mwh": float, "soc_min_frac": float, "soc_max_frac": float,
            "charge_max_mw": float, "discharge_max_mw": float, "charge_cost_usd_per_mwh": float,
            "discharge_cost_usd_per_mwh": float, "round_trip_efficiency_frac": float,
            "initial_soc_frac": float}, strict=strict)
        stores.append(Storage(f["name"], f["bus"], f["energy_mwh"], f["soc_min_frac"], f["soc_max_frac"],
                              f["charge_max_mw"], f["discharge_max_mw"], f["charge_cost_usd_per_mwh"],
                              f["discharge_cost_usd_per_mwh"], f["round_trip_efficiency_frac"],
                              f["initial_soc_frac"]))
    res = []
    for i, r in enumerate(top["res_units"]):
        path = f"$.res_units[{i}]"
        f = _fields(r, path, {"name": str, "bus": str, "capacity_mw": float, "forecast_mw": "floats",
                              "error": dict, "encoding": dict}, strict=strict)
        ef = _fields(f["encoding"], f"{path}.encoding", {"m1": int, "n1": int}, strict=strict)
        try:
            enc = GridEncoding(ef["m1"], ef["n1"])
        except EncodingError as exc:
            raise CaseError(f"{path}.encoding: {exc}") from None
        res.append(ResUnit(f["name"], f["bus"], f["capacity_mw"], f["forecast_mw"],
                           _error(f["error"], f"{path}.error", strict), enc))
    case = DispatchCase(top["name"], top["horizon_h"], buses, lines, gens, stores, res)
    case.validate()
    return case


def load_case(path, strict: bool = True) -> DispatchCase:
    """Load a case file, or a bundled case by name (``micro6``, ``ieee6-like``, ...)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("qased.cases").joinpath(f"{path}.json").read_text(encoding="utf-8")
    else:
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise CaseError(f"cannot read case file {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"parse error: {exc}") from None
    return case_from_dict(doc, strict)
