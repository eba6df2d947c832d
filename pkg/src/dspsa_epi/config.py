"""Load campaign configuration documents.

A config is a JSON object with ``schema_version`` and ``mode`` plus
optional sections overriding the built-in scenario for that mode. Errors
name the offending line so a user can fix the file directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .campaign import CampaignConfig
from .codec import CodecError, plan_from_dict
from .costs import CostModelError
from .dspsa import GainSchedule
from .epi.model import LAYERS, ConfigError, ContactStructure
from .scenarios import OptimizerSettings, Scenario, default_scenario

SCHEMA_VERSION = 1


class ConfigFileError(Exception):
    """A config document is unreadable, malformed or inconsistent."""

    def __init__(self, path: str | Path | None, problems: list[str]) -> None:
        self.path = str(path) if path is not None else "<config>"
        self.problems = problems
        super().__init__("\n".join(f"{self.path}: {p}" for p in problems))


def load_schema() -> dict[str, Any]:
    text = resources.files("dspsa_epi").joinpath("schemas/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


# -- locating paths in the source text ----------------------------------------

_WS = " \t\n\r"


def _skip(text: str, i: int) -> int:
    while i < len(text) and text[i] in _WS:
        i += 1
    return i


def locate(text: str, path: list[str | int]) -> int:
    """1-based line of the value at ``path`` (or of its deepest existing parent)."""
    dec = json.JSONDecoder()
    pos = _skip(text, 0)
    for key in path:
        if pos >= len(text):
            break
        found = None
        if text[pos] == "{" and isinstance(key, str):
            i = _skip(text, pos + 1)
            while i < len(text) and text[i] == '"':
                name, i = json.decoder.scanstring(text, i + 1)
                i = _skip(text, i)
                i = _skip(text, i + 1)  # past ':'
                if name == key:
                    found = i
                    break
                _, i = dec.raw_decode(text, i)
                i = _skip(text, i)
                if i < len(text) and text[i] == ",":
                    i = _skip(text, i + 1)
        elif text[pos] == "[" and isinstance(key, int):
            i = _skip(text, pos + 1)
            idx = 0
            while i < len(text) and text[i] != "]":
                if idx == key:
                    found = i
                    break
                _, i = dec.raw_decode(text, i)
                i = _skip(text, i)
                if i < len(text) and text[i] == ",":
                    i = _skip(text, i + 1)
                idx += 1
        if found is None:
            break
        pos = found
    return text.count("\n", 0, pos) + 1


def _where(path: list[str | int]) -> str:
    return "/".join(str(p) for p in path) or "(root)"


# -- loading -------------------------------------------------------------------


@dataclass(frozen=True)
class LoadedConfig:
    scenario: Scenario
    campaign: CampaignConfig
    backend: str | None
    tau: float
    source: str | None


def parse_text(text: str, path: str | Path | None = None) -> dict[str, Any]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(path, [f"line {exc.lineno}, column {exc.colno}: invalid JSON: {exc.msg}"]) from None
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (locate(text, list(e.absolute_path)), e.message))
    if errors:
        raise ConfigFileError(
            path,
            [f"line {locate(text, list(e.absolute_path))}: {_where(list(e.absolute_path))}: {e.message}" for e in errors],
        )
    return doc


def _build(doc: dict[str, Any], text: str, path) -> LoadedConfig:
    mode = doc["mode"]
    base = default_scenario(mode)

    def fail(section: list[str | int], msg: str) -> ConfigFileError:
        return ConfigFileError(path, [f"line {locate(text, section)}: {_where(section)}: {msg}"])

    try:
        pop = replace_dataclass(base.population, doc.get("population", {}))
    except (ConfigError, TypeError, ValueError) as exc:
        raise fail(["population"], str(exc)) from None
    try:
        rates = replace_dataclass(base.rates, doc.get("rates", {}))
    except (ConfigError, TypeError, ValueError) as exc:
        raise fail(["rates"], str(exc)) from None
    contacts = base.contacts
    if "contacts" in doc:
        try:
            contacts = ContactStructure(np.array([doc["contacts"][k] for k in LAYERS], dtype=float))
        except ConfigError as exc:
            raise fail(["contacts"], str(exc)) from None
    costs = base.costs
    if "costs" in doc:
        known = {f.name for f in fields(type(costs))}
        unknown = sorted(set(doc["costs"]) - known)
        if unknown:
            raise fail(["costs", unknown[0]], f"unknown {mode} cost parameter(s): {', '.join(unknown)}")
        try:
            costs = replace_dataclass(costs, doc["costs"])
        except (CostModelError, TypeError, ValueError) as exc:
            raise fail(["costs"], str(exc)) from None
    supply = base.supply
    if "vaccine_supply" in doc:
        if mode != "h1n1":
            raise fail(["vaccine_supply"], "vaccine supply applies to h1n1 mode only")
        raw = doc["vaccine_supply"]
        supply = {int(k): int(v) for k, v in raw.items()} if isinstance(raw, dict) else \
            {i + 1: int(v) for i, v in enumerate(raw) if v}

    opt = doc.get("optimizer", {})
    gain_doc = opt.get("gain", {})
    g0 = base.optimizer.gains
    try:
        gains = GainSchedule(gain_doc.get("a", g0.a), gain_doc.get("A", g0.A), gain_doc.get("alpha", g0.alpha))
    except ValueError as exc:
        raise fail(["optimizer", "gain"], str(exc)) from None
    settings = OptimizerSettings(
        M=opt.get("iterations", base.optimizer.M),
        theta0=tuple(opt.get("theta0", base.optimizer.theta0)),
        gains=gains,
        crn=opt.get("crn", base.optimizer.crn),
        runs=opt.get("runs", base.optimizer.runs),
    )
    try:
        scenario = Scenario(
            mode=mode, population=pop, rates=rates, contacts=contacts, costs=costs,
            optimizer=settings, supply=supply,
            max_closure_weeks=opt.get("max_closure_weeks", base.max_closure_weeks),
            baselines=base.baselines,
        )
    except (ConfigError, ValueError) as exc:
        raise fail(["optimizer"], str(exc)) from None
    if "baselines" in doc:
        decode = scenario.strict_decoder()
        items = []
        for i, b in enumerate(doc["baselines"]):
            try:
                plan = plan_from_dict({"kind": mode, **b["plan"]}) if "plan" in b else decode(b["theta"])
            except (CodecError, TypeError, ValueError) as exc:
                raise fail(["baselines", i], f"invalid plan: {exc}") from None
            items.append((b["name"], plan))
        scenario = replace(scenario, baselines=tuple(items))
    baselines = scenario.baselines

    camp = doc.get("campaign", {})
    try:
        campaign = CampaignConfig(
            runs=settings.runs,
            M=settings.M,
            theta0=settings.theta0,
            gains=settings.gains,
            crn=settings.crn,
            master_seed=doc.get("seed", 0),
            baselines=baselines,
            ci_replicates=camp.get("ci_replicates", 500),
            ci_level=camp.get("ci_level", 0.95),
            baseline_replicates=camp.get("baseline_replicates", 100),
            probe_pairs=camp.get("probe_pairs", 100),
        )
    except ValueError as exc:
        raise fail(["campaign"], str(exc)) from None
    backend = doc.get("simulator", {}).get("backend", "auto")
    return LoadedConfig(scenario, campaign, None if backend == "auto" else backend,
                        opt.get("tau", 0.5), str(path) if path is not None else None)


def replace_dataclass(obj, overrides: dict[str, Any]):
    if not overrides:
        return obj
    kw = {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v) for k, v in overrides.items()}
    return replace(obj, **kw)


def loads(text: str, path: str | Path | None = None) -> LoadedConfig:
    return _build(parse_text(text, path), text, path)


def load(path: str | Path) -> LoadedConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigFileError(p, ["file not found"]) from None
    except OSError as exc:
        raise ConfigFileError(p, [f"cannot read: {exc.strerror}"]) from None
    return loads(text, p)


def defaults(mode: str, seed: int = 0) -> LoadedConfig:
    """The built-in scenario for ``mode`` as if loaded from a minimal document."""
    return loads(json.dumps({"schema_version": SCHEMA_VERSION, "mode": mode, "seed": seed}))


def scenario_document(scenario: Scenario, seed: int = 0) -> dict[str, Any]:
    """Full config document spelling out every setting of ``scenario``."""
    from .codec import plan_to_dict

    def dump(obj) -> dict[str, Any]:
        out = {}
        for f in fields(obj):
            v = getattr(obj, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    pop = dump(scenario.population)
    pop["age_fractions"] = [float(x) for x in pop["age_fractions"]]
    opt = scenario.optimizer
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "mode": scenario.mode,
        "seed": seed,
        "population": pop,
        "rates": dump(scenario.rates),
        "contacts": {k: scenario.contacts.matrices[i].tolist() for i, k in enumerate(LAYERS)},
        "costs": dump(scenario.costs),
        "optimizer": {
            "iterations": opt.M, "runs": opt.runs, "theta0": list(opt.theta0),
            "gain": {"a": opt.gains.a, "A": opt.gains.A, "alpha": opt.gains.alpha},
            "crn": opt.crn, "tau": 0.5,
        },
        "campaign": {"ci_replicates": 500, "ci_level": 0.95, "baseline_replicates": 100, "probe_pairs": 100},
        "simulator": {"backend": "auto"},
    }
    if scenario.mode == "h1n1":
        doc["optimizer"]["max_closure_weeks"] = scenario.max_closure_weeks
        doc["vaccine_supply"] = {str(k): v for k, v in sorted((scenario.supply or {}).items())}
    if scenario.baselines:
        doc["baselines"] = [
            {"name": n, "plan": {k: v for k, v in plan_to_dict(p).items() if k != "kind"}}
            for n, p in scenario.baselines
        ]
    return doc


__all__ = [
    "ConfigFileError", "LoadedConfig", "SCHEMA_VERSION", "defaults", "load", "load_schema",
    "loads", "locate", "scenario_document",
]
