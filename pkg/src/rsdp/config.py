"""YAML model and experiment files.

A model section looks like::

    name: two-state
    rates: {family: tanh, a: [[0, 1], [3, 0]], b: [[0, 0.5], [-0.5, 0]], v: [[[0], [1]], [[1], [0]]]}
    drift: {family: poly, A: [[[-1]], [[-2]]]}
    sigma: {S: [[1]]}
    constants: {alpha: [-2, -4], c_q: 0.5}

An experiment file has ``model`` (inline mapping or a path relative to the
file), ``seed``, ``workers`` and one section per subcommand.  Errors carry
the line and column of the offending node.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any

import yaml

from .model import (ConstantRates, ConstantSigma, Constants, ModelError, PolyDrift, RSDPModel,
                    TanhRates)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 source: str | None = None):
        self.line, self.column, self.source = line, column, source
        where = ""
        if line is not None:
            where = f"{source or '<config>'}:{line}:{column}: "
        super().__init__(where + message)


class _Located:
    """Key-path to (line, column) index built from the composed YAML tree."""

    def __init__(self, text: str, source: str | None):
        self.source = source
        self.marks: dict[tuple, tuple[int, int]] = {}
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            msg = getattr(exc, "problem", None) or str(exc)
            raise ConfigError(f"YAML parse error: {msg}", mark.line + 1 if mark else None,
                              mark.column + 1 if mark else None, source) from None
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        self.marks[path] = (node.start_mark.line + 1, node.start_mark.column + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                self._walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, path + (i,))

    def error(self, path: tuple, message: str) -> ConfigError:
        p = tuple(path)
        while p and p not in self.marks:
            p = p[:-1]
        line, col = self.marks.get(p, (None, None))
        return ConfigError(f"{'.'.join(map(str, path)) or '<root>'}: {message}", line, col, self.source)


# ----------------------------------------------------------------------
# Model <-> mapping
# ----------------------------------------------------------------------


def model_to_dict(model: RSDPModel) -> dict:
    d = {"name": model.name, "rates": model.rates.to_dict(), "drift": model.drift.to_dict(),
         "sigma": model.sigma.to_dict()}
    c = model.constants.to_dict()
    if c:
        d["constants"] = c
    return d


def model_from_dict(d: dict, loc: _Located | None = None, base: tuple = ()) -> RSDPModel:
    loc = loc or _Located("", None)

    def need(section, key):
        if not isinstance(d.get(section), dict):
            raise loc.error(base + (section,), "mapping required")
        if key not in d[section]:
            raise loc.error(base + (section,), f"missing key {key!r}")
        return d[section][key]

    try:
        rfam = d.get("rates", {}).get("family", "constant") if isinstance(d.get("rates"), dict) else None
        if rfam == "constant":
            Q = need("rates", "Q")
            n = int(d.get("n", _infer_n(d)))
            rates = ConstantRates(Q, n=n)
        elif rfam == "tanh":
            r = d["rates"]
            rates = TanhRates(need("rates", "a"), need("rates", "b"), need("rates", "v"),
                              None if r.get("u") is None else [[float("inf") if x is None else x for x in row]
                                                               for row in r["u"]])
        else:
            raise loc.error(base + ("rates", "family"), f"unknown rate family {rfam!r}")
        dr = d.get("drift")
        if not isinstance(dr, dict) or dr.get("family", "poly") != "poly":
            raise loc.error(base + ("drift",), "drift must be a mapping with family 'poly'")
        drift = PolyDrift(need("drift", "A"), dr.get("c"), dr.get("k"), dr.get("m"))
        sigma = ConstantSigma(need("sigma", "S"), rates.N)
        cons = dict(d.get("constants") or {})
        if "alpha" in cons and cons["alpha"] is not None:
            cons["alpha"] = tuple(float(a) for a in cons["alpha"])
        unknown = set(cons) - set(Constants.__dataclass_fields__)
        if unknown:
            raise loc.error(base + ("constants", sorted(unknown)[0]), "unknown constant")
        return RSDPModel(rates, drift, sigma, Constants(**cons), str(d.get("name", "")))
    except ConfigError:
        raise
    except ModelError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise loc.error(base, f"invalid model: {exc}") from None


def _infer_n(d: dict) -> int:
    A = d.get("drift", {}).get("A")
    try:
        return len(A[0])
    except (TypeError, IndexError):
        return 1


def dump_model(model: RSDPModel) -> str:
    return yaml.safe_dump(model_to_dict(model), sort_keys=False, default_flow_style=None)


def load_model(text: str, source: str | None = None) -> RSDPModel:
    loc = _Located(text, source)
    d = yaml.safe_load(text)
    if not isinstance(d, dict):
        raise loc.error((), "model file must be a mapping")
    return model_from_dict(d, loc)


# ----------------------------------------------------------------------
# Experiment files
# ----------------------------------------------------------------------

SECTIONS = ("check", "converge", "dominate", "couple", "invariant", "simulate")


@dataclass
class ExperimentConfig:
    model: RSDPModel
    sections: dict[str, dict]
    seed: int = 0
    workers: int = 1
    text: str = ""
    source: str | None = None
    loc: Any = field(default=None, repr=False)

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name) or {})

    def hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def error(self, path: tuple, message: str) -> ConfigError:
        return self.loc.error(path, message)


def load_experiment(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_experiment(text, path)


def parse_experiment(text: str, source: str | None = None) -> ExperimentConfig:
    loc = _Located(text, source)
    d = yaml.safe_load(text)
    if not isinstance(d, dict):
        raise loc.error((), "experiment file must be a mapping")
    m = d.get("model")
    full_text = text
    if isinstance(m, str):
        base = os.path.dirname(source) if source else "."
        mpath = os.path.join(base, m)
        if not os.path.exists(mpath):
            raise loc.error(("model",), f"model file {m!r} not found")
        with open(mpath, encoding="utf-8") as fh:
            mtext = fh.read()
        model = load_model(mtext, mpath)
        full_text = text + "\n---\n" + mtext
    elif isinstance(m, dict):
        model = model_from_dict(m, loc, ("model",))
    else:
        raise loc.error(("model",), "model section (mapping or file path) required")
    unknown = set(d) - set(SECTIONS) - {"model", "seed", "workers"}
    if unknown:
        k = sorted(unknown)[0]
        raise loc.error((k,), f"unknown section {k!r}")
    sections = {k: d[k] for k in SECTIONS if k in d}
    for k, v in sections.items():
        if v is not None and not isinstance(v, dict):
            raise loc.error((k,), "section must be a mapping")
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        raise loc.error(("seed",), "seed must be an unsigned 64-bit integer")
    workers = d.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise loc.error(("workers",), "workers must be a positive integer")
    return ExperimentConfig(model, sections, seed, workers, full_text, source, loc)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_default) + "\n"


def _default(o):
    import numpy as np
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")
