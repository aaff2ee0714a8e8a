"""JSON documents for Nahm data (version ``nahm-data/1``)."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigParse
from .grids import DEFAULT_COLLAR, ChebPanels
from .nahm_core import (
    ConstantGauge, ConstantInterval, ExpPolyGauge, GaugedInterval, JumpData, NahmData, PathOrderedGauge,
    PurePoleInterval, RescaledInterval, SampledInterval, _cpx, _uncpx, builtin_family,
)
from .report import content_hash
from .sbtype import Framing, SymmetryBreakingType, random_framing, standard_framing

DATA_VERSION = "nahm-data/1"


def _enc(a) -> dict:
    a = np.asarray(a, dtype=complex)
    return {"shape": list(a.shape), "data": _cpx(a.ravel())}


def _dec(v) -> np.ndarray:
    """Inverse of ``_enc``; plain ``[re, im]`` pair arrays are accepted too."""
    if isinstance(v, dict):
        shape = tuple(int(n) for n in v["shape"])
        flat = _uncpx(v["data"]) if len(v["data"]) else np.zeros(0, dtype=complex)
        return flat.reshape(shape)
    return _uncpx(v)


def framing_to_dict(f: Framing) -> dict:
    return {"V_plus": [_enc(v) for v in f.V_plus], "V_minus": [_enc(v) for v in f.V_minus],
            "C": [_enc(c) for c in f.C]}


def framing_from_value(value, t: SymmetryBreakingType) -> Framing:
    """``"standard"``, ``{"random": seed}`` or explicit ``[re, im]`` matrices."""
    if value in (None, "standard"):
        return standard_framing(t)
    if isinstance(value, dict) and "random" in value:
        return random_framing(t, int(value["random"]))
    try:
        return Framing(tuple(_dec(v) for v in value["V_plus"]), tuple(_dec(v) for v in value["V_minus"]),
                       tuple(_dec(c) for c in value.get("C", [])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParse(f"bad framing: {exc}") from exc


def _panels(breaks, values) -> ChebPanels:
    return ChebPanels.from_samples(np.asarray(breaks, dtype=float), _uncpx(values))


def interval_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "constant":
        return ConstantInterval(d["lo"], d["hi"], _uncpx(d["T"]), _uncpx(d["T0"]) if "T0" in d else None)
    if kind == "pure_pole":
        return PurePoleInterval(d["lo"], d["hi"], _uncpx(d["rho"]), d["side"])
    if kind == "sampled":
        conn = _panels(d["conn_breaks"], d["conn_values"]) if "conn_breaks" in d else None
        return SampledInterval(d["lo"], d["hi"], _panels(d["breaks"], d["values"]),
                               _uncpx(d["res_left"]), _uncpx(d["res_right"]), conn)
    if kind == "gauged":
        base = interval_from_dict(d["base"])
        return GaugedInterval(base, gauge_from_dict(d["gauge"], base))
    if kind == "rescaled":
        return RescaledInterval(interval_from_dict(d["base"]), d["lo"], d["hi"])
    raise ConfigParse(f"unknown interval kind {kind!r}")


def gauge_from_dict(d: dict, base=None):
    kind = d.get("kind")
    if kind == "constant":
        return ConstantGauge(_uncpx(d["U"]))
    if kind == "exppoly":
        return ExpPolyGauge(_uncpx(d["U0"]), _uncpx(d["X"]), d["coeffs"], d["center"])
    if kind == "path_ordered":
        # determined by the base connection; re-solved rather than trusted
        return PathOrderedGauge.solve(base, d["t_ref"])
    raise ConfigParse(f"unknown gauge kind {kind!r}")


def to_document(nd: NahmData) -> dict:
    doc = {
        "version": DATA_VERSION,
        "type": nd.sbt.to_dict(),
        "framing": framing_to_dict(nd.framing),
        "family": nd.family,
        "collar_rel": nd.collar_rel,
        "intervals": [iv.to_dict() for iv in nd.intervals],
        "jumps": [{"x": _enc(j.x), "q": _enc(j.q)} for j in nd.jumps],
    }
    if nd.meta:
        doc["meta"] = {k: v for k, v in nd.meta.items() if isinstance(v, (str, int, float, list, dict))}
    return doc


def from_document(doc: dict) -> NahmData:
    """Build Nahm data from a document.

    Built-in families only need ``type``, ``family`` and optionally
    ``framing``, ``seed`` and ``spinors``; any other family reads the
    stored intervals and jumps.
    """
    if not isinstance(doc, dict):
        raise ConfigParse("document must be a JSON object")
    if doc.get("version", DATA_VERSION) != DATA_VERSION:
        raise ConfigParse(f"unsupported version {doc.get('version')!r}")
    try:
        t = SymmetryBreakingType.from_dict(doc["type"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParse(f"bad type block: {exc}") from exc
    family = doc.get("family", "custom")
    collar = float(doc.get("collar_rel", DEFAULT_COLLAR))
    if "intervals" not in doc:
        f = framing_from_value(doc.get("framing"), t)
        spinors = doc.get("spinors")
        if spinors is not None:
            spinors = [_dec(s) for s in spinors]
        return builtin_family(family, t, f, spinors=spinors, seed=int(doc.get("seed", 0)), collar_rel=collar)
    f = framing_from_value(doc.get("framing"), t)
    try:
        intervals = tuple(interval_from_dict(d) for d in doc["intervals"])
        jumps = tuple(JumpData(_dec(j["x"]), _dec(j["q"]).reshape(-1, 2)) for j in doc["jumps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParse(f"bad interval or jump block: {exc}") from exc
    return NahmData(t, f, intervals, jumps, family, collar, dict(doc.get("meta", {})))


def load(path) -> tuple[NahmData, str]:
    """Read a document; returns the data and the content hash of the raw JSON."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParse(f"cannot read {path}: {exc}") from exc
    return from_document(doc), content_hash(doc)


def dump(nd: NahmData, path) -> None:
    Path(path).write_text(json.dumps(to_document(nd), indent=1, sort_keys=True))


__all__ = ["DATA_VERSION", "to_document", "from_document", "load", "dump", "framing_to_dict",
           "framing_from_value", "interval_from_dict"]
