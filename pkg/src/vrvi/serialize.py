"""Versioned binary container for generated problem instances.

Layout: the magic ``b"VRVI1\\n"``, a little-endian ``uint32`` header length,
a UTF-8 JSON header, then an ``.npz`` archive holding every array.  Only
data-backed instances can be stored: affine/quadratic composite VIs,
quadratic programs with affine constraints and Neyman-Pearson programs.
"""
from __future__ import annotations

import io
import json
import os
import struct
import zipfile

import numpy as np

from .constrained import ConstrainedProgram, ConstraintBlock, ObjectiveComponent
from .core import Ball, Box, ConfigurationError, ConstraintSet, NonnegOrthant, Product, VRVIError, Whole
from .oracle import ComponentFamily, CompositeVIProblem

__all__ = ["MAGIC", "FormatError", "save_problem", "load_problem", "dumps", "loads"]

MAGIC = b"VRVI1\n"


class FormatError(VRVIError, ValueError):
    """The file is not a readable problem container."""


def _set_to_json(cset: ConstraintSet, arrays: dict, prefix: str):
    if isinstance(cset, Whole):
        return {"type": "whole", "dim": cset.dim}
    if isinstance(cset, NonnegOrthant):
        return {"type": "nonneg", "dim": cset.dim}
    if isinstance(cset, Ball):
        arrays[prefix + "center"] = np.asarray(cset.center)
        return {"type": "ball", "radius": float(cset.radius)}
    if isinstance(cset, Box):
        arrays[prefix + "lo"] = np.asarray(cset.lo)
        arrays[prefix + "hi"] = np.asarray(cset.hi)
        return {"type": "box"}
    if isinstance(cset, Product):
        return {"type": "product",
                "blocks": [_set_to_json(b, arrays, f"{prefix}{k}_") for k, b in enumerate(cset.blocks)]}
    raise ConfigurationError(f"cannot serialise constraint set {type(cset).__name__}")


def _set_from_json(d, arrays, prefix: str) -> ConstraintSet:
    t = d["type"]
    if t == "whole":
        return Whole(int(d["dim"]))
    if t == "nonneg":
        return NonnegOrthant(int(d["dim"]))
    if t == "ball":
        return Ball(arrays[prefix + "center"], d["radius"])
    if t == "box":
        return Box(arrays[prefix + "lo"], arrays[prefix + "hi"])
    if t == "product":
        return Product([_set_from_json(b, arrays, f"{prefix}{k}_") for k, b in enumerate(d["blocks"])])
    raise FormatError(f"unknown set type {t!r}")


def _owner(fn, cls):
    obj = getattr(fn, "__self__", fn)
    if not isinstance(obj, cls):
        raise ConfigurationError("only instances built from LinearMap/Quadratic data can be serialised")
    return obj


def _encode(obj, arrays: dict) -> dict:
    from .problems import LinearMap, Quadratic

    if isinstance(obj, CompositeVIProblem):
        hs = [_owner(c, LinearMap) for c in obj.h.components]
        gs = [_owner(c, Quadratic) for c in obj.g.components]
        for i, h in enumerate(hs):
            arrays[f"hA{i}"], arrays[f"hb{i}"] = h.A, h.b
        for i, g in enumerate(gs):
            arrays[f"gC{i}"], arrays[f"gc{i}"] = g.C, g.c
        arrays["h_lip"] = obj.h.lipschitz
        arrays["g_lip"] = obj.g.lipschitz
        return {"kind": "affine_vi", "m1": len(hs), "m2": len(gs), "name": obj.name,
                "mu_h": obj.mu_h, "g_const": [g.const for g in gs],
                "set": _set_to_json(obj.constraint, arrays, "set_")}
    if isinstance(obj, ConstrainedProgram):
        data = obj.data or {}
        if "X0" in data:
            arrays["X0"], arrays["X1"] = data["X0"], data["X1"]
            return {"kind": "np_program", "loss": data["loss"], "lam": data["lam"], "r1": data["r1"],
                    "m1": data["m1"], "m2": data["m2"], "n": obj.n}
        quads = [_owner(c.value, Quadratic) for c in obj.objective]
        if not all(b.is_linear for b in obj.constraints):
            raise ConfigurationError("only affine constraint blocks can be serialised")
        for i, q in enumerate(quads):
            arrays[f"gC{i}"], arrays[f"gc{i}"] = q.C, q.c
        for j, b in enumerate(obj.constraints):
            arrays[f"hA{j}"], arrays[f"hb{j}"] = b.matrix, b.offset
        return {"kind": "qp_program", "m1": len(obj.constraints), "m2": len(quads), "name": obj.name,
                "g_const": [q.const for q in quads], "set": _set_to_json(obj.primal_set, arrays, "set_")}
    raise ConfigurationError(f"cannot serialise {type(obj).__name__}")


def _decode(header: dict, arrays):
    from .problems import LinearMap, Quadratic, gen_np_classification

    kind = header["kind"]
    if kind == "affine_vi":
        hs = [LinearMap(arrays[f"hA{i}"], arrays[f"hb{i}"]) for i in range(header["m1"])]
        gs = [Quadratic(arrays[f"gC{i}"], arrays[f"gc{i}"], header["g_const"][i]) for i in range(header["m2"])]
        h_fam = ComponentFamily(hs, arrays["h_lip"], kind="h")
        g_fam = ComponentFamily([q.grad for q in gs], arrays["g_lip"], values=[q.value for q in gs], kind="g")
        return CompositeVIProblem(h_fam, g_fam, _set_from_json(header["set"], arrays, "set_"),
                                  mu_h=header["mu_h"], name=header["name"])
    if kind == "np_program":
        X0, X1 = arrays["X0"], arrays["X1"]
        X = np.vstack([X0, X1])
        y = np.concatenate([-np.ones(len(X0)), np.ones(len(X1))])
        return gen_np_classification(n=header["n"], loss=header["loss"], lam=header["lam"], r1=header["r1"],
                                     dataset=(X, y), m1=header["m1"], m2=header["m2"])
    if kind == "qp_program":
        quads = [Quadratic(arrays[f"gC{i}"], arrays[f"gc{i}"], header["g_const"][i]) for i in range(header["m2"])]
        blocks = [ConstraintBlock.linear(arrays[f"hA{j}"], arrays[f"hb{j}"]) for j in range(header["m1"])]
        obj = [ObjectiveComponent(q.value, q.grad, lipschitz=max(q.lipschitz, 1e-300)) for q in quads]
        prog = ConstrainedProgram(obj, blocks, _set_from_json(header["set"], arrays, "set_"), name=header["name"])
        prog.data = {"quads": quads}
        return prog
    raise FormatError(f"unknown problem kind {kind!r}")


def dumps(obj, meta: dict | None = None, x_star=None) -> bytes:
    """Serialise ``obj`` (with free-form JSON ``meta`` and optional ``x_star``)."""
    arrays: dict = {}
    header = _encode(obj, arrays)
    header["meta"] = meta or {}
    if x_star is not None:
        arrays["x_star"] = np.asarray(x_star, dtype=np.float64)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(hb)) + hb + buf.getvalue()


def loads(blob: bytes):
    """Inverse of :func:`dumps`; returns ``(obj, meta, x_star_or_None)``."""
    if not blob.startswith(MAGIC):
        raise FormatError("missing VRVI1 magic header")
    off = len(MAGIC)
    if len(blob) < off + 4:
        raise FormatError("truncated header")
    (hl,) = struct.unpack("<I", blob[off:off + 4])
    off += 4
    try:
        header = json.loads(blob[off:off + hl].decode("utf-8"))
        arrays = np.load(io.BytesIO(blob[off + hl:]), allow_pickle=False)
        arrays = {k: arrays[k] for k in arrays.files}
    except (ValueError, UnicodeDecodeError, OSError, zipfile.BadZipFile) as exc:
        raise FormatError(f"corrupt payload: {exc}") from None
    return _decode(header, arrays), header.get("meta", {}), arrays.get("x_star")


def save_problem(path, obj, meta: dict | None = None, x_star=None) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(dumps(obj, meta, x_star))


def load_problem(path):
    with open(os.fspath(path), "rb") as fh:
        return loads(fh.read())
