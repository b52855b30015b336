"""Weighted mean-oscillation functionals over a declared cube family.

Five functionals share one scan pattern: a per-cube quantity maximized over
the family, with the attaining cube recorded so every reported supremum is
witnessed.  The per-cube quantities (ω a weight, Q a cube, f_Q the plain
mean, h^n the cell volume):

  bmo    (1/ω(Q)) Σ_Q |f - f_Q| h^n
  blo    (1/ω(Q)) Σ_Q (f - min_Q f) h^n
  bmo_p  ((1/ω(Q)) Σ_Q |f - f_Q|^p ω^{1-p} h^n)^{1/p}
  blo_p  same with f - min_Q f
  linf_w (min_Q ω)^{-1} max_Q |f|

All are family-relative; inequalities between functionals hold cube-wise,
so both sides of any comparison must use the same family.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import Cube, GridFunction, cube_region, dilate_cube, measure
from .weights import Weight, a1_constant

__all__ = [
    "OscillationReport",
    "single_cube_value",
    "bmo_norm",
    "blo_constant",
    "bmo_p_norm",
    "blo_p_norm",
    "linf_weighted_norm",
    "BmoLemmaRow",
    "BmoLemmaReport",
    "bmo_lemma_bounds",
    "csv_row",
]


@dataclass(frozen=True)
class OscillationReport:
    kind: str
    p: float | None
    value: float
    argmax: Cube
    family_id: str
    family_size: int


def _gather(f: GridFunction, w: Weight, q: Cube) -> tuple[np.ndarray, np.ndarray, float]:
    reg = cube_region(f, q)
    if reg.size == 0:
        raise ValueError(f"cube {q} contains no samples")
    h = f.L / f.N
    return (f.values.ravel()[reg.indices],
            w.values.ravel()[reg.indices],
            h**f.n)


def single_cube_value(kind: str, f: GridFunction, w: Weight, q: Cube,
                      p: float | None = None) -> float:
    """The per-cube quantity behind each functional; used as sup witness."""
    fv, wv, hn = _gather(f, w, q)
    wq = float(wv.sum()) * hn
    if kind == "bmo":
        return float(np.abs(fv - fv.mean()).sum()) * hn / wq
    if kind == "blo":
        return float((fv - fv.min()).sum()) * hn / wq
    if kind in ("bmo_p", "blo_p"):
        if p is None or p < 1:
            raise ValueError("p must be >= 1")
        dev = np.abs(fv - fv.mean()) if kind == "bmo_p" else fv - fv.min()
        s = float((dev**p * wv ** (1.0 - p)).sum()) * hn
        return (s / wq) ** (1.0 / p)
    if kind == "linf_w":
        return float(np.abs(fv).max() / wv.min())
    raise ValueError(f"unknown functional kind {kind!r}")


def _scan(kind: str, f: GridFunction, w: Weight, cubes: Sequence[Cube],
          p: float | None, family_id: str) -> OscillationReport:
    if not cubes:
        raise ValueError("cube family must be nonempty")
    best = -1.0
    arg = cubes[0]
    for q in cubes:
        v = single_cube_value(kind, f, w, q, p)
        if v > best:
            best, arg = v, q
    return OscillationReport(kind, p, best, arg, family_id, len(cubes))


def bmo_norm(f: GridFunction, w: Weight, cubes: Sequence[Cube],
             family_id: str = "family") -> OscillationReport:
    return _scan("bmo", f, w, cubes, None, family_id)


def blo_constant(f: GridFunction, w: Weight, cubes: Sequence[Cube],
                 family_id: str = "family") -> OscillationReport:
    return _scan("blo", f, w, cubes, None, family_id)


def bmo_p_norm(f: GridFunction, w: Weight, p: float, cubes: Sequence[Cube],
               family_id: str = "family") -> OscillationReport:
    if p < 1:
        raise ValueError("p must be >= 1")
    return _scan("bmo_p", f, w, cubes, p, family_id)


def blo_p_norm(f: GridFunction, w: Weight, p: float, cubes: Sequence[Cube],
               family_id: str = "family") -> OscillationReport:
    if p < 1:
        raise ValueError("p must be >= 1")
    return _scan("blo_p", f, w, cubes, p, family_id)


def linf_weighted_norm(f: GridFunction, w: Weight, cubes: Sequence[Cube],
                       family_id: str = "family") -> OscillationReport:
    return _scan("linf_w", f, w, cubes, None, family_id)


@dataclass(frozen=True)
class BmoLemmaRow:
    k: int
    cube: Cube
    value: float
    bound: float
    ratio: float


@dataclass(frozen=True)
class BmoLemmaReport:
    rows: tuple[BmoLemmaRow, ...]
    c_min: float
    k0_ok: bool
    a1: float
    bmo: float
    min_w: float


def bmo_lemma_bounds(f: GridFunction, w: Weight, base_cube: Cube, k_max: int,
                     cubes: Sequence[Cube]) -> BmoLemmaReport:
    """Mean deviation from f_Q over the dilates 2^k Q against k-linear bounds.

    Dilation stops once the doubled cube would exceed the box.  The A1
    constant and the oscillation norm are taken over the supplied family
    augmented with the dilates themselves, which is what makes the k=0 case
    and the telescoping bound exact in discrete arithmetic; the smallest
    feasible C is max over k >= 1 of value / (k * a1 * min_Q w * bmo).
    """
    dilates = [base_cube]
    for k in range(1, k_max + 1):
        if base_cube.side * 2**k > f.L * (1 + 1e-12):
            break
        dilates.append(dilate_cube(base_cube, 2.0**k))
    family = list(cubes) + dilates
    a1 = a1_constant(w, family)
    bmo = bmo_norm(f, w, family).value
    base_reg = cube_region(f, base_cube)
    h = f.L / f.N
    f_q = float(f.values.ravel()[base_reg.indices].mean())
    min_w = float(w.values.ravel()[base_reg.indices].min())
    unit = a1 * min_w * bmo
    rows = []
    c_min = 0.0
    k0_ok = True
    for k, q in enumerate(dilates):
        reg = cube_region(f, q)
        lhs = float(np.abs(f.values.ravel()[reg.indices] - f_q).sum()) * h**f.n
        lhs /= measure(reg)
        bound = max(k, 1) * unit
        ratio = lhs / bound if bound > 0 else (0.0 if lhs == 0 else float("inf"))
        rows.append(BmoLemmaRow(k, q, lhs, bound, ratio))
        if k == 0:
            k0_ok = lhs <= unit * (1 + 1e-12)
        else:
            c_min = max(c_min, ratio)
    return BmoLemmaReport(tuple(rows), c_min, k0_ok, a1, bmo, min_w)


def csv_row(rep: OscillationReport) -> str:
    """kind,p,value,center,side,family -- one row per functional."""
    center = ";".join(repr(c) for c in rep.argmax.center)
    p = "" if rep.p is None else repr(rep.p)
    return f"{rep.kind},{p},{rep.value!r},{center},{rep.argmax.side!r},{rep.family_id}"
