"""Muckenhoupt weight functionals over declared cube families.

All constants here are family-relative: the supremum over every ball is
unattainable on a grid, so each functional scans a finite list of cubes and
reports the maximum.  Enlarging the family can only increase the value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import (
    Cube,
    GridFunction,
    Region,
    cube_region,
    dilate_cube,
    dyadic_address,
    level_blocks,
    load_grid_function,
    measure,
)

__all__ = [
    "Weight",
    "constant_weight",
    "weighted_measure",
    "a1_constant",
    "ap_constant",
    "power_weight",
    "DoublingRecord",
    "DoublingReport",
    "doubling_report",
    "tdilate_report",
    "ReverseHolderReport",
    "reverse_holder",
    "save_weight",
    "load_weight",
]


@dataclass(frozen=True)
class Weight:
    """Strictly positive grid function with per-dyadic-level sum/min caches.

    Values at or below eps_min are floored there with a warning; the measure
    dω = ω dx must stay nondegenerate on every sample.
    """

    base: GridFunction
    eps_min: float = 1e-12

    def __post_init__(self) -> None:
        vals = np.asarray(self.base.values, dtype=float)
        if np.any(vals < self.eps_min):
            warnings.warn(
                f"weight values below {self.eps_min} floored", stacklevel=3)
            vals = np.maximum(vals, self.eps_min)
            object.__setattr__(self, "base",
                               self.base.with_values(vals))
        sums = {}
        mins = {}
        g = self.base
        depth = int(np.log2(g.N))
        # Level-k arrays hold one entry per level-k dyadic block, row-major.
        for k in range(depth + 1):
            blocks = level_blocks(g.values, g.n, k)
            sums[k] = blocks.sum(axis=1)
            mins[k] = blocks.min(axis=1)
            sums[k].setflags(write=False)
            mins[k].setflags(write=False)
        object.__setattr__(self, "_sums", sums)
        object.__setattr__(self, "_mins", mins)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def L(self) -> float:
        return self.base.L

    @property
    def N(self) -> int:
        return self.base.N

    @property
    def values(self) -> np.ndarray:
        return self.base.values

    @property
    def max_level(self) -> int:
        return int(np.log2(self.base.N))

    def level_sums(self, k: int) -> np.ndarray:
        return self._sums[k]

    def level_mins(self, k: int) -> np.ndarray:
        return self._mins[k]


def constant_weight(n: int, L: float, N: int, c: float = 1.0) -> Weight:
    shape = (N,) if n == 1 else (N, N)
    return Weight(GridFunction(n, L, N, np.full(shape, float(c))))


def weighted_measure(w: Weight, region: Region) -> float:
    """ω(E) = Σ_{x in E} ω(x) h^n."""
    g = w.base
    h = g.L / g.N
    return float(g.values.ravel()[region.indices].sum()) * h**g.n


def _cube_stats(w: Weight, q: Cube) -> tuple[float, float, int]:
    """(mean, min, sample count) of the weight over the cube."""
    g = w.base
    addr = dyadic_address(g, q)
    if addr is not None:
        k, b = addr
        cnt = (g.N >> k) ** g.n
        return float(w.level_sums(k)[b]) / cnt, float(w.level_mins(k)[b]), cnt
    reg = cube_region(g, q)
    if reg.size == 0:
        raise ValueError(f"cube {q} contains no samples")
    vals = g.values.ravel()[reg.indices]
    return float(vals.mean()), float(vals.min()), reg.size


def a1_constant(w: Weight, cubes: Sequence[Cube]) -> float:
    """max over the family of (average of ω over Q) / (min of ω over Q)."""
    if not cubes:
        raise ValueError("cube family must be nonempty")
    best = 0.0
    for q in cubes:
        mean, mn, _ = _cube_stats(w, q)
        best = max(best, mean / mn)
    return best


def ap_constant(w: Weight, p: float, cubes: Sequence[Cube]) -> float:
    """max over the family of (avg ω)(avg ω^{1-p'})^{p-1}, p' = p/(p-1)."""
    if p <= 1:
        raise ValueError("use a1_constant for p <= 1")
    if not cubes:
        raise ValueError("cube family must be nonempty")
    g = w.base
    dual = g.values ** (1.0 - p / (p - 1.0))
    best = 0.0
    for q in cubes:
        addr = dyadic_address(g, q)
        if addr is not None:
            k, b = addr
            cnt = (g.N >> k) ** g.n
            m1 = float(w.level_sums(k)[b]) / cnt
            m2 = float(level_blocks(dual, g.n, k)[b].sum()) / cnt
        else:
            reg = cube_region(g, q)
            if reg.size == 0:
                raise ValueError(f"cube {q} contains no samples")
            m1 = float(g.values.ravel()[reg.indices].mean())
            m2 = float(dual.ravel()[reg.indices].mean())
        best = max(best, m1 * m2 ** (p - 1.0))
    return best


def power_weight(w: Weight, s: float) -> Weight:
    return Weight(w.base.with_values(w.base.values**s), eps_min=w.eps_min)


@dataclass(frozen=True)
class DoublingRecord:
    cube: Cube
    ratio: float
    bound: float
    ok: bool


@dataclass(frozen=True)
class DoublingReport:
    constant: float
    constant_kind: str
    rows: tuple[DoublingRecord, ...]

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def __iter__(self):
        return iter(self.rows)


_SLACK = 1e-12


def doubling_report(w: Weight, cubes: Sequence[Cube]) -> DoublingReport:
    """Ratios ω(2Q)/ω(Q), each bounded by 2^n times the family A₁ constant.

    The A₁ constant is taken over the given cubes together with their
    doubles, which is exactly the family the bound's derivation scans.
    """
    g = w.base
    family = list(cubes) + [dilate_cube(q, 2.0) for q in cubes]
    a1 = a1_constant(w, family)
    bound = 2**g.n * a1
    rows = []
    for q in cubes:
        wq = weighted_measure(w, cube_region(g, q))
        w2q = weighted_measure(w, cube_region(g, dilate_cube(q, 2.0)))
        ratio = w2q / wq
        rows.append(DoublingRecord(q, ratio, bound,
                                   ratio <= bound * (1 + _SLACK)))
    return DoublingReport(a1, "a1", tuple(rows))


def tdilate_report(w: Weight, cubes: Sequence[Cube],
                   ts: Sequence[float] = (2.0, 3.0, 4.0)) -> DoublingReport:
    """Ratios ω(tQ)/ω(Q) against the bound t^{2n} times the family A₂ constant."""
    g = w.base
    family = list(cubes) + [dilate_cube(q, t) for q in cubes for t in ts]
    a2 = ap_constant(w, 2.0, family)
    rows = []
    for q in cubes:
        wq = weighted_measure(w, cube_region(g, q))
        for t in ts:
            wtq = weighted_measure(w, cube_region(g, dilate_cube(q, t)))
            ratio = wtq / wq
            bound = t ** (2 * g.n) * a2
            rows.append(DoublingRecord(dilate_cube(q, t), ratio, bound,
                                       ratio <= bound * (1 + _SLACK)))
    return DoublingReport(a2, "a2", tuple(rows))


@dataclass(frozen=True)
class ReverseHolderReport:
    epsilon: float
    cstar: float
    delta: float
    rows: tuple[DoublingRecord, ...]

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.rows)


def reverse_holder(nu: Weight, p: float,
                   cubes: Sequence[Cube]) -> tuple[float, float, ReverseHolderReport]:
    """Reverse Hölder exponent ε = 1/(2^{2p+1+n}·A_p(ν)) with slack factor 2.

    Verifies (avg_Q ν^{1+ε})^{1/(1+ε)} ≤ 2·avg_Q ν on every family cube and
    returns δ = ε/(1+ε), the exponent of the measure-comparison inequality
    ν(E)/ν(Q) ≤ 2·(m(E)/m(Q))^δ that follows by Hölder.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    g = nu.base
    apn = a1_constant(nu, cubes) if p == 1 else ap_constant(nu, p, cubes)
    eps = 1.0 / (2 ** (2 * p + 1 + g.n) * apn)
    cstar = 2.0
    delta = eps / (1.0 + eps)
    lifted = nu.base.values ** (1.0 + eps)
    rows = []
    for q in cubes:
        reg = cube_region(g, q)
        lhs = float(lifted.ravel()[reg.indices].mean()) ** (1.0 / (1.0 + eps))
        rhs = cstar * float(g.values.ravel()[reg.indices].mean())
        rows.append(DoublingRecord(q, lhs, rhs, lhs <= rhs * (1 + _SLACK)))
    return eps, cstar, ReverseHolderReport(eps, cstar, delta, tuple(rows))


def save_weight(w: Weight, path: str | Path) -> None:
    g = w.base
    lines = [f"# n={g.n} L={g.L!r} N={g.N}", "# kind=weight"]
    lines.extend(repr(float(v)) for v in g.values.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def load_weight(path: str | Path) -> Weight:
    text = Path(path).read_text().splitlines()
    if len(text) < 2 or text[1].replace(" ", "") != "#kind=weight":
        raise ValueError(f"{path}: missing '# kind=weight' header flag")
    return Weight(load_grid_function(path))
