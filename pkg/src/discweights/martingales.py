"""Dyadic martingales on [0, 1] and their trace behaviour on the disc.

The binary tree over [0, 1] carries martingales: one value per dyadic
interval, each parent the mean of its two children.  Two digit-driven
families do most of the work.  The signed-digit walk adds +1 or -1 per
level straight from the interval's binary digits.  The quarter-pattern
martingale changes only at every second level: among the four
grandchildren of a node the outer two gain 1 and the inner two lose 1,
so every same-length adjacent jump stays at most 2 while the value along
the outermost digit path still grows linearly in depth.

Interval values double as boundary-function surrogates at points of the
disc.  A point sequence stores tree addresses; the anchor of an address
of length k sits at modulus 1 - 2^{-k} under the interval's center, so
its mass 1 - |z|^2 = 2^{-k}(2 - 2^{-k}) exactly.  On top of the anchors
live Carleson sums, exponentially weighted trace sums, and a builder
that selects, generation by generation, antichains of nodes whose
squared martingale value beats a prescribed multiple of
log(1/(1 - |z|^2)) while each parent passes a fixed fraction of its mass
to its selected descendants.

Nodes below level ~50 make 1 - |z| collapse in double precision, so all
metric quantities are computed from boundary gaps d = 1 - |z| and exact
angle differences:

    |z - w|^2          = (d_z - d_w)^2            + 4 r_z r_w sin^2(pi dt)
    |1 - conj(z) w|^2  = (d_z + d_w - d_z d_w)^2  + 4 r_z r_w sin^2(pi dt)

with dt the wrapped angle difference in turns.  No term is a difference
of nearly equal floats, and 1 - rho^2 comes out as the positive quotient
(mass_z * mass_w) / |1 - conj(z) w|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import mod1

__all__ = [
    "DyadicMartingale",
    "random_walk",
    "kahane",
    "random_pm1",
    "martingale_from_spec",
    "bloch_seminorm",
    "azuma_counts",
    "azuma_table",
    "azuma_fit",
    "AzumaRow",
    "AzumaFit",
    "SeqEntry",
    "PointSeq",
    "radial_chain",
    "CarlesonReport",
    "carleson_sum_at",
    "carleson_sup",
    "trace_sup_i",
    "trace_weak_l1",
    "threshold_sequence",
    "counterexample_build",
    "divergence_terms",
    "weak_separation_ok",
    "ParentRecord",
    "GenerationRecord",
    "BuildResult",
]

_MAX_MATERIALIZE = 24  # level_values refuses to allocate beyond 2^24 entries


def _validate_address(address: str) -> str:
    if not isinstance(address, str) or any(c not in "01" for c in address):
        raise ValueError(f"address must be a string of 0/1 digits, got {address!r}")
    return address


def _walk_value(address: str) -> float:
    return float(2 * address.count("1") - len(address))


def _quarter_value(address: str) -> float:
    s = 0
    for i in range(1, len(address), 2):
        s += 1 if address[i - 1] == address[i] else -1
    return float(s)


class DyadicMartingale:
    """A martingale on the binary tree, evaluator-backed or materialized.

    Addresses are strings of '0'/'1' digits, the root being the empty
    string.  Materialized instances store one numpy array per level and
    verify the midpoint law exactly at construction; evaluator kinds
    ("random_walk", "kahane") are defined at every depth.
    """

    def __init__(self, kind: str, fn: Optional[Callable[[str], float]] = None,
                 levels: Optional[Sequence[np.ndarray]] = None,
                 depth: Optional[int] = None, seed=None):
        self.kind = kind
        self.depth = depth
        self.seed = seed
        self._fn = fn
        self._levels = None
        self._step_cache: Dict[int, float] = {}
        if levels is not None:
            arrs = [np.asarray(lv, dtype=float) for lv in levels]
            for n, lv in enumerate(arrs):
                if lv.shape != (1 << n,):
                    raise ValueError(f"level {n} must hold {1 << n} values")
            for n in range(len(arrs) - 1):
                mid = (arrs[n + 1][0::2] + arrs[n + 1][1::2]) / 2.0
                if not np.array_equal(arrs[n], mid):
                    bad = int(np.flatnonzero(arrs[n] != mid)[0])
                    raise ValueError(
                        f"midpoint law fails at level {n}, index {bad}: "
                        f"{arrs[n][bad]} != mean of children {arrs[n + 1][2 * bad: 2 * bad + 2]}"
                    )
            self._levels = arrs
            self.depth = len(arrs) - 1
        if self._levels is None and fn is None:
            raise ValueError("need either an evaluator or materialized levels")

    # -- evaluation ---------------------------------------------------

    def value(self, address: str) -> float:
        _validate_address(address)
        if self._levels is not None:
            n = len(address)
            if n > self.depth:
                raise ValueError(f"address {address!r} below materialized depth {self.depth}")
            return float(self._levels[n][int(address, 2) if address else 0])
        if self.depth is not None and len(address) > self.depth:
            raise ValueError(f"address {address!r} below declared depth {self.depth}")
        return self._fn(address)

    def level_values(self, n: int) -> np.ndarray:
        """All values at level n, in address order."""
        if n < 0:
            raise ValueError("level must be nonnegative")
        if self._levels is not None:
            if n > self.depth:
                raise ValueError(f"level {n} exceeds materialized depth {self.depth}")
            return self._levels[n]
        if n > _MAX_MATERIALIZE:
            raise ValueError(f"refusing to materialize level {n} > {_MAX_MATERIALIZE}")
        if self.kind == "random_walk":
            idx = np.arange(1 << n, dtype=np.int64)
            cnt = np.zeros(1 << n, dtype=np.int64)
            for _ in range(n):
                cnt += idx & 1
                idx >>= 1
            return (2 * cnt - n).astype(float)
        if self.kind == "kahane":
            vals = np.zeros(1, dtype=float)
            for m in range(1, n + 1):
                vals = np.repeat(vals, 2)
                if m % 2 == 0:
                    i = np.arange(1 << m, dtype=np.int64)
                    vals = vals + (1 - 2 * (((i >> 1) ^ i) & 1))
            return vals
        # generic evaluator: walk the addresses
        return np.array([self._fn(format(i, f"0{n}b") if n else "")
                         for i in range(1 << n)], dtype=float)

    def max_step(self, level: int) -> float:
        """Largest |child - parent| jump into the given child level."""
        if level < 1:
            raise ValueError("child level must be >= 1")
        if self.kind == "random_walk":
            return 1.0
        if self.kind == "kahane":
            return 1.0 if level % 2 == 0 else 0.0
        if level in self._step_cache:
            return self._step_cache[level]
        child = self.level_values(level)
        parent = np.repeat(self.level_values(level - 1), 2)
        step = float(np.max(np.abs(child - parent))) if child.size else 0.0
        self._step_cache[level] = step
        return step

    # -- invariants ---------------------------------------------------

    def check_midpoint_law(self, depth: int = 12, paths: int = 10000, seed=0) -> int:
        """Verify M_I == (M_I0 + M_I1)/2; returns the number of checks.

        Materialized trees are checked exhaustively and exactly (they
        were already at construction; this re-runs the sweep).  For
        evaluators the law is checked at `paths` random prefixes.
        """
        if self._levels is not None:
            checks = 0
            for n in range(self.depth):
                lv, nxt = self._levels[n], self._levels[n + 1]
                if not np.array_equal(lv, (nxt[0::2] + nxt[1::2]) / 2.0):
                    raise ValueError(f"midpoint law fails at level {n}")
                checks += lv.size
            return checks
        rng = np.random.default_rng(seed)
        lens = rng.integers(0, depth + 1, size=paths)
        for n in lens:
            address = "".join("01"[b] for b in rng.integers(0, 2, size=int(n)))
            v = self._fn(address)
            mean = (self._fn(address + "0") + self._fn(address + "1")) / 2.0
            if v != mean:
                raise ValueError(f"midpoint law fails at {address!r}: {v} != {mean}")
        return paths

    # -- persistence ----------------------------------------------------

    def to_spec(self) -> dict:
        if self.kind in ("random_walk", "kahane"):
            out = {"kind": self.kind}
            if self.depth is not None:
                out["depth"] = self.depth
            return out
        if self.kind == "random_pm1":
            return {"kind": "random_pm1", "depth": self.depth, "seed": self.seed}
        return {
            "kind": "materialized",
            "depth": self.depth,
            "values": [lv.tolist() for lv in self._levels],
        }


def random_walk(depth: Optional[int] = None) -> DyadicMartingale:
    """The signed-digit walk: value = (#ones - #zeros) of the address."""
    return DyadicMartingale("random_walk", fn=_walk_value, depth=depth)


def kahane(depth: Optional[int] = None) -> DyadicMartingale:
    """The quarter-pattern martingale with jumps bounded by 2.

    Odd levels copy the parent.  At even levels the four grandchildren
    of the level-(n-2) ancestor split as outer quarters +1, inner
    quarters -1; equivalently each completed digit pair contributes +1
    when its two digits agree and -1 when they differ.
    """
    return DyadicMartingale("kahane", fn=_quarter_value, depth=depth)


def random_pm1(depth: int, seed) -> DyadicMartingale:
    """Materialized martingale whose children differ from the parent by +-1.

    Each node hands +1 to one child and -1 to the other, the order drawn
    from the seeded generator, so the midpoint law holds exactly and all
    increments have unit size.
    """
    rng = np.random.default_rng(seed)
    levels = [np.zeros(1)]
    for n in range(1, depth + 1):
        parent = np.repeat(levels[-1], 2)
        sign = np.where(rng.integers(0, 2, size=1 << (n - 1)) == 0, 1.0, -1.0)
        bump = np.empty(1 << n)
        bump[0::2] = sign
        bump[1::2] = -sign
        levels.append(parent + bump)
    return DyadicMartingale("random_pm1", levels=levels, depth=depth, seed=seed)


def martingale_from_spec(spec: dict) -> DyadicMartingale:
    """Build a martingale from its JSON description.

    {"kind": "random_walk" | "kahane"} with optional "depth";
    {"kind": "random_pm1", "depth": N, "seed": S};
    {"kind": "materialized", "values": [[...], ...]}.
    """
    kind = spec.get("kind")
    if kind == "random_walk":
        return random_walk(spec.get("depth"))
    if kind == "kahane":
        return kahane(spec.get("depth"))
    if kind == "random_pm1":
        return random_pm1(int(spec["depth"]), spec.get("seed", 0))
    if kind == "materialized":
        return DyadicMartingale("materialized", levels=spec["values"])
    raise ValueError(f"unknown martingale kind {kind!r}")


# ---------------------------------------------------------------------------
# adjacency seminorm
# ---------------------------------------------------------------------------

def bloch_seminorm(M: DyadicMartingale, depth: int) -> float:
    """Largest |M_I - M_J| over same-length adjacent pairs, levels 1..depth.

    Adjacent means consecutive intervals of the same level inside [0, 1];
    there is no wraparound pair across 0 ~ 1.
    """
    best = 0.0
    for n in range(1, depth + 1):
        vals = M.level_values(n)
        if vals.size > 1:
            best = max(best, float(np.max(np.abs(np.diff(vals)))))
    return best


# ---------------------------------------------------------------------------
# large-deviation counting
# ---------------------------------------------------------------------------

def _exact_eps(eps) -> Fraction:
    """Thresholds are compared exactly; floats are read decimally.

    Fraction(str(0.3)) == 3/10, so a caller passing the literal 0.3 gets
    the decimal threshold rather than the binary float below it.
    """
    if isinstance(eps, Fraction):
        return eps
    if isinstance(eps, int):
        return Fraction(eps)
    return Fraction(str(eps))


def _count_classes(M: DyadicMartingale, base: str, eps: Fraction, k: int) -> int:
    """Exact count for the digit-driven kinds via per-level value classes.

    Intervals at the same relative level with equal value difference and
    equal last digit transition identically, so the enumeration walks
    one (difference, last digit) histogram per level, retiring classes
    early once the remaining maximal gain can no longer move them across
    the threshold.
    """
    thr = eps * k
    n0 = len(base)
    walk = M.kind == "random_walk"
    # remaining maximal |difference| gain strictly below relative level m
    gain_after = [0] * (k + 1)
    for m in range(k - 1, -1, -1):
        lvl = n0 + m + 1
        step = 1 if walk or lvl % 2 == 0 else 0
        gain_after[m] = gain_after[m + 1] + step
    last = int(base[-1]) if base else 0
    states = {(0, last): 1}
    done = 0
    for m in range(1, k + 1):
        lvl = n0 + m
        nxt: Dict[Tuple[int, int], int] = {}
        if walk:
            for (d, _), c in states.items():
                for digit, dd in ((0, d - 1), (1, d + 1)):
                    key = (dd, digit)
                    nxt[key] = nxt.get(key, 0) + c
        elif lvl % 2 == 1:
            for (d, _), c in states.items():
                for digit in (0, 1):
                    key = (d, digit)
                    nxt[key] = nxt.get(key, 0) + c
        else:
            for (d, b), c in states.items():
                for digit in (0, 1):
                    dd = d + 1 if digit == b else d - 1
                    key = (dd, digit)
                    nxt[key] = nxt.get(key, 0) + c
        states = {}
        rem = gain_after[m]
        for (d, b), c in nxt.items():
            if abs(d) - rem > thr:
                done += c << (k - m)
            elif abs(d) + rem > thr:
                states[(d, b)] = states.get((d, b), 0) + c
            # else the class can never cross; drop it
    return done


def _count_dfs(M: DyadicMartingale, base: str, eps: Fraction, k: int) -> int:
    """Pruned digit DFS for arbitrary evaluators (exact, possibly slow)."""
    thr = eps * k
    v0 = M.value(base)
    gain_after = [0.0] * (k + 1)
    for m in range(k - 1, -1, -1):
        gain_after[m] = gain_after[m + 1] + M.max_step(len(base) + m + 1)

    def rec(address: str, m: int) -> int:
        d = abs(M.value(address) - v0)
        rem = gain_after[m]
        if d - rem > thr:
            return 1 << (k - m)
        if d + rem <= thr:
            return 0
        return rec(address + "0", m + 1) + rec(address + "1", m + 1)

    return rec(base, 0)


def azuma_counts(M: DyadicMartingale, eps, k: int, base: str = "") -> int:
    """Number of intervals J below `base` at relative depth k with
    |M_J - M_base| > eps * k (strict).

    Exact: materialized trees are counted by direct comparison, the
    digit-driven kinds by class enumeration with retirement, and other
    evaluators by pruned digit DFS.  eps given as a float is interpreted
    decimally (0.3 means 3/10).
    """
    _validate_address(base)
    if k < 1:
        raise ValueError("relative depth k must be >= 1")
    e = _exact_eps(eps)
    if e <= 0:
        raise ValueError("eps must be positive")
    if M._levels is not None:
        n = len(base) + k
        if n > M.depth:
            raise ValueError(f"need depth {n}, have {M.depth}")
        j0 = int(base, 2) if base else 0
        sub = M._levels[n][j0 << k:(j0 + 1) << k]
        v0 = M.value(base)
        diffs = np.abs(sub - v0)
        thr = float(e * k)
        # exact comparison: resolve near-threshold entries with Fractions
        out = int(np.sum(diffs > thr + 1e-9))
        border = np.flatnonzero(np.abs(diffs - thr) <= 1e-9)
        for i in border:
            if Fraction(float(diffs[i])) > e * k:
                out += 1
        return out
    if M.kind in ("random_walk", "kahane"):
        return _count_classes(M, base, e, k)
    return _count_dfs(M, base, e, k)


@dataclass(frozen=True)
class AzumaRow:
    eps: float
    k: int
    count: int
    total: int

    def as_tuple(self):
        return (self.eps, self.k, self.count, self.total)


@dataclass(frozen=True)
class AzumaFit:
    gamma: float
    c: float
    points: int

    def bound(self, eps: float, k: int, base_length: float = 1.0) -> float:
        return self.c * (2.0 ** k) * base_length * math.exp(-self.gamma * eps * eps * k)


def azuma_table(M: DyadicMartingale, eps_grid: Sequence, k_grid: Sequence[int],
                base: str = "") -> List[AzumaRow]:
    rows = []
    for eps in eps_grid:
        for k in k_grid:
            rows.append(AzumaRow(float(_exact_eps(eps)), int(k),
                                 azuma_counts(M, eps, int(k), base), 1 << int(k)))
    return rows


def azuma_fit(rows: Sequence[AzumaRow], base_length: float = 1.0) -> AzumaFit:
    """Least-squares decay rate for log(count / (2^k |I|)) against eps^2 k.

    Zero counts satisfy any bound and are left out of the regression;
    the constant is then lifted so that count <= C 2^k |I| e^{-gamma
    eps^2 k} holds at every positive row.
    """
    xs, ys = [], []
    for r in rows:
        if r.count > 0:
            xs.append(r.eps * r.eps * r.k)
            ys.append(math.log(r.count / (r.total * base_length)))
    if len(xs) < 2 or max(xs) == min(xs):
        raise ValueError("need at least two distinct positive rows to fit")
    slope, intercept = np.polyfit(np.array(xs), np.array(ys), 1)
    gamma = -float(slope)
    log_c = max(y + gamma * x for x, y in zip(xs, ys))
    return AzumaFit(gamma=gamma, c=math.exp(log_c), points=len(xs))


# ---------------------------------------------------------------------------
# point sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeqEntry:
    address: str
    generation: int = 0

    def __post_init__(self):
        _validate_address(self.address)

    @property
    def level(self) -> int:
        return len(self.address)

    @property
    def gap(self) -> Fraction:
        """Boundary distance d = 1 - |z| of the anchor (= interval length)."""
        return Fraction(1, 1 << self.level)

    def angle(self, grid_theta: Fraction) -> Fraction:
        idx = int(self.address, 2) if self.address else 0
        return mod1(grid_theta + (idx + Fraction(1, 2)) * self.gap)

    @property
    def mass(self) -> Fraction:
        d = self.gap
        return d * (2 - d)


class PointSeq:
    """A sequence of disc points anchored at dyadic tree addresses.

    The anchor of an address of length k has modulus 1 - 2^{-k} and the
    central angle of its interval (shifted by grid_theta), so each top
    half holds at most one anchor and distinct addresses mean distinct
    points.  Entries may carry a generation tag for builder output.
    """

    def __init__(self, entries, grid_theta=0, on_duplicate: str = "raise"):
        norm = []
        for e in entries:
            if isinstance(e, SeqEntry):
                norm.append(e)
            elif isinstance(e, str):
                norm.append(SeqEntry(e))
            else:
                norm.append(SeqEntry(*e))
        seen: Dict[str, int] = {}
        dups = []
        for e in norm:
            seen[e.address] = seen.get(e.address, 0) + 1
            if seen[e.address] == 2:
                dups.append(e.address)
        if dups and on_duplicate == "raise":
            raise ValueError(f"duplicate addresses (one point per top half): {dups}")
        self.entries: Tuple[SeqEntry, ...] = tuple(norm)
        self.grid_theta = mod1(grid_theta)
        self.duplicates: Tuple[str, ...] = tuple(dups)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def anchors(self) -> List[Tuple[Fraction, Fraction]]:
        """(boundary gap, angle) pairs, exact."""
        return [(e.gap, e.angle(self.grid_theta)) for e in self.entries]

    def masses(self) -> np.ndarray:
        return np.array([float(e.mass) for e in self.entries])

    def generation_spans(self) -> Dict[int, List[int]]:
        out: Dict[int, List[int]] = {}
        for i, e in enumerate(self.entries):
            out.setdefault(e.generation, []).append(i)
        return out

    def to_json(self) -> dict:
        return {
            "grid_theta": str(self.grid_theta),
            "entries": [{"address": e.address, "generation": e.generation}
                        for e in self.entries],
        }

    @classmethod
    def from_json(cls, data: dict, on_duplicate: str = "raise") -> "PointSeq":
        theta = data.get("grid_theta", 0)
        if isinstance(theta, str):
            theta = Fraction(theta)
        entries = [SeqEntry(d["address"], int(d.get("generation", 0)))
                   for d in data["entries"]]
        return cls(entries, grid_theta=theta, on_duplicate=on_duplicate)


def radial_chain(depth: int = 12, grid_theta=0) -> PointSeq:
    """Nested top halves along the leftmost digit path, levels 1..depth."""
    return PointSeq([SeqEntry("0" * j, generation=j) for j in range(1, depth + 1)],
                    grid_theta=grid_theta)


# ---------------------------------------------------------------------------
# stable disc metric from (gap, angle) pairs
# ---------------------------------------------------------------------------

def _pair_invariants(d1: Fraction, t1: Fraction, d2: Fraction, t2: Fraction):
    """(rho^2, 1 - rho^2) between anchors given exactly by gap and angle."""
    dt = mod1(t1 - t2)
    if dt > Fraction(1, 2):
        dt = 1 - dt
    sin_half = math.sin(math.pi * float(dt))
    rprod = float((1 - d1) * (1 - d2))
    cross = 4.0 * rprod * sin_half * sin_half
    num = float(d1 - d2) ** 2 + cross
    den = float(d1 + d2 - d1 * d2) ** 2 + cross
    m1 = float(d1 * (2 - d1))
    m2 = float(d2 * (2 - d2))
    return num / den, (m1 * m2) / den


def _log_inv_mass(level: int) -> float:
    """log(1/(1 - |z|^2)) at an anchor of the given level, stable at depth."""
    return level * math.log(2.0) - math.log(2.0 - 0.5 ** level)


def _anchor_of_address(address: str, grid_theta) -> Tuple[Fraction, Fraction]:
    e = SeqEntry(address)
    return e.gap, e.angle(mod1(grid_theta))


def default_probe_addresses(seq: PointSeq) -> List[str]:
    """Sequence addresses, all their ancestors, and the root (origin anchor)."""
    probes = {""}
    for e in seq:
        for i in range(len(e.address) + 1):
            probes.add(e.address[:i])
    return sorted(probes, key=lambda a: (len(a), a))


# ---------------------------------------------------------------------------
# Carleson sums
# ---------------------------------------------------------------------------

@dataclass
class CarlesonReport:
    sup: float
    argmax: str
    box_sup: float
    box_argmax: str
    probe_count: int

    def report(self) -> dict:
        return {
            "sup": self.sup,
            "argmax": self.argmax,
            "box_sup": self.box_sup,
            "box_argmax": self.box_argmax,
            "probe_count": self.probe_count,
        }


def carleson_sum_at(seq: PointSeq, gap, angle) -> float:
    """Sum of 1 - rho^2(z, z_n) at the point with boundary gap and angle."""
    d = Fraction(gap) if not isinstance(gap, Fraction) else gap
    t = mod1(angle)
    return sum(_pair_invariants(d, t, dq, tq)[1] for dq, tq in seq.anchors())


def carleson_sup(seq: PointSeq, probes: Optional[Sequence[str]] = None) -> CarlesonReport:
    """Sup of the invariant mass sum over probe anchors, plus the box form.

    Probes default to the sequence anchors, their tree ancestors, and
    the root anchor (the origin).  The box form is exact over all grid
    arcs: only address prefixes carry mass, so scanning prefixes attains
    the global sup of mu(S(I)) / |I|.
    """
    if probes is None:
        probes = default_probe_addresses(seq)
    anchors = seq.anchors()
    best, arg = -math.inf, ""
    for address in probes:
        d, t = _anchor_of_address(address, seq.grid_theta)
        total = sum(_pair_invariants(d, t, dq, tq)[1] for dq, tq in anchors)
        if total > best:
            best, arg = total, address
    box_best, box_arg = -math.inf, ""
    prefixes = {e.address[:i] for e in seq for i in range(len(e.address) + 1)}
    for a in sorted(prefixes, key=lambda s: (len(s), s)):
        mu = sum(float(e.mass) for e in seq if e.address.startswith(a))
        ratio = mu * (1 << len(a))
        if ratio > box_best:
            box_best, box_arg = ratio, a
    return CarlesonReport(sup=best, argmax=arg, box_sup=box_best,
                          box_argmax=box_arg, probe_count=len(probes))


# ---------------------------------------------------------------------------
# trace sums
# ---------------------------------------------------------------------------

def trace_sup_i(seq: PointSeq, M: DyadicMartingale, lam: float,
                probes: Optional[Sequence[str]] = None, r_levels: int = 12) -> dict:
    """Sup over probes z and radii r = 1 - 2^{-m} of the localized sum

        sum_{rho(z, z_n) < r} exp(lam (b_n - b_z)^2 / log(1/(1-r^2))) (1 - rho^2)

    with b taken from the martingale at the point's own interval.
    Returns the sup, where it is attained, and a per-radius profile.
    """
    if probes is None:
        probes = default_probe_addresses(seq)
    anchors = seq.anchors()
    b_entries = np.array([M.value(e.address) for e in seq])
    log_terms = [m * math.log(2.0) - math.log(2.0 - 0.5 ** m)
                 for m in range(1, r_levels + 1)]
    r2s = [(1.0 - 0.5 ** m) ** 2 for m in range(1, r_levels + 1)]
    sup, arg_probe, arg_m = -math.inf, "", 0
    by_radius = [0.0] * r_levels
    for address in probes:
        d, t = _anchor_of_address(address, seq.grid_theta)
        bz = M.value(address)
        rho2 = np.empty(len(anchors))
        inv = np.empty(len(anchors))
        for i, (dq, tq) in enumerate(anchors):
            rho2[i], inv[i] = _pair_invariants(d, t, dq, tq)
        db2 = (b_entries - bz) ** 2
        for mi in range(r_levels):
            mask = rho2 < r2s[mi]
            if not np.any(mask):
                continue
            with np.errstate(over="ignore"):
                total = float(np.sum(np.exp(lam * db2[mask] / log_terms[mi]) * inv[mask]))
            by_radius[mi] = max(by_radius[mi], total)
            if total > sup:
                sup, arg_probe, arg_m = total, address, mi + 1
    return {
        "lambda": lam,
        "sup": sup,
        "argmax_probe": arg_probe,
        "argmax_r_level": arg_m,
        "finite": math.isfinite(sup),
        "by_radius": by_radius,
        "probe_count": len(probes),
    }


def trace_weak_l1(seq: PointSeq, M: DyadicMartingale, lam: float,
                  probe: str = "") -> dict:
    """Weak-L1 norm of a_n = exp(lam (b_n - b_z)^2 / log(1/(1-rho^2))) (1-rho^2)
    at the probe anchor, computed as max_i i * a_(i) over the descending
    order statistics.  Entries colliding with the probe are excluded and
    counted; the plain sum of the a_n is reported alongside.
    """
    d, t = _anchor_of_address(probe, seq.grid_theta)
    bz = M.value(probe)
    values = []
    collisions = 0
    for e in seq:
        dq, tq = e.gap, e.angle(seq.grid_theta)
        if dq == d and tq == t:
            collisions += 1
            continue
        rho2, inv = _pair_invariants(d, t, dq, tq)
        # log(1/(1 - rho^2)) via the quotient's parts; safe for rho near 0 or 1
        log_inv = -math.log(inv) if inv < 1.0 else 0.0
        db2 = (M.value(e.address) - bz) ** 2
        if log_inv == 0.0:
            a = math.inf if db2 > 0 and lam > 0 else inv
        else:
            x = lam * db2 / log_inv
            a = math.exp(x) * inv if x < 700 else math.inf
        values.append(a)
    values.sort(reverse=True)
    weak = 0.0
    for i, a in enumerate(values, start=1):
        weak = max(weak, i * a)
    strong = float(sum(values))
    return {
        "lambda": lam,
        "weak_l1": weak,
        "strong_sum": strong,
        "count": len(values),
        "excluded_collisions": collisions,
        "finite": math.isfinite(weak),
    }


# ---------------------------------------------------------------------------
# threshold-crossing builder
# ---------------------------------------------------------------------------

def threshold_sequence(count: int, scale: float = 2.0) -> List[float]:
    """Default growth s_j = scale * j * log(j + 1), j = 1..count."""
    return [scale * j * math.log(j + 1.0) for j in range(1, count + 1)]


@dataclass
class ParentRecord:
    address: str
    value: int
    mass: float
    candidate_mass: float
    selected_mass: float
    window: float
    node_count: int
    deepest_level: int
    complete: bool
    note: str = ""

    def report(self) -> dict:
        return {
            "address": self.address,
            "value": self.value,
            "mass": self.mass,
            "candidate_mass": self.candidate_mass,
            "selected_mass": self.selected_mass,
            "window": self.window,
            "node_count": self.node_count,
            "deepest_level": self.deepest_level,
            "complete": self.complete,
            "note": self.note,
        }


@dataclass
class GenerationRecord:
    index: int
    threshold: float
    complete: bool
    mass: float
    node_count: int
    parents: List[ParentRecord] = field(default_factory=list)

    def report(self) -> dict:
        return {
            "index": self.index,
            "threshold": self.threshold,
            "complete": self.complete,
            "mass": self.mass,
            "node_count": self.node_count,
            "parents": [p.report() for p in self.parents],
        }


@dataclass
class BuildResult:
    seq: PointSeq
    thresholds: List[float]
    generations: List[GenerationRecord]
    depth_budget: int
    requested: int

    @property
    def completed_generations(self) -> int:
        return sum(1 for g in self.generations if g.complete)

    @property
    def complete(self) -> bool:
        return self.completed_generations >= self.requested

    def report(self) -> dict:
        return {
            "requested_generations": self.requested,
            "completed_generations": self.completed_generations,
            "complete": self.complete,
            "depth_budget": self.depth_budget,
            "thresholds": list(self.thresholds),
            "generations": [g.report() for g in self.generations],
            "sequence": self.seq.to_json(),
        }


def _crossing_classes(k0: int, value0: int, s: float, depth_budget: int):
    """First-crossing (level, value) classes below a parent sign path.

    The quarter-pattern value moves by +-1 once per two levels, so the
    descendants split into sign classes; a class freezes at the first
    even level where value^2 >= s * log(1/(1 - |z|^2)).  Returns the
    frozen classes as (level, value, sign_path_count) in level order
    (larger values first within a level) plus the total surviving count.
    """
    live: Dict[int, int] = {value0: 1}
    classes: List[Tuple[int, int, int]] = []
    k = k0
    while k + 2 <= depth_budget and live:
        k += 2
        thr2 = s * _log_inv_mass(k)
        nxt: Dict[int, int] = {}
        for v, c in live.items():
            nxt[v + 1] = nxt.get(v + 1, 0) + c
            nxt[v - 1] = nxt.get(v - 1, 0) + c
        live = {}
        frozen = []
        for v, c in nxt.items():
            if v * v >= thr2:
                frozen.append((v, c))
            else:
                live[v] = c
        for v, c in sorted(frozen, key=lambda vc: -vc[0]):
            classes.append((k, v, c))
    return classes, sum(live.values())


def _sign_paths(k0: int, value0: int, s: float, target_level: int, target_value: int):
    """Yield the +-1 step tuples that first cross exactly at the target."""
    t = (target_level - k0) // 2

    def rec(prefix: Tuple[int, ...], v: int):
        step = len(prefix)
        if step > 0:
            k = k0 + 2 * step
            crossed = v * v >= s * _log_inv_mass(k)
            if crossed:
                if step == t and v == target_value:
                    yield prefix
                return
            if step == t:
                return
        for sgn in (1, -1):
            yield from rec(prefix + (sgn,), v + sgn)

    yield from rec((), value0)


_PAIRS = {1: ("00", "11"), -1: ("01", "10")}


def _expand_signs(parent: str, signs: Tuple[int, ...], start: int, stop: int):
    """Quarter-digit addresses number `start..stop-1` for a sign path."""
    t = len(signs)
    for mask in range(start, stop):
        parts = [parent]
        for i, sgn in enumerate(signs):
            parts.append(_PAIRS[sgn][(mask >> (t - 1 - i)) & 1])
        yield "".join(parts)


def counterexample_build(generations: int = 4, depth_budget: int = 60,
                         scale: float = 2.0, thresholds: Optional[Sequence[float]] = None,
                         grid_theta=0, node_budget: int = 1 << 15) -> BuildResult:
    """Select nested generations of quarter-pattern crossing nodes.

    Starting from the root, each generation-j parent is explored two
    levels at a time; a descendant class freezes at the first even level
    where value^2 >= s_j * log(1/(1 - |z|^2)).  Frozen nodes, shallowest
    first, are selected until the parent has passed between a quarter
    and a half of its own mass 1 - |z|^2 to its selection.  Freezing
    makes each generation an antichain, so its boxes are disjoint.

    The construction is existential at infinite depth only: a finite
    depth budget may leave a parent short of the quarter window, in
    which case the generation is recorded as incomplete with the
    achievable crossing mass, and building stops (the result carries the
    deepest completed generation).
    """
    if generations < 1:
        raise ValueError("need at least one generation")
    if depth_budget < 2 or depth_budget % 2 != 0:
        raise ValueError("depth budget must be a positive even level")
    s_list = list(thresholds) if thresholds is not None else threshold_sequence(generations, scale)
    if len(s_list) < generations:
        raise ValueError(f"need {generations} thresholds, got {len(s_list)}")
    if any(b <= a for a, b in zip(s_list, s_list[1:])):
        raise ValueError("thresholds must increase")
    if any(s <= 0 for s in s_list):
        raise ValueError("thresholds must be positive")

    parents: List[Tuple[str, int]] = [("", 0)]
    entries: List[SeqEntry] = []
    gen_records: List[GenerationRecord] = []
    for j in range(1, generations + 1):
        s = s_list[j - 1]
        records: List[ParentRecord] = []
        selected: List[Tuple[str, int]] = []
        complete = True
        for parent_addr, parent_val in parents:
            k0 = len(parent_addr)
            pmass = Fraction(1, 1 << k0) * (2 - Fraction(1, 1 << k0))
            quarter, half = pmass / 4, pmass / 2
            classes, _live = _crossing_classes(k0, parent_val, s, depth_budget)
            cand = Fraction(0)
            for k, v, c in classes:
                d = Fraction(1, 1 << k)
                cand += (c << ((k - k0) // 2)) * d * (2 - d)
            rec = ParentRecord(
                address=parent_addr, value=parent_val, mass=float(pmass),
                candidate_mass=float(cand), selected_mass=0.0, window=0.0,
                node_count=0, deepest_level=classes[-1][0] if classes else k0,
                complete=False,
            )
            if cand < quarter:
                rec.note = ("first-crossing mass within the depth budget "
                            "falls short of the quarter window")
                records.append(rec)
                complete = False
                continue
            sel_mass = Fraction(0)
            taken: List[Tuple[str, int]] = []
            for k, v, c in classes:
                if sel_mass >= quarter:
                    break
                d = Fraction(1, 1 << k)
                m = d * (2 - d)
                avail = c << ((k - k0) // 2)
                if sel_mass + m > half:
                    continue
                room = math.floor((half - sel_mass) / m)
                need = math.ceil((quarter - sel_mass) / m)
                n_take = min(avail, need, room)
                if n_take <= 0:
                    continue
                if len(taken) + n_take > node_budget:
                    rec.note = "node budget exhausted during selection"
                    break
                if (k - k0) // 2 > 32:
                    rec.note = "crossing class too deep to enumerate addresses"
                    break
                got = 0
                for signs in _sign_paths(k0, parent_val, s, k, v):
                    per = 1 << len(signs)
                    take_here = min(per, n_take - got)
                    for address in _expand_signs(parent_addr, signs, 0, take_here):
                        taken.append((address, v))
                    got += take_here
                    if got >= n_take:
                        break
                sel_mass += n_take * m
            rec.selected_mass = float(sel_mass)
            rec.window = float(sel_mass / pmass)
            rec.node_count = len(taken)
            rec.complete = quarter <= sel_mass <= half
            records.append(rec)
            if not rec.complete:
                complete = False
                continue
            selected.extend(taken)
        gen_mass = sum(r.selected_mass for r in records)
        gen_records.append(GenerationRecord(
            index=j, threshold=s, complete=complete, mass=gen_mass,
            node_count=sum(r.node_count for r in records), parents=records,
        ))
        if not complete:
            break
        entries.extend(SeqEntry(a, generation=j) for a, _ in selected)
        parents = selected
    return BuildResult(
        seq=PointSeq(entries, grid_theta=grid_theta),
        thresholds=s_list[:len(gen_records)],
        generations=gen_records,
        depth_budget=depth_budget,
        requested=generations,
    )


def weak_separation_ok(seq: PointSeq) -> bool:
    """True when no two same-generation addresses are nested (disjoint boxes)."""
    by_gen = seq.generation_spans()
    for idxs in by_gen.values():
        addrs = sorted(seq.entries[i].address for i in idxs)
        for a, b in zip(addrs, addrs[1:]):
            if b.startswith(a):
                return False
    return True


def divergence_terms(seq: PointSeq, M: DyadicMartingale, lam: float,
                     thresholds: Sequence[float]) -> dict:
    """Per-generation lower-bound terms t_j = e^{lam s_j} * (generation mass)
    next to the actual exponential sums over each generation.

    The geometric envelope e^{lam s_j} 4^{-j} sits below t_j whenever the
    generation masses hold their 4^{-j} floor; the running sums of the
    actual terms are what diverge once lam s_j outruns j log 4.
    """
    spans = seq.generation_spans()
    gens = sorted(g for g in spans if g > 0)
    if gens and len(thresholds) < gens[-1]:
        raise ValueError("need one threshold per generation present")
    b0 = M.value("")
    rows = []
    partial = 0.0
    for j in gens:
        s = thresholds[j - 1]
        mass = 0.0
        actual = 0.0
        for i in spans[j]:
            e = seq.entries[i]
            m = float(e.mass)
            mass += m
            diff2 = (M.value(e.address) - b0) ** 2
            x = lam * diff2 / _log_inv_mass(e.level)
            actual += math.exp(x) * m if x < 700 else math.inf
        t = math.exp(lam * s) * mass
        partial += actual
        rows.append({
            "generation": j,
            "threshold": s,
            "mass": mass,
            "t": t,
            "envelope": math.exp(lam * s) * 4.0 ** (-j),
            "actual": actual,
            "partial_actual": partial,
        })
    return {"lambda": lam, "rows": rows,
            "finite": all(math.isfinite(r["actual"]) for r in rows)}
