"""Crystallographic root systems, Weyl groups and chamber geometry.

Conventions
-----------
Every system lives in an ambient space whose dimension equals its rank, so
that the roots span it.

* ``A_n``: the vectors ``e_i - e_j`` of R^{n+1}, written in an orthonormal
  basis of the sum-zero hyperplane whose first vector points along
  ``(n, n-2, ..., -n)``.  All roots have squared length 2.
* ``B_n``: short roots ``±e_i`` (|α|² = 1), long roots ``±e_i ± e_j``.
* ``C_n``: short roots ``±e_i ± e_j``, long roots ``±2e_i`` (|α|² = 4).
* ``D_n``: ``±e_i ± e_j`` (|α|² = 2), n ≥ 2.
* ``BC_n``: ``±e_i``, ``±2e_i`` and ``±e_i ± e_j``.

Positive roots are those with ``(α, u) > 0`` for ``u = (1, ε, ε², ...)``.
Simple roots are the positive roots that are not a sum of two positive
roots.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import nnls

TOL = 1e-9
MATRIX_TOL = 1e-12

FAMILIES = ("A", "B", "C", "D", "BC", "custom")

# Orbit labels per family in the order multiplicities are accepted.
ORBIT_LABELS = {
    "A": ("all",),
    "D": ("all",),
    "B": ("short", "long"),
    "C": ("short", "long"),
    "BC": ("short", "double", "long"),
}


class RootSystemError(ValueError):
    """Invalid root-system construction request."""


@dataclass(frozen=True)
class AxiomReport:
    ok: bool
    axiom: str | None = None
    witness: tuple[int, ...] = ()
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True, eq=False)
class WeylElement:
    """Element of W stored as a reduced word in simple reflections and a matrix.

    ``word`` holds indices into the positive-root list of the owning system;
    the matrix is ``r_{word[0]} @ r_{word[1]} @ ...``.
    """

    word: tuple[int, ...]
    matrix: np.ndarray
    index: int = -1

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.matrix.T

    @property
    def length(self) -> int:
        return len(self.word)

    def word_str(self) -> str:
        return "-".join(str(i) for i in self.word)


@dataclass(frozen=True)
class ChamberDecomposition:
    x_plus: np.ndarray
    w: WeylElement


def _matrix_key(m: np.ndarray) -> tuple:
    return tuple((np.round(m, 9) + 0.0).ravel().tolist())


def reflect(alpha, x):
    """Reflect ``x`` (any leading shape) in the hyperplane orthogonal to ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    nrm2 = float(alpha @ alpha)
    if nrm2 == 0.0:
        raise RootSystemError("cannot reflect in a zero root")
    x = np.asarray(x, dtype=float)
    coef = 2.0 * _pair(x, alpha) / nrm2
    return x - coef[..., None] * alpha if np.ndim(coef) else x - coef * alpha


def _pair(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Inner product along the last axis, summed coordinate by coordinate.

    Written as an explicit elementwise loop so results do not depend on how
    many rows are processed together (BLAS kernels may reorder sums).
    """
    out = x[..., 0] * v[0]
    for j in range(1, v.shape[0]):
        out = out + x[..., j] * v[j]
    return out


def pairings(x: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """``(v_i, x)`` for every row ``v_i``; result shape ``x.shape[:-1] + (m,)``."""
    x = np.asarray(x, dtype=float)
    out = x[..., None, 0] * vectors[:, 0]
    for j in range(1, vectors.shape[1]):
        out = out + x[..., None, j] * vectors[:, j]
    return out


def combine(coeffs: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """``Σ_i coeffs[..., i] * vectors[i]`` with a fixed summation order."""
    out = coeffs[..., 0, None] * vectors[0]
    for i in range(1, vectors.shape[0]):
        out = out + coeffs[..., i, None] * vectors[i]
    return out


def _regular_vector(roots: np.ndarray) -> np.ndarray:
    n = roots.shape[1]
    for eps in (0.1, 0.01, 1e-3, 1e-4, 1e-5, 1e-6):
        u = eps ** np.arange(n, dtype=float)
        if np.min(np.abs(roots @ u)) > TOL:
            return u
    raise RootSystemError("could not find a regular vector for the given roots")


def _orbits(roots: np.ndarray) -> np.ndarray:
    """Label each root with the index of its Weyl orbit (closure under reflections)."""
    m = len(roots)
    index = {_matrix_key(r): i for i, r in enumerate(roots)}
    orbit = -np.ones(m, dtype=int)
    label = 0
    for start in range(m):
        if orbit[start] >= 0:
            continue
        orbit[start] = label
        queue = deque([start])
        while queue:
            i = queue.popleft()
            for a in roots:
                j = index.get(_matrix_key(reflect(a, roots[i])))
                if j is not None and orbit[j] < 0:
                    orbit[j] = label
                    queue.append(j)
        label += 1
    return orbit


def validate_axioms(roots, multiplicities=None, crystallographic: bool = True) -> AxiomReport:
    """Check the root-system axioms and W-invariance of the multiplicity.

    Violations are returned, never raised.  Witness indices refer to rows of
    ``roots``.
    """
    r = np.atleast_2d(np.asarray(roots, dtype=float))
    if r.size == 0:
        return AxiomReport(False, "1", (), "empty root set")
    norms = np.einsum("ij,ij->i", r, r)
    zero = np.flatnonzero(norms < TOL)
    if zero.size:
        return AxiomReport(False, "1", (int(zero[0]),), "0 is listed as a root")
    if np.linalg.matrix_rank(r, tol=1e-8) < r.shape[1]:
        return AxiomReport(False, "1", (), "roots do not span the ambient space")
    keys = {}
    for i, v in enumerate(r):
        if _matrix_key(v) in keys:
            return AxiomReport(False, "1", (keys[_matrix_key(v)], i), "duplicate root")
        keys[_matrix_key(v)] = i
    for i, a in enumerate(r):
        for j, b in enumerate(r):
            if _matrix_key(reflect(a, b)) not in keys:
                return AxiomReport(False, "2", (i, j), f"r_{i}(root {j}) is not a root")
    if crystallographic:
        gram = r @ r.T
        pair = 2.0 * gram / norms[:, None]
        bad = np.abs(pair - np.round(pair)) > 1e-8
        if bad.any():
            i, j = np.argwhere(bad)[0]
            return AxiomReport(
                False, "3", (int(i), int(j)),
                f"(α∨_{i}, α_{j}) = {pair[i, j]:.6g} is not an integer",
            )
    if multiplicities is not None:
        k = np.broadcast_to(np.asarray(multiplicities, dtype=float), (len(r),))
        for i, a in enumerate(r):
            for j, b in enumerate(r):
                jj = keys[_matrix_key(reflect(a, b))]
                if abs(k[jj] - k[j]) > 1e-12:
                    return AxiomReport(
                        False, "W-invariance", (j, jj),
                        f"k differs on roots {j} and {jj} of the same orbit",
                    )
    return AxiomReport(True)


@dataclass(frozen=True, eq=False)
class RootSystem:
    """A validated root system with a W-invariant multiplicity function.

    ``roots`` is an ``(m, n)`` array; ``multiplicities`` has one entry per
    root.  Derived data (positive and simple roots, ρ, the Weyl group) is
    computed at construction or lazily and never mutated afterwards.
    """

    roots: np.ndarray
    multiplicities: np.ndarray
    family: str = "custom"
    crystallographic: bool = True
    orbit_names: tuple[str, ...] = ()
    _u: np.ndarray = field(init=False, repr=False)
    _orbit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        roots = np.atleast_2d(np.asarray(self.roots, dtype=float))
        k = np.broadcast_to(np.asarray(self.multiplicities, dtype=float), (len(roots),)).copy()
        if self.family not in FAMILIES:
            raise RootSystemError(f"unknown family {self.family!r}")
        report = validate_axioms(roots, k, crystallographic=self.crystallographic)
        if not report:
            raise RootSystemError(f"axiom {report.axiom} violated: {report.message}")
        if np.any(k <= 0):
            raise RootSystemError("multiplicities must be strictly positive")
        roots.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "roots", roots)
        object.__setattr__(self, "multiplicities", k)
        object.__setattr__(self, "_u", _regular_vector(roots))
        object.__setattr__(self, "_orbit", _orbits(roots))

    # basic shape -----------------------------------------------------------
    @property
    def rank(self) -> int:
        return self.roots.shape[1]

    @property
    def orbit(self) -> np.ndarray:
        return self._orbit

    @cached_property
    def positive_index(self) -> np.ndarray:
        return np.flatnonzero(self.roots @ self._u > 0)

    @cached_property
    def positive_roots(self) -> np.ndarray:
        return self.roots[self.positive_index]

    @cached_property
    def positive_k(self) -> np.ndarray:
        return self.multiplicities[self.positive_index]

    @cached_property
    def positive_norm2(self) -> np.ndarray:
        p = self.positive_roots
        return np.einsum("ij,ij->i", p, p)

    @cached_property
    def simple_index(self) -> np.ndarray:
        """Indices into ``positive_roots`` of the simple roots.

        A positive root is simple when it is not a nonnegative combination of
        the positive roots outside its own line (extreme rays of the positive
        cone); this also covers non-crystallographic systems.
        """
        pos = self.positive_roots
        unit = pos / np.linalg.norm(pos, axis=1, keepdims=True)
        simple = []
        for i, a in enumerate(unit):
            others = [j for j in range(len(pos)) if not np.allclose(unit[j], a, atol=1e-9)]
            if not others:
                simple.append(i)
                continue
            _, resid = nnls(unit[others].T, a)
            if resid > 1e-9:
                simple.append(i)
        # keep one representative per line (the shorter root of a BC pair)
        out, seen = [], []
        for i in sorted(simple, key=lambda j: float(pos[j] @ pos[j])):
            if not any(np.allclose(unit[i], unit[j], atol=1e-9) for j in seen):
                seen.append(i)
                out.append(i)
        return np.array(sorted(out), dtype=int)

    @cached_property
    def simple_roots(self) -> np.ndarray:
        return self.positive_roots[self.simple_index]

    @cached_property
    def rho(self) -> np.ndarray:
        return 0.5 * combine(self.positive_k, self.positive_roots)

    @cached_property
    def is_reduced(self) -> bool:
        keys = {_matrix_key(r) for r in self.roots}
        return not any(_matrix_key(2 * r) in keys for r in self.roots)

    # Weyl group ------------------------------------------------------------
    @cached_property
    def weyl_group(self) -> list[WeylElement]:
        return generate_weyl_group(self)

    @cached_property
    def _weyl_lookup(self) -> dict:
        return {_matrix_key(w.matrix): w.index for w in self.weyl_group}

    def element_index(self, matrix: np.ndarray) -> int:
        return self._weyl_lookup[_matrix_key(matrix)]

    @cached_property
    def weyl_matrices(self) -> np.ndarray:
        return np.stack([w.matrix for w in self.weyl_group])

    @cached_property
    def reflection_table(self) -> np.ndarray:
        """``table[a, w]`` is the index of ``r_a · w`` for positive root ``a``."""
        table = np.empty((len(self.positive_roots), len(self.weyl_group)), dtype=int)
        for a, alpha in enumerate(self.positive_roots):
            for w in self.weyl_group:
                table[a, w.index] = self.element_index(reflect(alpha, w.matrix.T).T)
        return table

    def identity(self) -> WeylElement:
        return self.weyl_group[0]

    def in_chamber(self, x, tol: float = 0.0) -> np.ndarray:
        return np.all(pairings(np.asarray(x, float), self.positive_roots) >= -tol, axis=-1)

    def with_multiplicities(self, multiplicities) -> "RootSystem":
        return RootSystem(self.roots, multiplicities, self.family,
                          self.crystallographic, self.orbit_names)

    def describe(self) -> str:
        return f"{self.family}{self.rank}" if self.family != "custom" else f"custom(rank {self.rank})"


# construction --------------------------------------------------------------

def _type_a_basis(n: int) -> np.ndarray:
    """Orthonormal basis (rows) of the sum-zero hyperplane in R^{n+1}."""
    first = np.arange(n, -n - 1, -2, dtype=float)
    vecs = [first]
    for i in range(n - 1):
        v = np.zeros(n + 1)
        v[i], v[i + 1] = 1.0, -1.0
        vecs.append(v)
    q, _ = np.linalg.qr(np.array(vecs).T)
    q = q.T
    if q[0] @ first < 0:
        q[0] = -q[0]
    return q


def _standard_roots(family: str, n: int) -> tuple[list[np.ndarray], list[str]]:
    e = np.eye(n)
    roots, labels = [], []

    def add(v, label):
        roots.append(v)
        labels.append(label)

    if family == "A":
        basis = _type_a_basis(n)
        E = np.eye(n + 1)
        for i in range(n + 1):
            for j in range(n + 1):
                if i != j:
                    add(basis @ (E[i] - E[j]), "all")
        return roots, labels
    pair_label = {"B": "long", "C": "short", "D": "all", "BC": "long"}[family]
    for i in range(n):
        for j in range(i + 1, n):
            for s1 in (1, -1):
                for s2 in (1, -1):
                    add(s1 * e[i] + s2 * e[j], pair_label)
    for i in range(n):
        for s in (1, -1):
            if family in ("B", "BC"):
                add(s * e[i], "short")
            if family == "C":
                add(2 * s * e[i], "long")
            if family == "BC":
                add(2 * s * e[i], "double")
    return roots, labels


def build_standard(family: str, rank: int, multiplicities=1.0) -> RootSystem:
    """Build a standard root system of type A, B, C, D or BC.

    ``multiplicities`` is a scalar (same value on every orbit), a sequence
    ordered as ``ORBIT_LABELS[family]`` restricted to orbits present at this
    rank, or a mapping from orbit label to value.
    """
    family = family.upper()
    if family not in ORBIT_LABELS:
        raise RootSystemError(f"unknown family {family!r}")
    rank = int(rank)
    if rank < 1 or (family == "D" and rank < 2):
        raise RootSystemError(f"rank {rank} too small for family {family}")
    vecs, labels = _standard_roots(family, rank)
    present = tuple(lbl for lbl in ORBIT_LABELS[family] if lbl in labels)
    if isinstance(multiplicities, dict):
        unknown = set(multiplicities) - set(present)
        missing = set(present) - set(multiplicities)
        if unknown or missing:
            raise RootSystemError(
                f"{family}{rank} needs multiplicities for orbits {present}; "
                f"got {sorted(multiplicities)}"
            )
        kmap = {lbl: float(multiplicities[lbl]) for lbl in present}
    elif np.ndim(multiplicities) == 0:
        kmap = {lbl: float(multiplicities) for lbl in present}
    else:
        values = list(multiplicities)
        if len(values) == 1:
            values = values * len(present)
        if len(values) != len(present):
            raise RootSystemError(
                f"{family}{rank} takes {len(present)} multiplicities {present}, got {len(values)}"
            )
        kmap = dict(zip(present, map(float, values)))
    if family == "BC" and kmap["double"] <= 0:
        raise RootSystemError("BC requires k_2α > 0; use family B when the doubled roots are absent")
    for lbl, v in kmap.items():
        if not v > 0:
            raise RootSystemError(f"multiplicity for orbit {lbl!r} must be > 0, got {v}")
    k = np.array([kmap[lbl] for lbl in labels])
    model = RootSystem(np.array(vecs), k, family=family)
    return replace(model, orbit_names=_orbit_labels(model, labels))


def _orbit_labels(model: RootSystem, root_labels) -> tuple[str, ...]:
    """Orbit names indexed by ``model.orbit`` ids; merged labels are joined with ``+``."""
    names: list[list[str]] = [[] for _ in range(int(model.orbit.max()) + 1)]
    for o, lbl in zip(model.orbit, root_labels):
        if lbl not in names[o]:
            names[o].append(lbl)
    return tuple("+".join(n) for n in names)


def from_roots(roots: Sequence[Sequence[float]], multiplicities=1.0) -> RootSystem:
    return RootSystem(np.asarray(roots, dtype=float), multiplicities, family="custom")


def parse_system_name(name: str) -> tuple[str, int]:
    """``"A2"`` -> ``("A", 2)``; ``"BC1"`` -> ``("BC", 1)``."""
    name = name.strip().upper()
    letters = name.rstrip("0123456789")
    digits = name[len(letters):]
    if not letters or not digits:
        raise RootSystemError(f"cannot parse system name {name!r}")
    return letters, int(digits)


# Weyl group ----------------------------------------------------------------

def _reflection_matrix(alpha: np.ndarray) -> np.ndarray:
    n = len(alpha)
    return np.eye(n) - 2.0 * np.outer(alpha, alpha) / (alpha @ alpha)


def generate_weyl_group(model: RootSystem, max_order: int = 100_000) -> list[WeylElement]:
    """Enumerate W by breadth-first closure over the simple reflections.

    Elements come out ordered by word length, then lexicographically by
    word, and each carries its lexicographically smallest reduced word.
    """
    gens = [(int(i), _reflection_matrix(model.positive_roots[i])) for i in model.simple_index]
    n = model.rank
    identity = np.eye(n)
    seen = {_matrix_key(identity): 0}
    elements = [WeylElement((), identity, 0)]
    frontier = [elements[0]]
    while frontier:
        nxt = []
        for w in frontier:
            for gi, g in gens:
                m = w.matrix @ g
                key = _matrix_key(m)
                if key in seen:
                    continue
                el = WeylElement(w.word + (gi,), m, len(elements))
                seen[key] = el.index
                elements.append(el)
                nxt.append(el)
                if len(elements) > max_order:
                    raise RootSystemError(
                        f"Weyl group closure exceeded {max_order} elements; input is not a finite root system"
                    )
        frontier = nxt
    return elements


# chamber geometry ----------------------------------------------------------

def fold(model: RootSystem, x, max_iter: int | None = None) -> np.ndarray:
    """Map points (any leading shape) to their image in the closed positive chamber."""
    x = np.array(x, dtype=float, copy=True)
    single = x.ndim == 1
    pts = x.reshape(-1, model.rank)
    simple = model.simple_roots
    norm2 = np.einsum("ij,ij->i", simple, simple)
    limit = max_iter or 4 * (len(model.positive_roots) + 2)
    for _ in range(limit):
        p = pairings(pts, simple)
        j = np.argmin(p, axis=1)
        pm = p[np.arange(len(pts)), j]
        neg = pm < 0
        if not neg.any():
            break
        coef = np.where(neg, 2.0 * pm / norm2[j], 0.0)
        pts = pts - coef[:, None] * simple[j]
    else:
        raise RuntimeError("chamber fold did not converge")
    return pts[0] if single else pts.reshape(x.shape)


def radial_decompose(model: RootSystem, x) -> ChamberDecomposition:
    """Return ``(x⁺, w)`` with ``w · x⁺ = x`` and ``x⁺`` in the closed chamber.

    When ``x`` lies on walls several ``w`` qualify; the one with the shortest
    word (then lexicographically smallest) is returned.
    """
    x = np.asarray(x, dtype=float)
    x_plus = fold(model, x)
    scale = float(np.abs(x).max(initial=0.0))
    errors = np.array([float(np.max(np.abs(w.matrix @ x_plus - x))) for w in model.weyl_group])
    best = float(errors.min())
    if best > 1e-6 * max(1.0, scale):
        raise RuntimeError("no Weyl element maps the folded point back to x")
    # elements within rounding of the best fit all fix x (x on walls): take the first
    first = int(np.flatnonzero(errors <= best + 16 * np.finfo(float).eps * scale)[0])
    return ChamberDecomposition(x_plus, model.weyl_group[first])


def rescale_to_dunkl(model: RootSystem) -> RootSystem:
    """Reduced system ``{√2 α/|α|}`` with ``k'_β = Σ k_γ`` over roots γ ∥ β."""
    dirs: dict[tuple, int] = {}
    out_roots: list[np.ndarray] = []
    out_k: list[float] = []
    out_lbl: list[str] = []
    for i, (alpha, k) in enumerate(zip(model.roots, model.multiplicities)):
        lbl = model.orbit_names[model.orbit[i]] if model.orbit_names else f"orbit{model.orbit[i]}"
        beta = math.sqrt(2.0) * alpha / np.linalg.norm(alpha)
        key = _matrix_key(beta)
        if key in dirs:
            out_k[dirs[key]] += float(k)
            out_lbl[dirs[key]] += "+" + lbl
        else:
            dirs[key] = len(out_roots)
            out_roots.append(beta)
            out_k.append(float(k))
            out_lbl.append(lbl)
    out = RootSystem(np.array(out_roots), np.array(out_k), family=model.family, crystallographic=False)
    return replace(out, orbit_names=_orbit_labels(out, out_lbl))


def chamber_signs(model: RootSystem, w: WeylElement) -> np.ndarray:
    """Sign ε^α ∈ {±1} per positive root with ε^α α ∈ w R⁺."""
    image = w.matrix @ model._u
    return np.where(model.positive_roots @ image > 0, 1.0, -1.0)


def dump_roots(model: RootSystem) -> Iterable[str]:
    """Structured text dump: one root per line (coordinates, multiplicity, orbit, positive flag)."""
    pos = set(model.positive_index.tolist())
    yield f"# family={model.family} rank={model.rank} roots={len(model.roots)} |W|={len(model.weyl_group)}"
    yield "# " + " ".join(f"x{i + 1}" for i in range(model.rank)) + " k orbit positive"
    for i, (r, k, o) in enumerate(zip(model.roots, model.multiplicities, model.orbit)):
        coords = " ".join(f"{c:.15g}" for c in (r + 0.0))
        label = model.orbit_names[o] if o < len(model.orbit_names) else f"orbit{o}"
        yield f"{coords} {k:.15g} {label} {int(i in pos)}"
