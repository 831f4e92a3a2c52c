"""Multi-maps f = (f_1, ..., f_s) and the dynamics of the semigroup they generate.

Words are tuples of 1-based symbols and act in the skew-product order:
``evaluate_word(F, (1, 2), z) == f_2(f_1(z))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .maps import RationalMap, RootFindingError, parse_map
from .sphere import INF, MobiusMap, chordal_distance, is_inf, point, to_unit_sphere
from .streams import chunk_map, stream

Word = tuple[int, ...]

PCB_RADIUS = 1e4
EXPANSION_THRESHOLD = 0.02


class SeedingError(RuntimeError):
    pass


class MultiMap:
    """An ordered tuple of non-constant rational maps."""

    def __init__(self, maps: Sequence[RationalMap], labels: Sequence[str] | None = None):
        maps = tuple(maps)
        if not maps:
            raise ValueError("a multi-map needs at least one generator")
        self.maps = maps
        self.labels = tuple(labels) if labels else tuple(repr(m) for m in maps)
        self.degrees = tuple(m.degree for m in maps)
        self.d = sum(self.degrees)

    @classmethod
    def parse(cls, exprs: Sequence[str], params=None) -> MultiMap:
        return cls([parse_map(e, params) for e in exprs], labels=exprs)

    @property
    def s(self) -> int:
        return len(self.maps)

    def __len__(self):
        return len(self.maps)

    def __getitem__(self, j: int) -> RationalMap:
        """1-based generator access, matching word symbols."""
        return self.maps[j - 1]

    def __repr__(self):
        return f"MultiMap({', '.join(self.labels)})"

    @property
    def is_polynomial(self) -> bool:
        return all(m.is_polynomial for m in self.maps)

    @cached_property
    def kernel_arrays(self):
        """Padded coefficient tables for the compiled kernels."""
        dmax = max(self.degrees)
        s = self.s
        nums = np.zeros((s, dmax + 1), dtype=complex)
        dens = np.zeros((s, dmax + 1), dtype=complex)
        numsr = np.zeros((s, dmax + 1), dtype=complex)
        densr = np.zeros((s, dmax + 1), dtype=complex)
        for j, m in enumerate(self.maps):
            n, dd, nr, dr = m.padded()
            k = m.degree + 1
            nums[j, :k], dens[j, :k], numsr[j, :k], densr[j, :k] = n, dd, nr, dr
        degs = np.array(self.degrees, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(degs)[:-1]]).astype(np.int64)
        return nums, dens, numsr, densr, degs, offsets

    def conjugated(self, phi: MobiusMap) -> MultiMap:
        return MultiMap([m.conjugate(phi) for m in self.maps])

    def escape_radius(self) -> float:
        """A radius R with |f_j(z)| >= 2|z| for |z| >= R and every generator (polynomials only)."""
        if not self.is_polynomial:
            raise ValueError("escape radius is defined for polynomial generators")
        crude = 2.0 * max(1.0 + float(np.sum(np.abs(m.num.coeffs))) for m in self.maps)
        safe = max(max(1.0, (2.0 + float(np.sum(np.abs(m.num.coeffs[:-1])))) / abs(m.lead)) for m in self.maps)
        return max(crude, safe)


def _check_word(F: MultiMap, word: Sequence[int]) -> Word:
    word = tuple(int(j) for j in word)
    for j in word:
        if not 1 <= j <= F.s:
            raise ValueError(f"symbol {j} out of range 1..{F.s}")
    return word


def evaluate_word(F: MultiMap, word: Sequence[int], z) -> complex:
    """f_w(z) = f_{w_n}( ... f_{w_1}(z))."""
    z = point(z)
    for j in _check_word(F, word):
        z = F[j](z)
    return z


def word_deriv_lognorm(F: MultiMap, word: Sequence[int], y) -> float:
    """log ||f_w'(y)|| by the chain rule along the orbit; -inf on critical branches."""
    z = point(y)
    total = 0.0
    for j in _check_word(F, word):
        v = F[j].sph_deriv(z)
        if v == 0.0:
            return -math.inf
        total += math.log(v)
        z = F[j](z)
    return total


# postcritical set ---------------------------------------------------------
@dataclass
class PostcriticalSet:
    points: np.ndarray
    bounded: bool
    depth: int
    truncated: bool
    max_modulus: float


def _key(z: complex, res: float):
    if not np.isfinite(z):
        return ("inf",)
    return (round(z.real / res), round(z.imag / res))


def postcritical_set(F: MultiMap, depth: int = 12, cap: int = 20000, radius: float = PCB_RADIUS,
                     resolution: float = 1e-9) -> PostcriticalSet:
    """Forward orbits of all critical values under all words of length <= depth.

    Breadth-first with a FIFO frontier, de-duplicated on a ``resolution`` grid
    and capped at ``cap`` points. For polynomial families, points beyond
    ``radius`` are recorded once and not iterated further (they escape).
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    seen: dict = {}
    cloud: list[complex] = []
    frontier: list[complex] = []
    bounded = True
    max_mod = 0.0
    truncated = False

    def add(z):
        nonlocal bounded, max_mod
        k = _key(z, resolution)
        if k in seen:
            return False
        seen[k] = True
        cloud.append(z)
        if np.isfinite(z):
            max_mod = max(max_mod, abs(z))
            if abs(z) > radius:
                bounded = False
        return True

    for m in F.maps:
        for v in m.critical_values():
            if add(v):
                frontier.append(v)
    level = 0
    while frontier and level < depth:
        level += 1
        nxt = []
        for z in frontier:
            if not np.isfinite(z) and F.is_polynomial:
                continue
            if F.is_polynomial and abs(z) > radius:
                continue
            for m in F.maps:
                w = m(z)
                if len(cloud) >= cap:
                    truncated = True
                    break
                if add(w):
                    nxt.append(w)
            if truncated:
                break
        frontier = nxt
        if truncated:
            break
    pts = np.array(cloud, dtype=complex)
    return PostcriticalSet(pts, bounded, level, truncated, max_mod)


# attracting cycles ----------------------------------------------------------
@dataclass
class AttractingCycle:
    word: Word
    points: list[complex]
    multiplier: float


def _words(s: int, max_len: int):
    from itertools import product

    for n in range(1, max_len + 1):
        for w in product(range(1, s + 1), repeat=n):
            # primitive words only, up to rotation
            if any(w[k:] + w[:k] < w for k in range(1, n)):
                continue
            if any(n % p == 0 and w == w[:p] * (n // p) for p in range(1, n)):
                continue
            yield w


def attracting_cycles(F: MultiMap, max_len: int = 2, iterations: int = 400,
                      max_period: int = 12) -> list[AttractingCycle]:
    """Attracting cycles of f_w for primitive words with |w| <= max_len.

    Each attracting cycle attracts a critical value, so iterating f_w from
    every critical value finds all of them (periods up to ``max_period``).
    """
    cvs = [v for m in F.maps for v in m.critical_values()]
    found: list[AttractingCycle] = []
    keys = set()
    for w in _words(F.s, max_len):
        for c in cvs:
            x = c
            for _ in range(iterations):
                x = evaluate_word(F, w, x)
            orbit = [x]
            for _ in range(max_period):
                orbit.append(evaluate_word(F, w, orbit[-1]))
            period = next((p for p in range(1, max_period + 1)
                           if chordal_distance(orbit[p], x) < 1e-9), None)
            if period is None:
                continue
            full = w * period
            lognorm = word_deriv_lognorm(F, full, x)
            mult = math.exp(lognorm) if lognorm > -math.inf else 0.0
            if mult >= 1.0:
                continue
            pts = [evaluate_word(F, full[:k], x) for k in range(len(full))]
            key = frozenset(_key(p, 1e-7) for p in pts)
            if key in keys:
                continue
            keys.add(key)
            found.append(AttractingCycle(full, pts, mult))
    return found


# Julia set by backward iteration ---------------------------------------------
def repelling_fixed_point(f: RationalMap) -> complex:
    """A repelling fixed point of f (finite preferred), largest multiplier first."""
    n, dd, _, _ = f.padded()
    # f(z) = z  <=>  N(z) - z D(z) = 0
    q = n.copy()
    q[1:] -= dd[:-1]
    extra = dd[-1]
    coeffs = np.append(q, -extra)
    from .maps import _trim, roots

    c = _trim(coeffs)
    cands = [complex(r) for r in roots(c)] if c.size > 1 else []
    if c.size - 1 < f.degree + 1:
        cands.append(INF)
    scored = []
    for z in cands:
        mult = f.sph_deriv(z)
        if mult > 1.0 + 1e-9 and chordal_distance(f(z), z) < 1e-8:
            scored.append((is_inf(z), -mult, z.real if not is_inf(z) else 0.0, z))
    if not scored:
        raise SeedingError(f"no repelling fixed point found for {f!r}")
    scored.sort(key=lambda t: t[:3])
    return scored[0][3]


def _chain_chunk(F: MultiMap, start: complex, nsteps: int, weights: np.ndarray, rng: np.random.Generator, nchains: int = 1):
    nums, dens, numsr, densr, degs, _ = F.kernel_arrays
    u = rng.random((nchains, nsteps, 2))
    cumw = np.cumsum(weights)
    cumw[-1] = 1.0 + 1e-12
    pts = np.empty((nchains, nsteps), dtype=complex)
    syms = np.empty((nchains, nsteps), dtype=np.int64)
    logd = np.empty((nchains, nsteps))
    status = np.zeros(nchains, dtype=np.int64)
    starts = np.full(nchains, start, dtype=complex)
    K.backward_chains(starts, u, cumw, nums, dens, numsr, densr, degs, pts, syms, logd, status)
    return pts, syms, logd, status


def generator_weights(F: MultiMap, mode: str = "uniform") -> np.ndarray:
    if mode == "uniform":
        return np.full(F.s, 1.0 / F.s)
    if mode == "degree":
        return np.array(F.degrees, dtype=float) / F.d
    raise ValueError(f"unknown weight mode {mode!r}")


def julia_backward_cloud(F: MultiMap, n_points: int, burn_in: int = 50, seed: int = 0,
                         weights: str = "uniform", chunk: int = 2048) -> np.ndarray:
    """Points of J(G) from random backward orbits started at a repelling fixed point.

    Each chunk is one chain that discards ``burn_in`` steps and then records
    ``chunk`` consecutive points.
    """
    start = repelling_fixed_point(F.maps[0])
    w = generator_weights(F, weights)
    nchunks = max(1, math.ceil(n_points / chunk))

    def run(k):
        pts, _, _, status = _chain_chunk(F, start, burn_in + chunk, w, stream(seed, "julia", k))
        if status[0] != K.OK:
            raise RootFindingError(f"backward chain {k} failed with status {status[0]}")
        return pts[0, burn_in:]

    parts = chunk_map(run, range(nchunks))
    return np.concatenate(parts)[:n_points]


def backward_step(F: MultiMap, pts: np.ndarray, seed: int, weights: str = "uniform") -> np.ndarray:
    """One random backward step applied to every point."""
    nums, dens, numsr, densr, degs, _ = F.kernel_arrays
    rng = stream(seed, "backward-step")
    w = np.cumsum(generator_weights(F, weights))
    w[-1] = 1.0 + 1e-12
    u = rng.random((pts.size, 1, 2))
    out = np.empty((pts.size, 1), dtype=complex)
    syms = np.empty((pts.size, 1), dtype=np.int64)
    logd = np.empty((pts.size, 1))
    status = np.zeros(pts.size, dtype=np.int64)
    K.backward_chains(np.ascontiguousarray(pts, dtype=complex), u, w, nums, dens, numsr, densr, degs, out, syms, logd, status)
    return out[:, 0]


def occupancy(pts: np.ndarray, viewport: tuple[float, float, float, float], n: int = 64) -> np.ndarray:
    """Boolean n x n box-occupancy grid of the points inside the viewport."""
    x0, x1, y0, y1 = viewport
    pts = pts[np.isfinite(pts)]
    ix = np.floor((pts.real - x0) / (x1 - x0) * n).astype(np.int64)
    iy = np.floor((pts.imag - y0) / (y1 - y0) * n).astype(np.int64)
    ok = (ix >= 0) & (ix < n) & (iy >= 0) & (iy < n)
    grid = np.zeros((n, n), dtype=bool)
    grid[iy[ok], ix[ok]] = True
    return grid


# expansion certificate -----------------------------------------------------------
@dataclass
class ExpansionCertificate:
    """Non-rigorous hyperbolicity check: P(G) must stay away from J(G)."""

    verdict: str  # "certified-heuristic" | "failed" | "inconclusive"
    distance: float
    witness: complex | None
    cycles: list[AttractingCycle] = field(default_factory=list)
    postcritically_bounded: bool | None = None
    params: dict = field(default_factory=dict)
    message: str = ""

    @property
    def certified(self) -> bool:
        return self.verdict == "certified-heuristic"


def min_chordal_gap(a: np.ndarray, b: np.ndarray) -> tuple[float, int]:
    """Smallest chordal distance from a point of ``a`` to the cloud ``b`` and its index in ``a``."""
    tree = cKDTree(to_unit_sphere(b))
    dist, _ = tree.query(to_unit_sphere(a))
    i = int(np.argmin(dist))
    return float(dist[i]), i


def certify_expanding(F: MultiMap, n_julia: int = 8192, depth: int = 12, cap: int = 20000,
                      threshold: float = EXPANSION_THRESHOLD, seed: int = 0, burn_in: int = 50,
                      cycle_len: int = 2) -> ExpansionCertificate:
    """Heuristic expansion test: chordal gap between postcritical and Julia clouds."""
    params = dict(n_julia=n_julia, depth=depth, cap=cap, threshold=threshold, seed=seed, burn_in=burn_in)
    try:
        pcs = postcritical_set(F, depth=depth, cap=cap)
        cycles = attracting_cycles(F, max_len=cycle_len)
        julia = julia_backward_cloud(F, n_julia, burn_in=burn_in, seed=seed)
    except (RootFindingError, SeedingError) as exc:
        return ExpansionCertificate("inconclusive", math.nan, None, [], None, params, str(exc))
    post = np.concatenate([pcs.points, np.array([p for c in cycles for p in c.points], dtype=complex)])
    dist, i = min_chordal_gap(post, julia)
    bounded = pcs.bounded if F.is_polynomial else None
    if dist < threshold:
        return ExpansionCertificate("failed", dist, complex(post[i]), cycles, bounded, params,
                                    "postcritical point lies on the Julia approximation")
    return ExpansionCertificate("certified-heuristic", dist, None, cycles, bounded, params)


# open set condition -------------------------------------------------------------
@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def depth(self, z):
        """Signed distance to the boundary, positive inside."""
        return self.radius - np.abs(np.asarray(z) - self.center)

    def bbox(self):
        c, r = self.center, self.radius
        return c.real - r, c.real + r, c.imag - r, c.imag + r

    def boundary(self, n):
        th = 2 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * th)


@dataclass(frozen=True)
class Annulus:
    center: complex
    inner: float
    outer: float

    def depth(self, z):
        r = np.abs(np.asarray(z) - self.center)
        return np.minimum(self.outer - r, r - self.inner)

    def bbox(self):
        c, r = self.center, self.outer
        return c.real - r, c.real + r, c.imag - r, c.imag + r

    def boundary(self, n):
        th = 2 * np.pi * np.arange(n) / n
        e = np.exp(1j * th)
        return np.concatenate([self.center + self.inner * e, self.center + self.outer * e])


@dataclass(frozen=True)
class DiskUnion:
    disks: tuple[Disk, ...]

    def __post_init__(self):
        if not 1 <= len(self.disks) <= 8:
            raise ValueError("a disk union holds 1 to 8 disks")

    def depth(self, z):
        # exact sign, approximate magnitude near internal seams
        return np.max([d.depth(z) for d in self.disks], axis=0)

    def bbox(self):
        boxes = np.array([d.bbox() for d in self.disks])
        return boxes[:, 0].min(), boxes[:, 1].max(), boxes[:, 2].min(), boxes[:, 3].max()

    def boundary(self, n):
        pts = np.concatenate([d.boundary(n) for d in self.disks])
        return pts[self.depth(pts) >= -1e-12]


@dataclass
class OSCResult:
    verdict: str  # "osc" | "separating-osc" | "violated" | "inconclusive"
    witnesses: list[tuple[str, complex]] = field(default_factory=list)
    min_separation: float = math.inf
    samples: int = 0


def _region_samples(U, n_grid: int) -> np.ndarray:
    x0, x1, y0, y1 = U.bbox()
    xs = np.linspace(x0, x1, n_grid)
    ys = np.linspace(y0, y1, n_grid)
    X, Y = np.meshgrid(xs, ys)
    grid = (X + 1j * Y).ravel()
    inside = grid[U.depth(grid) > 0]
    return np.concatenate([inside, U.boundary(4 * n_grid)])


def check_osc(F: MultiMap, U=None, n_grid: int = 96, tol: float = 1e-9) -> OSCResult:
    """Sampled test of f_j^{-1}(U) <= U and pairwise disjointness.

    Preimages of grid samples of the closure of U are tested for membership
    in U; each preimage y of f_i is pushed through every other f_j to detect
    overlaps of f_i^{-1}(U) and f_j^{-1}(U). Overlaps smaller than the grid
    spacing can be missed.
    """
    if F.s == 1 and U is None:
        return OSCResult("osc")
    if U is None:
        raise ValueError("a region is required when s > 1")
    samples = _region_samples(U, n_grid)
    nums, dens, numsr, densr, degs, offsets = F.kernel_arrays
    n = samples.size
    out = np.empty(n * F.d, dtype=complex)
    step = np.empty(n * F.d)
    status = np.zeros(n, dtype=np.int64)
    K.expand_level(samples, nums, dens, numsr, densr, degs, offsets, F.d, out, step, status)
    if np.any(status == K.NO_CONVERGENCE) or np.any(status == K.AT_INFINITY):
        return OSCResult("inconclusive", [("preimage failure", complex(samples[np.argmax(status)]))], samples=n)
    pre = out.reshape(n, F.d)
    witnesses = []
    borderline = False
    for j in range(F.s):
        ys = pre[:, offsets[j]: offsets[j] + degs[j]].ravel()
        dep = U.depth(ys)
        if np.min(dep) < -tol:
            k = int(np.argmin(dep))
            witnesses.append((f"f_{j + 1}^-1(U) not inside U", complex(ys[k])))
        elif np.min(dep) <= tol:
            borderline = True
    if witnesses:
        return OSCResult("violated", witnesses, samples=n)
    sep = math.inf
    for i in range(F.s):
        ys = pre[:, offsets[i]: offsets[i] + degs[i]].ravel()
        for j in range(F.s):
            if i == j:
                continue
            img = F.maps[j].eval_array(ys)
            dep = np.where(np.isfinite(img), U.depth(np.where(np.isfinite(img), img, 0)), -np.inf)
            k = int(np.argmax(dep))
            if dep[k] > tol:
                witnesses.append((f"f_{i + 1}^-1(U) meets f_{j + 1}^-1(U)", complex(ys[k])))
            sep = min(sep, -float(dep[k]))
    if witnesses:
        return OSCResult("violated", witnesses, sep, n)
    if borderline:
        return OSCResult("inconclusive", [], sep, n)
    if F.s == 1:
        return OSCResult("osc", [], sep, n)
    return OSCResult("separating-osc" if sep > tol else "osc", [], sep, n)


# power-map conjugacy -------------------------------------------------------------------
@dataclass
class PowerForm:
    """phi f_j phi^-1 (z) = a_j z^(sign_j * d_j)."""

    phi: MobiusMap
    coefficients: list[complex]
    degrees: tuple[int, ...]
    signs: list[int]
    fixed_pair: tuple[complex, complex]

    @property
    def d0(self) -> int | None:
        return self.degrees[0] if len(set(self.degrees)) == 1 else None

    @property
    def equal_degrees(self) -> bool:
        return self.d0 is not None


def _near(a: complex, b: complex, tol: float) -> bool:
    return chordal_distance(a, b) < tol


def detect_power_form(F: MultiMap, tol: float = 1e-7) -> PowerForm | None:
    """Find a Mobius phi conjugating every generator to a_j z^(+-d_j), if one exists.

    Structural test: all generators must share the same two critical points
    p, q, each of multiplicity d_j - 1, and map the pair {p, q} onto itself.
    """
    if any(d < 2 for d in F.degrees):
        return None
    ptol = math.sqrt(tol)
    crit1 = F.maps[0].critical_points()
    if len(crit1) != 2:
        return None
    p, q = crit1[0][0], crit1[1][0]
    if is_inf(p):
        p, q = q, p
    signs = []
    for m in F.maps:
        cps = m.critical_points()
        if len(cps) != 2:
            return None
        for c, mult in cps:
            if mult != m.degree - 1 or not (_near(c, p, ptol) or _near(c, q, ptol)):
                return None
        fp, fq = m(p), m(q)
        if _near(fp, p, ptol) and _near(fq, q, ptol):
            signs.append(1)
        elif _near(fp, q, ptol) and _near(fq, p, ptol):
            signs.append(-1)
        else:
            return None
    phi = MobiusMap.sending(p, q)
    inv = phi.inverse()
    coeffs = []
    for m, sg in zip(F.maps, signs):
        coeffs.append(phi(m(inv(1.0))))
    rng = np.random.default_rng(12345)
    test = rng.normal(size=10) + 1j * rng.normal(size=10)
    for m, a, sg in zip(F.maps, coeffs, signs):
        for z in test:
            u = phi(complex(z))
            if is_inf(u) or u == 0:
                continue
            target = inv(a * u ** (sg * m.degree))
            if chordal_distance(target, m(complex(z))) > tol * 10 + 1e-9:
                return None
    return PowerForm(phi, coeffs, F.degrees, signs, (p, q))
