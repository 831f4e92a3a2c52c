"""Partition sums over preimage trees, pressure, and the Bowen parameter.

For a base point z off the postcritical set, the level-n partition sum is

    Z_n(t) = sum over words w of length n and f_w(y) = z of ||f_w'(y)||^(-t)

and P_n(t) = log(Z_n(t)) / n approximates the pressure P(t). The tree is
built once per (F, z, n) by chained single-map inversion and every later
evaluation in t is a single pass over stored log-derivatives.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .measures import lyapunov_green, lyapunov_mc, sample_max_entropy
from .semigroup import (
    MultiMap,
    attracting_cycles,
    certify_expanding,
    detect_power_form,
    postcritical_set,
    repelling_fixed_point,
    Word,
)
from .sphere import chordal_distances, point

log = logging.getLogger(__name__)

MAX_LEAVES = 2 ** 24
SUM_CHUNK = 1 << 16
BASE_POINT_MARGIN = 1e-3


class InvalidBasePoint(ValueError):
    pass


class CriticalBranchError(InvalidBasePoint):
    pass


class TreeError(ArithmeticError):
    def __init__(self, message: str, word: Word | None = None):
        super().__init__(message)
        self.word = word


class NoSignChange(ArithmeticError):
    pass


@dataclass(frozen=True)
class PreimageLeaf:
    point: complex
    logderiv: float
    n: int
    word: Word


@dataclass
class PreimageTree:
    """All d^n preimages of ``base`` with their accumulated log-derivatives.

    ``logderiv[k]`` holds level k + 1. Leaves are ordered by inversion path:
    (generator, branch) of the first inversion at the base point, then of the
    next, and so on. Branches follow :meth:`RationalMap.preimages` order.
    """

    F: MultiMap
    base: complex
    logderiv: list[np.ndarray]
    points: np.ndarray | None

    @property
    def depth(self) -> int:
        return len(self.logderiv)

    def level(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.depth:
            raise ValueError(f"level {n} not in 1..{self.depth}")
        return self.logderiv[n - 1]

    def word_of(self, n: int, index: int) -> Word:
        """Forward-convention word of leaf ``index`` at level n."""
        _, _, _, _, degs, offsets = self.F.kernel_arrays
        inv = []
        for _ in range(n):
            index, r = divmod(index, self.F.d)
            j = int(np.searchsorted(offsets, r, side="right") - 1)
            inv.append(j + 1)
        # inv[0] is the last inversion, i.e. the first map applied
        return tuple(inv)

    def leaves(self) -> list[PreimageLeaf]:
        """Leaf records for the deepest level (intended for small trees)."""
        n = self.depth
        ld = self.level(n)
        pts = self.points
        return [PreimageLeaf(complex(pts[i]), float(ld[i]), n, self.word_of(n, i)) for i in range(ld.size)]


def _nearest_distance(z: complex, cloud: np.ndarray) -> tuple[float, complex | None]:
    if cloud.size == 0:
        return math.inf, None
    dist = chordal_distances(np.full(cloud.size, z), cloud)
    i = int(np.argmin(dist))
    return float(dist[i]), complex(cloud[i])


def check_base_point(F: MultiMap, z, margin: float = BASE_POINT_MARGIN, depth: int = 12,
                     cap: int = 20000) -> None:
    """Raise :class:`InvalidBasePoint` if z is within ``margin`` of P(G) or A(G) (approximated)."""
    z = point(z)
    pcs = postcritical_set(F, depth=depth, cap=cap)
    dist, witness = _nearest_distance(z, pcs.points)
    if dist < margin:
        raise InvalidBasePoint(f"base point {z} is {dist:.2e} from the postcritical set P(G) (near {witness})")
    cyc = np.array([p for c in attracting_cycles(F) for p in c.points], dtype=complex)
    dist, witness = _nearest_distance(z, cyc)
    if dist < margin:
        raise InvalidBasePoint(f"base point {z} is {dist:.2e} from the attracting set A(G) (near {witness})")


def base_point_candidates(F: MultiMap) -> list[complex]:
    """Repelling fixed points of the generators (points of J(G)), then fallbacks."""
    out = []
    for m in F.maps:
        try:
            out.append(repelling_fixed_point(m))
        except Exception:  # noqa: BLE001 - no repelling point for this generator
            continue
    out.extend([0.5 + 0.5j, -0.7 + 0.3j, 1.3 - 0.4j])
    return out


def select_base_point(F: MultiMap, exclude: Sequence[complex] = ()) -> complex:
    for z in base_point_candidates(F):
        if any(abs(z - e) < 1e-9 for e in exclude):
            continue
        try:
            check_base_point(F, z)
        except InvalidBasePoint:
            continue
        return z
    raise InvalidBasePoint("no valid base point among the candidates")


def build_preimage_tree(F: MultiMap, z, n: int, check: bool = True, keep_points: bool = True) -> PreimageTree:
    """Breadth-first expansion of all s^n words and all preimage branches."""
    z = point(z)
    if n < 1:
        raise ValueError("depth must be >= 1")
    if not np.isfinite(z):
        raise InvalidBasePoint("base point must be finite")
    if check:
        check_base_point(F, z)
    nums, dens, numsr, densr, degs, offsets = F.kernel_arrays
    d = F.d
    pts = np.array([z], dtype=complex)
    parent = np.zeros(1)
    levels = []
    for k in range(1, n + 1):
        size = pts.size * d
        out = np.empty(size, dtype=complex)
        step = np.empty(size)
        status = np.zeros(pts.size, dtype=np.int64)
        K.expand_level(pts, nums, dens, numsr, densr, degs, offsets, d, out, step, status)
        bad = np.flatnonzero(status)
        if bad.size:
            i = int(bad[0])
            code = int(status[i])
            tree = PreimageTree(F, z, levels, None)
            word = tree.word_of(k - 1, i) if k > 1 else ()
            if code == K.CRITICAL_HIT:
                raise CriticalBranchError(f"level {k}: preimage on a critical point below word {word}")
            reason = {K.NO_CONVERGENCE: "root finder did not converge", K.AT_INFINITY: "preimage at infinity"}[code]
            raise TreeError(f"level {k}: {reason} at node word {word}", word)
        acc = np.empty(size)
        K.accumulate(parent, step, d, acc)
        levels.append(acc)
        parent = acc
        pts = out
    return PreimageTree(F, z, levels, pts if keep_points else None)


def log_partition_sum(logderiv: np.ndarray, t: float) -> float:
    """log Z(t) with a max-shift and compensated chunk sums (reproducible order)."""
    logderiv = np.ascontiguousarray(logderiv, dtype=float)
    if logderiv.size == 0:
        raise ValueError("no leaves")
    ext = logderiv.min() if t >= 0 else logderiv.max()
    shift = -t * ext
    parts = K.chunk_exp_sums(logderiv, float(t), float(shift), SUM_CHUNK)
    return shift + math.log(math.fsum(parts))


def partition_sum(leaves, t: float) -> float:
    """Z(t) = sum exp(-t * logderiv) over the leaves."""
    if isinstance(leaves, PreimageTree):
        leaves = leaves.level(leaves.depth)
    elif not isinstance(leaves, np.ndarray):
        leaves = np.array([leaf.logderiv for leaf in leaves])
    return math.exp(log_partition_sum(leaves, t))


@dataclass
class PressureCurve:
    base: complex
    depth: int
    t: np.ndarray
    values: np.ndarray
    leaf_count: int


def pressure_curve(F: MultiMap, z, n: int, t_grid, tree: PreimageTree | None = None) -> PressureCurve:
    """P_n(t) = log(Z_n(t)) / n on a grid of t."""
    if tree is None:
        tree = build_preimage_tree(F, z, n)
    ld = tree.level(n)
    t_grid = np.asarray(t_grid, dtype=float)
    vals = np.array([log_partition_sum(ld, t) / n for t in t_grid])
    return PressureCurve(tree.base, n, t_grid, vals, ld.size)


# Bowen parameter ------------------------------------------------------------------------
ROOT_TOL = 1e-11
T_MAX = 64.0
N_MIN = 4
FIT_LEVELS = 4


def depth_for(F: MultiMap, max_leaves: int = MAX_LEAVES) -> int:
    """Largest n with d^n <= max_leaves."""
    n = 1
    while F.d ** (n + 1) <= max_leaves:
        n += 1
    return n


def _bracketed_root(g, t_max: float = T_MAX, tol: float = ROOT_TOL) -> tuple[float, float, float]:
    """Zero of a function with g(0) > 0, bracket found by doubling t_hi from 1."""
    t_lo, t_hi = 0.0, 1.0
    g_hi = g(t_hi)
    while g_hi > 0:
        if abs(g_hi) < 1e-14:
            return t_hi, t_lo, t_hi
        t_lo, t_hi = t_hi, 2.0 * t_hi
        if t_hi > t_max:
            raise NoSignChange(f"no sign change of the pressure up to t = {t_max}; is the semigroup expanding?")
        g_hi = g(t_hi)
    if abs(g_hi) < 1e-14:
        return t_hi, t_lo, t_hi
    root = brentq(g, t_lo, t_hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    return root, t_lo, t_hi


@dataclass
class BowenEstimate:
    """Estimate of the zero of the pressure.

    ``delta_hat`` is the root of log Z_n(t) - log Z_{n-1}(t) at the deepest
    level; this difference quotient cancels the O(1/n) base-point term of
    P_n. ``roots`` holds the plain per-depth zeros of P_n for reference.
    """

    delta_hat: float
    bracket: tuple[float, float]
    depths: list[int]
    roots: list[float]
    secant_roots: list[float]
    cauchy_gap: float
    base: complex
    tol: float = ROOT_TOL
    certificate: str = ""

    @property
    def error(self) -> float:
        """Cauchy gap widened by the root-finding resolution of both roots."""
        return self.cauchy_gap + 2 * self.tol

    @property
    def plain_gap(self) -> float:
        return abs(self.roots[-1] - self.roots[-2]) if len(self.roots) > 1 else math.nan


def _certify_or_warn(F: MultiMap, certificate) -> str:
    if certificate is None:
        certificate = certify_expanding(F)
    verdict = certificate if isinstance(certificate, str) else certificate.verdict
    if verdict != "certified-heuristic":
        warnings.warn(f"expansion not certified ({verdict}); the pressure zero may be meaningless", stacklevel=3)
    return verdict


def bowen_parameter(F: MultiMap, z=None, n_max: int | None = None, tol: float = ROOT_TOL,
                    tree: PreimageTree | None = None, certificate=None, n_min: int = N_MIN) -> BowenEstimate:
    """Zero of the pressure from per-depth partition sums of one preimage tree."""
    verdict = _certify_or_warn(F, certificate)
    if tree is None:
        if z is None:
            z = select_base_point(F)
        n_max = n_max or depth_for(F)
        tree = build_preimage_tree(F, z, n_max)
    n_max = n_max or tree.depth
    if n_max < 3 or n_max > tree.depth:
        raise ValueError(f"n_max must be in 3..{tree.depth}")
    n_min = max(2, min(n_min, n_max - 1))
    logZ = {}

    def L(k, t):
        key = (k, t)
        if key not in logZ:
            logZ[key] = log_partition_sum(tree.level(k), t)
        return logZ[key]

    depths = list(range(n_min, n_max + 1))
    roots = [_bracketed_root(lambda t, k=k: L(k, t), tol=tol)[0] for k in depths]
    secant, bracket = [], (0.0, 1.0)
    for k in depths:
        r, lo, hi = _bracketed_root(lambda t, k=k: L(k, t) - L(k - 1, t), tol=tol)
        secant.append(r)
        bracket = (lo, hi)
    gap = abs(secant[-1] - secant[-2])
    log.info("delta_hat=%.8f gap=%.2e (depth %d, %d leaves)", secant[-1], gap, n_max, tree.level(n_max).size)
    return BowenEstimate(secant[-1], bracket, depths, roots, secant, gap, tree.base, tol, verdict)


def poincare_exponent(F: MultiMap, z=None, t_grid=None, n_max: int | None = None,
                      tree: PreimageTree | None = None, levels: int = FIT_LEVELS) -> float:
    """Critical exponent of the truncated Poincare series sum_{n <= n_max} Z_n(t).

    For each t the growth rate of Z_n(t) is the least-squares slope of
    log Z_n(t) against n over the last ``levels`` depths; the series passes
    from divergence to convergence where that fitted log-ratio crosses 0.
    ``t_grid`` (optional) locates the sign change before refinement.
    """
    if tree is None:
        if z is None:
            z = select_base_point(F)
        tree = build_preimage_tree(F, z, n_max or depth_for(F))
    n_max = n_max or tree.depth
    if n_max < 3:
        raise ValueError("the Poincare ratio test needs depth >= 3")
    ks = np.arange(max(1, n_max - levels + 1), n_max + 1)
    kc = ks - ks.mean()

    def rate(t):
        y = np.array([log_partition_sum(tree.level(int(k)), t) for k in ks])
        return float(np.dot(kc, y) / np.dot(kc, kc))

    if t_grid is not None:
        t_grid = np.sort(np.asarray(t_grid, dtype=float))
        r = np.array([rate(t) for t in t_grid])
        idx = np.flatnonzero((r[:-1] > 0) & (r[1:] <= 0))
        if idx.size == 0:
            raise NoSignChange("fitted log-ratio does not cross 0 on the t grid")
        i = int(idx[0])
        return float(brentq(rate, t_grid[i], t_grid[i + 1], xtol=ROOT_TOL))
    return _bracketed_root(rate)[0]


def closed_form_delta(s: int, d0: int) -> float:
    """1 + log s / log d0, the Bowen parameter of power-map families."""
    if s < 1 or d0 < 2:
        raise ValueError("need s >= 1 and d0 >= 2")
    return 1.0 + math.log(s) / math.log(d0)


def hd_lower_bound(F: MultiMap, lyapunov: float) -> float:
    """log d / Lyapunov exponent of the maximal entropy measure."""
    if not lyapunov > 0:
        raise ValueError("Lyapunov exponent must be positive")
    return math.log(F.d) / lyapunov


# inequality / equality battery ------------------------------------------------------------
@dataclass
class InequalityReport:
    delta: BowenEstimate
    lyapunov_mc: tuple[float, float]
    lyapunov_green: tuple[float, float] | None
    lyapunov_used: str
    bound: float
    epsilon: float
    inequality: str  # "pass" | "fail"
    equality: str  # "yes" | "no" | "boundary"
    power_form: str  # "yes" | "no"
    consistent: bool
    samples: int = 0
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "delta_hat": self.delta.delta_hat,
            "cauchy_gap": self.delta.cauchy_gap,
            "depth": self.delta.depths[-1],
            "base_point": [self.delta.base.real, self.delta.base.imag],
            "lyapunov_mc": list(self.lyapunov_mc),
            "lyapunov_green": list(self.lyapunov_green) if self.lyapunov_green else None,
            "lyapunov_used": self.lyapunov_used,
            "bound": self.bound,
            "epsilon": self.epsilon,
            "inequality": self.inequality,
            "equality": self.equality,
            "power_form": self.power_form,
            "consistent": self.consistent,
        }


def equality_verdict(delta_hat: float, bound: float, eps: float) -> str:
    diff = abs(delta_hat - bound)
    if diff <= eps:
        return "yes"
    if diff > 3 * eps:
        return "no"
    return "boundary"


def verify_inequality(F: MultiMap, z=None, n_max: int | None = None, n_samples: int = 10000,
                      n_words: int = 2000, seed: int = 0, estimate: BowenEstimate | None = None,
                      certificate=None) -> InequalityReport:
    """Check delta >= log d / Lyapunov and classify equality against the power-map form.

    The bound uses the Green's-function Lyapunov estimate for polynomial
    families (exact when the postcritical set is bounded) and the direct
    Monte-Carlo estimate otherwise; both are reported.
    """
    if estimate is None:
        estimate = bowen_parameter(F, z, n_max, certificate=certificate)
    samples = sample_max_entropy(F, n_samples=n_samples, seed=seed)
    mc = lyapunov_mc(F, samples)
    green = lyapunov_green(F, n_words=n_words, seed=seed) if F.is_polynomial else None
    lam, err, used = (green[0], green[1], "green") if green else (mc[0], mc[1], "mc")
    bound = hd_lower_bound(F, lam)
    eps = estimate.error + 3 * math.log(F.d) * err / lam ** 2
    ineq = "pass" if estimate.delta_hat >= bound - eps else "fail"
    eq = equality_verdict(estimate.delta_hat, bound, eps)
    pf = detect_power_form(F)
    power = "yes" if pf is not None and pf.equal_degrees else "no"
    # a boundary verdict is undetermined at this depth, not a contradiction
    contradiction = (eq == "yes" and power == "no") or (eq == "no" and power == "yes")
    consistent = ineq == "pass" and not contradiction
    notes = []
    if eq == "boundary":
        notes.append("equality undetermined: |delta_hat - bound| lies between epsilon and 3 epsilon")
    if pf is not None and not pf.equal_degrees:
        notes.append(f"power maps with unequal degrees {pf.degrees}: no rigidity expected")
    if samples.skipped:
        notes.append(f"{samples.skipped} sampler chains skipped after a failed retry")
    return InequalityReport(estimate, mc, green, used, bound, eps, ineq, eq, power, consistent, len(samples), notes)
