"""Polynomial and rational maps of the sphere.

A :class:`RationalMap` is a coprime pair of :class:`Polynomial` s. The two
numerical workhorses are :func:`roots` (Aberth-Ehrlich simultaneous
iteration with multiplicity detection) and :meth:`RationalMap.preimages`.

Expression grammar accepted by :func:`parse_map`::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('-' | '+') factor | atom (('^' | '**') integer)?
    atom   := number | 'z' | name | func '(' expr ')' | '(' expr ')'

Numbers may carry a ``j`` suffix (``0.5j``); ``i`` is the imaginary unit,
``pi`` and ``e`` the usual constants; ``exp``, ``sqrt``, ``sin`` and ``cos``
apply to constant sub-expressions only. Any other name is looked up in the
parameter mapping, so ``"a*(z-b)^3+b"`` with ``{"a": 0.3, "b": 1}`` works.
"""

from __future__ import annotations

import ast
import cmath
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import _kernels as K
from .sphere import CHART_RADIUS, INF, MobiusMap, chordal_distance, is_inf, point

MERGE_TOL = 1e-7
_LOOSE_MERGE = 1e-3
_TAYLOR_TOL = 1e-11


class RootFindingError(ArithmeticError):
    """The simultaneous-iteration solver failed; ``residual`` is the worst residual seen."""

    def __init__(self, message: str, residual: float = math.inf):
        super().__init__(message)
        self.residual = residual


class ScalingError(ArithmeticError):
    pass


def _trim(c: np.ndarray, rel: float = 1e-14) -> np.ndarray:
    c = np.asarray(c, dtype=complex)
    if c.size == 0:
        return np.zeros(1, dtype=complex)
    scale = np.max(np.abs(c))
    if scale == 0:
        return np.zeros(1, dtype=complex)
    n = c.size
    while n > 1 and abs(c[n - 1]) <= rel * scale:
        n -= 1
    return c[:n].copy()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Ascending complex coefficients c0 + c1 z + ... + cn z^n."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _trim(self.coeffs)
        if not np.all(np.isfinite(c)):
            raise ScalingError("non-finite polynomial coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        if self.coeffs.size == 1 and self.coeffs[0] == 0:
            return 0
        return self.coeffs.size - 1

    @property
    def lead(self) -> complex:
        return complex(self.coeffs[-1])

    def __call__(self, z):
        return npoly.polyval(z, self.coeffs)

    def deriv(self) -> Polynomial:
        if self.degree == 0:
            return Polynomial(np.zeros(1))
        return Polynomial(npoly.polyder(self.coeffs))

    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0

    def __repr__(self):
        return f"Polynomial({np.array2string(self.coeffs, precision=6)})"


def _taylor_at(c: np.ndarray, x: complex, upto: int) -> np.ndarray:
    """Taylor coefficients p^(k)(x)/k! for k < upto, by repeated synthetic division."""
    work = np.array(c, dtype=complex)
    out = np.empty(upto, dtype=complex)
    for k in range(upto):
        n = work.size - 1
        if n < 0:
            out[k:] = 0
            break
        q = np.empty(max(n, 0), dtype=complex)
        acc = work[n]
        for i in range(n - 1, -1, -1):
            q[i] = acc
            acc = acc * x + work[i]
        out[k] = acc
        work = q
    return out


def _polish_multiple(c: np.ndarray, x: complex, m: int) -> complex:
    """Newton on p^(m-1), whose root is simple where p has an m-fold root."""
    g = npoly.polyder(c, m - 1)
    dg = npoly.polyder(g)
    for _ in range(8):
        den = npoly.polyval(x, dg)
        if den == 0:
            break
        step = npoly.polyval(x, g) / den
        x = x - step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return complex(x)


def _merge_clusters(c: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Replace numerically split multiple roots by their centroid."""
    n = r.size
    if n < 2:
        return r
    scale = np.max(np.abs(c))
    used = np.zeros(n, dtype=bool)
    out = r.copy()
    order = np.argsort(np.abs(r))
    for i in order:
        if used[i]:
            continue
        tol = _LOOSE_MERGE * max(1.0, abs(r[i]))
        members = [k for k in range(n) if not used[k] and abs(r[k] - r[i]) < tol]
        if len(members) < 2:
            used[i] = True
            continue
        # grow the cluster greedily from the closest candidates
        members.sort(key=lambda k: abs(r[k] - r[i]))
        accepted = [members[0]]
        centre = r[i]
        for m in range(2, len(members) + 1):
            cand = members[:m]
            guess = _polish_multiple(c, np.mean(r[cand]), m)
            diam = max(abs(r[a] - r[b]) for a in cand for b in cand)
            if diam < MERGE_TOL * max(1.0, abs(guess)):
                accepted, centre = cand, guess
                continue
            tay = _taylor_at(c, guess, m)
            bound = _TAYLOR_TOL * scale * max(1.0, abs(guess)) ** (c.size - 1)
            if np.all(np.abs(tay) <= bound):
                accepted, centre = cand, guess
        for k in accepted:
            out[k] = centre
            used[k] = True
    return out


def sort_points(pts) -> list[complex]:
    """Canonical order: lexicographic in (re, im), infinity last."""
    fin = sorted((p for p in pts if not is_inf(p)), key=lambda z: (z.real, z.imag))
    return fin + [INF for p in pts if is_inf(p)]


def roots(p, merge: bool = True) -> np.ndarray:
    """All roots of a polynomial, counting multiplicity, sorted by (re, im).

    ``p`` is a :class:`Polynomial` or an ascending coefficient sequence.
    Clustered roots that form a numerical multiple root are replaced by their
    centroid.
    """
    c = p.coeffs if isinstance(p, Polynomial) else _trim(np.asarray(p, dtype=complex))
    n = c.size - 1
    if n < 1:
        raise ValueError("roots needs a polynomial of degree >= 1")
    out = np.empty(n, dtype=complex)
    it = K.aberth(np.ascontiguousarray(c), n, out)
    scale = np.max(np.abs(c))
    mods = np.maximum(1.0, np.abs(out))
    resid = np.abs(npoly.polyval(out, c)) / (scale * mods ** n)
    if it < 0 and np.max(resid) > 1e-9:
        raise RootFindingError("Aberth iteration did not converge", float(np.max(resid)))
    if merge:
        out = _merge_clusters(c, out)
    idx = np.lexsort((out.imag, out.real))
    return out[idx]


def _pad(c: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n + 1, dtype=complex)
    out[: c.size] = c
    return out


class RationalMap:
    """f = num / den with coprime numerator and denominator."""

    def __init__(self, num, den=None, check: bool = True):
        num = num if isinstance(num, Polynomial) else Polynomial(np.asarray(num, dtype=complex))
        if den is None:
            den = Polynomial(np.ones(1))
        den = den if isinstance(den, Polynomial) else Polynomial(np.asarray(den, dtype=complex))
        if den.is_zero():
            raise ZeroDivisionError("zero denominator")
        if den.degree == 0:
            num = Polynomial(num.coeffs / den.coeffs[0])
            den = Polynomial(np.ones(1))
        else:
            scale = max(np.max(np.abs(num.coeffs)), np.max(np.abs(den.coeffs)))
            num = Polynomial(num.coeffs / scale)
            den = Polynomial(den.coeffs / scale)
        self.num = num
        self.den = den
        self.degree = max(num.degree, den.degree)
        if self.degree < 1:
            raise ValueError("constant maps are not allowed")
        if check and den.degree > 0 and num.degree > 0:
            res = resultant(num.coeffs, den.coeffs)
            if abs(res) <= 1e-12:
                raise ValueError(f"numerator and denominator share a root (|resultant| = {abs(res):.3g})")
        d = self.degree
        self._nump = _pad(num.coeffs, d)
        self._denp = _pad(den.coeffs, d)
        self._numr = self._nump[::-1].copy()
        self._denr = self._denp[::-1].copy()
        w = npoly.polysub(
            npoly.polymul(npoly.polyder(num.coeffs), den.coeffs) if num.degree > 0 else np.zeros(1),
            npoly.polymul(num.coeffs, npoly.polyder(den.coeffs)) if den.degree > 0 else np.zeros(1),
        )
        self._wronskian = _trim(w)

    @classmethod
    def polynomial(cls, coeffs) -> RationalMap:
        return cls(coeffs)

    @property
    def is_polynomial(self) -> bool:
        return self.den.degree == 0

    @property
    def lead(self) -> complex:
        """Leading coefficient (polynomials only)."""
        return self.num.lead

    def padded(self):
        """(num, den, num_rev, den_rev) arrays of length degree + 1."""
        return self._nump, self._denp, self._numr, self._denr

    def __repr__(self):
        if self.is_polynomial:
            return f"RationalMap({np.array2string(self.num.coeffs, precision=6)})"
        return f"RationalMap({self.num!r} / {self.den!r})"

    # evaluation ---------------------------------------------------------
    def __call__(self, z) -> complex:
        z = point(z)
        if is_inf(z) or abs(z) > CHART_RADIUS:
            u = 0j if is_inf(z) else 1 / z
            n = npoly.polyval(u, self._numr)
            m = npoly.polyval(u, self._denr)
        else:
            n = npoly.polyval(z, self._nump)
            m = npoly.polyval(z, self._denp)
        if m == 0:
            return INF
        return point(n / m)

    def eval_array(self, z: np.ndarray) -> np.ndarray:
        """Vectorised evaluation at finite points (poles give inf)."""
        z = np.asarray(z, dtype=complex)
        with np.errstate(all="ignore"):
            if self.is_polynomial:
                return npoly.polyval(z, self.num.coeffs)
            return npoly.polyval(z, self.num.coeffs) / npoly.polyval(z, self.den.coeffs)

    def sph_deriv(self, z) -> float:
        """Spherical derivative norm |f'(z)|(1+|z|^2)/(1+|f(z)|^2)."""
        z = point(z)
        if is_inf(z):
            n0, n1 = K.horner2(self._numr, self.degree, 0j)
            d0, d1 = K.horner2(self._denr, self.degree, 0j)
            w = n1 * d0 - n0 * d1
            return abs(w) / (abs(n0) ** 2 + abs(d0) ** 2)
        ld = K.log_sph_deriv(self._nump, self._denp, self._numr, self._denr, self.degree, z)
        return math.exp(ld) if ld > -math.inf else 0.0

    def log_sph_deriv(self, z) -> float:
        d = self.sph_deriv(z)
        return math.log(d) if d > 0 else -math.inf

    def sph_deriv_array(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.array([self.sph_deriv(complex(v)) for v in z.ravel()]).reshape(z.shape)

    # structure ------------------------------------------------------------
    def critical_points(self) -> list[tuple[complex, int]]:
        """Critical points with multiplicities (2 deg - 2 in total)."""
        d = self.degree
        if d < 2:
            return []
        w = self._wronskian
        finite = roots(w) if w.size > 1 else np.empty(0, dtype=complex)
        at_inf = 2 * d - 2 - finite.size
        pts = _group(finite)
        if at_inf > 0:
            pts.append((INF, at_inf))
        for p, _ in pts:
            if is_inf(p):
                continue
            v = self.sph_deriv(p)
            scale = max(1.0, abs(p)) ** (2 * d)
            if v > 1e-8 and v > 1e-8 * scale:
                raise RootFindingError(f"critical point {p} has derivative norm {v:.3g}", v)
        return pts

    def critical_values(self) -> list[complex]:
        return [self(c) for c, _ in self.critical_points()]

    def preimages(self, w) -> list[complex]:
        """Solutions of f(y) = w with multiplicity, in canonical order."""
        w = point(w)
        d = self.degree
        if is_inf(w):
            q = self.den.coeffs
        else:
            q = _trim(npoly.polysub(self._nump, w * self._denp))
        nq = q.size - 1 if not (q.size == 1 and q[0] == 0) else 0
        if nq == 0 and q.size == 1 and q[0] == 0:
            raise ValueError("f is constant on a component")
        fin = roots(q) if nq >= 1 else np.empty(0, dtype=complex)
        pts = [complex(v) for v in fin] + [INF] * (d - nq)
        worst = 0.0
        for y in pts:
            err = chordal_distance(self(y), w)
            worst = max(worst, err)
        if worst > 1e-9:
            # multiple roots legitimately lose accuracy; judge those by the merged residual
            bad = [y for y in pts if chordal_distance(self(y), w) > 1e-9 and not _is_multiple(pts, y)]
            if bad:
                raise RootFindingError(f"preimage residual {worst:.3g} too large", worst)
        return sort_points(pts)

    def conjugate(self, phi: MobiusMap) -> RationalMap:
        """phi o f o phi^-1."""
        inv = phi.inverse()
        d = self.degree
        # f o inv via homogeneous substitution z -> (inv.a z + inv.b)/(inv.c z + inv.d)
        top = np.array([inv.b, inv.a], dtype=complex)
        bot = np.array([inv.d, inv.c], dtype=complex)
        n_new = _homogeneous(self._nump, top, bot, d)
        m_new = _homogeneous(self._denp, top, bot, d)
        num = npoly.polyadd(phi.a * n_new, phi.b * m_new)
        den = npoly.polyadd(phi.c * n_new, phi.d * m_new)
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise ScalingError("coefficient overflow in conjugation")
        return RationalMap(num, den, check=False)

    def compose(self, g: RationalMap) -> RationalMap:
        """self o g."""
        d = self.degree
        n_new = _homogeneous(self._nump, g.num.coeffs, g.den.coeffs, d)
        m_new = _homogeneous(self._denp, g.num.coeffs, g.den.coeffs, d)
        if not (np.all(np.isfinite(n_new)) and np.all(np.isfinite(m_new))):
            raise ScalingError("coefficient overflow in composition")
        return RationalMap(n_new, m_new, check=False)


def _is_multiple(pts, y) -> bool:
    return sum(1 for p in pts if p == y) > 1


def _group(vals: np.ndarray) -> list[tuple[complex, int]]:
    out: list[tuple[complex, int]] = []
    for v in vals:
        v = complex(v)
        if out and out[-1][0] == v:
            out[-1] = (v, out[-1][1] + 1)
        else:
            merged = False
            for k, (p, m) in enumerate(out):
                if p == v:
                    out[k] = (p, m + 1)
                    merged = True
                    break
            if not merged:
                out.append((v, 1))
    return out


def _homogeneous(c: np.ndarray, top: np.ndarray, bot: np.ndarray, d: int) -> np.ndarray:
    """sum_k c_k top^k bot^(d-k)."""
    acc = np.zeros(1, dtype=complex)
    for k in range(d + 1):
        if c[k] == 0:
            continue
        term = c[k] * npoly.polymul(npoly.polypow(top, k), npoly.polypow(bot, d - k))
        acc = npoly.polyadd(acc, term)
    return acc


def resultant(p: np.ndarray, q: np.ndarray) -> complex:
    """Sylvester resultant of unit-max-normalised ascending coefficient arrays."""
    p, q = _trim(p), _trim(q)
    p = p / np.max(np.abs(p))
    q = q / np.max(np.abs(q))
    m, n = p.size - 1, q.size - 1
    size = m + n
    if size == 0:
        return 1.0
    S = np.zeros((size, size), dtype=complex)
    pd, qd = p[::-1], q[::-1]
    for i in range(n):
        S[i, i : i + m + 1] = pd
    for i in range(m):
        S[n + i, i : i + n + 1] = qd
    return complex(np.linalg.det(S))


# free-function surface --------------------------------------------------
def evaluate(f: RationalMap, z) -> complex:
    return f(z)


def critical_points(f: RationalMap) -> list[tuple[complex, int]]:
    return f.critical_points()


def preimages(f: RationalMap, w) -> list[complex]:
    return f.preimages(w)


# expression parsing -----------------------------------------------------
class ParseError(ValueError):
    pass


_CONSTS = {"i": 1j, "pi": math.pi, "e": math.e}
_FUNCS = {"exp": cmath.exp, "sqrt": cmath.sqrt, "sin": cmath.sin, "cos": cmath.cos}


class _Rat:
    __slots__ = ("n", "d")

    def __init__(self, n, d=None):
        self.n = np.atleast_1d(np.asarray(n, dtype=complex))
        self.d = np.ones(1, dtype=complex) if d is None else np.atleast_1d(np.asarray(d, dtype=complex))

    def const(self):
        n, d = _trim(self.n, 0), _trim(self.d, 0)
        if n.size == 1 and d.size == 1:
            return complex(n[0] / d[0])
        return None

    def __add__(self, o):
        return _Rat(npoly.polyadd(npoly.polymul(self.n, o.d), npoly.polymul(o.n, self.d)), npoly.polymul(self.d, o.d))

    def __sub__(self, o):
        return self + _Rat(-o.n, o.d)

    def __mul__(self, o):
        return _Rat(npoly.polymul(self.n, o.n), npoly.polymul(self.d, o.d))

    def __truediv__(self, o):
        if np.all(o.n == 0):
            raise ParseError("division by zero")
        return _Rat(npoly.polymul(self.n, o.d), npoly.polymul(self.d, o.n))

    def pow(self, k: int):
        if k < 0:
            return _Rat(np.ones(1)) / self.pow(-k)
        return _Rat(npoly.polypow(self.n, k), npoly.polypow(self.d, k))


def _eval_node(node, params):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, params)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
        return _Rat([node.value])
    if isinstance(node, ast.Name):
        if node.id == "z":
            return _Rat([0, 1])
        if node.id in params:
            return _Rat([complex(params[node.id])])
        if node.id in _CONSTS:
            return _Rat([_CONSTS[node.id]])
        raise ParseError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand, params)
        return _Rat(-v.n, v.d) if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        left = _eval_node(node.left, params)
        if isinstance(node.op, ast.Pow):
            exp = _eval_node(node.right, params).const()
            if exp is None or exp.imag != 0 or exp.real != int(exp.real):
                if exp is not None and left.const() is not None:
                    return _Rat([left.const() ** exp])
                raise ParseError("exponents must be integer constants")
            return left.pow(int(exp.real))
        right = _eval_node(node.right, params)
        ops = {ast.Add: _Rat.__add__, ast.Sub: _Rat.__sub__, ast.Mult: _Rat.__mul__, ast.Div: _Rat.__truediv__}
        for op_type, fn in ops.items():
            if isinstance(node.op, op_type):
                return fn(left, right)
        raise ParseError(f"unsupported operator {type(node.op).__name__}")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1:
            raise ParseError(f"{node.func.id} takes one argument")
        arg = _eval_node(node.args[0], params).const()
        if arg is None:
            raise ParseError(f"{node.func.id} only applies to constants")
        return _Rat([_FUNCS[node.func.id](arg)])
    raise ParseError(f"unsupported syntax: {ast.dump(node)[:60]}")


def _parse_tree(text: str):
    try:
        return ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse {text!r}: {exc.msg}") from None


def parse_constant(text: str, params: Mapping[str, complex] | None = None) -> complex:
    v = _eval_node(_parse_tree(text), dict(params or {})).const()
    if v is None:
        raise ParseError(f"{text!r} is not a constant")
    return v


def parse_map(text: str, params: Mapping[str, complex] | None = None) -> RationalMap:
    """Parse an expression in ``z`` such as ``"0.09*z^2"`` into a map."""
    r = _eval_node(_parse_tree(text), dict(params or {}))
    num, den = _trim(r.n), _trim(r.d)
    if den.size == 1:
        num, den = num / den[0], np.ones(1)
    try:
        return RationalMap(num, den)
    except ValueError as exc:
        raise ParseError(f"{text!r}: {exc}") from None
