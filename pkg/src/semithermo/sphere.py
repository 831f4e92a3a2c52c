"""Riemann-sphere arithmetic: points, chordal metric and Mobius maps.

Points are plain Python ``complex`` values; the point at infinity is the
module constant :data:`INF`. Use :func:`point` to normalise user input.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

INF = complex(math.inf, 0.0)

# beyond this modulus evaluations switch to the chart u = 1/z
CHART_RADIUS = 1e8


def point(z) -> complex:
    """Coerce ``z`` to a sphere point; any infinite value becomes :data:`INF`."""
    if isinstance(z, str) and z.strip().lower() in ("inf", "infinity", "oo"):
        return INF
    z = complex(z)
    if math.isnan(z.real) or math.isnan(z.imag):
        raise ValueError("sphere points cannot be NaN")
    if math.isinf(z.real) or math.isinf(z.imag):
        return INF
    return z


def is_inf(z: complex) -> bool:
    return math.isinf(z.real) or math.isinf(z.imag)


def chordal_distance(p: complex, q: complex) -> float:
    """Chordal distance with the sphere scaled to diameter 2."""
    pinf, qinf = is_inf(p), is_inf(q)
    if pinf and qinf:
        return 0.0
    if pinf:
        return 2.0 / math.hypot(1.0, abs(q))
    if qinf:
        return 2.0 / math.hypot(1.0, abs(p))
    if abs(p) > 1.0 and abs(q) > 1.0:
        # the chart at infinity keeps huge moduli finite
        p, q = 1.0 / p, 1.0 / q
    return 2.0 * (abs(p - q) / math.hypot(1.0, abs(p))) / math.hypot(1.0, abs(q))


def to_unit_sphere(z) -> np.ndarray:
    """Stereographic embedding into the unit sphere of R^3.

    Euclidean distance between embedded points equals :func:`chordal_distance`.
    Accepts a scalar or an array; infinite entries go to the north pole.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(z.shape + (3,))
    fin = np.isfinite(z)
    big = fin & (np.abs(z) > 1.0)
    small = fin & ~big
    zs = z[small]
    r2 = zs.real ** 2 + zs.imag ** 2
    out[small, 0] = 2 * zs.real / (1 + r2)
    out[small, 1] = 2 * zs.imag / (1 + r2)
    out[small, 2] = (r2 - 1) / (1 + r2)
    u = 1.0 / z[big]
    r2 = u.real ** 2 + u.imag ** 2
    out[big, 0] = 2 * u.real / (1 + r2)
    out[big, 1] = -2 * u.imag / (1 + r2)
    out[big, 2] = (1 - r2) / (1 + r2)
    out[~fin] = (0.0, 0.0, 1.0)
    return out


def chordal_distances(p, q) -> np.ndarray:
    """Vectorised chordal distance between two broadcastable point arrays."""
    a = to_unit_sphere(p)
    b = to_unit_sphere(q)
    return np.linalg.norm(a - b, axis=-1)


@dataclass(frozen=True)
class MobiusMap:
    """z -> (a z + b) / (c z + d), coefficients scaled to unit max modulus."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        coeffs = [complex(x) for x in (self.a, self.b, self.c, self.d)]
        scale = max(abs(x) for x in coeffs)
        if scale == 0 or not math.isfinite(scale):
            raise ValueError("degenerate Mobius coefficients")
        coeffs = [x / scale for x in coeffs]
        a, b, c, d = coeffs
        if abs(a * d - b * c) < 1e-12:
            raise ValueError("Mobius map is not invertible (ad - bc = 0)")
        for name, val in zip("abcd", coeffs):
            object.__setattr__(self, name, val)

    @classmethod
    def identity(cls) -> MobiusMap:
        return cls(1, 0, 0, 1)

    @classmethod
    def affine(cls, scale: complex, shift: complex) -> MobiusMap:
        """z -> scale * z + shift."""
        return cls(scale, shift, 0, 1)

    @classmethod
    def sending(cls, p: complex, q: complex) -> MobiusMap:
        """A map with p -> 0 and q -> infinity (p != q)."""
        if is_inf(q):
            return cls(1, -p, 0, 1)
        if is_inf(p):
            return cls(0, 1, 1, -q)
        return cls(1, -p, 1, -q)

    def __call__(self, z: complex) -> complex:
        a, b, c, d = self.a, self.b, self.c, self.d
        if is_inf(z):
            return INF if c == 0 else a / c
        den = c * z + d
        num = a * z + b
        if den == 0:
            return INF
        return point(num / den)

    def inverse(self) -> MobiusMap:
        return MobiusMap(self.d, -self.b, -self.c, self.a)

    def compose(self, other: MobiusMap) -> MobiusMap:
        """self o other."""
        m = np.array([[self.a, self.b], [self.c, self.d]]) @ np.array(
            [[other.a, other.b], [other.c, other.d]]
        )
        return MobiusMap(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @property
    def is_affine(self) -> bool:
        return self.c == 0


def spherical_deriv_norm(f, z: complex) -> float:
    """|f'(z)| (1 + |z|^2) / (1 + |f(z)|^2), chart-independent.

    ``f`` is a :class:`semithermo.maps.RationalMap`; the work is done there.
    """
    return f.sph_deriv(z)


def conjugate(f, phi: MobiusMap):
    """phi o f o phi^-1 as a reduced rational map."""
    return f.conjugate(phi)


def random_sphere_points(rng: np.random.Generator, n: int) -> np.ndarray:
    """Points uniform on the sphere (pulled back by stereographic projection)."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (v[:, 0] + 1j * v[:, 1]) / (1 - v[:, 2])
    return z


def unit(theta: float) -> complex:
    return cmath.exp(1j * theta)
