"""Compiled inner loops.

Coefficient arrays are ascending (c[0] + c[1] z + ...). Generators are passed
as padded 2-D arrays ``nums``/``dens`` of shape (s, dmax + 1) together with
their chart-reversed counterparts ``numsr``/``densr`` (coefficients of
f(1/u) written as a quotient in u, each padded to the map's own degree).

Status codes written by the batched kernels:
    0 ok, 1 root finder did not converge, 2 preimage at infinity,
    3 preimage on a critical point.
"""

from __future__ import annotations

import math

import numpy as np
from numba import config, njit, prange

# TBB in this image is too old; skip it without a warning
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

ABERTH_MAXIT = 200
ABERTH_TOL = 1e-13
CHART_RADIUS = 1e8

OK, NO_CONVERGENCE, AT_INFINITY, CRITICAL_HIT = 0, 1, 2, 3


@njit(cache=True)
def horner2(c, n, z):
    """p(z), p'(z) for ascending coefficients c[0..n]."""
    p = c[n]
    dp = 0j
    for k in range(n - 1, -1, -1):
        dp = dp * z + p
        p = p * z + c[k]
    return p, dp


@njit(cache=True)
def aberth(c, n, out):
    """All roots of c[0..n] (c[n] != 0) into out[0..n-1]. Returns iterations or -1."""
    if n == 0:
        return 0
    if n == 1:
        out[0] = -c[0] / c[1]
        return 1
    # exact zero roots
    nz = 0
    while nz < n and c[nz] == 0:
        out[nz] = 0j
        nz += 1
    if nz == n:
        return 0
    m = n - nz
    a = np.empty(m + 1, dtype=np.complex128)
    lead = c[n]
    for k in range(m + 1):
        a[k] = c[k + nz] / lead
    if m == 1:
        out[nz] = -a[0]
        return 1
    # initial circle: centre at the root centroid, radius from the shifted constant term
    centre = -a[m - 1] / m
    pc, _ = horner2(a, m, centre)
    rad = abs(pc) ** (1.0 / m)
    if rad == 0.0:
        bound = 0.0
        for k in range(m):
            v = abs(a[k]) ** (1.0 / (m - k))
            if v > bound:
                bound = v
        rad = bound if bound > 0 else 1.0
    z = np.empty(m, dtype=np.complex128)
    for k in range(m):
        ang = 2.0 * math.pi * k / m + 0.4
        z[k] = centre + rad * complex(math.cos(ang), math.sin(ang))
    done = np.zeros(m, dtype=np.bool_)
    it = 0
    converged = False
    while it < ABERTH_MAXIT:
        it += 1
        maxstep = 0.0
        for i in range(m):
            if done[i]:
                continue
            zi = z[i]
            p, dp = horner2(a, m, zi)
            if p == 0:
                done[i] = True
                continue
            s = 0j
            for k in range(m):
                if k != i:
                    diff = zi - z[k]
                    if diff != 0:
                        s += 1.0 / diff
            if dp == 0:
                ratio_inv = 0j
            else:
                ratio_inv = dp / p
            den = ratio_inv - s
            if den == 0:
                w = complex(1e-8 * (1.0 + abs(zi)), 1e-8)
            else:
                w = 1.0 / den
            z[i] = zi - w
            rel = abs(w) / max(1.0, abs(zi))
            if rel > maxstep:
                maxstep = rel
            if rel < ABERTH_TOL:
                done[i] = True
        if maxstep < ABERTH_TOL:
            converged = True
            break
    for k in range(m):
        out[nz + k] = z[k]
    if not converged:
        return -1
    return it


@njit(cache=True)
def sort_roots(r, n):
    """In-place insertion sort by (re, im)."""
    for i in range(1, n):
        v = r[i]
        j = i - 1
        while j >= 0 and (r[j].real > v.real or (r[j].real == v.real and r[j].imag > v.imag)):
            r[j + 1] = r[j]
            j -= 1
        r[j + 1] = v


@njit(cache=True)
def log_sph_deriv(num, den, numr, denr, deg, y):
    """log ||f'(y)|| for f = num/den of degree deg (finite y)."""
    if abs(y) > CHART_RADIUS:
        u = 1.0 / y
        n0, n1 = horner2(numr, deg, u)
        d0, d1 = horner2(denr, deg, u)
        r2 = abs(u) ** 2
    else:
        n0, n1 = horner2(num, deg, y)
        d0, d1 = horner2(den, deg, y)
        r2 = abs(y) ** 2
    w = n1 * d0 - n0 * d1
    aw = abs(w)
    if aw == 0.0:
        return -np.inf
    return math.log(aw) + math.log1p(r2) - math.log(abs(n0) ** 2 + abs(d0) ** 2)


@njit(cache=True)
def _solve_preimages(num, den, deg, w, q, roots):
    """Roots of num - w*den into roots[0..deg-1]; returns status."""
    scale = 0.0
    for k in range(deg + 1):
        q[k] = num[k] - w * den[k]
        if abs(q[k]) > scale:
            scale = abs(q[k])
    if abs(q[deg]) <= 1e-14 * scale:
        return AT_INFINITY
    if aberth(q, deg, roots) < 0:
        return NO_CONVERGENCE
    sort_roots(roots, deg)
    return OK


@njit(parallel=True, cache=True)
def expand_level(points, nums, dens, numsr, densr, degs, offsets, dtot, out_points, out_step, status):
    """One breadth-first level of the preimage tree.

    Child of node i under generator j, branch b sits at i*dtot + offsets[j] + b.
    """
    npts = points.shape[0]
    s = degs.shape[0]
    dmax = nums.shape[1] - 1
    for i in prange(npts):
        w = points[i]
        q = np.empty(dmax + 1, dtype=np.complex128)
        roots = np.empty(dmax, dtype=np.complex128)
        st = OK
        for j in range(s):
            deg = degs[j]
            code = _solve_preimages(nums[j], dens[j], deg, w, q, roots)
            if code != OK:
                st = code
                for b in range(deg):
                    out_points[i * dtot + offsets[j] + b] = 0j
                    out_step[i * dtot + offsets[j] + b] = np.nan
                continue
            for b in range(deg):
                y = roots[b]
                ld = log_sph_deriv(nums[j], dens[j], numsr[j], densr[j], deg, y)
                if ld == -np.inf and st == OK:
                    st = CRITICAL_HIT
                out_points[i * dtot + offsets[j] + b] = y
                out_step[i * dtot + offsets[j] + b] = ld
        status[i] = st


@njit(cache=True)
def accumulate(parent_logd, step, dtot, out):
    n = parent_logd.shape[0]
    for i in range(n):
        base = parent_logd[i]
        for k in range(dtot):
            out[i * dtot + k] = base + step[i * dtot + k]


@njit(parallel=True, cache=True)
def chunk_exp_sums(logd, t, shift, chunk):
    """Neumaier-compensated sums of exp(-t*logd - shift) over fixed-size chunks."""
    n = logd.shape[0]
    nchunks = (n + chunk - 1) // chunk
    out = np.empty(nchunks)
    for k in prange(nchunks):
        s = 0.0
        comp = 0.0
        hi = min(n, (k + 1) * chunk)
        for i in range(k * chunk, hi):
            x = math.exp(-t * logd[i] - shift)
            tt = s + x
            if abs(s) >= abs(x):
                comp += (s - tt) + x
            else:
                comp += (x - tt) + s
            s = tt
        out[k] = s + comp
    return out


@njit(cache=True)
def backward_chains(start, uniforms, cumw, nums, dens, numsr, densr, degs, out_points, out_symbols, out_logd, status):
    """Random backward orbits.

    uniforms[c, k, 0] picks the generator through the cumulative weights
    ``cumw``, uniforms[c, k, 1] picks one of its preimage branches uniformly.
    Step k of chain c stores the new point, the generator index and
    log||f_j'(y)|| at that point.
    """
    nch = start.shape[0]
    nsteps = uniforms.shape[1]
    s = degs.shape[0]
    dmax = nums.shape[1] - 1
    q = np.empty(dmax + 1, dtype=np.complex128)
    roots = np.empty(dmax, dtype=np.complex128)
    for c in range(nch):
        w = start[c]
        st = OK
        for k in range(nsteps):
            u0 = uniforms[c, k, 0]
            j = 0
            while j < s - 1 and u0 >= cumw[j]:
                j += 1
            deg = degs[j]
            code = _solve_preimages(nums[j], dens[j], deg, w, q, roots)
            if code != OK:
                st = code
                for kk in range(k, nsteps):
                    out_points[c, kk] = np.nan
                    out_symbols[c, kk] = -1
                    out_logd[c, kk] = np.nan
                break
            b = int(uniforms[c, k, 1] * deg)
            if b >= deg:
                b = deg - 1
            y = roots[b]
            out_points[c, k] = y
            out_symbols[c, k] = j
            out_logd[c, k] = log_sph_deriv(nums[j], dens[j], numsr[j], densr[j], deg, y)
            w = y
        status[c] = st


@njit(cache=True)
def _poly_eval(c, n, z):
    p = c[n]
    for k in range(n - 1, -1, -1):
        p = p * z + c[k]
    return p


@njit(parallel=True, cache=True)
def escape_counts(points, words, polys, degs, radius):
    """For each point, the number of words whose forward orbit leaves |z| <= radius."""
    npts = points.shape[0]
    ntr = words.shape[0]
    nsteps = words.shape[1]
    r2 = radius * radius
    out = np.zeros(npts, dtype=np.int64)
    for i in prange(npts):
        cnt = 0
        for t in range(ntr):
            z = points[i]
            if z.real * z.real + z.imag * z.imag > r2:
                cnt += 1
                continue
            for k in range(nsteps):
                j = words[t, k]
                z = _poly_eval(polys[j], degs[j], z)
                if z.real * z.real + z.imag * z.imag > r2:
                    cnt += 1
                    break
        out[i] = cnt
    return out
