"""Simultaneous (Aberth) root finding and zero-counting measures."""

import logging
import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .errors import InvalidInputError, PrecisionError
from .numcore import CPoly, bc, current_precision

log = logging.getLogger(__name__)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class RootSet:
    """Roots of a polynomial with multiplicities.

    ``radii`` holds an inclusion radius per root (deg * |p/p'|, or the cluster
    radius for merged roots); ``residual`` is the largest backward error
    |p(z)| / sum |a_k||z|^k over the roots.
    """

    roots: tuple
    multiplicities: tuple
    poly_degree: int
    residual: float
    radii: tuple = field(default=())

    def __post_init__(self):
        if sum(self.multiplicities) != self.poly_degree:
            raise PrecisionError("root multiplicities do not add up to the degree")

    def __len__(self):
        return len(self.roots)

    def as_complex(self):
        return np.array([complex(r) for r in self.roots])

    def expanded(self):
        """Roots repeated according to multiplicity."""
        out = []
        for r, k in zip(self.roots, self.multiplicities):
            out.extend([r] * k)
        return out


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: tuple  # of (complex location, weight)
    total: float

    @property
    def locations(self):
        return np.array([a[0] for a in self.atoms], dtype=complex)

    @property
    def weights(self):
        return np.array([a[1] for a in self.atoms], dtype=float)


@dataclass(frozen=True)
class DiscCount:
    count: int
    flagged: int  # roots whose inclusion disc straddles the circle


def cauchy_radius(p):
    """Unique positive root of |a_n| x^n = sum_{k<n} |a_k| x^k."""
    n = p.degree
    logs = []
    for c in p.coeffs:
        a = abs(c)
        logs.append(float(gmpy2.log(a)) if a > 0 else -math.inf)
    lead = logs[-1]
    rel = [l - lead for l in logs[:-1]]

    def excess(t):  # log(sum |a_k/a_n| e^{kt}) - n t
        terms = [r + k * t for k, r in enumerate(rel) if r > -math.inf]
        if not terms:
            return -math.inf
        m = max(terms)
        return m + math.log(sum(math.exp(x - m) for x in terms)) - n * t

    lo, hi = -50.0, 50.0
    while excess(hi) > 0:
        hi *= 2
    while excess(lo) < 0 and lo > -3000:
        lo *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return math.exp(hi)


def _initial_points(n, radius=1.0):
    k = np.arange(n)
    return radius * np.exp(1j * (GOLDEN_ANGLE * k + 0.25))


def _aberth_double(coeffs, z0, maxiter=2000, tol=1e-13):
    """Jacobi Aberth sweeps in complex128; returns the best iterate."""
    c = np.asarray(coeffs, dtype=complex)
    dc = c[1:] * np.arange(1, len(c))
    z = z0.copy()
    n = len(z)
    with np.errstate(all="ignore"):
        for _ in range(maxiter):
            p = np.polyval(c[::-1], z)
            dp = np.polyval(dc[::-1], z)
            ratio = p / dp
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            s = inv.sum(axis=1)
            w = ratio / (1.0 - ratio * s)
            bad = ~np.isfinite(w)
            if bad.all():
                break
            w[bad] = 0.0
            z = z - w
            if np.max(np.abs(w)) < tol * max(1.0, np.max(np.abs(z))) and not bad.any():
                break
    if not np.all(np.isfinite(z)) or len(set(np.round(z, 14))) < n:
        return None
    return z


def _aberth_mp(q, z, maxiter):
    """Gauss-Seidel Aberth sweeps at the working precision (q monic, scaled)."""
    n = len(z)
    bits = current_precision()
    stop = mpfr(2) ** (-(bits // 2))
    corr = [mpfr(1)] * n
    extra = 0
    best = None
    stall = 0
    for it in range(maxiter):
        biggest = mpfr(0)
        for i in range(n):
            zi = z[i]
            p, dp = q.eval_with_derivative(zi)
            if gmpy2.is_zero(p):
                corr[i] = mpfr(0)
                continue
            s = mpc(0)
            for j in range(n):
                if j != i:
                    d = zi - z[j]
                    if not gmpy2.is_zero(d):
                        s += 1 / d
            ratio = p / dp if not gmpy2.is_zero(dp) else mpc(1)
            denom = 1 - ratio * s
            w = ratio / denom if not gmpy2.is_zero(denom) else ratio
            z[i] = zi - w
            corr[i] = abs(w)
            if corr[i] > biggest:
                biggest = corr[i]
        if biggest < stop:
            extra += 1
            if extra >= 2:
                return z, corr, True
        if best is not None and biggest >= best:
            stall += 1
        else:
            stall = 0
            best = biggest
        # clustered (multiple) roots converge only to precision**(1/k)
        if stall >= 8 and best < mpfr(2) ** (-(bits // 8)):
            return z, corr, True
    return z, corr, False


def find_roots(p, maxiter=400):
    """All roots of ``p`` (deg >= 1) at the working precision."""
    if p.degree < 1:
        raise InvalidInputError("find_roots needs a polynomial of degree >= 1")
    bits = current_precision()
    n = p.degree
    # strip roots at the origin exactly
    k0 = 0
    while gmpy2.is_zero(p.coeffs[k0]):
        k0 += 1
    core = CPoly(p.coeffs[k0:]) if k0 else p
    roots = [mpc(0)] * k0
    radii = [mpfr(0)] * k0
    if core.degree >= 1:
        R = cauchy_radius(core)
        Rm = bc(R)
        q = core.scaled_variable(Rm).monic()
        z0 = _initial_points(core.degree)
        zd = None
        try:
            dcoef = [complex(c) for c in q.coeffs]
            if all(np.isfinite(dcoef)):
                zd = _aberth_double(dcoef, z0)
        except (OverflowError, ValueError):
            zd = None
        if zd is None:
            zd = z0
        z = [mpc(complex(v)) for v in zd]
        z, corr, ok = _aberth_mp(q, z, maxiter)
        if not ok:
            raise PrecisionError(
                f"Aberth iteration did not converge for degree {core.degree} at {bits} bits"
            )
        for zi in z:
            pv, dpv = q.eval_with_derivative(zi)
            rad = core.degree * abs(pv / dpv) if not gmpy2.is_zero(dpv) else mpfr(0)
            roots.append(zi * Rm)
            radii.append(rad * R)
    # cluster merge for multiplicities
    merge = mpfr(2) ** (-(bits // 4)) * max(mpfr(1), max(abs(r) for r in roots))
    used = [False] * len(roots)
    out_r, out_m, out_rad = [], [], []
    for i, r in enumerate(roots):
        if used[i]:
            continue
        members = [i]
        used[i] = True
        for j in range(i + 1, len(roots)):
            if not used[j] and abs(roots[j] - r) < merge:
                used[j] = True
                members.append(j)
        if len(members) == 1:
            out_r.append(r)
            out_rad.append(radii[i])
        else:
            centre = sum((roots[j] for j in members), mpc(0)) / len(members)
            out_r.append(centre)
            out_rad.append(max(max(abs(roots[j] - centre) for j in members), max(radii[j] for j in members)))
        out_m.append(len(members))
    residual = mpfr(0)
    for r in out_r:
        scale = p.eval_abs(r)
        if scale > 0:
            residual = max(residual, abs(p(r)) / scale)
    if residual > mpfr(2) ** (-(bits // 2)) and max(out_m) == 1:
        raise PrecisionError(f"root residual {float(residual):.3e} exceeds the certification threshold")
    return RootSet(tuple(out_r), tuple(out_m), n, float(residual), tuple(float(x) for x in out_rad))


def _horner2(c, x):
    v = mpfr(0)
    d = mpfr(0)
    for a in reversed(c):
        d = d * x + v
        v = v * x + a
    return v, d


def _bracket_newton(c, lo, hi, flo, tol):
    """Safeguarded Newton inside a sign-change bracket; returns (root, radius)."""
    pos = flo > 0
    x = (lo + hi) / 2
    for _ in range(10 * current_precision()):
        v, d = _horner2(c, x)
        if gmpy2.is_zero(v):
            return x, mpfr(0)
        if (v > 0) == pos:
            lo = x
        else:
            hi = x
        nx = x - v / d if not gmpy2.is_zero(d) else lo - 1
        if not lo < nx < hi:
            nx = (lo + hi) / 2
        if abs(nx - x) <= tol * abs(nx) or hi - lo <= tol * abs(nx):
            # certify with a sign change across a tiny interval
            e = 2 * tol * abs(nx)
            a, b = _horner2(c, nx - e)[0], _horner2(c, nx + e)[0]
            if (a > 0) == pos and (b > 0) != pos:
                return nx, e
        x = nx
    return (lo + hi) / 2, (hi - lo) / 2


def real_roots(p, samples_per_root=40):
    """All roots of a real polynomial when they are real and simple, else None.

    Sign changes of ``p`` are counted on a grid spaced uniformly in sqrt|x|
    and refined geometrically towards the origin, where zeros may crowd.
    The result is certified only when every nonzero root has its own sign
    change; each is then polished by bracketed Newton.
    """
    if p.degree < 1:
        raise InvalidInputError("real_roots needs a polynomial of degree >= 1")
    if any(not gmpy2.is_zero(c.imag) for c in p.coeffs):
        return None
    bits = current_precision()
    k0 = 0
    while gmpy2.is_zero(p.coeffs[k0].real):
        k0 += 1
    c = [a.real for a in p.coeffs[k0:]]
    deg = len(c) - 1
    roots, radii = [], []
    if deg >= 1:
        R = mpfr(cauchy_radius(CPoly(p.coeffs[k0:]))) * mpfr("1.01")
        G = samples_per_root * deg
        pos = {R * (mpfr(j) / G) ** 2 for j in range(1, G + 1)}
        # geometric points catch roots that crowd towards the origin
        step = mpfr(2) ** mpfr(0.125)
        x = R * mpfr(2) ** (-(bits // 4))
        while x < R:
            pos.add(x)
            x *= step
        pos = sorted(pos)
        grid = [-x for x in reversed(pos)] + pos
        vals = [_horner2(c, x)[0] for x in grid]
        tol = mpfr(2) ** (-(bits // 2))
        for i in range(len(grid) - 1):
            a, b = vals[i], vals[i + 1]
            if gmpy2.is_zero(a) or gmpy2.is_zero(b):
                return None
            if (a > 0) != (b > 0):
                x, rad = _bracket_newton(c, grid[i], grid[i + 1], a, tol)
                roots.append(x)
                radii.append(rad)
        if len(roots) != deg:
            return None
    full = [mpc(0)] * k0 + [mpc(x) for x in roots]
    out_r = ([mpc(0)] if k0 else []) + [mpc(x) for x in roots]
    out_m = ([k0] if k0 else []) + [1] * len(roots)
    residual = mpfr(0)
    for r in full[k0:]:
        scale = p.eval_abs(r)
        if scale > 0:
            residual = max(residual, abs(p(r)) / scale)
    return RootSet(tuple(out_r), tuple(out_m), p.degree, float(residual),
                   tuple(([0.0] if k0 else []) + [float(x) for x in radii]))


def empirical_measure(rs, norm):
    """Each root becomes an atom of weight multiplicity / norm."""
    if norm <= 0:
        raise InvalidInputError("norm must be positive")
    atoms = tuple((complex(r), k / norm) for r, k in zip(rs.roots, rs.multiplicities))
    return EmpiricalMeasure(atoms, float(sum(w for _, w in atoms)))


def count_in_disc(rs, center, r):
    """Multiplicity-weighted count of roots with |root - center| < r."""
    if r <= 0:
        raise InvalidInputError("disc radius must be positive")
    c = complex(center)
    count = 0
    flagged = 0
    radii = rs.radii or (0.0,) * len(rs.roots)
    for z, k, rad in zip(rs.roots, rs.multiplicities, radii):
        dist = abs(complex(z) - c)
        if dist < r:
            count += k
        if abs(dist - r) <= 10 * rad:
            flagged += k
    return DiscCount(count, flagged)
