"""Reduced local model at an essential singularity.

The model g(z) = (z-a)^alpha exp(lambda / (z-a)^m) has derivatives carried by
a Sheffer family Pi_n^(alpha,m)(x), x = -lambda/(z-a)^m.  Everything
structural (coefficients, moments, orders at 0) is computed in exact rational
arithmetic; only zeros and limit measures use floating point.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .errors import BranchAmbiguityError, DomainError, InvalidInputError, QuadratureError
from .numcore import CPoly, bc, workprec
from .roots import EmpiricalMeasure, find_roots, real_roots


def pochhammer(a, n):
    """Rising factorial (a)_n for rational a."""
    out = Fraction(1)
    for k in range(n):
        out *= a + k
    return out


# exact polynomials are plain lists of Fractions (ascending degree)

def _trim(c):
    c = list(c)
    while c and c[-1] == 0:
        c.pop()
    return c


def _check_params(alpha, m):
    if int(alpha) != alpha or int(m) != m or m < 1:
        raise InvalidInputError("alpha must be an integer and m a positive integer")


@dataclass(frozen=True)
class ShefferFamily:
    alpha: int
    m: int
    polys: tuple  # tuple of tuples of Fractions

    @property
    def beta_param(self):
        return Fraction(-1) - Fraction(self.alpha, self.m)

    def __getitem__(self, n):
        return self.polys[n]


def sheffer_seq(alpha, m, N):
    """Pi_0..Pi_N via Pi_{n+1} = m x Pi_n' + (n - alpha - m x) Pi_n."""
    _check_params(alpha, m)
    if N < 0:
        raise InvalidInputError("N must be nonnegative")
    polys = [(Fraction(1),)]
    for n in range(N):
        p = polys[-1]
        out = [Fraction(0)] * (len(p) + 1)
        for k, c in enumerate(p):
            out[k] += (m * k + n - alpha) * c  # m x (c x^k)' + (n - alpha) c x^k
            out[k + 1] -= m * c
        polys.append(tuple(_trim(out)))
    return ShefferFamily(alpha, m, tuple(polys))


def sheffer_explicit(alpha, m, n):
    """sum_k x^k/k! sum_j (-1)^j C(k,j) (m j - alpha)_n."""
    _check_params(alpha, m)
    out = []
    for k in range(n + 1):
        s = sum((-1) ** j * math.comb(k, j) * pochhammer(Fraction(m * j - alpha), n) for j in range(k + 1))
        out.append(Fraction(s) / math.factorial(k))
    return tuple(_trim(out))


def laguerre(a, n):
    """Exact coefficients of L_k^(a), k = 0..n, by the three-term recurrence."""
    a = Fraction(a)
    L = [[Fraction(1)], _trim([1 + a, Fraction(-1)])]
    for k in range(1, n):
        prev, cur = L[k - 1], L[k]
        nxt = [Fraction(0)] * (len(cur) + 1)
        for i, c in enumerate(cur):
            nxt[i] += (2 * k + 1 + a) * c
            nxt[i + 1] -= c
        for i, c in enumerate(prev):
            nxt[i] -= (k + a) * c
        L.append([c / (k + 1) for c in nxt])
    return [tuple(_trim(l)) for l in L[: n + 1]]


def laguerre_check(alpha, n):
    """Max |coefficient difference| between Pi_k^(alpha,1) and k! L_k^(-alpha-1), k <= n."""
    fam = sheffer_seq(alpha, 1, n)
    lag = laguerre(-alpha - 1, n)
    worst = Fraction(0)
    for k in range(n + 1):
        a = fam[k]
        b = [c * math.factorial(k) for c in lag[k]]
        size = max(len(a), len(b))
        a = list(a) + [0] * (size - len(a))
        b = list(b) + [0] * (size - len(b))
        worst = max([worst] + [abs(Fraction(x) - Fraction(y)) for x, y in zip(a, b)])
    return {"alpha": alpha, "n": n, "max_coeff_diff": worst, "ok": worst == 0}


# m-orthogonality -------------------------------------------------------------

def lambda_r(alpha, m):
    return [Fraction(r - alpha, m) for r in range(m)]


def monomial_moment(alpha, m, j, k):
    """<u_j, x^k> = (1/j!) sum_r (-1)^r C(j,r) (lambda_r)_k."""
    lam = lambda_r(alpha, m)
    s = sum((-1) ** r * math.comb(j, r) * pochhammer(lam[r], k) for r in range(j + 1))
    return Fraction(s) / math.factorial(j)


def _check_moment_args(alpha, m, j):
    _check_params(alpha, m)
    if alpha >= 0:
        raise DomainError("the moment functionals require alpha < 0")
    if not 0 <= j <= m - 1:
        raise InvalidInputError("j must lie in 0..m-1")


def morth_moment(alpha, m, j, nu, n, family=None):
    """<u_j, x^nu Pi_n> as an exact rational."""
    _check_moment_args(alpha, m, j)
    if family is None or len(family.polys) <= n:
        family = sheffer_seq(alpha, m, n)
    return sum((c * monomial_moment(alpha, m, j, k + nu) for k, c in enumerate(family[n])), Fraction(0))


@dataclass(frozen=True)
class MomentTable:
    alpha: int
    m: int
    entries: dict  # (j, nu, n) -> Fraction
    lambda_r: tuple


def moment_table(alpha, m, nu_max, n_max):
    _check_moment_args(alpha, m, 0)
    fam = sheffer_seq(alpha, m, n_max)
    entries = {}
    for j in range(m):
        for nu in range(nu_max + 1):
            for n in range(n_max + 1):
                entries[(j, nu, n)] = morth_moment(alpha, m, j, nu, n, fam)
    return MomentTable(alpha, m, entries, tuple(lambda_r(alpha, m)))


def moment_gf_closed(alpha, m, j, nu):
    """Coefficients in t of (1-t)^(m nu)/j! sum_r (-1)^r C(j,r) (lambda_r)_nu (1-t)^r."""
    _check_moment_args(alpha, m, j)
    lam = lambda_r(alpha, m)
    deg = m * nu + j
    out = [Fraction(0)] * (deg + 1)
    for r in range(j + 1):
        w = Fraction((-1) ** r * math.comb(j, r)) * pochhammer(lam[r], nu) / math.factorial(j)
        e = m * nu + r
        for k in range(e + 1):
            out[k] += w * math.comb(e, k) * (-1) ** k
    return tuple(_trim(out))


def moment_gf_series(alpha, m, j, nu, N, family=None):
    """[<u_j, x^nu Pi_n>/n! for n = 0..N]."""
    if family is None or len(family.polys) <= N:
        family = sheffer_seq(alpha, m, N)
    return tuple(morth_moment(alpha, m, j, nu, n, family) / math.factorial(n) for n in range(N + 1))


def ord0(alpha, m, n):
    """Order of vanishing of Pi_n^(alpha,m) at 0 (n >= alpha + 1 when alpha >= 0)."""
    _check_params(alpha, m)
    if alpha < 0:
        return 0
    if n < alpha + 1:
        raise InvalidInputError("the ord_0 law needs n >= alpha + 1")
    return alpha // m + 1


def ord0_exact(poly):
    k = 0
    while k < len(poly) and poly[k] == 0:
        k += 1
    return k


# microscopic limit -------------------------------------------------------------

def c_m(m):
    return Fraction(m + 1, m) ** (m + 1)


def zeta_of_phi(m, phi):
    phi = np.asarray(phi, dtype=float)
    return np.sin((m + 1) * phi) ** (m + 1) / (m * np.sin(phi) * np.sin(m * phi) ** m)


def density_of_phi(m, phi):
    phi = np.asarray(phi, dtype=float)
    return np.sin(m * phi) ** (m + 1) / (np.pi * np.sin((m + 1) * phi) ** m)


def dzeta_dphi(m, phi):
    phi = np.asarray(phi, dtype=float)
    logd = ((m + 1) ** 2 / np.tan((m + 1) * phi) - 1 / np.tan(phi) - m ** 2 / np.tan(m * phi))
    return zeta_of_phi(m, phi) * logd


@dataclass(frozen=True)
class MicroLimit:
    m: int
    c_m: Fraction
    phi: np.ndarray
    zeta: np.ndarray  # increasing
    density: np.ndarray
    cdf_table: np.ndarray

    def sampler(self, phi):
        return zeta_of_phi(self.m, phi), density_of_phi(self.m, phi)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.interp(z, self.zeta, self.cdf_table, left=0.0, right=1.0)

    def quantile(self, u):
        return np.interp(np.asarray(u, dtype=float), self.cdf_table, self.zeta)

    def pdf(self, z):
        return np.interp(np.asarray(z, dtype=float), self.zeta, self.density, left=0.0, right=0.0)


def micro_limit(m, grid_size=20000):
    """Tabulate mu_m through its trigonometric parametrization."""
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    top = math.pi / (m + 1)
    k = np.arange(grid_size)
    # Chebyshev-spaced interior nodes accumulating at both ends
    phi = top * 0.5 * (1 - np.cos(np.pi * (k + 0.5) / grid_size))
    zeta = zeta_of_phi(m, phi)
    dens = density_of_phi(m, phi)
    weight = dens * np.abs(dzeta_dphi(m, phi))  # smooth on [0, top]
    # add the endpoint values (0 at phi = 0; finite limit at phi = top)
    phi_full = np.concatenate(([0.0], phi, [top]))
    end = _weight_at_top(m)
    w_full = np.concatenate(([0.0], weight, [end]))
    seg = 0.5 * (w_full[1:] + w_full[:-1]) * np.diff(phi_full)
    # zeta decreases in phi, so the CDF at zeta(phi) is the mass from phi to the top
    tail = np.concatenate((np.cumsum(seg[::-1])[::-1], [0.0]))
    total = tail[0]
    if abs(total - 1) > 1e-8:
        raise QuadratureError(f"mu_{m} total mass {total!r} differs from 1")
    cdf_phi = tail[1:-1] / total
    order = np.argsort(zeta)
    cm = c_m(m)
    # rounding can push zeta(phi) a few ulps past c_m near phi = 0
    zs = np.concatenate(([0.0], np.clip(zeta[order], 0.0, float(cm)), [float(cm)]))
    cd = np.concatenate(([0.0], cdf_phi[order], [1.0]))
    ds = np.concatenate(([0.0], dens[order], [0.0]))
    return MicroLimit(m, cm, phi, zs, ds, cd)


def _weight_at_top(m):
    """Limit of density * |zeta'| as phi -> pi/(m+1)."""
    top = math.pi / (m + 1)
    eps = 1e-7
    p = np.array([top - eps, top - 2 * eps])
    w = density_of_phi(m, p) * np.abs(dzeta_dphi(m, p))
    return float(2 * w[0] - w[1])


def mp_density(zeta):
    """Marchenko-Pastur density sqrt(zeta (4 - zeta)) / (2 pi zeta) on (0, 4)."""
    z = np.asarray(zeta, dtype=float)
    inside = (z > 0) & (z < 4)
    out = np.zeros_like(z)
    zi = z[inside]
    out[inside] = np.sqrt(zi * (4 - zi)) / (2 * np.pi * zi)
    return out if out.ndim else float(out)


def mp_cdf(zeta):
    """Closed-form Marchenko-Pastur CDF on [0, 4]."""
    z = np.clip(np.asarray(zeta, dtype=float), 0.0, 4.0)
    # with zeta = 4 cos^2 phi the mass of [zeta, 4] is (2 phi - sin 2 phi) / pi
    phi = np.arccos(np.sqrt(z / 4))
    return 1 - (2 * phi - np.sin(2 * phi)) / np.pi


def v_branch(m, zeta, steps=64):
    """Distinguished root of v^(m+1) = m zeta (v - 1) with v ~ 1 + 1/(m zeta)."""
    z = bc(zeta)
    cm = mpfr(c_m(m).numerator) / c_m(m).denominator
    zr, zi = z.real, z.imag
    tol = mpfr(1e-8)
    if abs(zi) <= tol and -tol <= zr <= cm + tol:
        raise BranchAmbiguityError("zeta lies on the cut [0, c_m]")
    r = abs(z)
    start = max(mpfr(1e3) * cm, 10 * r)
    v = None
    for k in range(steps + 1):
        s = start * (r / start) ** (mpfr(k) / steps)
        zk = z / r * s
        if v is None:
            v = 1 + 1 / (m * zk)
        for _ in range(100):
            f = v ** (m + 1) - m * zk * (v - 1)
            df = (m + 1) * v ** m - m * zk
            dv = f / df
            v -= dv
            if abs(dv) <= mpfr(2) ** (-int(gmpy2.get_context().precision * 0.9)) * max(1, abs(v)):
                break
    return v


# zeros of the model and empirical comparison ---------------------------------------

def _cancellation_bits(coeffs, top):
    """Bits lost to cancellation when evaluating in the monomial basis on [0, top]."""
    n = len(coeffs) - 1
    worst = 0.0
    with workprec(max(256, 8 * n)):
        c = [mpfr(gmpy2.mpq(a.numerator, a.denominator)) for a in coeffs]
        for x in np.linspace(0.0, top, 65)[1:] + 1.0 / 7:
            x = mpfr(x)
            v = s = mpfr(0)
            for a in reversed(c):
                v = v * x + a
                s = s * abs(x) + abs(a)
            if not gmpy2.is_zero(v):
                worst = max(worst, float(gmpy2.log2(s / abs(v))))
    return worst


def zeros(alpha, m, n, bits=None):
    """Zeros of Pi_n^(alpha,m) (x-scale), computed at high precision.

    The working precision covers twice the measured cancellation loss so that
    roots are resolved to half the working bits.  Real simple zeros are
    isolated by sign changes; anything else goes to the Aberth solver.
    """
    coeffs = sheffer_seq(alpha, m, n)[n]
    if bits is None:
        loss = _cancellation_bits(coeffs, float(c_m(m)) * n)
        bits = max(256, int(2 * loss) + 128)
    with workprec(bits):
        p = CPoly(tuple(mpc(mpfr(gmpy2.mpq(c.numerator, c.denominator))) for c in coeffs))
        rs = real_roots(p)
        if rs is None:
            rs = find_roots(p)
    return rs


def rescaled_empirical(alpha, m, n, lam=None, bits=None):
    """zeta-scale zero measure of Pi_n(n zeta); optionally the z-scale pushforward.

    With ``lam`` given, every nonzero zeta yields m atoms w = eps_nu eta zeta^(-1/m)
    (eta^m = -lam) of weight 1/(m N_n); these are the points n^(1/m)(z - a).
    """
    rs = zeros(alpha, m, n, bits)
    atoms = tuple((complex(r) / n, k / n) for r, k in zip(rs.roots, rs.multiplicities))
    emp = EmpiricalMeasure(atoms, float(sum(w for _, w in atoms)))
    if lam is None:
        return emp
    lam = complex(lam)
    eta = (-lam) ** (1.0 / m)
    nonzero = [(z, w * n) for z, w in atoms if abs(z) > 0]
    Nn = sum(k for _, k in nonzero)
    pushed = []
    for z, k in nonzero:
        base = eta * z ** (-1.0 / m)
        for nu in range(m):
            pushed.append((base * np.exp(2j * np.pi * nu / m), k / (m * Nn)))
    return EmpiricalMeasure(tuple(pushed), float(sum(w for _, w in pushed)))


def ks_distance(samples, cdf, weights=None):
    """One-sample Kolmogorov-Smirnov distance evaluated at every atom."""
    x = np.asarray(samples, dtype=float)
    if weights is None:
        weights = np.full(len(x), 1.0 / len(x))
    order = np.argsort(x)
    x = x[order]
    w = np.asarray(weights, dtype=float)[order]
    w = w / w.sum()
    upper = np.cumsum(w)
    lower = upper - w
    F = np.asarray(cdf(x), dtype=float)
    return float(max(np.max(upper - F), np.max(F - lower)))
