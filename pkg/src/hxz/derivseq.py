"""The polynomial factors B_n of successive derivatives.

With f^(n) = P_T B_n e^E / (Q W^n), the B_n obey the first-order recurrence
B_{n+1} = W B_n' + (U - n W') B_n starting from B_0 = P#.  This module runs
that recurrence, checks it against the closed-form degree laws and local
identities, and offers an independent Taylor-coefficient oracle.
"""

import math
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpc, mpfr

from .errors import InvalidInputError, PrecisionError, QuadratureError
from .numcore import CPoly, bc, current_precision, floor_tol, to_pair


@dataclass(frozen=True)
class DerivSeq:
    structure: object
    B: tuple
    gamma: tuple
    degs: tuple
    s: tuple = field(default=())  # s_n: 0 when h = 0, log n! otherwise

    def __len__(self):
        return len(self.B)

    def C(self, n, z):
        """C_n(z) = B_n(z) / W(z)^n."""
        return self.B[n](z) / self.structure.W(z) ** n

    def to_rows(self):
        return [
            {"n": n, "deg": self.degs[n], "gamma": to_pair(self.gamma[n]),
             "coeffs": self.B[n].to_json()}
            for n in range(len(self.B))
        ]


@dataclass(frozen=True)
class OracleSample:
    z: mpc
    values: tuple  # C_n(z)/n!
    radius: float
    nodes: int


def _abs_coeff(a, b, k):
    """sum_{i+j=k} |a_i| |b_j|, the magnitude scale of coefficient k of a*b."""
    total = mpfr(0)
    for i in range(max(0, k - len(b.coeffs) + 1), min(k, len(a.coeffs) - 1) + 1):
        total += abs(a.coeffs[i]) * abs(b.coeffs[k - i])
    return total


def _step(W, Wd, U, B, n):
    """One recurrence step with leading-cancellation cleanup.

    Leading coefficients that sit at the rounding-noise level of their own
    contributing products are genuine cancellations (the J-transition) and
    are dropped.
    """
    Bd = B.deriv()
    V = U - Wd * n
    out = list((W * Bd + V * B).coeffs)
    tol = floor_tol(24)
    while out:
        k = len(out) - 1
        scale = _abs_coeff(W, Bd, k) + _abs_coeff(V, B, k)
        if abs(out[k]) <= tol * scale:
            out.pop()
        else:
            break
    return CPoly(tuple(out))


def b_sequence(sd, N):
    """B_0..B_N for the analysed spec ``sd``."""
    if N < 0:
        raise InvalidInputError("N must be nonnegative")
    W, U = sd.W, sd.U
    Wd = W.deriv()
    B = [sd.P_sharp]
    for n in range(N):
        nxt = _step(W, Wd, U, B[-1], n)
        if nxt.is_zero:
            raise PrecisionError(f"B_{n + 1} vanished numerically; raise precision_bits")
        if not all(gmpy2.is_finite(c.real) and gmpy2.is_finite(c.imag) for c in (nxt.lc, nxt.coeffs[0])):
            raise PrecisionError("coefficient overflow; re-run at higher precision")
        B.append(nxt)
    gamma = tuple(b.lc for b in B)
    degs = tuple(b.degree for b in B)
    s = tuple(math.lgamma(n + 1) if sd.h > 0 else 0.0 for n in range(N + 1))
    return DerivSeq(sd, tuple(B), gamma, degs, s)


# closed-form laws ----------------------------------------------------------

def _rising(a, n):
    out = 1
    for k in range(n):
        out *= a + k
    return out


def predicted_degree_and_lc(sd, n):
    """(deg B_n, lc B_n) predicted by the degree-growth laws."""
    deg0 = sd.P_sharp.degree
    gamma0 = sd.P_sharp.lc
    p, q, d = sd.p, sd.q, sd.d
    if sd.h > 0:
        return deg0 + n * sd.kappa, gamma0 * (sd.h * sd.tau_h) ** n
    if p < q:
        return deg0 + n * (d - 1), gamma0 * (-1) ** n * mpfr(_rising(q - p, n))
    if n <= p - q:
        return deg0 + n * (d - 1), gamma0 * mpfr(math.factorial(p - q) // math.factorial(p - q - n))
    J = sd.J
    deg = q - sd.P_T.degree - J + n * (d - 1)
    return deg, sd.G_minus_J * (-1) ** n * mpfr(_rising(J, n))


@dataclass(frozen=True)
class LawRow:
    n: int
    deg: int
    deg_expected: int
    gamma: mpc
    gamma_expected: mpc
    rel_residual: float
    ok: bool


def check_degree_law(seq, rel_tol=None):
    """Compare every B_n with the applicable degree / leading-coefficient law."""
    if rel_tol is None:
        rel_tol = mpfr(2) ** (-(current_precision() // 2))
    rows = []
    for n, b in enumerate(seq.B):
        de, ge = predicted_degree_and_lc(seq.structure, n)
        res = abs(b.lc - ge) / abs(ge)
        rows.append(LawRow(n, b.degree, de, b.lc, ge, float(res), b.degree == de and res <= rel_tol))
    return rows


@dataclass(frozen=True)
class IdentityReport:
    max_rel_residual: float
    rows: tuple  # (site index, n, rel residual)
    ok: bool


def check_local_identities(seq, rel_tol=1e-25):
    """B_n(c_j) = U(c_j)^n P#(c_j) at essential sites; the one-step pole identity."""
    sd = seq.structure
    Wd = sd.W.deriv()
    rows = []
    worst = 0.0
    for i, site in enumerate(sd.sites):
        c = site.location
        if site.kind == "essential":
            u = sd.U(c)
            base = sd.P_sharp(c)
            pred = base
            for n, b in enumerate(seq.B):
                val = b(c)
                res = float(abs(val - pred) / abs(pred))
                rows.append((i, n, res))
                worst = max(worst, res)
                pred = pred * u
        else:
            wd = Wd(c)
            prev = seq.B[0](c)
            for n in range(len(seq.B) - 1):
                val = seq.B[n + 1](c)
                pred = -(site.ell + n) * wd * prev
                res = float(abs(val - pred) / abs(pred))
                rows.append((i, n + 1, res))
                worst = max(worst, res)
                prev = val
    return IdentityReport(worst, tuple(rows), worst <= rel_tol)


# generating-function oracle -------------------------------------------------

def site_distance(sd, z):
    """rho(z): distance from z to the nearest singular site."""
    return min(abs(z - s.location) for s in sd.sites)


def translation_gf(sd, z, xi):
    """The translation generating function sum_n C_n(z) xi^n / n!."""
    spec = sd.spec
    w = z + xi
    return (spec.Q(z) / sd.P_T(z) * spec.P(w) / spec.Q(w)
            * gmpy2.exp(sd.E(w) - sd.E(z)))


def gf_oracle(sd, z, N, rel_tol=None, start_nodes=256, max_nodes=1 << 15):
    """C_n(z)/n! for n <= N by trapezoidal Cauchy integrals on |xi| = rho/2."""
    z = bc(z)
    rho = site_distance(sd, z)
    if rho < mpfr(2) ** (-(current_precision() // 2)) * max(mpfr(1), abs(z)):
        raise InvalidInputError("oracle point coincides with a singular site")
    if rel_tol is None:
        rel_tol = mpfr(2) ** (-(current_precision() // 2))
    r = rho / 2

    def integrate(K):
        acc = [mpc(0)] * (N + 1)
        twopi = 2 * gmpy2.const_pi()
        gmax = mpfr(0)
        for k in range(K):
            e = gmpy2.exp(mpc(0, twopi * k / K))
            g = translation_gf(sd, z, r * e)
            gmax = max(gmax, abs(g))
            # xi^{-n} = r^{-n} e^{-i n theta}
            einv = 1 / e
            term = g
            for n in range(N + 1):
                acc[n] += term
                term = term * einv
        return [acc[n] / K / r ** n for n in range(N + 1)], gmax

    K = start_nodes
    prev, _ = integrate(K)
    while True:
        K *= 2
        if K > max_nodes:
            raise QuadratureError("oracle quadrature did not converge")
        cur, gmax = integrate(K)
        # roundoff floor of the n-th trapezoid sum
        noise = [floor_tol(8) * gmax / r ** n for n in range(N + 1)]
        if all(abs(a - b) <= max(rel_tol * abs(b), fl) for a, b, fl in zip(prev, cur, noise)):
            return OracleSample(z, tuple(cur), float(r), K)
        prev = cur
