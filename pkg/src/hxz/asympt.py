"""Predicted asymptotics of C_n(z)/n! inside a Voronoi cell.

Pole cells use Darboux extraction; essential cells use the Wright saddle
expansion with m+1 saddles t_nu ~ omega_nu eta n^(-1/(m+1)).  All the local
data (tilde factors, principal parts, the regular part of E at the site) is
read from the cached StructureData.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .derivseq import b_sequence
from .errors import DomainError, InvalidInputError, SaddleFailureError, SingularAmplitudeError
from .numcore import CPoly, bc, current_precision, exact_div, laurent_coeffs, to_pair
from .voronoi import build_diagram, psi_i

ALGEBRAIC = "algebraic"
ESSENTIAL = "essential"


@dataclass(frozen=True)
class CellClassification:
    site: int
    kind: str
    m: int
    beta: int
    theta: Fraction


def classify(sd, i):
    s = sd.sites[i]
    if s.kind == "essential":
        theta = Fraction(-(2 * s.beta + s.m + 2), 2 * (s.m + 1))
        return CellClassification(i, ESSENTIAL, s.m, s.beta, theta)
    return CellClassification(i, ALGEBRAIC, 0, s.beta, None)


def _check_in_cell(sd, i, z):
    dist = [abs(z - s.location) for s in sd.sites]
    di = dist[i]
    if gmpy2.is_zero(di):
        raise DomainError("z coincides with the site")
    others = [d for j, d in enumerate(dist) if j != i]
    if others and min(others) <= di * (1 + mpfr(2) ** -40):
        raise DomainError(f"z = {complex(z)} is not in the open cell of site {i}")


def local_factors(sd, i):
    """(P~_i, Q~_i, E_reg(a_i)) for site i."""
    s = sd.sites[i]
    a = s.location
    lin = CPoly.linear(a)
    Pt = exact_div(sd.P_T, lin ** s.p_loc, what="P_T local factor") if s.p_loc else sd.P_T
    Qt = exact_div(sd.spec.Q, lin ** s.r_loc, what="Q local factor") if s.r_loc else sd.spec.Q
    if s.kind == "essential":
        e_reg = laurent_coeffs(sd.spec.S, sd.spec.T, a, s.m, s.m + 1)[s.m]
    else:
        e_reg = sd.E(a)
    return Pt, Qt, e_reg


def amplitude_R(sd, i, z):
    """R_i(z, 1): the regular amplitude of the local generating function at zeta = 1."""
    z = bc(z)
    a = sd.sites[i].location
    Pt, Qt, e_reg = local_factors(sd, i)
    ptz = Pt(z)
    if abs(ptz) <= mpfr(2) ** (-(current_precision() // 2)) * max(mpfr(1), Pt.eval_abs(z)):
        raise SingularAmplitudeError(f"P~_{i} vanishes at z = {complex(z)}")
    return (Qt(z) * Pt(a) * sd.P_sharp(a) / (ptz * Qt(a))
            * gmpy2.exp(e_reg - sd.E(z)))


@dataclass(frozen=True)
class PredictionReport:
    predicted: mpc
    exact: object
    rel_error: object
    regime: str

    def to_json(self):
        return {"predicted": to_pair(self.predicted),
                "exact": to_pair(self.exact) if self.exact is not None else None,
                "rel_error": float(self.rel_error) if self.rel_error is not None else None,
                "regime": self.regime}


def exact_value(sd, z, n, seq=None):
    """C_n(z)/n! from the B_n recurrence."""
    if seq is None or len(seq.B) <= n:
        seq = b_sequence(sd, n)
    return seq.B[n](z) / (gmpy2.fac(n) * sd.W(z) ** n)


def _report(predicted, exact, regime):
    rel = None
    if exact is not None and not gmpy2.is_zero(exact):
        rel = abs(predicted / exact - 1)
    return PredictionReport(predicted, exact, rel, regime)


def darboux_predict(sd, i, z, n, seq=None, with_exact=True):
    """d_i^-n n^(-beta-1) R_i(z,1) / Gamma(-beta) on a pole cell."""
    cls = classify(sd, i)
    if cls.kind != ALGEBRAIC:
        raise InvalidInputError("Darboux extraction needs a pole cell")
    z = bc(z)
    _check_in_cell(sd, i, z)
    d = sd.sites[i].location - z
    beta = cls.beta
    pred = d ** (-n) * mpfr(n) ** (-beta - 1) * amplitude_R(sd, i, z) / gmpy2.gamma(mpfr(-beta))
    exact = exact_value(sd, z, n, seq) if with_exact else None
    return _report(pred, exact, "Darboux")


# Wright saddles ----------------------------------------------------------------

@dataclass(frozen=True)
class Saddle:
    nu: int
    omega: mpc
    t: mpc
    amplitude: mpc
    phase: mpc
    residual: mpfr


@dataclass(frozen=True)
class SaddleExpansion:
    z: mpc
    n: int
    eta: mpc
    saddles: tuple
    dominant: frozenset
    R_at_1: mpc
    theta: Fraction

    def to_json(self):
        return {"z": to_pair(self.z), "n": self.n, "eta": to_pair(self.eta),
                "R_at_1": to_pair(self.R_at_1), "theta": str(self.theta),
                "dominant": sorted(self.dominant),
                "saddles": [{"nu": s.nu, "t": to_pair(s.t), "amplitude": to_pair(s.amplitude),
                             "phase": to_pair(s.phase), "residual": float(s.residual)}
                            for s in self.saddles]}


def lambda_tilde(sd, i, z):
    """[lambda~_1, ..., lambda~_m] at z for an essential site."""
    s = sd.sites[i]
    u = bc(z) - s.location
    return [s.principal.coeffs[k] * u ** (-(k + 1)) for k in range(s.m)]


def eta_branch(sd, i, z):
    """Principal (m+1)-th root of m lambda~_m(z)."""
    s = sd.sites[i]
    lt = lambda_tilde(sd, i, z)
    v = s.m * lt[-1]
    # a signed-zero imaginary part would put -1 on the wrong side of the cut
    v = mpc(v.real, v.imag + 0)
    return gmpy2.exp(gmpy2.log(v) / (s.m + 1))


def omegas(m):
    twopi = 2 * gmpy2.const_pi()
    return [gmpy2.exp(mpc(0, twopi * nu / (m + 1))) for nu in range(m + 1)]


def n_min(sd, i, z):
    """Smallest n for which saddle work is attempted."""
    lt = lambda_tilde(sd, i, z)
    m = len(lt)
    bound = max(float(abs(lt[s - 1] / lt[m - 1])) ** (1.0 / (m - s + 1)) for s in range(1, m + 1))
    return max(1, math.ceil((4 * bound) ** (m + 1) - 1e-9))


def stokes_indicator(sd, i, z, margin_tol=1e-3):
    """Dominant saddle indices judged by Re(omega_nu eta) and the tie margin."""
    s = sd.sites[i]
    if s.kind != "essential":
        raise InvalidInputError("Stokes classification needs an essential cell")
    eta = eta_branch(sd, i, z)
    re = [float((w * eta).real) for w in omegas(s.m)]
    top = max(re)
    tol = margin_tol * float(abs(eta))
    dominant = frozenset(nu for nu, r in enumerate(re) if top - r <= tol)
    gap = sorted(re, reverse=True)
    margin = gap[0] - gap[1] if len(gap) > 1 else math.inf
    return {"dominant": dominant, "margin": margin, "on_stokes": len(dominant) >= 2}


def _phi(lt, n, t):
    val = -(n + 1) * gmpy2.log(1 - t)
    d1 = (n + 1) / (1 - t)
    d2 = (n + 1) / (1 - t) ** 2
    for k, lam in enumerate(lt, start=1):
        val += lam * t ** (-k)
        d1 -= k * lam * t ** (-k - 1)
        d2 += k * (k + 1) * lam * t ** (-k - 2)
    return val, d1, d2


def _newton(lt, n, t, maxiter=200):
    bits = current_precision()
    stop = mpfr(2) ** (-int(bits * 0.9))
    step = mpc(1)
    for _ in range(maxiter):
        _, d1, d2 = _phi(lt, n, t)
        step = d1 / d2
        t = t - step
        if abs(step) <= stop * abs(t):
            return t, abs(step)
    raise SaddleFailureError("Newton iteration for the saddle did not converge")


def wright_saddles(sd, i, z, n, margin_tol=1e-3):
    cls = classify(sd, i)
    if cls.kind != ESSENTIAL:
        raise InvalidInputError("Wright saddles need an essential cell")
    z = bc(z)
    _check_in_cell(sd, i, z)
    nmin = n_min(sd, i, z)
    if n < nmin:
        raise SaddleFailureError(f"n = {n} is below the saddle threshold n_min = {nmin}")
    m, beta = cls.m, cls.beta
    lt = lambda_tilde(sd, i, z)
    eta = eta_branch(sd, i, z)
    R1 = amplitude_R(sd, i, z)
    scale = mpfr(n) ** (mpfr(-1) / (m + 1))
    norm = gmpy2.sqrt(2 * gmpy2.const_pi() * (m + 1))
    nfac = mpfr(n) ** (mpfr(m + 2) / (2 * (m + 1)))
    saddles = []
    for nu, w in enumerate(omegas(m)):
        seed = w * eta * scale
        t, last = _newton(lt, n, seed)
        phase, d1, d2 = _phi(lt, n, t)
        # descent direction through t, oriented with the counterclockwise loop about 0
        u = gmpy2.exp(mpc(0, (gmpy2.const_pi() - gmpy2.phase(d2)) / 2))
        if (u * (1j * t).conjugate()).real < 0:
            u = -u
        target = u / (1j * gmpy2.sqrt(abs(d2))) * gmpy2.sqrt(mpfr(m + 1)) * nfac
        root = gmpy2.sqrt(w * eta)
        if abs(root - target) > abs(root + target):
            root = -root
        amp = (w * eta) ** beta * root * R1 / norm
        saddles.append(Saddle(nu, w, t, amp, phase, abs(d1)))
    # saddle collision check
    sep = mpfr(1e-3) * abs(eta) * scale
    for a in range(len(saddles)):
        for b in range(a + 1, len(saddles)):
            if abs(saddles[a].t - saddles[b].t) < sep:
                raise SaddleFailureError("two saddles collided")
    re = [float(s.phase.real) for s in saddles]
    top = max(re)
    tol = margin_tol * float(abs(eta)) * (m + 1) / m * n ** (m / (m + 1))
    dominant = frozenset(nu for nu, r in enumerate(re) if top - r <= tol)
    return SaddleExpansion(z, n, eta, tuple(saddles), dominant, R1, cls.theta)


def wright_predict(sd, i, z, n, seq=None, with_exact=True, margin_tol=1e-3):
    """d_i^-n n^theta sum_nu A_nu exp(Xi_nu), truncated to a unique dominant saddle."""
    exp_ = wright_saddles(sd, i, z, n, margin_tol)
    d = sd.sites[i].location - exp_.z
    theta = exp_.theta
    use = exp_.dominant if len(exp_.dominant) == 1 else range(len(exp_.saddles))
    total = sum((exp_.saddles[nu].amplitude * gmpy2.exp(exp_.saddles[nu].phase) for nu in use), mpc(0))
    pred = d ** (-n) * mpfr(n) ** mpfr(gmpy2.mpq(theta.numerator, theta.denominator)) * total
    regime = "WrightOneSaddle" if len(exp_.dominant) == 1 else "WrightMultiSaddle"
    exact = exact_value(sd, exp_.z, n, seq) if with_exact else None
    return _report(pred, exact, regime)


def predict(sd, i, z, n, seq=None, with_exact=True):
    if classify(sd, i).kind == ALGEBRAIC:
        return darboux_predict(sd, i, z, n, seq, with_exact)
    return wright_predict(sd, i, z, n, seq, with_exact)


# L1-rate experiment -----------------------------------------------------------

@dataclass(frozen=True)
class L1RateReport:
    site: int
    rect: tuple
    n_list: tuple
    estimates: tuple
    slope: float
    expected_slope: float

    def to_json(self):
        return {"site": self.site, "rect": list(self.rect), "n": list(self.n_list),
                "estimates": list(self.estimates), "slope": self.slope,
                "expected_slope": self.expected_slope}


def _fill_bad(vals):
    """Replace non-finite grid values by the mean of their finite neighbours."""
    out = vals.copy()
    bad = ~np.isfinite(vals)
    ny, nx = vals.shape
    for y, x in zip(*np.nonzero(bad)):
        nb = [vals[yy, xx] for yy in (y - 1, y, y + 1) for xx in (x - 1, x, x + 1)
              if 0 <= yy < ny and 0 <= xx < nx and (yy, xx) != (y, x) and np.isfinite(vals[yy, xx])]
        out[y, x] = np.mean(nb) if nb else 0.0
    return out


def l1_rate_experiment(sd, i, rect, n_list, grid=40, seq=None):
    """Midpoint-rule estimate of the L1 distance between L~_n and Psi_i on a rectangle."""
    x0, x1, y0, y1 = (float(v) for v in rect)
    if not (x1 > x0 and y1 > y0):
        raise InvalidInputError("degenerate rectangle")
    n_list = tuple(sorted(int(n) for n in n_list))
    diagram = build_diagram(sd.sites)
    xs = x0 + (np.arange(grid) + 0.5) * (x1 - x0) / grid
    ys = y0 + (np.arange(grid) + 0.5) * (y1 - y0) / grid
    pts = [[complex(x, y) for x in xs] for y in ys]
    for row in pts:
        for z in row:
            j, _, _ = diagram.nearest(z)
            if j != i:
                raise DomainError("rectangle leaves the cell of the chosen site")
    psi = np.array([[psi_i(sd, i, z) for z in row] for row in pts])
    if seq is None or len(seq.B) <= n_list[-1]:
        seq = b_sequence(sd, n_list[-1])
    cell = (x1 - x0) * (y1 - y0) / grid ** 2
    estimates = []
    for n in n_list:
        B = seq.B[n]
        deg = B.degree
        lg = float(gmpy2.log(abs(seq.gamma[n])))
        vals = np.empty((grid, grid))
        for a, row in enumerate(pts):
            for b, z in enumerate(row):
                v = abs(B(mpc(z)))
                vals[a, b] = (float(gmpy2.log(v)) - lg - seq.s[n]) / deg if v > 0 else -np.inf
        vals = _fill_bad(vals)
        estimates.append(float(np.sum(np.abs(vals - psi)) * cell))
    slope = float(np.polyfit(np.log(n_list), np.log(estimates), 1)[0])
    m = sd.sites[i].m
    return L1RateReport(i, (x0, x1, y0, y1), n_list, tuple(estimates), slope, -1.0 / (m + 1))
