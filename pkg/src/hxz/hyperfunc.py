"""Hyperexponential input specs and their structural data.

A spec is four polynomials (P, Q, S, T) describing f = (P/Q) exp(S/T).
:func:`analyze` locates the singular sites once and derives everything the
downstream modules need (W, U, the local orders, kappa, sigma, ...).
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import gmpy2
from gmpy2 import mpc, mpfr

from .errors import (
    InconsistentStructureError,
    InvalidInputError,
    NotHyperexponentialError,
    PrecisionError,
)
from .numcore import (
    DEFAULT_PRECISION,
    CPoly,
    LaurentPrincipalPart,
    RationalFunction,
    bc,
    current_precision,
    exact_div,
    floor_tol,
    poly_gcd,
    polydiv,
    principal_parts,
    series_div,
    series_exp,
    series_mul,
    squarefree_factorization,
    squarefree_part,
    to_pair,
)
from .roots import find_roots

log = logging.getLogger(__name__)

ESSENTIAL = "essential"
POLE = "pole"


@dataclass(frozen=True)
class HyperExpSpec:
    P: CPoly
    Q: CPoly
    S: CPoly
    T: CPoly
    precision_bits: int = DEFAULT_PRECISION

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        try:
            polys = {k: CPoly.from_json(data[k]) for k in "PQST"}
        except KeyError as exc:
            raise InvalidInputError(f"spec is missing polynomial {exc.args[0]!r}") from None
        return cls(precision_bits=int(data.get("precision_bits", DEFAULT_PRECISION)), **polys)

    def to_json(self):
        return {"P": self.P.to_json(), "Q": self.Q.to_json(), "S": self.S.to_json(),
                "T": self.T.to_json(), "precision_bits": self.precision_bits}

    def f(self, z):
        return self.P(z) / self.Q(z) * gmpy2.exp(self.S(z) / self.T(z))

    def E(self, z):
        return self.S(z) / self.T(z)


def _validate(spec, allow_zero_S=False):
    if spec.P.is_zero or spec.Q.is_zero:
        raise InvalidInputError("P and Q must be nonzero")
    if spec.T.degree < 1:
        raise InvalidInputError("T must be nonconstant")
    if poly_gcd(spec.P, spec.Q).degree > 0:
        raise InvalidInputError("gcd(P, Q) is nonconstant")
    if spec.S.is_zero and allow_zero_S:
        return
    if poly_gcd(spec.S, spec.T).degree > 0:
        raise InvalidInputError("gcd(S, T) is nonconstant")


def normalize(spec):
    """Absorb a constant prefactor into the exponent and make T (and Q) monic.

    A constant P/Q = alpha becomes (1, 1, S + c T) with c the principal log of
    alpha.  S is rescaled together with T so that S/T is unchanged.
    """
    _validate(spec, allow_zero_S=True)
    P, Q, S, T = spec.P, spec.Q, spec.S, spec.T
    if P.degree == 0 and Q.degree == 0:
        alpha = P.lc / Q.lc
        if alpha != 1:
            c = gmpy2.log(alpha)
            S = S + T * c
        P = Q = CPoly.const(1)
    t = T.lc
    if t != 1:
        T, S = T / t, S / t
    if Q.degree == 0:
        if Q.lc != 1:
            P, Q = P / Q.lc, CPoly.const(1)
    elif Q.lc != 1:
        lq = Q.lc
        P, Q = P / lq, Q / lq
    return replace(spec, P=P, Q=Q, S=S, T=T)


@dataclass(frozen=True)
class SiteRecord:
    location: mpc
    kind: str
    m: int  # ord of T
    p_loc: int  # ord of P_T
    r_loc: int  # ord of Q
    ell: int  # pole multiplicity (pole sites)
    beta: int
    principal: Optional[LaurentPrincipalPart] = None

    @property
    def varpi(self):
        """ord of W at the site."""
        return self.m + 1 if self.kind == ESSENTIAL else 1

    def to_json(self):
        out = {"location": to_pair(self.location), "kind": self.kind, "m": self.m,
               "p_loc": self.p_loc, "r_loc": self.r_loc, "ell": self.ell, "beta": self.beta}
        if self.principal is not None:
            out["principal"] = self.principal.to_json()
        return out


@dataclass(frozen=True)
class StructureData:
    spec: HyperExpSpec
    P_T: CPoly
    P_sharp: CPoly
    W: CPoly
    U: CPoly
    H: CPoly
    M: CPoly
    sites: tuple
    d: int
    kappa: int
    h: int
    sigma: float
    t_check: int
    q_check: int
    T0: CPoly = field(default=None, repr=False)
    Q_star: CPoly = field(default=None, repr=False)
    tau_h: Optional[mpc] = None
    J: Optional[int] = None
    G_minus_J: Optional[mpc] = None

    @property
    def p(self):
        return self.spec.P.degree

    @property
    def q(self):
        return self.spec.Q.degree

    def E(self, z):
        return self.spec.S(z) / self.spec.T(z)

    def locations(self):
        return [s.location for s in self.sites]

    def essential_indices(self):
        return [i for i, s in enumerate(self.sites) if s.kind == ESSENTIAL]

    def pole_indices(self):
        return [i for i, s in enumerate(self.sites) if s.kind == POLE]

    def to_json(self):
        out = {
            "P_T": self.P_T.to_json(), "P_sharp": self.P_sharp.to_json(),
            "W": self.W.to_json(), "U": self.U.to_json(),
            "H": self.H.to_json(), "M": self.M.to_json(),
            "sites": [s.to_json() for s in self.sites],
            "d": self.d, "kappa": self.kappa, "h": self.h, "sigma": self.sigma,
            "t_check": self.t_check, "q_check": self.q_check,
            "J": self.J,
            "G_minus_J": to_pair(self.G_minus_J) if self.G_minus_J is not None else None,
        }
        return out


def _coincide(a, b):
    bits = current_precision()
    return abs(a - b) < mpfr(2) ** (-(bits // 2)) * max(mpfr(1), abs(a), abs(b))


def order_at(p, a):
    """Order of vanishing of polynomial p at the (numerically known) point a."""
    if p.is_zero:
        raise InvalidInputError("order of the zero polynomial")
    c = p.shift(a)
    scale = max(abs(x) for x in c.coeffs)
    tol = mpfr(2) ** (-(current_precision() // 2)) * scale
    k = 0
    while k < len(c.coeffs) and abs(c.coeffs[k]) <= tol:
        k += 1
    return k


def distinct_roots(p):
    """Distinct roots of p with multiplicities.

    Roots come from the squarefree part, which needs a single approximate gcd;
    multiplicities are read off the Taylor coefficients of p at each root and
    must add up to deg p.  Chained gcds (Yun) are only a fallback, since their
    rounding noise accumulates from step to step.
    """
    out = [(r, order_at(p, r)) for r in find_roots(squarefree_part(p)).roots]
    if sum(k for _, k in out) != p.degree:
        out = [(r, mult) for factor, mult in squarefree_factorization(p)
               for r in find_roots(factor).roots]
        if sum(k for _, k in out) != p.degree:
            raise PrecisionError("root multiplicities do not add up to the degree")
    out.sort(key=lambda rm: (float(rm[0].real), float(rm[0].imag)))
    return out


def _laurent_at_infinity(spec, M, count):
    """Coefficients g_k of w^k, w = 1/z, in P/Q exp(M/T) / z^(p-q)."""
    P, Q, T = spec.P, spec.Q, spec.T
    rev = lambda poly: list(reversed(poly.coeffs))
    ratio = series_div(rev(P), rev(Q), count)
    shift = T.degree - M.degree
    mt = series_div(rev(M), rev(T), count)
    g = [mpc(0)] * shift + mt[: max(0, count - shift)]
    return series_mul(ratio, series_exp(g, count), count)


def _find_J(spec, M, max_J=256):
    p, q = spec.P.degree, spec.Q.degree
    count = p - q + max_J + 1
    coeffs = _laurent_at_infinity(spec, M, count)
    tol = floor_tol(32) * max(mpfr(1), max(abs(c) for c in coeffs[: p - q + 1]))
    for J in range(1, max_J + 1):
        c = coeffs[p - q + J]
        if abs(c) > tol:
            return J, c
    raise InconsistentStructureError(f"no nonzero G_-J found for J <= {max_J}")


def analyze(spec):
    """Extract every structural quantity of a normalized spec."""
    _validate(spec)
    P, Q, S, T = spec.P, spec.Q, spec.S, spec.T
    H, M = polydiv(S, T)
    if M.is_zero:
        raise InvalidInputError("S/T has no finite poles (M = 0)")

    t_roots = distinct_roots(T)
    q_roots = distinct_roots(Q) if Q.degree > 0 else []

    essential = []
    for c, m in t_roots:
        essential.append({"loc": c, "m": m, "r": 0})
    poles = []
    for b, ell in q_roots:
        for e in essential:
            if _coincide(e["loc"], b):
                e["r"] = ell
                break
        else:
            poles.append({"loc": b, "ell": ell})

    P_T = CPoly.const(1)
    sites = []
    for e in essential:
        c = e["loc"]
        pj = order_at(P, c)
        e["p"] = pj
        if pj:
            P_T = P_T * CPoly.linear(c) ** pj
    P_sharp = exact_div(P, P_T, what="P / P_T")

    T0 = CPoly.const(1)
    for e in essential:
        T0 = T0 * CPoly.linear(e["loc"])
    Q_star = CPoly.const(1)
    for b in poles:
        Q_star = Q_star * CPoly.linear(b["loc"])
    W = T * T0 * Q_star

    for e in essential:
        lam = principal_parts(M, T, e["loc"], e["m"])
        sites.append(SiteRecord(e["loc"], ESSENTIAL, e["m"], e["p"], e["r"], 0, e["p"] - e["r"], lam))
    for b in poles:
        sites.append(SiteRecord(b["loc"], POLE, 0, 0, b["ell"], b["ell"], -b["ell"], None))

    # Lambda = E' + P_T'/P_T - Q'/Q over the common denominator T^2 P_T Q
    num = ((S.deriv() * T - S * T.deriv()) * P_T * Q
           + T * T * P_T.deriv() * Q
           - T * T * P_T * Q.deriv())
    den = T * T * P_T * Q
    try:
        U = exact_div(W * num, den, what="U = W * Lambda")
    except InconsistentStructureError as exc:
        raise InconsistentStructureError(f"{exc} (root finding on T or Q is inaccurate)") from None

    t_check, q_check = len(essential), len(poles)
    d = W.degree
    if d != T.degree + t_check + q_check:
        raise InconsistentStructureError("deg W disagrees with deg T + t + q")
    if H.degree >= 1:
        h = H.degree
        tau_h = H.lc
        sigma = float(gmpy2.log(abs(h * tau_h)))
    else:
        h, tau_h, sigma = 0, None, 0.0
    kappa = d + h - 1

    J = G = None
    if h == 0 and P.degree >= Q.degree:
        J, G = _find_J(spec, M)

    return StructureData(spec=spec, P_T=P_T, P_sharp=P_sharp, W=W, U=U, H=H, M=M,
                         sites=tuple(sites), d=d, kappa=kappa, h=h, sigma=sigma,
                         t_check=t_check, q_check=q_check, T0=T0, Q_star=Q_star,
                         tau_h=tau_h, J=J, G_minus_J=G)


def log_derivative(spec):
    """f'/f = P'/P - Q'/Q + E' as a reduced rational function."""
    P, Q, S, T = spec.P, spec.Q, spec.S, spec.T
    num = (P.deriv() * Q * T * T - P * Q.deriv() * T * T
           + P * Q * (S.deriv() * T - S * T.deriv()))
    den = P * Q * T * T
    return RationalFunction(num, den).reduce()


def reconstruct_from_log_derivative(r, int_tol=1e-10, reject_tol=1e-6):
    """Recover (R, H) with f = c R exp(H) from r = f'/f.

    Returns (exponents, H) where exponents is a list of (pole, integer) for
    R = prod (z - pole)**n and H is a RationalFunction with H' = r - R'/R.
    """
    if not r.reduced:
        r = r.reduce()
    exponents = []
    Hrat = RationalFunction(CPoly(), CPoly.const(1))
    quotient, _ = polydiv(r.num, r.den)
    # integrate the polynomial part
    integ = CPoly(tuple([mpc(0)] + [c / (k + 1) for k, c in enumerate(quotient.coeffs)]))
    Hrat = RationalFunction(integ, CPoly.const(1))
    if r.den.degree > 0:
        for a, order in distinct_roots(r.den):
            pp = principal_parts(r.num, r.den, a, order)
            res = pp.coeffs[0]
            n = round(float(res.real))
            dev = abs(res - n)
            if dev > reject_tol:
                raise NotHyperexponentialError(
                    f"residue {complex(res)} at {complex(a)} is not an integer"
                )
            if dev > int_tol:
                log.warning(
                    "residue at %s deviates %.2e from an integer", complex(a), float(dev))
            if n:
                exponents.append((a, n))
            for s in range(2, order + 1):
                lam = pp.coeffs[s - 1]
                if gmpy2.is_zero(lam):
                    continue
                term = RationalFunction(CPoly.const(lam / (1 - s)), CPoly.linear(a) ** (s - 1))
                Hrat = Hrat + term
    return exponents, Hrat
