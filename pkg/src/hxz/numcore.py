"""Arbitrary-precision complex scalars and dense univariate polynomials.

Scalars are plain ``gmpy2.mpc`` values; the working precision is whatever the
active gmpy2 context says, and :func:`workprec` is the only sanctioned way to
change it.  Polynomials are immutable :class:`CPoly` objects holding their
coefficients in ascending degree order.
"""

import math
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import gmpy2
from gmpy2 import mpc, mpfr

from .errors import (
    DegeneratePoleError,
    InconsistentStructureError,
    InvalidInputError,
    PrecisionError,
)

DEFAULT_PRECISION = 256
MIN_PRECISION = 64
MAX_PRECISION = 1 << 16


def current_precision():
    return gmpy2.get_context().precision


@contextmanager
def workprec(bits):
    """Run the enclosed block with ``bits`` of binary precision."""
    bits = int(bits)
    if bits < MIN_PRECISION:
        raise InvalidInputError(f"precision_bits must be >= {MIN_PRECISION}, got {bits}")
    if bits > MAX_PRECISION:
        raise PrecisionError(f"requested precision {bits} exceeds {MAX_PRECISION} bits")
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        yield bits


def eps(bits=None):
    """Unit roundoff 2**-bits at the given (default: current) precision."""
    return mpfr(2) ** (-(bits or current_precision()))


def floor_tol(shift):
    """2**(shift - precision): the noise floor used by gcd and trimming."""
    return mpfr(2) ** (shift - current_precision())


def _to_mpfr(x):
    if isinstance(x, mpfr):
        return mpfr(x)
    if isinstance(x, Fraction) or (isinstance(x, Rational) and not isinstance(x, int)):
        return mpfr(gmpy2.mpq(x.numerator, x.denominator))
    if isinstance(x, str):
        return mpfr(x.strip())
    return mpfr(x)


def bc(x, y=None):
    """Coerce ``x`` (or the pair ``x, y``) to an mpc at the current precision.

    Accepts Python numbers, Fractions, decimal strings, ``[re, im]`` pairs and
    existing gmpy2 values.
    """
    if y is not None:
        return mpc(_to_mpfr(x), _to_mpfr(y))
    if isinstance(x, mpc):
        return mpc(x)
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise InvalidInputError(f"complex pair must have two entries, got {x!r}")
        return mpc(_to_mpfr(x[0]), _to_mpfr(x[1]))
    if isinstance(x, complex):
        return mpc(x)
    if isinstance(x, str) and "," in x:
        re_s, im_s = x.split(",", 1)
        return mpc(_to_mpfr(re_s), _to_mpfr(im_s))
    if isinstance(x, str) and x.strip().endswith("j"):
        return mpc(complex(x.strip()))
    return mpc(_to_mpfr(x), 0)


def _decimal(x, digits):
    if gmpy2.is_zero(x):
        return "0"
    if not gmpy2.is_finite(x):
        return str(x)
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    mant = mant.rstrip("0") or "0"
    return f"{sign}0.{mant}e{exp}"


def to_pair(z):
    """Serialize a complex scalar as two decimal strings (lossless at its precision)."""
    z = mpc(z) if not isinstance(z, mpc) else z
    bits = max(z.real.precision, z.imag.precision)
    digits = int(math.ceil(bits * math.log10(2))) + 2
    return [_decimal(z.real, digits), _decimal(z.imag, digits)]


def from_pair(pair):
    return bc(pair)


def to_complex(z):
    return complex(z)


@dataclass(frozen=True)
class CPoly:
    """Dense polynomial with mpc coefficients, ascending degree, no trailing zeros."""

    coeffs: tuple = ()

    def __post_init__(self):
        cs = [c if isinstance(c, mpc) else bc(c) for c in self.coeffs]
        while cs and gmpy2.is_zero(cs[-1]):
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    # construction helpers -------------------------------------------------
    @classmethod
    def const(cls, c):
        return cls((bc(c),))

    @classmethod
    def x(cls):
        return cls((bc(0), bc(1)))

    @classmethod
    def linear(cls, root):
        """The monic factor ``z - root``."""
        return cls((-bc(root), bc(1)))

    @classmethod
    def from_roots(cls, roots, lc=1):
        p = cls.const(lc)
        for r in roots:
            p = p * cls.linear(r)
        return p

    @classmethod
    def from_json(cls, data):
        return cls(tuple(bc(c) for c in data))

    def to_json(self):
        return [to_pair(c) for c in self.coeffs]

    # basic properties -------------------------------------------------------
    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def is_zero(self):
        return not self.coeffs

    @property
    def is_constant(self):
        return len(self.coeffs) <= 1

    @property
    def lc(self):
        return self.coeffs[-1] if self.coeffs else mpc(0)

    def norm(self):
        """Max coefficient modulus."""
        return max((abs(c) for c in self.coeffs), default=mpfr(0))

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, k):
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else mpc(0)

    def __repr__(self):
        inner = ", ".join(f"{complex(c):.6g}" for c in self.coeffs)
        return f"CPoly([{inner}])"

    # evaluation -----------------------------------------------------------
    def __call__(self, z):
        acc = mpc(0)
        for c in reversed(self.coeffs):
            acc = acc * z + c
        return acc

    def eval_with_derivative(self, z):
        p = mpc(0)
        dp = mpc(0)
        for c in reversed(self.coeffs):
            dp = dp * z + p
            p = p * z + c
        return p, dp

    def eval_abs(self, z):
        """sum |c_k| |z|^k, the scale against which evaluation error is measured."""
        r = abs(z)
        acc = mpfr(0)
        for c in reversed(self.coeffs):
            acc = acc * r + abs(c)
        return acc

    # arithmetic -----------------------------------------------------------
    def __neg__(self):
        return CPoly(tuple(-c for c in self.coeffs))

    def __add__(self, other):
        if not isinstance(other, CPoly):
            other = CPoly.const(other)
        n = max(len(self.coeffs), len(other.coeffs))
        return CPoly(tuple(self[k] + other[k] for k in range(n)))

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, CPoly):
            other = CPoly.const(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, CPoly):
            c = bc(other)
            return CPoly(tuple(a * c for a in self.coeffs))
        if self.is_zero or other.is_zero:
            return CPoly()
        a, b = self.coeffs, other.coeffs
        out = [mpc(0)] * (len(a) + len(b) - 1)
        for i, ai in enumerate(a):
            if gmpy2.is_zero(ai):
                continue
            for j, bj in enumerate(b):
                out[i + j] += ai * bj
        return CPoly(tuple(out))

    __rmul__ = __mul__

    def __truediv__(self, c):
        c = bc(c)
        return CPoly(tuple(a / c for a in self.coeffs))

    def __pow__(self, k):
        out = CPoly.const(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def deriv(self):
        return CPoly(tuple(k * c for k, c in enumerate(self.coeffs) if k))

    def monic(self):
        if self.is_zero:
            raise InvalidInputError("zero polynomial has no monic form")
        return self / self.lc

    def shift(self, a):
        """Coefficients of u -> p(a + u) (Taylor shift)."""
        c = list(self.coeffs)
        n = len(c)
        a = bc(a)
        for i in range(n - 1):
            for j in range(n - 2, i - 1, -1):
                c[j] = c[j] + a * c[j + 1]
        return CPoly(tuple(c))

    def trimmed(self, tol):
        """Drop leading coefficients of modulus below the absolute threshold ``tol``."""
        cs = list(self.coeffs)
        while cs and abs(cs[-1]) < tol:
            cs.pop()
        return CPoly(tuple(cs))

    def scaled_variable(self, s):
        """Coefficients of z -> p(s z)."""
        s = bc(s)
        out = []
        pw = mpc(1)
        for c in self.coeffs:
            out.append(c * pw)
            pw = pw * s
        return CPoly(tuple(out))


def polydiv(S, T):
    """Long division S = H*T + M with deg M < deg T; returns (H, M)."""
    if T.is_zero:
        raise InvalidInputError("division by the zero polynomial")
    n, m = S.degree, T.degree
    if n < m:
        return CPoly(), S
    rem = list(S.coeffs)
    tc = T.coeffs
    inv = 1 / T.lc
    q = [mpc(0)] * (n - m + 1)
    for k in range(n - m, -1, -1):
        c = rem[k + m] * inv
        q[k] = c
        if not gmpy2.is_zero(c):
            for j in range(m):
                rem[k + j] -= c * tc[j]
        rem[k + m] = mpc(0)
    return CPoly(tuple(q)), CPoly(tuple(rem[:m]))


def exact_div(a, b, rel_tol=None, what="division"):
    """Quotient a/b, raising if the remainder is above the relative tolerance."""
    q, r = polydiv(a, b)
    if rel_tol is None:
        rel_tol = mpfr(2) ** (-(current_precision() // 2))
    scale = max(a.norm(), q.norm() * b.norm())
    if not r.is_zero and r.norm() > rel_tol * scale:
        raise InconsistentStructureError(
            f"{what}: remainder {float(r.norm() / scale):.3e} (relative) is not negligible"
        )
    return q


def poly_gcd(a, b):
    """Monic approximate gcd by Euclidean remainders.

    A remainder counts as zero once its largest coefficient drops below
    2**(32 - precision) times the scale of the division that produced it.
    """
    if a.is_zero and b.is_zero:
        raise InvalidInputError("gcd of two zero polynomials")
    if a.is_zero:
        return b.monic()
    if b.is_zero:
        return a.monic()
    tol = floor_tol(32)
    a = a / a.norm()
    b = b / b.norm()
    if a.degree < b.degree:
        a, b = b, a
    while True:
        if b.degree == 0:
            return CPoly.const(1)
        q, r = polydiv(a, b)
        scale = max(a.norm(), q.norm() * b.norm())
        r = r.trimmed(tol * scale)
        if r.is_zero:
            return b.monic()
        a, b = b, r / r.norm()


def squarefree_part(p):
    """rad(p): monic, same distinct zeros as p, each simple."""
    if p.is_zero:
        raise InvalidInputError("squarefree part of the zero polynomial")
    if p.degree == 0:
        return CPoly.const(1)
    g = poly_gcd(p, p.deriv())
    return exact_div(p, g, what="squarefree part").monic()


def squarefree_factorization(p):
    """Yun's algorithm: list of (monic squarefree factor, multiplicity)."""
    if p.is_zero:
        raise InvalidInputError("squarefree factorization of the zero polynomial")
    out = []
    if p.degree == 0:
        return out
    p = p.monic()
    dp = p.deriv()
    a = poly_gcd(p, dp)
    b = exact_div(p, a, what="Yun")
    c = exact_div(dp, a, what="Yun")
    d = c - b.deriv()
    tol = floor_tol(32)
    i = 1
    while b.degree > 0:
        d = d.trimmed(tol * max(c.norm(), b.norm() * max(1, b.degree)))
        a = poly_gcd(b, d)
        if a.degree > 0:
            out.append((a, i))
        b = exact_div(b, a, what="Yun")
        c = exact_div(d, a, what="Yun") if not d.is_zero else CPoly()
        d = c - b.deriv()
        i += 1
        if i > p.degree:
            # a missed common factor leaves b unchanged forever
            raise PrecisionError("squarefree factorization did not terminate; raise precision")
    return out


# truncated power series on coefficient lists --------------------------------

def series_mul(a, b, n):
    out = [mpc(0)] * n
    for i, ai in enumerate(a[:n]):
        if gmpy2.is_zero(ai):
            continue
        for j in range(min(len(b), n - i)):
            out[i + j] += ai * b[j]
    return out


def series_div(a, b, n):
    """First n coefficients of a/b; requires b[0] != 0."""
    if not b or gmpy2.is_zero(b[0]):
        raise InvalidInputError("series division by a series with zero constant term")
    inv0 = 1 / b[0]
    out = []
    for k in range(n):
        acc = a[k] if k < len(a) else mpc(0)
        for j in range(1, min(k, len(b) - 1) + 1):
            acc -= b[j] * out[k - j]
        out.append(acc * inv0)
    return out


def series_exp(g, n):
    """First n coefficients of exp(g)."""
    g = list(g) + [mpc(0)] * max(0, n - len(g))
    f = [gmpy2.exp(g[0])] + [mpc(0)] * (n - 1)
    for k in range(1, n):
        acc = mpc(0)
        for j in range(1, k + 1):
            if not gmpy2.is_zero(g[j]):
                acc += j * g[j] * f[k - j]
        f[k] = acc / k
    return f


@dataclass(frozen=True)
class RationalFunction:
    num: CPoly
    den: CPoly
    reduced: bool = False

    def __post_init__(self):
        if self.den.is_zero:
            raise InvalidInputError("rational function with zero denominator")

    def __call__(self, z):
        return self.num(z) / self.den(z)

    def reduce(self):
        """Cancel gcd(num, den) and make den monic."""
        if self.num.is_zero:
            return RationalFunction(CPoly(), CPoly.const(1), True)
        g = poly_gcd(self.num, self.den)
        num = exact_div(self.num, g, what="reduce") if g.degree else self.num
        den = exact_div(self.den, g, what="reduce") if g.degree else self.den
        lc = den.lc
        return RationalFunction(num / lc, den / lc, True)

    def derivative(self):
        n, d = self.num, self.den
        return RationalFunction(n.deriv() * d - n * d.deriv(), d * d)

    def __add__(self, other):
        return RationalFunction(self.num * other.den + other.num * self.den, self.den * other.den)

    def __sub__(self, other):
        return RationalFunction(self.num * other.den - other.num * self.den, self.den * other.den)

    def to_json(self):
        return {"num": self.num.to_json(), "den": self.den.to_json()}

    @classmethod
    def from_json(cls, data):
        return cls(CPoly.from_json(data["num"]), CPoly.from_json(data["den"]))


@dataclass(frozen=True)
class LaurentPrincipalPart:
    """coeffs[s-1] is the coefficient of (z - pole)**-s, s = 1..order."""

    pole: mpc
    order: int
    coeffs: tuple

    def __call__(self, z):
        u = z - self.pole
        return sum((c / u ** (s + 1) for s, c in enumerate(self.coeffs)), mpc(0))

    def to_json(self):
        return {"pole": to_pair(self.pole), "order": self.order,
                "coeffs": [to_pair(c) for c in self.coeffs]}


def laurent_coeffs(num, den, pole, order, count):
    """Coefficients of (z-pole)**(k-order), k = 0..count-1, of num/den at ``pole``.

    ``den`` must vanish to exactly ``order`` at ``pole``.
    """
    D = den.shift(pole)
    scale = D.norm()
    floor = mpfr(2) ** (-(current_precision() // 2)) * scale
    for k in range(order):
        if abs(D[k]) > floor:
            raise DegeneratePoleError(f"denominator does not vanish to order {order} at {complex(pole)}")
    tail = list(D.coeffs[order:])
    if not tail or abs(tail[0]) <= floor:
        raise DegeneratePoleError(f"denominator vanishes to order > {order} at {complex(pole)}")
    N = list(num.shift(pole).coeffs) or [mpc(0)]
    return series_div(N, tail, count)


def principal_parts(num, den, pole, order):
    """Principal part of num/den at a pole of exact ``order``."""
    if order < 1:
        raise InvalidInputError("pole order must be positive")
    pole = bc(pole)
    c = laurent_coeffs(num, den, pole, order, order)
    lam = tuple(c[order - s] for s in range(1, order + 1))
    D = den.shift(pole)
    scale = max(num.shift(pole).norm(), mpfr(1)) / abs(D[order])
    if abs(lam[-1]) <= floor_tol(32) * scale:
        raise DegeneratePoleError(
            f"leading Laurent coefficient vanishes at {complex(pole)}; inputs are not coprime"
        )
    return LaurentPrincipalPart(pole, order, lam)


def refine_precision(compute, agree, bits=DEFAULT_PRECISION, max_bits=4096):
    """Re-run ``compute`` at doubled precision until two successive results agree.

    Returns (result, bits_used).
    """
    with workprec(bits):
        prev = compute()
    while True:
        nxt = bits * 2
        if nxt > max_bits:
            raise PrecisionError(f"results did not stabilize below {max_bits} bits")
        with workprec(nxt):
            cur = compute()
        if agree(prev, cur):
            return cur, nxt
        prev, bits = cur, nxt
