import gmpy2
import pytest
from gmpy2 import mpc
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import make_spec
from hxz.errors import InvalidInputError, NotHyperexponentialError
from hxz.hyperfunc import (
    HyperExpSpec,
    analyze,
    distinct_roots,
    log_derivative,
    normalize,
    order_at,
    reconstruct_from_log_derivative,
)
from hxz.numcore import CPoly, RationalFunction, bc, exact_div, poly_gcd

Z = CPoly.x()
ONE = CPoly.const(1)
TINY = 1e-60


def coeffs(p):
    return [complex(c) for c in p.coeffs]


def test_normalize_constant_prefactor():
    spec = normalize(make_spec(P=2, Q=1, S=0, T=[0, 1]))
    assert spec.P.degree == 0 and spec.P.lc == 1 and spec.Q.lc == 1
    assert abs(spec.S.coeffs[1] - gmpy2.log(2)) < TINY
    assert spec.S[0] == 0


def test_normalize_already_normal():
    spec = make_spec(P=1, Q=1, S=1, T=[0, 1])
    out = normalize(spec)
    assert out.S.coeffs == spec.S.coeffs and out.T.coeffs == spec.T.coeffs


def test_normalize_rescales_S_with_T():
    out = normalize(make_spec(P=[0, 3], Q=1, S=1, T=[0, 2]))
    assert coeffs(out.T) == [0, 1]
    assert coeffs(out.S) == [0.5]
    assert coeffs(out.P) == [0, 3]


@pytest.mark.parametrize("kw", [
    dict(P=[-1, 1], Q=[-1, 0, 1], S=1, T=[0, 1]),  # gcd(P, Q) = z - 1
    dict(P=1, Q=1, S=[0, 1], T=[0, 1]),  # gcd(S, T) = z
    dict(P=1, Q=1, S=1, T=3),  # constant T
])
def test_invalid_specs(kw):
    with pytest.raises(InvalidInputError):
        analyze(normalize(make_spec(**kw)))


def test_zero_exponent_rejected_by_analyze():
    with pytest.raises(InvalidInputError):
        analyze(normalize(make_spec(P=2, Q=1, S=0, T=[0, 1])))


def test_spec_json_round_trip():
    spec = make_spec(P=[1, 2], Q=[3, 0, 1], S=[1, 1], T=[0, 0, 1])
    back = HyperExpSpec.from_json(spec.to_json())
    assert back == spec


def test_missing_polynomial():
    with pytest.raises(InvalidInputError):
        HyperExpSpec.from_json({"P": [["1", "0"]], "Q": [["1", "0"]], "S": [["1", "0"]]})


def test_analyze_exp_inv_z(exp_sd):
    sd = exp_sd
    assert coeffs(sd.W) == [0, 0, 1]
    assert (sd.d, sd.kappa, sd.h, sd.sigma, sd.J) == (2, 1, 0, 0.0, 1)
    assert coeffs(sd.U) == [-1]
    assert abs(sd.G_minus_J - 1) < TINY


def test_analyze_exp_inv_z_pole(pole_sd):
    sd = pole_sd
    assert coeffs(sd.W) == [0, 0, -1, 1]
    assert (sd.d, sd.kappa) == (3, 2)
    assert max(abs(a - b) for a, b in zip(coeffs(sd.U), [1, -1, -1])) < TINY
    assert [s.kind for s in sd.sites] == ["essential", "pole"]
    assert sd.J is None


def test_analyze_fig2(fig2_sd):
    sd = fig2_sd
    assert (sd.d, sd.kappa, sd.h) == (8, 7, 0)
    kinds = [(s.kind, s.m) for s in sd.sites]
    assert kinds == [("essential", 2), ("essential", 1), ("pole", 0), ("pole", 0), ("pole", 0)]
    assert abs(sd.sites[0].location - bc(-2, 1.5)) < 1e-60
    assert abs(sd.sites[0].principal.coeffs[1] - bc(1.5, -0.5)) < 1e-60


def test_analyze_entire_part():
    sd = analyze(normalize(make_spec(P=1, Q=1, S=[1, 0, 1], T=[0, 1])))
    assert (sd.h, sd.kappa, sd.sigma) == (1, 2, 0.0)
    assert sd.J is None


def test_site_record_invariants(fig2_sd):
    for s in fig2_sd.sites:
        assert (s.kind == "essential") == (s.m >= 1)
        assert (s.principal is not None) == (s.kind == "essential")
        if s.kind == "pole":
            assert s.m == 0 and s.ell >= 1


def test_order_at():
    p = (Z - 1) ** 3 * (Z + 2)
    assert order_at(p, bc(1)) == 3
    assert order_at(p, bc(0)) == 0


# random valid specs with separated Gaussian-integer roots
pool = [bc(x, y) for x in range(-2, 3) for y in range(-1, 2)]


@st.composite
def specs(draw):
    idx = draw(st.lists(st.integers(0, len(pool) - 1), min_size=2, max_size=5, unique=True))
    n_t = draw(st.integers(1, min(2, len(idx) - 1)))
    T = ONE
    for k in idx[:n_t]:
        T = T * CPoly.linear(pool[k]) ** draw(st.integers(1, 2))
    rest = idx[n_t:]
    cut = draw(st.integers(0, len(rest)))
    Q = ONE
    for k in rest[:cut]:
        Q = Q * CPoly.linear(pool[k]) ** draw(st.integers(1, 2))
    P = ONE
    for k in rest[cut:]:
        P = P * CPoly.linear(pool[k])
    if draw(st.booleans()) and Q.degree:
        # a pole shared with T is allowed
        Q = Q * CPoly.linear(pool[idx[0]])
    s = draw(st.lists(st.integers(-3, 3), min_size=1, max_size=4))
    S = CPoly(tuple(bc(c) for c in s))
    assume(not S.is_zero)
    assume(poly_gcd(S, T).degree == 0)
    return HyperExpSpec(P, Q, S, T)


def _key(a):
    a = complex(a)
    return round(a.real, 6), round(a.imag, 6)


@given(specs())
def test_reconstruction_round_trip(spec):
    spec = normalize(spec)
    exps, H = reconstruct_from_log_derivative(log_derivative(spec))
    got = {_key(a): n for a, n in exps}
    points = [a for p in (spec.P, spec.Q) if p.degree > 0 for a, _ in distinct_roots(p)]
    for a in points:
        assert got.get(_key(a), 0) == order_at(spec.P, a) - order_at(spec.Q, a)
    assert set(got) <= {_key(a) for a in points}
    Ed = RationalFunction(spec.S, spec.T).derivative()
    for z in (bc(3.3, 2.7), bc(-3.1, -2.2)):
        assert abs(H.derivative()(z) - Ed(z)) <= 1e-32 * max(1, abs(Ed(z)))


@given(specs())
def test_two_degree_computations_agree(spec):
    sd = analyze(normalize(spec))
    assert sd.d == sum(s.varpi for s in sd.sites)
    assert sd.d == sd.spec.T.degree + sd.t_check + sd.q_check
    assert sd.kappa == sd.d + sd.h - 1 >= 1
    assert sd.W.lc == 1 and sd.W.degree == sd.d


@given(specs())
def test_U_at_essential_sites(spec):
    sd = analyze(normalize(spec))
    for s in sd.sites:
        if s.kind != "essential":
            continue
        c = s.location
        Wt = exact_div(sd.W, CPoly.linear(c) ** (s.m + 1))
        expected = -s.m * s.principal.coeffs[-1] * Wt(c)
        assert abs(sd.U(c) - expected) <= 1e-50 * abs(expected)
        assert abs(expected) > 0


def test_reconstruct_examples():
    exps, H = reconstruct_from_log_derivative(RationalFunction(ONE, Z).reduce())
    assert [(complex(a), n) for a, n in exps] == [(0j, 1)]
    assert H.num.is_zero or abs(H.num.norm()) < TINY

    exps, H = reconstruct_from_log_derivative(RationalFunction(-ONE, Z * Z).reduce())
    assert exps == []
    assert abs(H(bc(2)) - 0.5) < TINY

    r = RationalFunction(-ONE, Z * Z) - RationalFunction(ONE, Z - 1)
    exps, H = reconstruct_from_log_derivative(r.reduce())
    assert [(complex(a), n) for a, n in exps] == [(1 + 0j, -1)]
    assert abs(H(bc(3)) - mpc(1) / 3) < TINY


def test_reconstruct_rejects_fractional_residue():
    with pytest.raises(NotHyperexponentialError):
        reconstruct_from_log_derivative(RationalFunction(CPoly.const(0.5), Z).reduce())


def test_distinct_roots_with_clustered_multiplicities():
    # chained gcds once missed a common factor here by a single bit
    T = ONE
    for a, k in [(bc(-1, -1), 2), (bc(1, 3), 1), (bc(-2, -2), 2), (bc(3, 3), 1), (bc(0), 3), (bc(-2, -3), 3)]:
        T = T * CPoly.linear(a) ** k
    got = sorted((_key(r), k) for r, k in distinct_roots(T))
    assert got == sorted([((-1, -1), 2), ((1, 3), 1), ((-2, -2), 2), ((3, 3), 1), ((0, 0), 3), ((-2, -3), 3)])
