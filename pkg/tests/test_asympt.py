import math
from fractions import Fraction

import gmpy2
import numpy as np
import pytest

import hxz.asympt as asympt
from conftest import make_spec
from hxz.asympt import (
    ALGEBRAIC,
    ESSENTIAL,
    amplitude_R,
    classify,
    darboux_predict,
    eta_branch,
    l1_rate_experiment,
    n_min,
    omegas,
    stokes_indicator,
    wright_predict,
    wright_saddles,
)
from hxz.derivseq import b_sequence
from hxz.errors import DomainError, InvalidInputError, SaddleFailureError, SingularAmplitudeError
from hxz.hyperfunc import analyze, normalize
from hxz.numcore import bc, workprec

Z_OFF = bc(-1, 0.5)


@pytest.fixture(scope="module")
def pole_seq(pole_sd):
    # module fixtures run before the per-test precision fixture
    with workprec(256):
        return b_sequence(pole_sd, 200)


def test_classify_examples(exp_sd, pole_sd, fig2_sd):
    c = classify(exp_sd, 0)
    assert (c.kind, c.m, c.beta, c.theta) == (ESSENTIAL, 1, 0, Fraction(-3, 4))
    c = classify(pole_sd, 1)
    assert (c.kind, c.beta, c.theta) == (ALGEBRAIC, -1, None)
    c = classify(fig2_sd, 0)
    assert (c.kind, c.m) == (ESSENTIAL, 2)


def test_classification_matches_sites(fig2_sd):
    for i, s in enumerate(fig2_sd.sites):
        c = classify(fig2_sd, i)
        assert (c.kind == ESSENTIAL) == (s.kind == "essential")
        if c.kind == ALGEBRAIC:
            assert c.beta <= -1


def test_amplitude_examples(exp_sd, pole_sd):
    assert abs(amplitude_R(pole_sd, 1, 2) - gmpy2.exp(gmpy2.mpfr(0.5))) < 1e-60
    assert abs(amplitude_R(exp_sd, 0, -1) - gmpy2.exp(1)) < 1e-60


def test_amplitude_division_by_vanishing_local_factor():
    # P~_0 = P_T = z - 3 vanishes only at the other essential site
    sd = analyze(normalize(make_spec(P=[-3, 1], Q=1, S=1, T=[0, -3, 1])))
    with pytest.raises(SingularAmplitudeError):
        amplitude_R(sd, 0, 3)
    # a zero of P_sharp inside a cell leaves R finite and nonzero
    sd = analyze(normalize(make_spec(P=[-2, 1], Q=[-1, 1], S=1, T=[0, 1])))
    assert abs(amplitude_R(sd, 1, 2) + gmpy2.exp(gmpy2.mpfr(0.5))) < 1e-60


def test_darboux_examples(pole_sd, pole_seq):
    r = darboux_predict(pole_sd, 1, 2, 100, pole_seq)
    assert r.regime == "Darboux" and r.rel_error < 0.02
    assert abs(r.predicted - gmpy2.exp(gmpy2.mpfr(0.5))) < 1e-60
    r = darboux_predict(pole_sd, 1, 2, 1, pole_seq)
    assert abs(r.exact + 1.25) < 1e-60
    assert abs(r.predicted + gmpy2.exp(gmpy2.mpfr(0.5))) < 1e-60
    assert r.rel_error == pytest.approx(math.exp(0.5) / 1.25 - 1, rel=1e-12)


def test_darboux_rate(pole_sd, pole_seq):
    errs = [float(darboux_predict(pole_sd, 1, 2, n, pole_seq).rel_error) for n in (10, 25, 50, 100)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    # a simple pole is extracted exactly; what is left decays like the distance ratio
    # |2 - 1| / |2 - 0| = 1/2 from the essential site, up to subexponential factors
    rate = (math.log(errs[3]) - math.log(errs[2])) / 50
    assert rate == pytest.approx(math.log(0.5), abs=0.1)


def test_darboux_double_pole_grows_like_n():
    sd = analyze(normalize(make_spec(P=1, Q=[1, -2, 1], S=1, T=[0, 1])))
    a, b = (darboux_predict(sd, 1, 2, n, with_exact=False).predicted for n in (100, 200))
    assert abs(b / a - 2) < 1e-60


def test_darboux_refuses_outside_cell_and_essential(pole_sd):
    with pytest.raises(DomainError):
        darboux_predict(pole_sd, 1, -1, 5)
    with pytest.raises(InvalidInputError):
        darboux_predict(pole_sd, 0, -1, 5)


def test_eta_and_saddles_at_minus_one(exp_sd):
    assert abs(eta_branch(exp_sd, 0, -1) - 1j) < 1e-70
    n = 400
    exp_ = wright_saddles(exp_sd, 0, -1, n)
    want = {complex(w * 1j) / math.sqrt(n) for w in omegas(1)}
    for s in exp_.saddles:
        assert min(abs(complex(s.t) - w) for w in want) < 2 / n


def test_n_min(exp_sd):
    assert n_min(exp_sd, 0, -1) == 16
    with pytest.raises(SaddleFailureError):
        wright_saddles(exp_sd, 0, -1, 15)


def test_stokes_indicator(exp_sd, pole_sd):
    assert stokes_indicator(exp_sd, 0, -1)["dominant"] == {0, 1}
    rep = stokes_indicator(exp_sd, 0, Z_OFF)
    assert len(rep["dominant"]) == 1 and not rep["on_stokes"]
    with pytest.raises(InvalidInputError):
        stokes_indicator(pole_sd, 1, 2)


def _tie_count(sd, i, gap, steps=7200, radius=0.05):
    """Ties between the k-th and (k+1)-th largest Re(omega_nu eta) on a small circle.

    Sorted real parts do not depend on the branch of eta, so ties show up as
    near-zero local minima of the gap.
    """
    a = complex(sd.sites[i].location)
    w = [complex(x) for x in omegas(sd.sites[i].m)]
    g = np.empty(steps)
    for k in range(steps):
        eta = complex(eta_branch(sd, i, a + radius * np.exp(2j * np.pi * (k + 0.5) / steps)))
        re = sorted((x * eta).real for x in w)[::-1]
        g[k] = (re[gap] - re[gap + 1]) / abs(eta)
    prev, nxt = np.roll(g, 1), np.roll(g, -1)
    return int(np.sum((g < prev) & (g <= nxt) & (g < 1e-2)))


def test_local_stokes_rays(fig2_sd):
    # leading ties: eta turns by 4 pi / 3 around an m = 2 site, one tie per 2 pi / 3
    assert _tie_count(fig2_sd, 0, 0) == 2
    # counting every pairwise tie gives the four rays drawn around the double pole
    assert _tie_count(fig2_sd, 0, 0) + _tie_count(fig2_sd, 0, 1) == 4
    # and one around the simple pole
    assert _tie_count(fig2_sd, 1, 0) == 1


@pytest.mark.parametrize("n", [64, 256, 1024, 4096])
def test_saddle_residuals(exp_sd, n):
    for s in wright_saddles(exp_sd, 0, Z_OFF, n).saddles:
        assert s.residual <= 1e-20 * n


def _fit(ns, ys):
    return float(np.polyfit(np.log(ns), np.log(ys), 1)[0])


def test_seed_and_phase_laws(exp_sd):
    ns = [64, 256, 1024, 4096, 16384]
    seed_c, phase_dev = [], []
    for n in ns:
        exp_ = wright_saddles(exp_sd, 0, Z_OFF, n)
        s = exp_.saddles[0]
        seed = s.omega * exp_.eta / gmpy2.sqrt(n)
        seed_c.append(float(abs(s.t - seed)) * n)
        phase_dev.append(float(abs(s.phase - 2 * s.omega * exp_.eta * gmpy2.sqrt(n))))
    # |t - seed| <= C n^(-2/(m+1)) with a stable C
    assert max(seed_c) / min(seed_c) < 1.2
    # phase deviation is O(n^((m-1)/(m+1))) = O(1)
    assert abs(_fit(ns, phase_dev)) <= 0.15


def test_wright_one_saddle_rate(exp_sd):
    seq = b_sequence(exp_sd, 256)
    r64 = wright_predict(exp_sd, 0, Z_OFF, 64, seq)
    r256 = wright_predict(exp_sd, 0, Z_OFF, 256, seq)
    assert r64.regime == r256.regime == "WrightOneSaddle"
    assert r256.rel_error < r64.rel_error
    assert 0.2 <= r256.rel_error / r64.rel_error <= 0.9


def test_wright_multi_saddle_prediction_is_real(exp_sd):
    r = wright_predict(exp_sd, 0, -1, 64, with_exact=False)
    assert r.regime == "WrightMultiSaddle"
    assert abs(r.predicted.imag) <= 1e-40 * abs(r.predicted)


def test_relabeling_permutes_summands(exp_sd, fig2_sd, monkeypatch):
    cases = [(exp_sd, 0, bc(-1, 0.5), 64), (fig2_sd, 0, bc(-2.3, 1.2), 400)]
    before = []
    for sd, i, z, n in cases:
        before.append(wright_saddles(sd, i, z, n))
    orig = asympt.eta_branch
    monkeypatch.setattr(asympt, "eta_branch",
                        lambda sd, i, z: orig(sd, i, z) * omegas(sd.sites[i].m)[1])
    for (sd, i, z, n), a in zip(cases, before):
        b = wright_saddles(sd, i, z, n)
        terms_a = [complex(s.amplitude * gmpy2.exp(s.phase)) for s in a.saddles]
        terms_b = [complex(s.amplitude * gmpy2.exp(s.phase)) for s in b.saddles]
        for x in terms_a:
            assert min(abs(x - y) for y in terms_b) <= 1e-12 * abs(x)


def test_argmax_stability(exp_sd):
    dom = wright_saddles(exp_sd, 0, Z_OFF, 256).dominant
    for dz in (1e-6, -1e-6, 1e-6j, -1e-6j):
        assert wright_saddles(exp_sd, 0, Z_OFF + dz, 256).dominant == dom


def test_wright_refuses_pole_cell(pole_sd):
    with pytest.raises(InvalidInputError):
        wright_saddles(pole_sd, 1, 2, 64)


def test_l1_grid_consistency(exp_sd):
    seq = b_sequence(exp_sd, 32)
    rect = (-2, -1, -0.25, 0.25)
    a = l1_rate_experiment(exp_sd, 0, rect, [16, 32], grid=40, seq=seq).estimates
    b = l1_rate_experiment(exp_sd, 0, rect, [16, 32], grid=80, seq=seq).estimates
    for x, y in zip(a, b):
        assert abs(x - y) <= 0.05 * y


def test_l1_rejects_rectangle_outside_cell(pole_sd):
    with pytest.raises(DomainError):
        l1_rate_experiment(pole_sd, 0, (0.2, 1.5, -0.2, 0.2), [8, 16])
