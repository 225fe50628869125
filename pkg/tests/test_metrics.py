from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xvec_anon.metrics import MetricError, ScoreSet, cllr, min_cllr, pav, rocch, rocch_eer


def empirical_roc(tar, non):
    """Every threshold, exact: (pfa, pmiss) with accept = score >= t."""
    thresholds = sorted(set(tar) | set(non)) + [float("inf")]
    return [(Fraction(sum(s >= t for s in non), len(non)), Fraction(sum(s < t for s in tar), len(tar)))
            for t in thresholds]


def lower_hull(points):
    pts = sorted(set(points), key=lambda p: (p[0], -p[1]))
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    # the hull always starts at the reject-everything corner (0, 1)
    return hull if hull[0] == (0, 1) else [(Fraction(0), Fraction(1))] + hull


def oracle_eer(tar, non):
    hull = lower_hull(empirical_roc(tar, non))
    best = None
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        g1, g2 = y1 - x1, y2 - x2
        if g1 >= 0 >= g2:
            e = x1 if g1 == g2 else x1 + g1 / (g1 - g2) * (x2 - x1)
            best = e if best is None else min(best, e)
    return float(best)


def random_scores(rng, max_n=25, ties=False):
    nt, nn = rng.integers(1, max_n + 1, size=2)
    shift = rng.uniform(-1, 3)
    tar, non = rng.standard_normal(nt) + shift, rng.standard_normal(nn)
    if ties:
        tar, non = np.round(tar), np.round(non)
    return ScoreSet(tar, non)


def test_pav_simple():
    np.testing.assert_allclose(pav([1, 3, 2, 4]), [1, 2.5, 2.5, 4])
    np.testing.assert_allclose(pav([3, 2, 1], [1, 1, 2]), [1.75] * 3)


class TestRocch:
    def test_hand_case(self):
        s = ScoreSet([2, 0], [1, -1])
        assert rocch(s) == [(0.0, 1.0), (0.0, 0.5), (0.5, 0.0), (1.0, 0.0)]
        assert rocch_eer(s) == 0.25

    def test_separated(self):
        s = ScoreSet([3, 4, 5], [0, 1])
        assert (0.0, 0.0) in rocch(s)
        assert rocch_eer(s) == 0.0

    def test_identical(self):
        s = ScoreSet([1, 2, 3], [1, 2, 3])
        assert rocch(s) == [(0.0, 1.0), (1.0, 0.0)]
        assert rocch_eer(s) == 0.5

    def test_order_and_endpoints(self, rng):
        for _ in range(100):
            pts = rocch(random_scores(rng, ties=True))
            assert pts[0] == (0.0, 1.0) and pts[-1] == (1.0, 0.0)
            pfa, pmiss = np.array(pts).T
            assert np.all(np.diff(pfa) >= 0) and np.all(np.diff(pmiss) <= 0)

    def test_matches_exact_hull(self, rng):
        for k in range(100):
            s = random_scores(rng, ties=k % 2 == 0)
            want = [(float(x), float(y)) for x, y in lower_hull(empirical_roc(s.target_scores.tolist(), s.nontarget_scores.tolist()))]
            got = [tuple(p) for p in rocch(s)]
            assert got == pytest.approx(want, abs=1e-15)

    def test_dominates_empirical_roc(self, rng):
        for k in range(100):
            s = random_scores(rng, ties=k % 3 == 0)
            hx, hy = np.array(rocch(s)).T
            for fa, miss in empirical_roc(s.target_scores.tolist(), s.nontarget_scores.tolist()):
                # hull lower envelope at this pfa
                on_vertical = hy[hx == float(fa)]
                below = on_vertical.min() if on_vertical.size else np.interp(float(fa), hx, hy)
                assert float(miss) >= below - 1e-12

    def test_empty_class(self):
        with pytest.raises(MetricError):
            rocch(ScoreSet([1.0], []))

    def test_non_finite(self):
        with pytest.raises(MetricError):
            ScoreSet([np.nan], [1.0])


class TestEer:
    def test_exact_oracle(self, rng):
        for k in range(200):
            s = random_scores(rng, ties=k % 4 == 0)
            assert abs(rocch_eer(s) - oracle_eer(s.target_scores.tolist(), s.nontarget_scores.tolist())) <= 1e-12

    def test_bounds_fuzzed(self, rng):
        for _ in range(1000):
            e = rocch_eer(random_scores(rng, max_n=15, ties=bool(rng.integers(2))))
            assert 0.0 <= e <= 0.5

    def test_worse_than_chance_still_half(self):
        assert rocch_eer(ScoreSet([-5, -4], [4, 5])) == 0.5


class TestCllr:
    def test_all_zero(self):
        assert cllr(ScoreSet(np.zeros(4), np.zeros(3))) == 1.0

    def test_confident_limit(self):
        assert cllr(ScoreSet([100.0], [-100.0])) <= 1e-25

    def test_high_precision_oracle(self):
        mpmath.mp.dps = 40
        want = float(0.5 * 2 * mpmath.log(1 + mpmath.e ** -1) / mpmath.log(2))
        assert cllr(ScoreSet([1.0], [-1.0])) == pytest.approx(want, rel=1e-14)

    def test_large_scores_finite(self):
        c = cllr(ScoreSet([-1e4, 1e4], [1e4]))
        assert np.isfinite(c) and c == pytest.approx((0.5 * 1e4 + 1e4) / 2 / np.log(2), rel=1e-12)

    def test_min_cllr_limits(self):
        assert min_cllr(ScoreSet([5, 6], [1, 2])) <= 1e-12
        assert min_cllr(ScoreSet([1, 2, 3], [1, 2, 3])) == pytest.approx(1.0, abs=1e-9)

    def test_min_below_actual_fuzzed(self, rng):
        for _ in range(300):
            s = random_scores(rng, ties=bool(rng.integers(2)))
            s = ScoreSet(s.target_scores * rng.uniform(0.1, 5), s.nontarget_scores * rng.uniform(0.1, 5))
            assert min_cllr(s) <= cllr(s) + 1e-12


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=30),
    st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=30),
    st.sampled_from(["affine", "cube", "exp"]),
)
def test_monotone_invariance(tar, non, kind):
    f = {"affine": lambda x: 2 * x + 3, "cube": lambda x: x ** 3 + x, "exp": np.exp}[kind]
    a = ScoreSet(tar, non)
    # a strictly increasing map may still collapse values in floating point; keep only faithful ones
    b = ScoreSet(f(np.asarray(tar)), f(np.asarray(non)))
    all_a = np.concatenate([a.target_scores, a.nontarget_scores])
    all_b = np.concatenate([b.target_scores, b.nontarget_scores])
    if np.unique(all_a).size != np.unique(all_b).size:
        return
    assert abs(rocch_eer(a) - rocch_eer(b)) <= 1e-9
    assert abs(min_cllr(a) - min_cllr(b)) <= 1e-9
