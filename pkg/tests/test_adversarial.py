from fractions import Fraction

import numpy as np
import pytest

from distmoments.adversarial import (
    make_random_euclidean,
    make_two_point,
    thm1_lower_bound,
    thm3_lower_bound,
)
from distmoments.distortion import exact_moments, social_costs
from distmoments.mechanisms import MechanismSpec
from distmoments.metric import favorites, validate_metric
from distmoments.verify import frc_two_point_closed_form, prc_two_point_closed_form


def test_two_point_layout():
    tp = make_two_point(10, Fraction(9, 10))
    fav = favorites(tp.instance).favorites
    assert (fav == tp.index_a).sum() == 9 and (fav == tp.index_b).sum() == 1
    sc = social_costs(tp.instance)
    assert sc.costs[tp.index_a] == pytest.approx(0.1)
    assert sc.costs[tp.index_b] == pytest.approx(0.9)
    assert sc.opt_index == tp.index_a
    assert validate_metric(tp.instance).ok


def test_two_point_labels_and_alpha_forms():
    tp = make_two_point(10, 0.9, b_first=True)
    assert (tp.index_a, tp.index_b) == (1, 0)
    assert tp.alpha == Fraction(9, 10) and tp.n_at_a == 9
    assert make_two_point(4, (3, 4)).n_at_a == 3


@pytest.mark.parametrize("n,alpha", [(10, 0.5), (10, 1.0), (10, 0.25), (10, Fraction(11, 20))])
def test_two_point_rejects_bad_alpha(n, alpha):
    with pytest.raises(ValueError):
        make_two_point(n, alpha)


def test_lower_bound_formulas():
    assert thm1_lower_bound(10, 0.9, 1) == pytest.approx(9.0)
    assert thm1_lower_bound(10, 0.9, 2) == pytest.approx(0.9 / np.sqrt(0.1))
    assert thm3_lower_bound(10, 0.9, 1) == pytest.approx(4.5)
    for k in (1, 2, 3):
        assert thm3_lower_bound(10, 0.9, k) == thm1_lower_bound(10, 0.9, k) / 2
    # diverges like (1 - alpha)^(-1/k)
    vals = [thm1_lower_bound(n, 1 - 1 / n, 2) * (1 / n) ** 0.5 for n in (10, 100, 1000, 10_000)]
    assert vals == pytest.approx([1.0] * 4, abs=0.1)


@pytest.mark.parametrize("n,k", [(10, 2), (10, 3), (40, 2)])
def test_exact_moments_beat_lower_bounds(n, k):
    alpha = Fraction(n - 1, n)
    prc = exact_moments(make_two_point(n, alpha).instance, MechanismSpec("PRC", k - 1), k)
    assert prc.moment(k) >= thm1_lower_bound(n, alpha, k) - 1e-12
    assert prc.moment(k) == pytest.approx(prc_two_point_closed_form(alpha, k), rel=1e-12)
    frc = exact_moments(
        make_two_point(n, alpha, b_first=True).instance, MechanismSpec("FRC", 2 * k - 2), k
    )
    assert frc.moment(k) >= thm3_lower_bound(n, alpha, k) - 1e-12
    assert frc.moment(k) == pytest.approx(frc_two_point_closed_form(alpha, k), rel=1e-12)


@pytest.mark.parametrize("profile", ["uniform", "gaussian", "heavy_tail"])
def test_random_instances_are_metric_and_seeded(profile):
    a = make_random_euclidean(100, 10, 2, profile, rng=3)
    b = make_random_euclidean(100, 10, 2, profile, rng=3)
    assert validate_metric(a).ok
    assert a.dist_va.tobytes() == b.dist_va.tobytes()
    assert a.voter_points.shape == (100, 2)


def test_profile_options():
    inst = make_random_euclidean(50, 5, 3, {"kind": "gaussian", "clusters": 4, "spread": 0.01}, rng=0)
    assert inst.voter_points.shape == (50, 3)
    with pytest.raises(ValueError):
        make_random_euclidean(5, 5, 2, "spiral")
    with pytest.raises(ValueError):
        make_random_euclidean(0, 5)
