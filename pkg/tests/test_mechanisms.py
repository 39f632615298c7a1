import numpy as np
import pytest

from distmoments.adversarial import make_random_euclidean, make_two_point
from distmoments.mechanisms import (
    MechanismSpec,
    TrialStream,
    batch_winners,
    run_frc,
    run_prc,
    run_rd,
    run_trial,
    stream_uniforms,
    trial_voters,
)
from distmoments.metric import MetricInstance


class ScriptedRng:
    """Returns a fixed voter sample; the tie-break uniform is fixed too."""

    def __init__(self, sample, u=0.0):
        self.sample = np.asarray(sample)
        self.u = u

    def integers(self, low, high=None, size=None):
        return self.sample[:size]

    def random(self, size=None):
        return self.u


def test_spec_labels_and_parsing():
    assert MechanismSpec.parse("PRC_3").label == "PRC_3"
    assert MechanismSpec.parse("rd").s == 1
    with pytest.raises(ValueError):
        MechanismSpec.parse("XYZ_2")
    with pytest.raises(ValueError):
        MechanismSpec("FRC", 0)


def test_s1_is_random_dictatorship():
    inst = make_random_euclidean(15, 6, rng=1)
    for v in range(15):
        rng = ScriptedRng([v])
        out = {run_prc(inst, 1, rng).winner, run_frc(inst, 1, rng).winner, run_rd(inst, rng).winner}
        assert out == {int(inst.rankings[v, 0])}


def test_two_point_all_samples_at_b():
    tp = make_two_point(10, (9, 10))
    at_b = [9, 9, 9]
    assert run_prc(tp.instance, 3, ScriptedRng(at_b)).winner == tp.index_b
    # exhaust all M~ cases with one A in the sample: full majority elects A
    for sample in ([0, 9, 9], [9, 0, 9], [0, 0, 0]):
        assert run_prc(tp.instance, 3, ScriptedRng(sample)).winner == tp.index_a


def test_frc_split_sample_elects_sampled_majority():
    tp = make_two_point(10, (9, 10), b_first=True)
    for k in (2, 3, 4):
        sample = [0] * (k - 1) + [9] * k
        assert run_frc(tp.instance, 2 * k - 1, ScriptedRng(sample)).winner == tp.index_b
        # PRC ignores the sampled majority and uses everyone
        assert run_prc(tp.instance, 2 * k - 1, ScriptedRng(sample)).winner == tp.index_a


def test_frc_duplicate_ballots_counted_twice():
    # ballots: v0 [0,1,2], v1 [2,1,0], v2 [1,0,2]
    dist_va = np.array([[0.0, 1.0, 2.0], [2.0, 1.0, 0.0], [1.0, 0.0, 1.5]])
    dist_aa = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])
    inst = MetricInstance.from_matrices(dist_va, dist_aa)
    out = run_frc(inst, 3, ScriptedRng([0, 1, 1]))
    assert out.elicited == (0, 2)
    # hand count over {0, 2}: ballots v0: 0>2, v1: 2>0 twice -> 2 wins 2-1
    assert out.winner == 2
    # with a single copy of v1 it is a tie, broken toward the lower index
    assert run_frc(inst, 2, ScriptedRng([0, 1])).winner == 0


def test_random_tie_break_uses_uniform():
    tp = make_two_point(4, (3, 4))
    # one voter at A, one at B sampled: FRC_2 tie between A and B
    assert run_frc(tp.instance, 2, ScriptedRng([0, 3], u=0.1), "random").winner == 0
    assert run_frc(tp.instance, 2, ScriptedRng([0, 3], u=0.9), "random").winner == 1


def test_single_voter_and_unanimous_instances():
    inst = make_random_euclidean(1, 5, rng=2)
    fav = int(inst.rankings[0, 0])
    for spec in ("RD", "PRC_3", "FRC_5"):
        for t in range(20):
            assert run_trial(inst, MechanismSpec.parse(spec), TrialStream(0, t)).winner == fav
    same = MetricInstance.from_points(np.zeros((6, 2)) + 0.1, [[0.0, 0.0], [1.0, 1.0]])
    for t in range(20):
        assert run_trial(same, MechanismSpec.parse("FRC_3"), TrialStream(4, t)).winner == 0


def test_streams_are_deterministic_and_uniform():
    a = stream_uniforms(42, np.arange(1000), 4)
    assert np.array_equal(a, stream_uniforms(42, np.arange(1000), 4))
    assert not np.array_equal(a, stream_uniforms(43, np.arange(1000), 4))
    assert a.min() >= 0 and a.max() < 1
    # sampled voters are uniform: each count within 5 sd of its mean
    n, T = 7, 70_000
    V, _ = trial_voters(3, np.arange(T), 1, n)
    counts = np.bincount(V[:, 0], minlength=n)
    sd = np.sqrt(T * (1 / n) * (1 - 1 / n))
    assert np.all(np.abs(counts - T / n) < 5 * sd)


def test_trial_stream_matches_batch_draws():
    V, tie = trial_voters(9, np.arange(50), 3, 11)
    for t in range(50):
        st = TrialStream(9, t)
        assert st.integers(0, 11, size=3).tolist() == V[t].tolist()
        assert st.random() == tie[t]


@pytest.mark.parametrize("label,tie_break", [
    ("PRC_3", "index"), ("FRC_5", "index"), ("FRC_4", "random"), ("PRC_2", "random"), ("RD", "index"),
])
def test_batch_matches_scalar(label, tie_break):
    inst = make_random_euclidean(25, 6, rng=11, cluster_profile="gaussian")
    spec = MechanismSpec.parse(label, tie_break)
    T = 400
    V, tie = trial_voters(5, np.arange(T), spec.s, inst.n_voters)
    batch = batch_winners(inst, spec, V, tie)
    scalar = [run_trial(inst, spec, TrialStream(5, t)).winner for t in range(T)]
    assert batch.tolist() == scalar


def test_rd_two_point_frequency():
    tp = make_two_point(10, (9, 10))
    T = 20_000
    V, tie = trial_voters(1, np.arange(T), 1, 10)
    w = batch_winners(tp.instance, MechanismSpec("RD"), V, tie)
    p = np.mean(w == tp.index_a)
    assert abs(p - 0.9) < 5 * np.sqrt(0.09 / T)
