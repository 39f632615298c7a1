import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distmoments.errors import (
    DuplicateProjectError,
    ElectionError,
    InfeasibleBallotError,
    UnknownProjectError,
)
from distmoments.metric import validate_metric
from distmoments.pb import (
    KnapsackElection,
    budget_distance,
    build_instance,
    jaccard_distance,
    load_election,
    save_election,
    synth_election,
)


def write(tmp_path, projects, ballots, budget=100):
    (tmp_path / "projects.csv").write_text(projects)
    (tmp_path / "ballots.csv").write_text(ballots)
    (tmp_path / "meta.json").write_text(json.dumps({"budget": budget}))
    return tmp_path / "projects.csv", tmp_path / "ballots.csv", tmp_path / "meta.json"


PROJECTS = "project_id,cost\n1,40\n2,60\n3,30\n"


def test_load_small_election(tmp_path):
    p, b, m = write(tmp_path, PROJECTS, "voter_id,project_ids\nx,1;2\ny,\nz,3\n")
    e = load_election(p, b, meta_file=m)
    assert e.n_voters == 3 and e.n_projects == 3 and e.budget == 100
    assert e.ballots[1] == frozenset() and e.cost(e.ballots[1]) == 0
    assert e.cost({1, 2}) == 100
    assert load_election(p, b, budget=250).budget == 250


@pytest.mark.parametrize(
    "projects,ballots,exc,where",
    [
        (PROJECTS, "voter_id,project_ids\nx,1\ny,1;2;3\n", InfeasibleBallotError, "ballots.csv:3"),
        (PROJECTS, "voter_id,project_ids\nx,1\ny,9\n", UnknownProjectError, "ballots.csv:3"),
        ("project_id,cost\n1,40\n1,50\n", "voter_id,project_ids\n", DuplicateProjectError, "projects.csv:3"),
        ("project_id,cost\n1,abc\n", "voter_id,project_ids\n", ElectionError, "projects.csv:2"),
        (PROJECTS, "voter,projects\nx,1\n", ElectionError, "expected header"),
    ],
)
def test_load_errors_name_the_row(tmp_path, projects, ballots, exc, where):
    p, b, m = write(tmp_path, projects, ballots)
    with pytest.raises(exc, match=where):
        load_election(p, b, meta_file=m)


def test_missing_budget(tmp_path):
    p, b, _ = write(tmp_path, PROJECTS, "voter_id,project_ids\n")
    with pytest.raises(ElectionError, match="budget"):
        load_election(p, b)


def test_budget_distance_examples():
    e = KnapsackElection((1, 2, 3), np.array([40.0, 60.0, 30.0]), 100.0, (), ())
    assert budget_distance({1, 2}, {1, 2}, e) == 0.0
    assert budget_distance({1}, {2}, e) == 1.0
    assert budget_distance({1, 2}, {2, 3}, e) == pytest.approx(0.4)
    # under-spent ballots sit away from themselves
    assert budget_distance({3}, {3}, e) == pytest.approx(0.7)


def test_jaccard_examples():
    assert jaccard_distance({1, 2}, {1, 2}) == 0.0
    assert jaccard_distance({1}, {2}) == 1.0
    assert jaccard_distance({1, 2, 3}, {2, 3, 4, 5}) == pytest.approx(0.6)
    assert jaccard_distance(set(), set()) == 0.0


sets = st.frozensets(st.integers(0, 9), max_size=10)


@settings(max_examples=300, deadline=None)
@given(P=sets, Q=sets, R=sets)
def test_jaccard_triangle_inequality(P, Q, R):
    d = jaccard_distance
    assert d(P, R) <= d(P, Q) + d(Q, R) + 1e-12
    assert d(P, Q) == d(Q, P) and 0.0 <= d(P, Q) <= 1.0


def test_build_instance_dedups_ballots():
    e = KnapsackElection((1, 2), np.array([50.0, 50.0]), 100.0,
                         (frozenset({1}), frozenset({1}), frozenset({1, 2})), ("a", "b", "c"))
    for kind in ("budget", "jaccard"):
        built = build_instance(e, kind)
        assert built.instance.dist_va.shape == (3, 2)
        assert built.instance.dist_aa.shape == (2, 2)
        assert built.voter_alternative.tolist() == [0, 0, 1]
    raw = build_instance(e, "budget", "raw")
    assert raw.validation is None and raw.max_self_distance == pytest.approx(0.5)
    norm = build_instance(e, "budget", "normalized")
    assert norm.validation.ok and norm.max_self_distance == 0.0
    # normalized distance is half the cost of the symmetric difference over B
    assert norm.instance.dist_aa[0, 1] == pytest.approx(50 / 200)


def test_own_ballot_is_favorite_even_inside_a_superset():
    # {1} is contained in {1, 2}; raw budget distance ties them for voter a
    e = KnapsackElection((1, 2), np.array([30.0, 20.0]), 100.0,
                         (frozenset({1}), frozenset({1, 2})), ("a", "b"))
    inst = build_instance(e, "budget").instance
    assert inst.rankings[:, 0].tolist() == [0, 1]


def test_synthetic_elections_are_feasible_and_seeded():
    a = synth_election(945, 23, 600_000, rng=2015)
    b = synth_election(945, 23, 600_000, rng=2015)
    assert a.ballots == b.ballots and np.array_equal(a.costs, b.costs)
    assert a.n_voters == 945 and a.n_projects == 23
    assert all(a.cost(p) <= a.budget for p in a.ballots)
    assert all(c == int(c) and c >= 1 for c in a.costs)


def test_save_and_reload(tmp_path):
    e = synth_election(50, 8, 1000, rng=1)
    save_election(e, tmp_path)
    back = load_election(tmp_path / "projects.csv", tmp_path / "ballots.csv",
                         meta_file=tmp_path / "meta.json")
    assert back.ballots == e.ballots and back.budget == e.budget
    assert back.voter_ids == e.voter_ids


def test_normalized_budget_metric_on_many_elections():
    rng = np.random.default_rng(77)
    for i in range(200):
        e = synth_election(int(rng.integers(5, 60)), int(rng.integers(2, 12)),
                           float(rng.integers(100, 5000)), rng=rng)
        built = build_instance(e, "budget", "normalized")
        assert built.validation.ok, (i, built.validation.describe())


def test_jaccard_instances_validate():
    e = synth_election(200, 15, 10_000, rng=4)
    assert validate_metric(build_instance(e, "jaccard").instance).ok
