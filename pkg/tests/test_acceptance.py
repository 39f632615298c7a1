"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line that is printed in the terminal summary.
Criteria 3, 5 and 6 share a single bounds-suite run (150 instances, 10^5
Monte Carlo trials per mechanism), which takes a few minutes.
"""

import csv
import json
import math
import os
import time
from pathlib import Path

import pytest
from conftest import record

from distmoments.cli import main
from distmoments.pb import load_election
from distmoments.verify import bounds_suite, copeland_suite, lemma_suite, lowerbound_suite, pb_suite

pytestmark = pytest.mark.slow


def by_name(results):
    return {r.name: r for r in results}


def summarize(results):
    return "; ".join(f"{r.name} {r.checked} checks, worst slack {r.worst_slack:.3g}" for r in results)


def test_1_lemma_oracles():
    t0 = time.perf_counter()
    results = lemma_suite(seed=0, n_dists=1000, k_max=6, cap=10**7, tol=1e-10)
    elapsed = time.perf_counter() - t0
    ok = all(r.passed for r in results) and elapsed < 120
    record("1 lemma oracles", ok, f"{summarize(results)}; {elapsed:.1f}s (< 120s)")
    assert ok, [r.to_dict() for r in results if not r.passed]
    assert elapsed < 120


def test_2_copeland_in_degree():
    results = copeland_suite(seed=0, n_profiles=500, k_max=5)
    indeg = by_name(results)["copeland_in_degree_below_k"]
    record("2 copeland in-degree < k", indeg.passed, f"{indeg.checked} profiles, worst slack {indeg.worst_slack}")
    assert indeg.passed and indeg.checked >= 500, indeg.failures


@pytest.fixture(scope="module")
def bounds():
    t0 = time.perf_counter()
    results = by_name(bounds_suite(seed=0, n_instances=50, trials=100_000, k_max=4))
    return results, time.perf_counter() - t0


def test_3_upper_bounds(bounds):
    results, elapsed = bounds
    props = [results[n] for n in ("prc_k_upper_bound", "frc_2k-1_upper_bound", "rd_first_moment_bound",
                                  "generated_instances_are_metric")]
    ok = all(p.passed for p in props) and elapsed < 900
    detail = (f"{summarize(props)}; {results['prc_k_upper_bound'].info['exact_reports']} exact reports; "
              f"suite {elapsed:.0f}s (< 900s)")
    record("3 upper bounds", ok, detail)
    assert all(p.passed for p in props), [p.failures for p in props]
    assert elapsed < 900


def test_5_markov_tails(bounds):
    results, _ = bounds
    props = [results["prc_k_markov_tail"], results["frc_2k-1_markov_tail"]]
    ok = all(p.passed for p in props)
    record("5 markov tails", ok, summarize(props))
    assert ok, [p.failures for p in props]


def test_6_monte_carlo_matches_exact(bounds):
    results, _ = bounds
    p = results["monte_carlo_matches_exact"]
    ok = p.passed and p.checked > 0
    record("6 monte carlo vs exact", ok, f"{p.checked} comparisons within 3 se, worst slack {p.worst_slack:.3g}")
    assert ok, p.failures


def test_4_lower_bounds():
    results = lowerbound_suite(ns=(10, 100, 1000), ks=(2, 3), c=1, tol=1e-12, slope_rtol=0.10)
    ok = all(r.passed for r in results)
    slopes = ", ".join(f"{k} {v:.3f}" for k, v in by_name(results)["growth_exponent_1_over_k"].info.items())
    record("4 lower bounds", ok, f"{summarize(results)}; slopes {slopes}")
    assert ok, [r.failures for r in results if not r.passed]


def _pb_elections():
    yield "synthetic", None
    root = os.environ.get("DISTMOMENTS_PB_DIR")
    if root:
        d = Path(root)
        yield f"data from {root}", load_election(d / "projects.csv", d / "ballots.csv", meta_file=d / "meta.json")


def test_7_pb_qualitative():
    lines, ok = [], True
    for name, election in _pb_elections():
        results = pb_suite(seed=2015, election=election, runs=1000, s_grid=(1, 3, 5, 7),
                           distances=("budget", "jaccard"))
        ok &= all(r.passed for r in results)
        iqr = by_name(results)["pb_iqr_nonincreasing_in_s"].info
        iqrs = "; ".join(f"{k} IQR " + "/".join(f"{v:.4f}" for v in vs) for k, vs in iqr.items())
        lines.append(f"{name}: {summarize(results)}; {iqrs}")
    record("7 pb qualitative", ok, " | ".join(lines))
    assert ok


def _values(root: Path):
    """Every number in every output file, keyed by file and position."""
    out = {}
    for p in sorted(root.rglob("*")):
        if p.suffix == ".json":
            flat = []

            def walk(x):
                if isinstance(x, dict):
                    for k in sorted(x):
                        walk(x[k])
                elif isinstance(x, list):
                    for v in x:
                        walk(v)
                else:
                    flat.append(x)

            walk(json.loads(p.read_text()))
            out[p.name] = flat
        elif p.suffix == ".csv":
            with open(p, newline="") as fh:
                out[str(p.relative_to(root))] = [c for row in csv.reader(fh) for c in row]
    return out


def _max_diff(a, b):
    assert a.keys() == b.keys()
    worst = 0.0
    for key in a:
        assert len(a[key]) == len(b[key]), key
        for x, y in zip(a[key], b[key]):
            try:
                fx, fy = float(x), float(y)
            except (TypeError, ValueError):
                assert x == y, key
                continue
            if not (math.isnan(fx) and math.isnan(fy)):
                worst = max(worst, abs(fx - fy))
    return worst


def test_8_determinism(tmp_path):
    inst = tmp_path / "inst.json"
    assert main(["gen-instance", "--n", "60", "--m", "8", "--seed", "11", "--out", str(inst)]) == 0
    args = ["run", "--instance", str(inst), "--seed", "123", "--trials", "50000", "--k", "4",
            "--mechanisms", "RD,PRC_3,PRC_5,FRC_3,FRC_5"]
    pb = ["run", "--instance", '{"pb": {"synthetic": {"seed": 5}}}', "--seed", "9", "--trials", "1000",
          "--k", "2", "--distance", "budget", "--distance", "jaccard"]
    trees = {}
    for tag, base, workers in (("a", args, 1), ("b", args, 1), ("c", args, 2), ("pa", pb, 1), ("pb", pb, 1)):
        assert main(base + ["--workers", str(workers), "--out", str(tmp_path / tag)]) == 0
        root = tmp_path / tag
        trees[tag] = {p.relative_to(root).as_posix(): p.read_bytes() for p in root.rglob("*") if p.is_file()}
    identical = trees["a"] == trees["b"] and trees["pa"] == trees["pb"]
    worst = _max_diff(_values(tmp_path / "a"), _values(tmp_path / "c"))
    ok = identical and worst <= 1e-12
    record("8 determinism", ok,
           f"repeat runs byte-identical: {identical}; max |diff| workers 1 vs 2: {worst:.3g} (<= 1e-12)")
    assert identical
    assert worst <= 1e-12
