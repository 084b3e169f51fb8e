import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbtune import fixtures
from bbtune.compile import lower
from bbtune.grammar import parse
from bbtune.tuner import (
    INFEASIBLE,
    OPTIMAL,
    SolverConfig,
    expectations,
    solve_ordinary,
    solve_singular,
    tune,
)


def quiet_tune(ast, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return tune(ast, **kw)


@given(st.floats(min_value=2.0, max_value=5000.0))
@settings(max_examples=15, deadline=None)
def test_sequence_closed_form(n):
    r = quiet_tune(fixtures.load("seqz"), size=n)
    assert r.status == OPTIMAL
    assert math.isclose(r.z["size"], n / (n + 1), rel_tol=1e-6)


def test_two_letter_words_closed_form():
    # F = 1 / (1 - z(u + 1)); E[size] = 50 and E[A] = 35
    r = quiet_tune(fixtures.load("words"), size=50)
    z, u = r.z["size"], r.u["A"]
    w = z * (u + 1)
    assert math.isclose(w / (1 - w), 50, rel_tol=1e-8)
    assert math.isclose(z * u / (1 - w), 35, rel_tol=1e-8)


def test_binary_trees_singular():
    r = quiet_tune(fixtures.load("binary"), singular=True)
    assert r.status == OPTIMAL and r.mode == "singular"
    assert abs(r.z["size"] - 0.5) < 1e-4


def test_motzkin_singular_share(motzkin_singular):
    m = expectations(motzkin_singular.program, motzkin_singular.x).as_dict()
    assert math.isclose(m["Binary"] / m["size"], 0.3, rel_tol=1e-4)  # O(1/E) offset


def test_running_example_moments(running_result):
    m = expectations(running_result.program, running_result.x).as_dict()
    assert math.isclose(m["size"], 100, rel_tol=1e-8)
    assert math.isclose(m["U"], 40, rel_tol=1e-8)
    # every tree satisfies size = 1.5 U - 0.5 + V
    assert math.isclose(m["V"], 100 - 1.5 * 40 + 0.5, rel_tol=1e-6)


def test_inadmissible_targets_are_infeasible():
    # size = 1.5 U - 0.5 + V rules out (size, U, V) = (100, 20, 10)
    prog = lower(fixtures.load("running"), 8)
    r = solve_ordinary(prog, {"size": 100, "U": 20, "V": 10})
    assert r.status == INFEASIBLE
    assert r.warnings


def test_covariance_is_symmetric_psd(running_result):
    cov = expectations(running_result.program, running_result.x).cov
    assert np.allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() > -1e-8 * np.abs(cov).max()


def test_seq_variance_matches_geometric():
    r = quiet_tune(fixtures.load("seqz"), size=100)
    mom = expectations(r.program, r.x)
    z = r.z["size"]
    assert math.isclose(mom.cov[0, 0], z / (1 - z) ** 2, rel_tol=1e-6)


@pytest.mark.parametrize("alpha", [{"Binary": 1.2}, {"Binary": -0.1}])
def test_singular_rejects_bad_frequencies(alpha):
    with pytest.raises(ValueError):
        solve_singular(lower(fixtures.load("motzkin")), alpha)


def test_singular_rejects_frequency_sum_above_one():
    ast = parse("T = A [0.6] | B [0.5] T | C T T.")
    with pytest.raises(ValueError):
        solve_singular(lower(ast))


def test_unknown_marker_and_missing_size():
    with pytest.raises(KeyError):
        tune(fixtures.load("motzkin"), size=10, freqs={"Nope": 0.1})
    with pytest.raises(ValueError):
        tune(fixtures.load("motzkin"))


def test_cli_frequencies_override_annotations():
    r = quiet_tune(fixtures.load("motzkin"), singular=True, freqs={"Binary": 0.2})
    m = expectations(r.program, r.x).as_dict()
    assert math.isclose(m["Binary"] / m["size"], 0.2, rel_tol=1e-4)


def test_not_strongly_connected_warns():
    with pytest.warns(UserWarning, match="strongly connected"):
        tune(fixtures.load("seqz"), size=10)


def test_result_json_round_trip():
    r = quiet_tune(fixtures.load("motzkin"), singular=True)
    doc = json.loads(r.dumps())
    assert doc["status"] == OPTIMAL
    assert doc["z"]["size"] == r.z["size"]
    assert doc["classes"]["Motzkin"]["1"] == r.value("Motzkin")
    assert r.dumps() == quiet_tune(fixtures.load("motzkin"), singular=True).dumps()


def test_tighter_tolerance_shrinks_gap():
    loose = quiet_tune(fixtures.load("binary"), size=100, config=SolverConfig(tolerance=1e-4, polish=False))
    tight = quiet_tune(fixtures.load("binary"), size=100, config=SolverConfig(tolerance=1e-10, polish=False))
    assert tight.gap <= loose.gap
    assert tight.gap <= 1e-10 * 10


def test_partitions_pick_truncation_and_hit_targets(tuned):
    r = tuned("partitions", size=200)
    assert r.status == OPTIMAL
    assert r.program.truncation > 8
    m = expectations(r.program, r.x).as_dict()
    for name, f in {"C1": 0.03, "C2": 0.07, "C3": 0.1, "C4": 0.3}.items():
        assert math.isclose(m[name], f * 200, rel_tol=1e-6)
