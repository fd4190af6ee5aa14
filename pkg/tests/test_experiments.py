import csv
import io
import json

import numpy as np
import pytest

from atomglasso.bounds import compute_bounds, default_spec
from atomglasso.experiments import (FAMILIES, GraphFamily, format_table,
                                    make_instance, perturbation,
                                    reproduce_table,
                                    run_perturbation_experiment,
                                    two_digit_match)


def test_chain_p3_precision_entry():
    inst = make_instance(GraphFamily("chain", 3))
    assert inst.K_star[0, 1] == pytest.approx(-5 / 24, abs=1e-12)
    assert np.allclose(np.diag(inst.K_star), [25 / 24, 26 / 24, 25 / 24])
    assert abs(inst.K_star[0, 2]) <= 1e-10


def test_hub_p5_rho():
    inst = make_instance(GraphFamily("hub", 5))
    assert inst.rho == pytest.approx(-10 / 9.75, abs=1e-12)
    assert np.allclose(inst.K_star[0, 1:], -10 / 9.75)


def test_dense_p4_degree():
    inst = make_instance(GraphFamily("dense", 4))
    assert inst.d == 3
    assert np.all(inst.K_star[-1, :-1] == 0)


@pytest.mark.parametrize("fam", FAMILIES)
@pytest.mark.parametrize("p", [9, 16, 25])
def test_instance_validity(fam, p):
    inst = make_instance(GraphFamily(fam, p))
    assert np.linalg.eigvalsh(inst.Sigma_star)[0] > 0
    assert np.abs(inst.K_star @ inst.Sigma_star - np.eye(p)).max() < 1e-8
    fam_ = GraphFamily(fam, p)
    A = np.zeros((p, p), dtype=bool)
    for i, j in fam_.edges():
        A[i, j] = A[j, i] = True
    assert np.abs(inst.K_star[A] - fam_.expected_rho()).max() < 1e-10
    assert inst.support.sum() == len(fam_.edges())


def test_family_validation():
    with pytest.raises(ValueError):
        GraphFamily("grid", 10)
    with pytest.raises(ValueError):
        GraphFamily("tree", 10)
    with pytest.raises(ValueError):
        GraphFamily("chain", 2)
    assert len(GraphFamily("grid", 16).edges()) == 24
    assert len(GraphFamily("hub", 16).edges()) == 15


@pytest.mark.parametrize("law", ["max-uniform", "iid"])
def test_perturbation_law(law):
    rng = np.random.default_rng(0)
    for _ in range(50):
        E = perturbation(rng, 5, 0.3, law)
        assert np.array_equal(E, E.T)
        assert np.abs(E).max() <= 0.3
    with pytest.raises(ValueError):
        perturbation(rng, 5, 0.3, "gaussian")


def test_max_uniform_has_constant_magnitude():
    E = perturbation(np.random.default_rng(1), 6, 1.0)
    assert np.allclose(np.abs(E), np.abs(E[0, 0]))


@pytest.fixture(scope="module")
def small_run():
    inst = make_instance(GraphFamily("chain", 6))
    spec = default_spec("l1", inst)
    return inst, spec, run_perturbation_experiment(inst, spec, 30, 6.0,
                                                   seed=11)


def test_soundness_below_delta(small_run):
    _, _, res = small_run
    assert res.violations == 0
    for r in res.records:
        assert r.deviation >= 0
        if r.converged and r.deviation < res.delta:
            assert r.recovered


def test_summary_statistics(small_run):
    _, _, res = small_run
    ok = [r.deviation for r in res.records if r.recovered]
    bad = [r.deviation for r in res.records
           if r.converged and not r.recovered]
    assert res.n_recovered == len(ok)
    assert res.delta_hat == (min(ok) if ok else None)
    assert res.delta_hat_frontier == (min(bad) if bad else None)
    s = res.summary()
    assert "records" not in s and "lambda" in s


def test_reproducibility(small_run):
    inst, spec, res = small_run
    again = run_perturbation_experiment(inst, spec, 30, 6.0, seed=11)
    assert again.to_json() == res.to_json()
    other = run_perturbation_experiment(inst, spec, 30, 6.0, seed=12)
    assert other.to_json() != res.to_json()


def test_iid_law_run():
    inst = make_instance(GraphFamily("chain", 5))
    spec = default_spec("slope", inst)
    res = run_perturbation_experiment(inst, spec, 5, 0.9, seed=3, law="iid")
    assert res.law == "iid"
    assert res.n_recovered == 5


def test_csv_columns(small_run):
    _, _, res = small_run
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert rows[0] == ["deviation", "error", "recovered", "seed"]
    assert len(rows) == 31
    assert float(rows[1][0]) == res.records[0].deviation


def test_experiment_argument_checks():
    inst = make_instance(GraphFamily("chain", 4))
    spec = default_spec("l1", inst)
    with pytest.raises(ValueError):
        run_perturbation_experiment(inst, spec, 0, 1.0, 0)
    with pytest.raises(ValueError):
        run_perturbation_experiment(inst, spec, 1, -1.0, 0)


def test_two_digit_match():
    assert two_digit_match(4.04e-1, 4.0e-1)
    assert two_digit_match(4.09e-1, 4.0e-1)
    assert not two_digit_match(4.2e-1, 4.0e-1)
    assert two_digit_match(1.55e-5, 1.6e-5)


def test_empty_table():
    assert reproduce_table("irrep", [16], families=()) == []
    assert format_table([]) is not None
    with pytest.raises(ValueError):
        reproduce_table("other", [16])


def test_table_cells_carry_references():
    cells = reproduce_table("delta", [16], families=("chain",))
    c = cells[0]
    assert c["reference"]["delta"]["ok"]
    assert c["reference"]["delta_R"]["ok"]
    json.dumps(cells)
    text = format_table(cells)
    assert "chain" in text


def test_table_bad_dimension_recorded_in_cell():
    cells = reproduce_table("irrep", [10], families=("grid",))
    assert "error" in cells[0]


def test_table_matches_bounds():
    cells = reproduce_table("irrep", [9], families=("chain",), norms=("l1",))
    inst = make_instance(GraphFamily("chain", 9))
    rep, _ = compute_bounds(inst, default_spec("l1", inst))
    assert cells[0]["value"] == pytest.approx(rep.lhs_table)


def test_slope_cells_emit_both_forms():
    cells = reproduce_table("irrep", [16], families=("chain",),
                            norms=("slope",))
    c = cells[0]
    assert c["value"] == pytest.approx(0.4)
    assert c["lhs_face"] == pytest.approx(0.4 * 2 / 3)


def test_printed_zero_artifacts_are_classified_as_zero():
    from atomglasso.experiments import NUMERICAL_ZERO, REFERENCE_IRREP
    small = sorted(v for v in REFERENCE_IRREP.values() if v < NUMERICAL_ZERO)
    large = sorted(v for v in REFERENCE_IRREP.values() if v >= NUMERICAL_ZERO)
    assert small[-1] == 1.6e-09 and large[0] == 2.1e-02
