import json

import numpy as np
import pytest

from aluthge.lab.continuity import block_bound, continuity_probe, sphere_sample
from aluthge.lab.ensembles import EnsembleKind, EnsembleSpec, draw, generate, jordan_matrix, random_spectrum
from aluthge.lab.experiment import ConfigError, normalize_config, report_text, run_experiment, strip_timestamp
from aluthge.lab.rates import RateFitError, measure_rate, projection_convergence, rate_fit
from aluthge.linalg import is_normal, spectrum_distance
from aluthge.spectral import cluster_spectrum
from aluthge.transform import direct_sum, iterate, limit


def test_generate_normal():
    (t,) = generate(EnsembleSpec("normal", r=3, spectrum=(1, 2, 3), count=1, seed=4))
    assert is_normal(t)
    assert spectrum_distance(np.linalg.eigvals(t), [1, 2, 3]) < 1e-12


def test_generate_jordan():
    spec = EnsembleSpec("jordan_structured", r=3, jordan_blocks=((2, 2), (1, 1)), condition_cap=10, count=3)
    for t in generate(spec):
        assert np.linalg.matrix_rank(t - 2 * np.eye(3), tol=1e-8) == 2
        np.testing.assert_allclose(np.sort(np.linalg.eigvals(t).real), [1, 2, 2], atol=1e-6)


def test_generate_deterministic_and_independent_streams():
    spec = EnsembleSpec("prescribed_spectrum_diagonalizable", r=4, count=3, seed=11, condition_cap=100)
    a, b = generate(spec), generate(spec)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert not np.allclose(a[0], a[1])
    # matrix i does not depend on the batch size
    longer = generate(EnsembleSpec("prescribed_spectrum_diagonalizable", r=4, count=5, seed=11, condition_cap=100))
    np.testing.assert_array_equal(longer[2], a[2])


def test_generate_condition_and_spectrum():
    spec = EnsembleSpec("prescribed_spectrum_diagonalizable", r=5, count=10, seed=2, condition_cap=100,
                        min_separation=0.5)
    for i in range(spec.count):
        t, d = draw(spec, i)
        assert np.all((np.abs(d) >= 0.5) & (np.abs(d) <= 2))
        gaps = np.abs(d[:, None] - d[None, :])[~np.eye(5, dtype=bool)]
        assert gaps.min() >= 0.5
        assert spectrum_distance(np.linalg.eigvals(t), d) < 1e-10


def test_perturbed_normal_keeps_spectrum():
    spec = EnsembleSpec("perturbed_normal", r=4, spectrum=(1, 2, 3, 4j), count=2, perturbation=1e-2)
    for t in generate(spec):
        assert not is_normal(t)
        assert spectrum_distance(np.linalg.eigvals(t), [1, 2, 3, 4j]) < 1e-12


def test_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec("normal", r=3, spectrum=(1, 2))
    with pytest.raises(ValueError):
        EnsembleSpec("jordan_structured", r=3, jordan_blocks=((1, 2),))
    with pytest.raises(ValueError):
        EnsembleSpec("normal", r=2, condition_cap=0.5)
    with pytest.raises(ValueError):
        EnsembleSpec("bogus", r=2)
    with pytest.raises(ValueError):
        random_spectrum(50, np.random.default_rng(0), min_separation=1.0, max_tries=100)
    np.testing.assert_array_equal(jordan_matrix([(3, 2)]), [[3, 1], [0, 3]])
    assert EnsembleSpec("normal", r=2).kind is EnsembleKind.NORMAL


def test_rate_fit_examples():
    with pytest.raises(RateFitError):
        measure_rate(np.diag([1, 2]))
    rep = measure_rate(np.array([[1, 1], [0, 2]]))
    assert rep.fitted_gamma <= 2 * np.sqrt(2) / 3 + 0.05
    assert abs(rep.fitted_gamma - rep.k_D_reference) < 1e-3
    assert rep.residual < 0.1 and rep.n_points >= 8 and rep.floor_reached


def test_rate_fit_superlinear_case():
    # spectrum (1, -1): the 2x2 case is normal after one transform, far below any fit window
    t = np.array([[1, 5], [0, -1]], dtype=complex)
    tr = iterate(t, tol=1e-13, keep_iterates=True)
    assert tr.n_final == 1
    with pytest.raises(RateFitError):
        rate_fit(tr, tr.final)


def test_rate_fit_needs_iterates():
    with pytest.raises(ValueError):
        rate_fit(iterate(np.array([[1, 1], [0, 2]])), np.eye(2))


def test_projection_convergence_constant_on_block_basin():
    t = direct_sum([[1]], [[2, 3], [0, 2]])
    rep = projection_convergence(t, cluster_spectrum([1, 2, 2]))
    assert rep.fitted_gamma == 0 and rep.terminal < 1e-12


def test_projection_and_matrix_rates_agree():
    spec = EnsembleSpec("prescribed_spectrum_diagonalizable", r=3, count=3, seed=5, condition_cap=20)
    for t in generate(spec):
        a = measure_rate(t)
        b = projection_convergence(t)
        assert abs(a.fitted_gamma - b.fitted_gamma) < 0.1


def test_projection_convergence_jordan():
    rng = np.random.default_rng(8)
    s = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
    t = s @ direct_sum([[1]], [[2, 1], [0, 2]]) @ np.linalg.inv(s)
    rep = projection_convergence(t)
    assert rep.fitted_gamma < 1 and rep.terminal < 1e-7
    assert rep.reference_defect < 1e-10


def test_sphere_sample():
    p = sphere_sample(3, 0.5, np.random.default_rng(0))
    assert np.isclose(np.linalg.norm(p), 0.5)


def test_block_bound_exact_at_scalar():
    rng = np.random.default_rng(3)
    t = np.eye(2) + sphere_sample(2, 1e-3, rng)
    vals = np.linalg.eigvals(t)
    bound = block_bound(t, np.eye(2), cluster_spectrum([1, 1]))
    assert np.isclose(bound, np.sqrt(np.sum(np.abs(vals - 1) ** 2)))


def test_block_bound_dominates_limit():
    rng = np.random.default_rng(4)
    n0 = np.diag([1.0, 2.0])
    t = n0 + sphere_sample(2, 0.05, rng)
    exact = np.linalg.norm(limit(t).limit - n0)
    assert exact <= block_bound(t, n0, cluster_spectrum([1, 2])) + 1e-9


def test_continuity_probe_simple_spectrum():
    rep = continuity_probe(np.diag([1.0, 2.0]), deltas=(1e-1, 1e-2, 1e-3), samples_per_delta=3, seed=1)
    assert rep.monotone and rep.passed
    assert all(s.method == "limit" for s in rep.samples)


def test_continuity_probe_validation():
    with pytest.raises(ValueError):
        continuity_probe(np.array([[1, 1], [0, 1]]))
    with pytest.raises(ValueError):
        continuity_probe(np.diag([0.0, 1.0]))
    with pytest.raises(ValueError):
        continuity_probe(np.eye(2), deltas=(1e-3, 1e-2))


CONFIG = {
    "seed": 3,
    "suites": [
        {"name": "diag", "kind": "prescribed_spectrum_diagonalizable", "r": 3, "count": 3,
         "condition_cap": 50, "analyses": ["limit", "rate", "spectral"]},
        {"name": "jordan", "kind": "jordan_structured", "r": 3, "count": 2,
         "jordan_blocks": [[1, 1], [{"re": 2, "im": 0}, 2]], "analyses": ["limit", "projection"]},
        {"name": "orbit", "kind": "normal", "r": 3, "count": 2, "min_separation": 0.5,
         "analyses": ["dynamics"]},
    ],
}


def test_experiment_report_and_determinism():
    a = report_text(run_experiment(CONFIG))
    b = report_text(run_experiment(CONFIG, workers=2))
    assert strip_timestamp(a) == strip_timestamp(b)
    doc = json.loads(a)
    assert doc["passed"]
    assert [s["name"] for s in doc["suites"]] == ["diag", "jordan", "orbit"]
    assert doc["config"]["suites"][0]["seed"] == 3
    rec = doc["suites"][0]["records"][0]
    assert rec["limit"]["converged"] and rec["failures"] == []


def test_experiment_records_partial_failures():
    cfg = {"suites": [{"name": "flat", "kind": "normal", "r": 2, "count": 1, "spectrum": [1, 2],
                       "analyses": ["rate"]}]}
    doc = run_experiment(cfg)
    rec = doc["suites"][0]["records"][0]
    assert "RateFitError" in rec["error"] and "error" in rec["failures"]
    assert not doc["passed"]


@pytest.mark.parametrize("bad", [
    {},
    {"suites": []},
    {"suites": [{"name": "x", "kind": "normal", "r": 2}]},
    {"suites": [{"name": "x", "kind": "normal", "r": 2, "count": 1, "spectrum": [1]}]},
    {"suites": [{"name": "x", "kind": "normal", "r": 2, "count": 1, "extra": 1}]},
    {"suites": [{"name": "x", "kind": "normal", "r": 2, "count": 1}], "lambda": 1.5},
    "{not json",
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        normalize_config(bad)
