from rkgeo.verify import VerifyConfig, run_suite

SMALL = dict(n_samples=200, n_geodesics=2, n_signals=10)


def test_small_suite_passes():
    rep = run_suite(VerifyConfig(**SMALL))
    assert rep["passed"], rep["first_counterexample"]
    assert rep["format"] == "rkgeo-verify/1"
    props = rep["properties"]
    assert set(props) == {"homogeneity", "monotonicity", "conservation", "fermat_round_trip",
                          "length_quadrature", "esigma_bound", "convexity_certificate"}
    assert all(p["checked"] > 0 for p in props.values())


def test_perturbation_fixture_is_caught():
    rep = run_suite(VerifyConfig(inject_perturbation=True, **SMALL))
    assert not rep["passed"]
    ce = rep["first_counterexample"]
    assert ce["property"] == "monotonicity" and ce["perturbed"]
    assert not ce["F_eps2"] < ce["F_eps1"]


def test_unattainable_tolerance_is_tolerance_bound():
    rep = run_suite(VerifyConfig(tol=1e-15, **SMALL))
    assert rep["passed"]
    bound = sum(p["tolerance_bound"] for p in rep["properties"].values())
    assert bound > 0


def test_seed_determinism():
    a = run_suite(VerifyConfig(seed=3, **SMALL))
    b = run_suite(VerifyConfig(seed=3, **SMALL))
    assert a == b
