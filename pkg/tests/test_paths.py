import numpy as np
import pytest

from rkgeo.paths import GeodesicPath, resample


def make_path(spacetime=True):
    s = np.linspace(0, 1, 11)
    n = 3 if spacetime else 2
    x = np.column_stack([s ** k for k in range(1, n + 1)])
    v = np.gradient(x, s, axis=0)
    return GeodesicPath(s, x, v, "affine", 0.1, spacetime, diagnostics={"C": -s}, meta={"k": 1})


@pytest.mark.parametrize("spacetime", [True, False])
def test_csv_round_trip_is_exact(spacetime):
    p = make_path(spacetime)
    q = GeodesicPath.from_csv(p.to_csv(), "affine", 0.1)
    assert q.spacetime == spacetime
    np.testing.assert_array_equal(q.x, p.x)
    np.testing.assert_array_equal(q.v, p.v)
    np.testing.assert_array_equal(q.diagnostics["C"], p.diagnostics["C"])


def test_json_round_trip(tmp_path):
    p = make_path()
    p.write(tmp_path / "p.json")
    import json
    q = GeodesicPath.from_dict(json.loads((tmp_path / "p.json").read_text()))
    np.testing.assert_array_equal(q.x, p.x)
    assert q.meta == {"k": 1}


def test_validation():
    with pytest.raises(ValueError):
        GeodesicPath([0, 0], [[0], [1]], [[0], [1]])
    with pytest.raises(ValueError):
        GeodesicPath([0, 1], [[0], [1]], [[0], [1]], "bogus")


def test_resample_endpoints():
    p = make_path(False)
    r = resample(p, 5)
    assert r.shape == (5, 2)
    np.testing.assert_allclose(r[0], p.x[0])
    np.testing.assert_allclose(r[-1], p.x[-1])
