"""Smoke test for the Python bindings.

Build and install first:  pip install -e crates/py --no-build-isolation
"""

from pathlib import Path

import algebroid_helmholtz_py as ah

FIXTURES = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"
SE2 = [(1, 2, 3, 1.0), (2, 1, 3, -1.0)]


def test_weak_variational_on_se2():
    e = ah.Algebroid.lie_algebra(3, SE2)
    assert (e.m, e.n) == (0, 3)
    sode = ["y2*y3", "-(y1*y3)", "1"]
    ident = ["y1", "y2", "y3"]
    assert ah.theta(e, sode, ident, [0.3, -0.2, 0.5]) == [0.0, 0.0, 1.0]
    report = ah.classify(e, sode, ident, [[0.3, -0.2, 0.5], [1.0, 0.4, -0.7]], 1e-10)
    assert report["classification"] == "weak_variational"


def test_lagrangian_side():
    e = ah.Algebroid.tangent(3)
    lagrangian = "0.5*(y1^2 + y2^2 + y3^2) + x3"
    gamma = ah.derive_sode(e, lagrangian, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    assert max(abs(g - t) for g, t in zip(gamma, [0.0, 0.0, 1.0])) < 1e-12
    assert ah.el_residual(e, lagrangian, ["0", "0", "1"], [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]) == [0.0, 0.0, 0.0]


def test_structure_validation():
    broken = ah.Algebroid.lie_algebra(3, SE2 + [(1, 1, 2, 1.0)])
    assert not broken.validate([[]])["passed"]
    atiyah = ah.Algebroid.atiyah(2, [["x2", "x1^2"]])
    assert atiyah.validate([[0.1, 0.2], [-0.5, 0.3]])["passed"]


def test_models():
    model = ah.Model.load(str(FIXTURES / "se2_tangent_lift.toml"))
    assert model.classify(model.sample(count=8))["classification"] == "variational"
    quotient = ah.Model.load(str(FIXTURES / "morphism_quotient.toml"))
    result = quotient.morphism_check(quotient.sample(count=8))
    assert result["morphism"]["passed"] and result["reduction"]["conclusion_holds"]
    assert ah.run_cli(["validate", str(FIXTURES / "broken_jacobi.toml")]) == 1


def test_errors():
    try:
        ah.Algebroid.lie_algebra(3, [(1, 2, 2, 1.0)])
    except ValueError:
        pass
    else:
        raise AssertionError("repeated lower index accepted")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"{name}: ok")
