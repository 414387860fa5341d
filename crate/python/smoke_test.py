"""Smoke test for the greenlearn Python module.

Build and install first:  pip install --no-build-isolation crates/python
"""

import json
import math

import greenlearn as gl


def main():
    grid = gl.Grid(1, 66)
    assert len(grid) == 66 and grid.dim == 1

    basis = gl.MercerBasis(grid, "se:0.2")
    lam = basis.eigenvalues()
    assert lam == sorted(lam, reverse=True)
    assert abs(sum(lam) - basis.trace) <= 1e-10 * basis.trace
    a = basis.sample(3, seed=7)
    assert a == basis.sample(3, seed=7) and len(a) == 3

    part = gl.partition(3, 2)
    assert part["counts"]["non_admissible"] == 1000
    assert part["counts"]["admissible"] == 3096
    levels, eff, rank = gl.schedule(0.5)
    assert levels == 15 and rank == 2

    oracle = gl.EllipticOracle(grid)
    f = [math.sin(math.pi * x[0]) for x in grid.nodes()]
    u = oracle.apply(f)
    assert oracle.query_count == 1
    oracle.reset_query_count()

    g = gl.learn(oracle, k=4, p=4, levels=3, seed=1)
    assert g.total_queries == 2 * 8 * g.learned_pairs == oracle.query_count
    assert g.evaluate(0, 65) == 0.0
    report = g.error_report(oracle)
    assert abs(report["relative_l2_error"] - report["direct_relative_error"]) <= 1e-10
    assert 0.0 < report["gamma_eps"] <= 1.0

    h = gl.HierGreen.from_json(g.to_json())
    assert h.apply(f) == g.apply(f)
    approx = g.apply(f)
    err = math.sqrt(sum((x - y) ** 2 for x, y in zip(approx, u)) / sum(y * y for y in u))
    assert err <= 2.0 * report["relative_l2_error"]

    rows = gl.verify_bounds("deterministic", trials=200, seed=3)
    assert rows and all(r["pass"] for r in rows)

    try:
        gl.learn(oracle, epsilon=2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("epsilon outside (0, 1) must raise")

    print(json.dumps({
        "version": gl.__version__,
        "relative_l2_error": report["relative_l2_error"],
        "gamma_eps": report["gamma_eps"],
        "queries": g.total_queries,
        "apply_error": err,
    }))
    print("smoke test passed")


if __name__ == "__main__":
    main()
