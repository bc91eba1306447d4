"""Smoke test for the pynetfreedom extension module."""

import math
import random

import pynetfreedom as nf

RELS = """\
# provider|customer|-1, peer|peer|0
1|2|-1
1|3|-1
2|4|-1
3|5|-1
2|3|0
"""
DELEG = """\
2|test|20240101|0|19700101|20240101|+0000
test|AA|asn|1|3|20240101|allocated
test|BB|asn|4|2|20240101|allocated
"""


def main():
    g = nf.AsGraph(RELS, DELEG)
    assert (g.num_nodes, g.num_edges) == (5, 5), g
    assert g.country_of(4) == "BB"
    assert g.domestic_nodes("AA") == [1, 2, 3]
    assert g.customer_cones()[1] == [1, 2, 3, 4, 5]
    assert g.as_rank()[0] == 1
    # 4 climbs to 2, crosses the 2-3 peering, descends to 5
    assert g.valley_free_distances([4]) == {1: 2, 2: 1, 3: 2, 4: 0, 5: 3}

    tri = nf.structural_features([1, 2, 3], [(1, 2), (2, 3), (1, 3)])
    assert tri["transitivity"] == 1.0 and tri["clique_number"] == 3.0
    assert math.isclose(nf.algebraic_connectivity([1, 2, 3, 4], [(1, 2), (2, 3), (3, 4)]), 2 - math.sqrt(2))
    assert [nf.categorize(v) for v in (30, 31, 61)] == ["NotFree", "PartlyFree", "Free"]

    names = nf.feature_names()
    rows = [[float(i + j) for j in range(len(names))] for i in (2, 4, 6)]
    rows[2][0] = 6.0
    countries, columns, scaled = nf.scale_features(["CC", "AA", "BB"], rows)
    assert countries == ["AA", "BB", "CC"] and columns[0] == names[0]
    assert [r[0] for r in scaled] == [0.5, 1.0, 0.0]

    rng = random.Random(7)
    x = [[rng.random(), rng.random()] for _ in range(40)]
    y = [10 + 60 * a + 20 * b for a, b in x]
    for model in ("lr", "lasso", "dtla", "dtlr"):
        r = nf.loocv(model, x, y)
        assert r["models_trained"] == 40 and r["fold_failures"] == 0, r
    assert nf.loocv("lr", x, y)["mean_abs_error"] < 1e-9

    try:
        nf.categorize(101)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range score accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
