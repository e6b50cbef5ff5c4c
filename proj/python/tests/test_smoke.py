import json
import math

import branchlim
import pytest


BINARY = [0.5, 0.0, 0.5]


def test_offspring_basics():
    p = branchlim.OffspringDist.explicit(BINARY)
    assert p.pgf(0.5) == pytest.approx(5 / 8)
    assert p.classify() == branchlim.OffspringDist.explicit([0.5, 0.0, 0.5]).classify()
    assert p.size_biased().pmf[2] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        branchlim.OffspringDist.explicit([0.0, 1.0])


def test_tree_functionals():
    t0 = "2 0 1 0"
    assert branchlim.functional(t0, "height") == 2
    assert branchlim.functional(t0, "width") == 2
    assert branchlim.restrict(t0, 1) == "2 0 0"
    assert branchlim.subtrees_above(t0, 1) == ["0", "1 0"]
    assert branchlim.ultrametric_distance(t0, "2 0 0") == 0.5


def test_exact_laws():
    geo = branchlim.OffspringDist.geometric(0.5, 60)
    table = branchlim.tail_table(geo, "height", 5)
    assert table["tail"][3] == pytest.approx(1 / 5, abs=1e-14)
    law = branchlim.immortal_prefix_law(branchlim.OffspringDist.explicit(BINARY), 1)
    assert law == {"2 0 0": pytest.approx(1.0)}
    cond = branchlim.conditioned_prefix_law(geo, "height", "tail:1", 1)
    assert cond["1 0"] == pytest.approx(3 / 8, abs=1e-13)
    tv = branchlim.tail_convergence(branchlim.OffspringDist.explicit(BINARY), "height", 2, [16, 256])
    assert tv[1][1] < tv[0][1] and tv[1][1] < 0.02


def test_samplers_are_deterministic():
    geo = branchlim.OffspringDist.geometric(0.5)
    assert branchlim.sample_gw(geo, 11) == branchlim.sample_gw(geo, 11)
    assert branchlim.sample_immortal_prefix(branchlim.OffspringDist.explicit(BINARY), 3, 1) == "2 0 0"


def test_closed_forms():
    assert branchlim.cb_v(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.5)
    assert branchlim.cb_v(1.0, 1.0, 1.0, math.log(2)) == pytest.approx(1 / 3)
    assert branchlim.scale_function(0.0, 2.0, 4.0) == pytest.approx(2.0)
    assert branchlim.excursion_sup_measure(0.0, 1.0, 2.0) == pytest.approx(0.5)


def test_runner_round_trip(tmp_path):
    cfg = {"offspring": {"family": "explicit", "pmf": BINARY}, "functional": "height", "N": 5, "seed": 1}
    rc, log = branchlim.run("exact", cfg, out=str(tmp_path / "ok"), workers=1)
    assert rc == 0, log
    manifest = json.loads((tmp_path / "ok" / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert (tmp_path / "ok" / "tail_table.csv").exists()

    bad = dict(cfg, unknown=True)
    rc, _ = branchlim.run("exact", bad, out=str(tmp_path / "bad"))
    assert rc == 2
    assert not (tmp_path / "bad").exists()
