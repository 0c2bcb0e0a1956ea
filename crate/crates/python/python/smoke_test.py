"""Smoke test for the eot extension module.

Build and install first, e.g. `maturin develop --release` from crates/python.
"""

import math

import eot


def main():
    ext = eot.Extent(math.pi / 4, 4.0, 9.0)
    s = ext.shape_matrix()
    assert abs(s[0][0] - 4.0 * math.cos(math.pi / 4)) < 1e-12
    assert len(ext.vertices((0.0, 0.0))) == 4
    assert eot.gwd((0.0, 0.0), ext, (0.0, 0.0), ext) < 1e-9
    assert eot.ospa((0.0, 0.0), ext, (3.0, 4.0), ext) > 4.9

    net = eot.Network.grid()
    assert len(net) == 20 and len(net.sensors()) == 6
    pi = net.metropolis_weights()
    assert all(abs(sum(row) - 1.0) < 1e-12 for row in pi)

    lo, hi = eot.nees_bounds(4, 50, 0.99)
    assert lo < 4.0 < hi
    assert abs(eot.acee([[0.0, 0.0], [3.0, 4.0]]) - 5.0) < 1e-12

    scen = eot.Scenario.preset("s2").with_overrides(filter="cm", consensus_iterations=2, runs=2, steps=5)
    data = scen.simulate(0)
    assert len(data["measurements"]) == 5

    tracker = eot.Tracker(scen, run=0)
    for batch in data["measurements"]:
        estimates = tracker.step(batch)
    assert len(estimates) == 20
    truth_x, truth_ext = data["truth"][-1]
    err = math.hypot(estimates[0]["x"][0] - truth_x[0], estimates[0]["x"][1] - truth_x[1])
    assert math.isfinite(err)

    rows = scen.run_metrics()
    metrics = {r[3] for r in rows}
    assert {"gwd", "nees_x", "acee_x"} <= metrics

    try:
        scen.with_overrides(rate=3.0, count=4)
    except ValueError:
        pass
    else:
        raise AssertionError("conflicting overrides accepted")
    print(f"ok: {len(rows)} metric rows, final position error {err:.2f} m")


if __name__ == "__main__":
    main()
