"""Smoke test for the chemons Python bindings.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import math

import chemons_py as cp


def main():
    g = cp.Grid([16, 16])
    assert g.cells == [16, 16]
    assert math.isclose(g.spacing(0), 1 / 16)

    s = cp.Scenario()
    s.grid = g
    s.t_final = 0.1
    s.sample_dt = 0.05
    s.validate()
    out = s.run()
    h = out.history()
    assert set(cp.CSV_COLUMNS) == set(h)
    assert h["t"][0] == 0.0 and math.isclose(h["t"][-1], 0.1)
    assert len(out.final_n) == 256
    assert out.passed(), out.monitors
    print(f"run: {out.steps} steps, final mass {h['mass'][-1]:.6f}")

    t = cp.Scenario.from_toml("[grid]\ncells = [8, 8]\n", ["--model.m=2"])
    assert t.m == 2.0 and t.grid.cells == [8, 8]
    try:
        cp.Scenario.from_toml("[model]\nviscocity = 1\n")
    except ValueError as e:
        assert "viscosity" in str(e)
    else:
        raise AssertionError("typo accepted")

    assert cp.consumption_f(2.0, 0.1) <= 2.0
    assert cp.sensitivity(5.0, 0.5) <= 2.0

    err, dt, steps = cp.heat_mode_test(cells=32, t1=0.05)
    assert err < 1e-3, err
    print(f"heat mode: error {err:.3e} over {steps} steps")

    l1, mass, rel, steps = cp.barenblatt_test(cells=64)
    assert rel < 0.03, rel
    print(f"barenblatt: relative L1 error {rel:.3%}")
    print("ok")


if __name__ == "__main__":
    main()
