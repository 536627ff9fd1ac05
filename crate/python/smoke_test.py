"""Smoke test for the `singular_vhc` extension module.

Build and stage the module next to this file, then run it:

    cargo build --release -p singular-vhc-py --features extension-module
    cp target/release/libsingular_vhc_py.so python/singular_vhc.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import singular_vhc as sv  # noqa: E402


def main():
    check = sv.check_tic_toc()
    assert check["passed"]
    assert abs(check["theta_s"]) < 1e-12 and abs(check["v_s"] - 1.0) < 1e-9

    plan = sv.plan_tic_toc(-1.0, 1.0, 500)
    assert abs(plan["period"] - 2 * math.pi) < 1e-6
    assert max(abs(q[0] - math.sin(t)) for t, q in zip(plan["t"], plan["q"])) < 1e-6

    fam = sv.find_family(math.pi / 4)
    assert fam is not None and fam["k1"] > 0 and fam["k3"] < 0
    assert sv.find_family(3.14159) is None

    cert = sv.certify_tic_toc()
    assert cert["positive"] and len(cert["singular_times"]) == 2
    assert abs(cert["accessibility_det"] + 12.0) < 1e-9

    stab = sv.stabilize_tic_toc()
    assert stab["closed_loop_spectral_radius"] < 0.05 < 1.0 < stab["open_loop_spectral_radius"]

    sim = sv.simulate_tic_toc([0.1, -0.5, 0.0], [0.0, 0.0, 0.0])
    assert sim["orbit_error"][0] is None and sim["final_orbit_error"] < 1e-3

    try:
        sv.plan_tic_toc(0.5, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("bad bracket accepted")

    with tempfile.TemporaryDirectory() as out:
        assert sv.run_cli(["plan", "--out", out]) == 0
        assert os.path.isfile(os.path.join(out, "trajectory.csv"))
        assert sv.run_cli(["plan", "--bogus"]) == 64

    print("python smoke test: ok (version %s)" % sv.__version__)


if __name__ == "__main__":
    main()
