"""Smoke test for the drude_te extension module.

Build and run:
    cargo build --release -p drude-te-python
    cp target/release/libdrude_te_py.so python/drude_te.so
    python3 python/smoke_test.py

or `maturin develop -m crates/python/Cargo.toml` and run the script directly.
"""

import cmath
import math

import drude_te


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    m = drude_te.DrudeMedium(omega_e=1.0, omega_m=1.0)
    assert m.is_critical
    close(m.omega_p, 1 / math.sqrt(2), 1e-15)
    close(m.kappa_c, 1 / math.sqrt(2), 1e-15)
    close(m.threshold_kappa(0), m.kappa_c, 1e-15)
    close(m.permittivity(2.0), 0.75, 1e-15)

    k, w = 2.0, 0.5
    xm, xp = m.transverse_roots(k, w)
    close(xm * xm, k * k - w * w, 1e-12)
    close(xp * xp, k * k - m.permittivity(w) * m.permeability(w) * w * w, 1e-12)
    print("zone at (2, 0.5):", m.zone(k, w))

    w1 = m.branch_solve(3.0, 1)
    b = m.trace_branch(1, 20.0)
    close(b.omega_at(3.0), w1, 1e-6)
    assert [c["kind"] for c in b.critical_points] == ["max"]

    c = m.classify_omega0()
    assert c["scenario"] == "rho_ge_1_max"

    ev = m.spectrum(3.0, 12.0, 480, window=(0.05, 0.95))
    assert any(abs(e - w1) < 1e-2 for e in ev), ev

    w, fields = m.slab_mode(3.0, 1, [0.0, 0.5, 2.0])
    assert len(fields) == 3 and len(fields[0]) == 6
    assert all(cmath.isfinite(z) for f in fields for z in f)

    d = drude_te.DielectricSlab(eps1=4.0, mu1=1.0)
    close(d.kappa(1), 1.81380, 1e-5)

    try:
        drude_te.DrudeMedium(omega_e=-1.0, omega_m=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative omega_e accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
