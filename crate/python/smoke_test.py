"""Quick check of the Python bindings.

Usage: python python/smoke_test.py [MODELS_DIR]

MODELS_DIR is a pipeline output's models/ directory; the generator checks
are skipped without it.
"""

import math
import sys

import propgen


def main():
    base = propgen.baseline_design()
    assert len(base) == propgen.design_dim() == 162
    assert propgen.is_physical(base)
    print(f"baseline BAR (B=4): {propgen.blade_area_ratio(base, 4):.4f}")

    j, kt, kq, eta, ok = propgen.evaluate_point(base, 2.0, 4, 0.6)
    assert ok and 0.0 < eta < 1.0
    assert math.isclose(eta, j * kt / (2 * math.pi * kq), rel_tol=1e-12)
    print(f"J=0.6: K_T={kt:.4f} K_Q={kq:.5f} eta={eta:.4f}")

    curve = propgen.evaluate_curve(base, 2.0, 4)
    print(f"curve: {len(curve)} points, last J={curve[-1][0]:.2f}")

    t = propgen.target_condition(v_a=5.0, t_req=10250.0, n=10.0, p_avail=128805.3, diameter=1.0, blades=4)
    print("target (J*, K_T*, K_Q*, eta*):", tuple(round(v, 4) for v in t))

    t25, t60 = propgen.min_thickness(500.0, 600.0, 2.0, 1.8, 2.0, 0.55, 300.0, 0.0, 31.8333, 4, "manganese_bronze")
    print(f"min thickness: {t25:.2f} mm at 0.25R, {t60:.2f} mm at 0.6R")

    try:
        propgen.evaluate_point(base[:10], 2.0, 4, 0.6)
    except ValueError as e:
        print("short design rejected:", e)
    else:
        raise AssertionError("short design accepted")

    if len(sys.argv) > 1:
        models = sys.argv[1]
        cond = [0.6, 0.2, 0.6, 2.0, 4.0]
        sur = propgen.Surrogate.load(f"{models}/surrogate.bin")
        for name, gen in [("cvae", propgen.Cvae.load(f"{models}/cvae.bin")),
                          ("ldm", propgen.Ldm.load(f"{models}/ldm_velocity.bin"))]:
            out = gen.generate(cond, 8, 1)
            designs = [d for d, physical in out if physical]
            preds = [sur.predict(d, 2.0, 4, 0.6) for d in designs]
            mean_kt = sum(p[0] for p in preds) / max(len(preds), 1)
            print(f"{name}: {len(designs)}/8 physical, mean surrogate K_T {mean_kt:.3f}")
            assert out == gen.generate(cond, 8, 1)

    print("smoke test ok")


if __name__ == "__main__":
    main()
