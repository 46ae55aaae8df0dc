"""Smoke test for the pygermgrain extension.

Build and install first:  pip install -e crates/py --no-build-isolation
"""

import json
import math

import pygermgrain as gg

SEGMENT_BOOLEAN = {
    "germs": {"law": "poisson", "intensity": {"kind": "constant", "value": 0.1}},
    "window": {"lo": [0.0, 0.0], "hi": [10.0, 10.0]},
    "marks": {"kind": "dirac", "shape": {"type": "segment", "length": 2.0, "angle": 0.5}},
    "envelope": "extend_segments",
}


def check(label, ok, detail):
    print(f"{'ok  ' if ok else 'FAIL'} {label}: {detail}")
    return ok


def main():
    results = []
    model = gg.Model(json.dumps(SEGMENT_BOOLEAN))
    results.append(check("fingerprint", len(model.fingerprint) == 16, model.fingerprint))
    results.append(check("round trip", gg.Model(model.to_json()).fingerprint == model.fingerprint, "same model"))

    theory = model.theoretical_density([5.0, 5.0])
    results.append(check("quadrature density", abs(theory - 0.2) < 1e-9, f"{theory:.6f}"))

    rows, (value, stderr) = model.convergence_study([5.0, 5.0], [0.08, 0.04, 0.02, 0.01], 200_000, 1)
    results.append(check("density ratio", abs(value - 0.2) < max(4 * stderr, 0.02), f"{value:.4f} +- {stderr:.4f}"))

    real = model.realize(7)
    again = model.realize(7)
    results.append(check("realize is seeded", real.to_json_lines() == again.to_json_lines(), f"{len(real)} grains"))
    measure = real.measure_in_region([3.0, 3.0], [7.0, 7.0])
    results.append(check("measure in region", measure >= 0.0, f"{measure:.4f}"))

    ratio = gg.minkowski_ratio(json.dumps({"type": "segment", "length": 1.0, "angle": 0.0}), 0.001)
    results.append(check("minkowski ratio", abs(ratio - (1 + math.pi * 0.001 / 2)) < 1e-12, f"{ratio:.12f}"))

    config = json.loads(gg.reference_config("disc_whisker"))
    results.append(check("validate", gg.validate(json.dumps(config)) == [], "reference config is valid"))
    csv, assertions = gg.run_study(json.dumps(config))
    passed = all(a["pass"] for a in json.loads(assertions))
    results.append(check("run_study", passed and csv.startswith("shape,"), f"{len(csv.splitlines()) - 1} rows"))

    try:
        model.specific_area([5.0, 5.0], [0.0], 10, 1)
        results.append(check("bad radii rejected", False, "no error"))
    except ValueError as e:
        results.append(check("bad radii rejected", True, str(e)))

    print(f"{sum(results)} of {len(results)} checks passed")
    raise SystemExit(0 if all(results) else 1)


if __name__ == "__main__":
    main()
