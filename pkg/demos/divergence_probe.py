"""How the improper-integral probe decides divergence.

Partial integrals are taken up to geometric horizons and their growth is
classified.  The calibration catalog mixes slowly diverging and quickly
converging integrands; the logarithmic one, 1/(s ln s), is the hard case.
"""

from fracdde.quad import calibrate, probe_improper

for text, expected, v in calibrate():
    mark = "ok" if v.classification is expected else "WRONG"
    last = v.partials[-1][1] if v.partials else float("nan")
    print(f"{text:<36} {v.classification.value:<12} partial at last horizon {last:<12.6g} {mark}")

v = probe_improper("1/(s*ln(s))", 2.0, [2.0 * 10**k for k in range(1, 7)])
print("\n1/(s ln s) partial integrals:")
for h, val in v.partials:
    print(f"  up to {h:<10g} {val:.6f}")
print(f"classified as {v.classification.value} ({v.note})")
