"""Regenerate tests/data/clarke_golden.csv.

Zones come from a line-by-line transcription of the widely used open-source
Clarke grid routine (a Python port of the original MATLAB code), not from
forge itself. Points are drawn until every zone has ten, and are kept away
from the 70 mg/dL lines, where the transcription uses <= and forge uses <.
"""
import csv
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "clarke_golden.csv"


def reference_zone(ref, pred):
    if (ref <= 70 and pred <= 70) or (pred <= 1.2 * ref and pred >= 0.8 * ref):
        return "A"
    elif (ref >= 180 and pred <= 70) or (ref <= 70 and pred >= 180):
        return "E"
    elif ((ref >= 70 and ref <= 290) and pred >= ref + 110) or \
            ((ref >= 130 and ref <= 180) and (pred <= (7 / 5) * ref - 182)):
        return "C"
    elif (ref >= 240 and (pred >= 70 and pred <= 180)) or \
            (ref <= 175 / 3 and pred <= 180 and pred >= 70) or \
            ((ref >= 175 / 3 and ref <= 70) and pred >= (6 / 5) * ref):
        return "D"
    else:
        return "B"


def main():
    rng = np.random.default_rng(20240501)
    want = dict.fromkeys("ABCDE", 10)
    rows = []
    while any(want.values()):
        ref, pred = np.round(rng.uniform(20, 400, 2), 2)
        if abs(ref - 70) < 0.5 or abs(pred - 70) < 0.5:
            continue
        z = reference_zone(ref, pred)
        if want[z]:
            want[z] -= 1
            rows.append((ref, pred, z))
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ref", "pred", "zone"])
        w.writerows(rows)
    print(f"wrote {len(rows)} points to {OUT}")


if __name__ == "__main__":
    main()
