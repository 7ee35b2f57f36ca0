"""Clarke Error Grid zone classification for (reference, prediction) pairs in mg/dL."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZONES = ("A", "B", "C", "D", "E")


@dataclass
class ClarkeSummary:
    A: float
    B: float
    C: float
    D: float
    E: float

    def as_dict(self) -> dict:
        return {z: getattr(self, z) for z in ZONES}


def clarke_zone(ref: float, pred: float) -> str:
    """Zone of one pair; rules are evaluated in the order A, E, C, D, else B."""
    if not (ref > 0 and pred > 0):
        raise ValueError(f"Clarke grid needs positive values, got ref={ref}, pred={pred}")
    if abs(ref - pred) <= 0.2 * ref or (ref < 70 and pred < 70):
        return "A"
    if (ref >= 180 and pred <= 70) or (ref <= 70 and pred >= 180):
        return "E"
    if (70 <= ref <= 290 and pred >= ref + 110) or (130 <= ref <= 180 and pred <= 7 / 5 * ref - 182):
        return "C"
    if ((ref >= 240 and 70 <= pred <= 180) or (ref <= 175 / 3 and 70 <= pred <= 180)
            or (175 / 3 <= ref <= 70 and pred >= 6 / 5 * ref)):
        return "D"
    return "B"


def clarke_zones(ref, pred) -> np.ndarray:
    """Vectorized :func:`clarke_zone`; returns an array of zone letters."""
    ref = np.asarray(ref, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if (ref <= 0).any() or (pred <= 0).any():
        raise ValueError("Clarke grid needs positive values")
    a = (np.abs(ref - pred) <= 0.2 * ref) | ((ref < 70) & (pred < 70))
    e = ((ref >= 180) & (pred <= 70)) | ((ref <= 70) & (pred >= 180))
    c = (((ref >= 70) & (ref <= 290) & (pred >= ref + 110))
         | ((ref >= 130) & (ref <= 180) & (pred <= 7 / 5 * ref - 182)))
    d = (((ref >= 240) & (pred >= 70) & (pred <= 180))
         | ((ref <= 175 / 3) & (pred >= 70) & (pred <= 180))
         | ((ref >= 175 / 3) & (ref <= 70) & (pred >= 6 / 5 * ref)))
    return np.select([a, e, c, d], ["A", "E", "C", "D"], default="B")


def clarke_summary(ref, pred) -> ClarkeSummary:
    zones = clarke_zones(np.ravel(ref), np.ravel(pred))
    n = len(zones)
    if n == 0:
        raise ValueError("no pairs to classify")
    return ClarkeSummary(**{z: float(np.count_nonzero(zones == z)) / n for z in ZONES})
