"""Shared test utilities: finite differences, a brute-force vote oracle, acceptance lines."""
import numpy as np


def numeric_grad(f, x, h=1e-6):
    """Central-difference gradient of scalar f at array x (x is perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


def brute_force_majority(mats, bins):
    """Per-entry vote counting with dicts; ties go to the lower bin."""
    n, m, _ = mats.shape
    out = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            votes = {}
            for t in range(n):
                b = min(int(mats[t, i, j] * bins), bins - 1)
                votes[b] = votes.get(b, 0) + 1
            best = min(votes, key=lambda b: (-votes[b], b))
            out[i, j] = (best + 0.5) / bins
    return out


ACCEPTANCE: list[str] = []


def verdict(n: int, ok: bool, detail: str):
    """Record and print one acceptance line, then fail the test if ``ok`` is false."""
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line
