"""Integer-frequency coverage scan used as an independent reference for gap finding."""
import numpy as np


def synthetic_bands(rng, n_k=None, n_bands=None, top=3000):
    """Random band structure whose values all sit on half-integers.

    Rows are sorted like eigenvalue lists, and half-integer edges make the
    count of uncovered integers equal to the real-valued gap width.
    """
    n_k = n_k or int(rng.integers(3, 20))
    n_bands = n_bands or int(rng.integers(2, 15))
    while True:
        # clustered values so that both gaps and overlaps are common
        centers = np.sort(rng.uniform(0, top, n_bands))
        spread = rng.uniform(1, 150, n_bands)
        vals = centers + spread * rng.uniform(-1, 1, (n_k, n_bands))
        vals = np.sort(np.floor(np.clip(vals, 0, top)) + 0.5, axis=1)
        # a band must span at least one integer for the integer scan to see it
        if np.all(np.ptp(vals, axis=0) >= 1):
            return vals


def coverage_gaps(freqs, min_width=20.0, freq_range=(0.0, 2000.0)):
    """Gaps from scanning every integer frequency for band coverage."""
    lo_b = freqs.min(axis=0)
    hi_b = freqs.max(axis=0)
    f = np.arange(int(np.floor(lo_b.min())), int(np.ceil(hi_b.max())) + 1)
    covered = np.zeros(len(f), dtype=bool)
    for a, b in zip(lo_b, hi_b):
        covered |= (f >= a) & (f <= b)
    gaps = []
    i = 0
    while i < len(f):
        if covered[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(f) and not covered[j + 1]:
            j += 1
        start, end = f[i] - 0.5, f[j] + 0.5
        if end - start > min_width and end > freq_range[0] and start < freq_range[1]:
            gaps.append((max(start, freq_range[0]), min(end, freq_range[1])))
        i = j + 1
    return gaps
