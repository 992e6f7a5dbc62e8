"""Pure-Python (numpy) edit-distance fallback, API-compatible with the
compiled kernel in ``_levenshtein.pyx``.

Row recurrence is vectorized; the in-row deletion carry is resolved with a
min-plus prefix scan: cur[j] = min_{k<=j} (cand[k] + (j - k)).
"""

import numpy as np


def levenshtein_u32(a, b):
    a = np.asarray(a, dtype=np.uint32)
    b = np.asarray(b, dtype=np.uint32)
    if a.size == 0:
        return int(b.size)
    if b.size == 0:
        return int(a.size)
    if b.size > a.size:
        a, b = b, a

    n = b.size
    offs = np.arange(n + 1, dtype=np.int64)
    row = offs.copy()
    new = np.empty(n + 1, dtype=np.int64)
    for i in range(1, a.size + 1):
        new[0] = i
        np.minimum(row[:-1] + (b != a[i - 1]), row[1:] + 1, out=new[1:])
        np.minimum.accumulate(new - offs, out=new)
        new += offs
        row, new = new, row
    return int(row[n])
