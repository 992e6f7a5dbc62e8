# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled edit-distance kernel over token id arrays (two-row DP)."""

from libc.stdlib cimport free, malloc


def levenshtein_u32(const unsigned int[::1] a, const unsigned int[::1] b):
    """Unit-cost insert/delete/substitute distance between two id arrays."""
    cdef Py_ssize_t la = a.shape[0]
    cdef Py_ssize_t lb = b.shape[0]
    if la == 0:
        return lb
    if lb == 0:
        return la
    # Keep the DP row on the shorter side: O(min(la, lb)) memory.
    cdef const unsigned int[::1] s = a
    cdef const unsigned int[::1] t = b
    cdef Py_ssize_t tmp
    if lb > la:
        s = b
        t = a
        tmp = la
        la = lb
        lb = tmp

    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((lb + 1) * sizeof(Py_ssize_t))
    if row == NULL:
        raise MemoryError()

    cdef Py_ssize_t i, j, prev_diag, cur, best
    cdef unsigned int si
    try:
        for j in range(lb + 1):
            row[j] = j
        for i in range(1, la + 1):
            si = s[i - 1]
            prev_diag = row[0]
            row[0] = i
            for j in range(1, lb + 1):
                cur = prev_diag
                if si != t[j - 1]:
                    cur += 1
                best = row[j] + 1        # deletion from s
                if row[j - 1] + 1 < best:
                    best = row[j - 1] + 1  # insertion into s
                if cur < best:
                    best = cur
                prev_diag = row[j]
                row[j] = best
        return row[lb]
    finally:
        free(row)
