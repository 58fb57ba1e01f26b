"""Pure-python fallback for the upper-hull kernel.

Same algorithm as the compiled extension (_hullcore): Andrew's monotone
chain specialized to points with strictly increasing, uniformly spaced
abscissae.  Kept in lockstep with the .pyx source; the test suite runs
both against each other.
"""

import numpy as np

KERNEL = "python"


def upper_hull_indices(y):
    """Indices of the vertices of the upper concave hull of (j, y[j]).

    The abscissae are the sample indices 0..m-1 (uniform spacing drops
    out of the orientation test).  Vertices come back sorted ascending
    and always include 0 and m-1.  Collinear interior points are popped,
    so the vertex list is minimal.
    """
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    if m < 2:
        raise ValueError("need at least two samples")
    stack = [0]
    for j in range(1, m):
        while len(stack) >= 2:
            a = stack[-2]
            b = stack[-1]
            # pop b if it lies on or below the chord a--j
            if (b - a) * (y[j] - y[a]) - (y[b] - y[a]) * (j - a) >= 0.0:
                stack.pop()
            else:
                break
        stack.append(j)
    return np.asarray(stack, dtype=np.int64)
