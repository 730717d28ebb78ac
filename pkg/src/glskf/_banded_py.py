"""Pure-numpy fallback for the banded mode-product kernel.

Symmetric banded matrices are stored lower-diagonal-major: ``bands[k, j]``
holds entry (j+k, j) for 0 <= k <= bandwidth, rows zero-padded on the right.
The compiled extension implements the same contract; results agree to
rounding (accumulation order differs, so allow a few ulp).
"""

from __future__ import annotations

import numpy as np


def banded_mode_apply(bands: np.ndarray, x3: np.ndarray) -> np.ndarray:
    """Contract a symmetric banded (n, n) matrix against the middle axis.

    bands : (bandwidth+1, n) lower-band storage
    x3 : (right, n, left) C-contiguous block
    """
    bw = bands.shape[0] - 1
    n = bands.shape[1]
    if x3.shape[1] != n:
        raise ValueError(f"band matrix of size {n} against middle axis {x3.shape[1]}")
    out = bands[0][None, :, None] * x3
    for k in range(1, bw + 1):
        if k >= n:
            break
        v = bands[k, : n - k][None, :, None]
        out[:, k:, :] += v * x3[:, :-k, :]
        out[:, :-k, :] += v * x3[:, k:, :]
    return out
