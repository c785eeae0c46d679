"""Log-barrier contact potential with compact support.

    b(d) = -kappa * (d - d_hat)^2 * ln(d / d_hat)   for 0 < d < d_hat
    b(d) = 0                                        for d >= d_hat

The potential vanishes with two continuous derivatives at d = d_hat and
diverges as d -> 0, so any finite-energy state is separation-positive.
"""

from __future__ import annotations

import numpy as np


def barrier_value(d, d_hat, kappa):
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    m = (d > 0) & (d < d_hat)
    dm = d[m]
    out[m] = -kappa * (dm - d_hat) ** 2 * np.log(dm / d_hat)
    return out


def barrier_grad(d, d_hat, kappa):
    """db/dd, zero outside the support."""
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    m = (d > 0) & (d < d_hat)
    dm = d[m]
    out[m] = -kappa * (2.0 * (dm - d_hat) * np.log(dm / d_hat) + (dm - d_hat) ** 2 / dm)
    return out


def barrier_hess(d, d_hat, kappa):
    """d2b/dd2, zero outside the support."""
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    m = (d > 0) & (d < d_hat)
    dm = d[m]
    out[m] = -kappa * (
        2.0 * np.log(dm / d_hat) + 4.0 * (dm - d_hat) / dm - (dm - d_hat) ** 2 / dm**2
    )
    return out
