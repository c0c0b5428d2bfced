"""Wave-kernel-signature descriptor fields.

Each energy column is a convex combination of squared eigenfunctions, so
its mass-weighted surface integral is exactly one; that normalization
is the main invariant downstream optimization relies on.
"""

import csv
from dataclasses import dataclass

import numpy as np

from ._util import atomic_write
from .errors import NumericalError

DEFAULT_SIGMA_FACTOR = 7.0  # sigma = factor * (log-energy span) / d


@dataclass
class DescriptorField:
    """Per-vertex descriptor matrix: rows are vertices, columns energies."""

    values: np.ndarray
    energies: np.ndarray
    sigma: float

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def to_csv(self, path):
        with atomic_write(path, "w") as out:
            writer = csv.writer(out)
            writer.writerow(["vertex"] + [f"e{j}" for j in range(self.d)])
            for i in range(self.n):
                writer.writerow([i] + [repr(x) for x in self.values[i]])


def wks(basis, d=50, sigma_factor=DEFAULT_SIGMA_FACTOR):
    """Wave kernel signature over ``d`` log-energy samples.

    WKS(v, e) = sum_i phi_i(v)^2 w_i(e) / sum_i w_i(e) with Gaussian
    weights w_i(e) = exp(-(e - log lambda_i)^2 / (2 sigma^2)). Energies
    are uniform in [log lambda_2 + 2 sigma, log lambda_k - 2 sigma]; the
    near-zero kernel eigenvalue is excluded.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    mask = basis.nonzero_mask()
    if mask.sum() < 2:
        raise NumericalError("basis too small: need at least 2 nonzero eigenvalues")
    lam = basis.eigenvalues[mask]
    phi_sq = basis.eigenfunctions[:, mask] ** 2
    log_lam = np.log(lam)
    span = log_lam[-1] - log_lam[0]
    if span <= 0:
        raise NumericalError("degenerate spectrum: no energy span")
    sigma = sigma_factor * span / d
    energies = np.linspace(log_lam[0] + 2.0 * sigma, log_lam[-1] - 2.0 * sigma, d)

    weights = np.exp(-((energies[:, None] - log_lam[None, :]) ** 2) / (2.0 * sigma**2))
    weights /= weights.sum(axis=1)[:, None]
    values = phi_sq @ weights.T
    return DescriptorField(values=values, energies=energies, sigma=float(sigma))


def subsample_descriptors(field, step):
    """Keep every ``step``-th energy column (step=1 is the identity)."""
    if step < 1:
        raise ValueError("step must be >= 1")
    if step == 1:
        return field
    return DescriptorField(
        values=field.values[:, ::step].copy(),
        energies=field.energies[::step].copy(),
        sigma=field.sigma,
    )
