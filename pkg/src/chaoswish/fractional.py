"""Fractional Gaussian machinery shared by both entry regimes.

The lag-correlation function rho_H and the fBm covariance are the target
second-order structure for both fractional Gaussian noise and Rosenblatt
increments (the two processes share covariances).  simulate_fgn is an
exact stationary sampler used as an oracle and comparison baseline.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HurstParam:
    """Self-similarity index H in (0,1); the Rosenblatt regime needs H > 1/2."""

    h: float

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise ValueError(f"Hurst parameter must lie in (0,1), got {self.h}")

    @property
    def rosenblatt_valid(self) -> bool:
        return self.h > 0.5

    def require_rosenblatt(self):
        if not self.rosenblatt_valid:
            raise ValueError(
                f"H={self.h} not in (1/2, 1); the second-chaos construction degenerates"
            )


def rho(h: HurstParam, k) -> float:
    """Lag-k correlation of unit-time increments,
    (|k+1|^{2H} + |k-1|^{2H} - 2|k|^{2H}) / 2.  Even in k; rho(0) = 1."""
    k = np.abs(np.asarray(k, dtype=float))
    two_h = 2.0 * h.h
    out = 0.5 * (np.abs(k + 1) ** two_h + np.abs(k - 1) ** two_h - 2.0 * k**two_h)
    return out if out.ndim else float(out)


def fbm_cov(h: HurstParam, s: float, t: float):
    """Covariance (t^{2H} + s^{2H} - |t-s|^{2H}) / 2 of an H-self-similar
    process with stationary increments started at 0."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("fbm_cov needs nonnegative time arguments")
    two_h = 2.0 * h.h
    out = 0.5 * (t**two_h + s**two_h - np.abs(t - s) ** two_h)
    return out if out.ndim else float(out)


# Most negative circulant eigenvalue tolerated before falling back to
# Cholesky; for fGn autocovariances the embedding is nonnegative definite,
# so the fallback is a guard only.
_EMBEDDING_EIG_FLOOR = -1e-9


def simulate_fgn(h: HurstParam, d: int, gen: np.random.Generator) -> np.ndarray:
    """Exact-covariance stationary Gaussian sequence with autocovariance rho_H.

    Uses circulant embedding of the size-2d autocovariance circulant
    (O(d log d)); spends exactly 2d standard normal draws per call.
    """
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    if d == 1:
        return gen.standard_normal(1)
    lags = np.arange(d + 1)
    acov = rho(h, lags)
    circ = np.concatenate([acov, acov[-2:0:-1]])  # length 2d, symmetric
    lam = np.fft.fft(circ).real
    if lam.min() < _EMBEDDING_EIG_FLOOR:
        return _fgn_cholesky(h, d, gen)
    lam = np.clip(lam, 0.0, None)
    # Hermitian-symmetric complex normals: real at frequencies 0 and d.
    z = np.empty(2 * d, dtype=complex)
    z[0] = gen.standard_normal()
    z[d] = gen.standard_normal()
    v = gen.standard_normal((d - 1, 2))
    z[1:d] = (v[:, 0] + 1j * v[:, 1]) / np.sqrt(2.0)
    z[d + 1 :] = np.conj(z[d - 1 : 0 : -1])
    path = np.fft.ifft(np.sqrt(lam) * z) * np.sqrt(2 * d)
    return path.real[:d]


def _fgn_cholesky(h: HurstParam, d: int, gen: np.random.Generator) -> np.ndarray:
    cov = rho(h, np.subtract.outer(np.arange(d), np.arange(d)))
    chol = np.linalg.cholesky(cov)
    return chol @ gen.standard_normal(d)
