"""Finite-basis Wiener-chaos algebra.

Kernels of multiple Wiener integrals are represented as dense symmetric
coefficient tensors over an M-dimensional orthonormal basis, so the
abstract Hilbert-space operations (symmetrization, contractions, the
independence criterion) become plain tensor arithmetic, and sampling a
multiple integral reduces to Hermite polynomials of Gaussian vectors.

Conventions: Hermite polynomials carry the 1/n! normalization
(H_0 = 1, H_1(x) = x, H_2(x) = (x**2 - 1)/2), under which the chaos of
order q is spanned by H_q(W(h)) for unit h and Var I_q(f) = q! * ||f||^2.
The probabilists' (monic) polynomials are used internally for sampling
and never exposed.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .rng import substream

MAX_HERMITE_ORDER = 64
SYMMETRY_RTOL = 1e-12
UZ_DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class ChaosTensor:
    """Coefficient tensor of an order-q kernel on an M-dimensional basis.

    Order 0 (a bare scalar) only ever arises as a full contraction.
    """

    order: int
    basis_dim: int
    coeffs: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        if self.order < 0:
            raise ValueError(f"order must be >= 0, got {self.order}")
        if self.basis_dim < 1:
            raise ValueError(f"basis_dim must be >= 1, got {self.basis_dim}")
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.basis_dim,) * self.order:
            raise ValueError(
                f"coeffs shape {coeffs.shape} does not match "
                f"order={self.order}, basis_dim={self.basis_dim}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coeffs must be finite")
        object.__setattr__(self, "coeffs", coeffs)
        if self.symmetric and not _is_symmetric(coeffs, self.order):
            raise ValueError("tensor flagged symmetric is not permutation invariant")

    @property
    def norm(self) -> float:
        """Hilbert-Schmidt (Frobenius) norm of the coefficient tensor."""
        return float(np.sqrt(np.sum(self.coeffs**2)))


def _is_symmetric(coeffs: np.ndarray, order: int) -> bool:
    if order <= 1:
        return True
    scale = np.max(np.abs(coeffs))
    if scale == 0.0:
        return True
    for perm in itertools.permutations(range(order)):
        if np.max(np.abs(coeffs - coeffs.transpose(perm))) > SYMMETRY_RTOL * scale:
            return False
    return True


def basis_kernel(order: int, basis_dim: int, index: int, scale: float = 1.0) -> ChaosTensor:
    """Rank-one kernel scale * e_index^{tensor order} (symmetric by construction)."""
    if not 0 <= index < basis_dim:
        raise ValueError(f"index {index} out of range for basis_dim {basis_dim}")
    coeffs = np.zeros((basis_dim,) * order)
    coeffs[(index,) * order] = scale
    return ChaosTensor(order, basis_dim, coeffs, symmetric=True)


@dataclass(frozen=True)
class GaussianNoise:
    """One realization of the first-chaos coordinates W(e_1), ..., W(e_M)."""

    dim: int
    values: np.ndarray
    stream_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.dim,):
            raise ValueError(f"values shape {values.shape} != ({self.dim},)")
        object.__setattr__(self, "values", values)


def draw_noise(dim: int, master_seed: int, *tags) -> GaussianNoise:
    """Draw a GaussianNoise from the named substream (master_seed, *tags)."""
    from .rng import stream_id as _sid

    gen = substream(master_seed, *tags)
    return GaussianNoise(dim, gen.standard_normal(dim), _sid(master_seed, *tags))


def hermite_eval(n: int, x):
    """H_n(x) under the 1/n! normalization, by the stable three-term recurrence

        (n+1) H_{n+1}(x) = x H_n(x) - H_{n-1}(x).
    """
    if n < 0 or n > MAX_HERMITE_ORDER:
        raise ValueError(f"hermite order must be in [0, {MAX_HERMITE_ORDER}], got {n}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h_cur = x.copy()
    for k in range(1, n):
        h_prev, h_cur = h_cur, (x * h_cur - h_prev) / (k + 1)
    return h_cur if h_cur.ndim else float(h_cur)


def _monic_hermite(n: int, x):
    """Probabilists' monic Hermite polynomial He_n = n! * H_n (internal)."""
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev
    h_cur = x.copy()
    for k in range(1, n):
        h_prev, h_cur = h_cur, x * h_cur - k * h_prev
    return h_cur


def symmetrize(f: ChaosTensor) -> ChaosTensor:
    """Average of f over all q! index permutations, flagged symmetric."""
    if f.symmetric or f.order == 1:
        return ChaosTensor(f.order, f.basis_dim, f.coeffs, symmetric=True)
    acc = np.zeros_like(f.coeffs)
    perms = list(itertools.permutations(range(f.order)))
    for perm in perms:
        acc += f.coeffs.transpose(perm)
    return ChaosTensor(f.order, f.basis_dim, acc / len(perms), symmetric=True)


def contract(f: ChaosTensor, g: ChaosTensor, r: int) -> ChaosTensor:
    """r-th contraction: sum over r shared basis indices of f and g.

    r = 0 is the plain tensor product; the result has order p + q - 2r.
    """
    if f.basis_dim != g.basis_dim:
        raise ValueError(f"basis_dim mismatch: {f.basis_dim} != {g.basis_dim}")
    if not 0 <= r <= min(f.order, g.order):
        raise ValueError(f"contraction order r={r} not in [0, {min(f.order, g.order)}]")
    out = np.tensordot(f.coeffs, g.coeffs, axes=(tuple(range(r)), tuple(range(r))))
    return ChaosTensor(f.order + g.order - 2 * r, f.basis_dim, np.asarray(out))


def uz_independent(f: ChaosTensor, g: ChaosTensor, tol: float = UZ_DEFAULT_TOL) -> bool:
    """Independence of I_p(f) and I_q(g): true iff the first contraction
    vanishes, ||f (x)_1 g|| <= tol * ||f|| * ||g||."""
    if tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    return contract(f, g, 1).norm <= tol * f.norm * g.norm


def sample_I1(h: ChaosTensor, noise: GaussianNoise) -> float:
    """First-chaos sample W(h) = <h, xi>."""
    if h.order != 1:
        raise ValueError(f"sample_I1 needs an order-1 kernel, got order {h.order}")
    if h.basis_dim != noise.dim:
        raise ValueError(f"dimension mismatch: kernel {h.basis_dim}, noise {noise.dim}")
    return float(h.coeffs @ noise.values)


def sample_I2(a: ChaosTensor, noise: GaussianNoise) -> float:
    """Second-chaos sample of a symmetric kernel: xi^T A xi - trace(A)."""
    if a.order != 2:
        raise ValueError(f"sample_I2 needs an order-2 kernel, got order {a.order}")
    if not a.symmetric:
        raise ValueError("sample_I2 requires a symmetric kernel; symmetrize first")
    if a.basis_dim != noise.dim:
        raise ValueError(f"dimension mismatch: kernel {a.basis_dim}, noise {noise.dim}")
    xi = noise.values
    return float(xi @ a.coeffs @ xi - np.trace(a.coeffs))


def sample_rank_one_chaos(q: int, h: ChaosTensor, noise: GaussianNoise) -> float:
    """Sample of I_q(h^{tensor q}) = q! ||h||^q H_q(W(h)/||h||).

    Variance over replicas is q! * ||h||^(2q).
    """
    if q < 1:
        raise ValueError(f"chaos order must be >= 1, got {q}")
    if h.order != 1:
        raise ValueError(f"rank-one sampling needs an order-1 direction, got {h.order}")
    nrm = h.norm
    if nrm == 0.0:
        raise ValueError("rank-one chaos sampling needs a nonzero direction")
    z = sample_I1(h, noise) / nrm
    # q! H_q = monic Hermite polynomial
    return float(nrm**q * _monic_hermite(q, z))


def m4_of_rank_one_chaos(q: int) -> float:
    """Fourth moment of the unit-variance rank-one chaos of order q.

    Computed by Gauss-Hermite quadrature exact for the degree-4q integrand
    (never Monte Carlo); q = 1 gives 3, q = 2 gives 15, q = 3 gives 93.
    """
    if not 1 <= q <= 12:
        raise ValueError(f"order must be in [1, 12], got {q}")
    nodes, weights = hermegauss(2 * q + 4)
    x = _monic_hermite(q, nodes) / math.sqrt(math.factorial(q))
    return float(np.sum(weights * x**4) / math.sqrt(2.0 * math.pi))
