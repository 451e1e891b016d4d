"""Second-chaos self-similar process: constants, kernels, grid simulator,
quadratic-variation statistic and its chaos decomposition.

The process is realized as a centered Gaussian quadratic form.  The
time-t kernel is a superposition of rank-one terms over an inner time
variable u,

    A_t = d(H) * sum_{u <= t} w_u * g_u g_u^T,

where g_u collects cell averages of the first-argument derivative of the
fBm Volterra kernel at order (H+1)/2, scaled by sqrt(cell width).  Cell
averages have a closed form through the regularized incomplete beta
function, which is what makes the near-singular region (u close to y)
exactly integrable in y.

The kernel has an |y1-y2|^{H-1} singularity on the diagonal, so a fixed
m-cell grid cannot carry all of the process variance: the sub-cell part
decays only like m^{1-2H}.  The grid therefore carries a variance
completion: one auxiliary chi-square coordinate per grid cell and one
per requested time interval, sized so that every increment of the
simulated process has exactly the variance (dt)^{2H} demanded by
self-similarity.  The completion keeps the process in the second chaos
and keeps the quadratic-variation decomposition exact; without it, the
statistic acquires a deterministic drift of order d^{1-H} * (sub-cell
variance share) that destroys the convergence rates.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import betainc, betaln, gammaln

from .fractional import HurstParam


class MemoryBudgetError(RuntimeError):
    """A requested dense kernel matrix would exceed the configured budget."""


@dataclass(frozen=True)
class RosenblattConstants:
    """Constant bundle for one Hurst parameter.

    c1_h = 4 * d_h normalizes the quadratic variation; e_h and f_h are the
    auxiliary constants of the second-moment expansions; c_h is the
    Volterra kernel constant at order h itself.
    """

    h: HurstParam
    d_h: float
    c_h: float
    c1_h: float
    e_h: float
    f_h: float


def _beta_fn(a: float, b: float) -> float:
    return math.exp(gammaln(a) + gammaln(b) - gammaln(a + b))


def _volterra_const(h: float) -> float:
    """c(H) = sqrt(H(2H-1) / Beta(2-2H, H-1/2)), defined for H > 1/2."""
    return math.sqrt(h * (2.0 * h - 1.0) / _beta_fn(2.0 - 2.0 * h, h - 0.5))


def make_constants(h: HurstParam) -> RosenblattConstants:
    """All derived constants for Hurst parameter h; requires h > 1/2."""
    h.require_rosenblatt()
    hh = h.h
    d_h = (1.0 / (hh + 1.0)) * math.sqrt(2.0 * (2.0 * hh - 1.0) / hh)
    return RosenblattConstants(
        h=h,
        d_h=d_h,
        c_h=_volterra_const(hh),
        c1_h=4.0 * d_h,
        e_h=hh**2 * (hh + 1.0) ** 2 / 4.0,
        f_h=(hh + 1.0) / (2.0 * (2.0 * hh - 1.0)),
    )


def volterra_kernel(h: HurstParam, t: float, s: float, n_nodes: int = 128) -> float:
    """fBm Volterra kernel c(H) s^{1/2-H} int_s^t (u-s)^{H-3/2} u^{H-1/2} du.

    The endpoint singularity at u = s is removed exactly by the power
    substitution u = s + v^p with p = 2/(2H-1), after which fixed
    Gauss-Legendre quadrature converges rapidly.
    """
    h.require_rosenblatt()
    if s <= 0 or t <= s:
        raise ValueError(f"volterra_kernel needs t > s > 0, got t={t}, s={s}")
    hh = h.h
    p = 2.0 / (2.0 * hh - 1.0)
    v_max = (t - s) ** (1.0 / p)
    nodes, weights = leggauss(n_nodes)
    v = 0.5 * v_max * (nodes + 1.0)
    integral = 0.5 * v_max * p * np.sum(weights * (s + v**p) ** (hh - 0.5))
    return float(_volterra_const(hh) * s ** (0.5 - hh) * integral)


def volterra_kernel_dt(h: HurstParam, u, s):
    """First-argument derivative c(H) (u/s)^{H-1/2} (u-s)^{H-3/2}, u > s > 0."""
    h.require_rosenblatt()
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(u <= s):
        raise ValueError("volterra_kernel_dt needs u > s > 0")
    hh = h.h
    out = _volterra_const(hh) * (u / s) ** (hh - 0.5) * (u - s) ** (hh - 1.5)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class RosenblattPath:
    """One realization on the requested time points (times[0] = 0).

    The noise blocks are retained so that statistics of the same
    realization (quadratic variation, its chaos components, the coupled
    end value) can be evaluated pathwise.
    """

    h: HurstParam
    times: np.ndarray
    values: np.ndarray
    xi: np.ndarray
    zeta_cell: np.ndarray
    zeta_interval: np.ndarray


class RosenblattKernelGrid:
    """Discretized time-t kernels on m cells of [0,1] plus variance completion.

    Built by :func:`build_kernel_grid`; immutable afterwards and safe to
    share across threads.  Heavy payload is the factor-row matrix
    ``rows`` of shape (n_unodes, m): row j is the cell-averaged kernel
    slice at inner node u_j times sqrt(delta).
    """

    def __init__(self, h, m, t_points, u_nodes, u_weights, rows, interval_starts,
                 beta_cell_sq, beta_interval_sq, resolved_incr_sq, constants,
                 matrix_budget_bytes):
        self.h = h
        self.m = m
        self.delta = 1.0 / m
        self.t_points = t_points                  # (P,) sorted, cell-aligned, in (0,1]
        self.u_nodes = u_nodes                    # (N,) ascending
        self.u_weights = u_weights                # (N,)
        self.rows = rows                          # (N, m)
        self.row_sqnorms = np.einsum("um,um->u", rows, rows)
        self.interval_starts = interval_starts    # (P+1,) slice bounds into u arrays
        self.beta_cell_sq = beta_cell_sq          # (m,)  per-cell completion variance/2
        self.beta_interval_sq = beta_interval_sq  # (P,)  per-interval top-up
        self.resolved_incr_sq = resolved_incr_sq  # (P,)  ||resolved increment||_F^2
        self.constants = constants
        self.matrix_budget_bytes = matrix_budget_bytes
        self.n_intervals = len(t_points)
        bounds = np.concatenate([[0.0], t_points])
        self.interval_cell_bounds = np.rint(bounds * m).astype(int)  # (P+1,)
        covered = self.interval_cell_bounds[-1]
        # ||extended increment||_F^2 = resolved + cell betas + interval beta
        cell_sums = np.add.reduceat(
            beta_cell_sq[:covered], self.interval_cell_bounds[:-1]
        )
        self.extended_incr_sq = resolved_incr_sq + cell_sums + beta_interval_sq

    # -- laws ---------------------------------------------------------------

    def increment_variances(self) -> np.ndarray:
        """Variance of each simulated increment, 2 * ||extended increment||^2."""
        return 2.0 * self.extended_incr_sq

    def matrix(self, t: float) -> np.ndarray:
        """Dense resolved kernel matrix A_t (m x m, excludes the completion)."""
        needed = self.m * self.m * 8
        if needed > self.matrix_budget_bytes:
            raise MemoryBudgetError(
                f"dense {self.m}x{self.m} matrix needs {needed} bytes, "
                f"budget is {self.matrix_budget_bytes}"
            )
        sel = self.u_nodes <= t + 1e-12
        a = np.zeros((self.m, self.m))
        scale = self.constants.d_h * self.u_weights[sel]
        rows = self.rows[sel]
        for lo in range(0, rows.shape[0], 1024):
            chunk = rows[lo : lo + 1024]
            a += (chunk * scale[lo : lo + 1024, None]).T @ chunk
        return a

    def resolved_norm_sq(self, t: float) -> float:
        """||A_t||_F^2 of the resolved (dense) kernel, via on-demand assembly."""
        return float(np.sum(self.matrix(t) ** 2))

    def completed_norm_sq(self, t: float) -> float:
        """||A_t||_F^2 including the completion blocks; 2x this is Var Z_t."""
        idx = int(np.searchsorted(self.t_points, t - 1e-12))
        if idx >= self.n_intervals or abs(self.t_points[idx] - t) > 1e-9:
            raise ValueError(f"t={t} is not one of the grid's time points")
        cells = self.interval_cell_bounds[idx + 1]
        return (
            self.resolved_norm_sq(t)
            + float(np.sum(self.beta_cell_sq[:cells]))
            + float(np.sum(self.beta_interval_sq[: idx + 1]))
        )

    # -- sampling -----------------------------------------------------------

    def noise_dims(self):
        """(main, per-cell aux, per-interval aux) standard normal draws per path."""
        return self.m, self.m, self.n_intervals

    def increments_from_noise(self, xi, zeta_cell, zeta_interval) -> np.ndarray:
        """Path increments over the grid's time intervals for given noise.

        Accepts single vectors or batches with a trailing replica axis.
        """
        single = np.ndim(xi) == 1
        xi = np.atleast_2d(xi.T).T
        zeta_cell = np.atleast_2d(zeta_cell.T).T
        zeta_interval = np.atleast_2d(zeta_interval.T).T
        covered = self.interval_cell_bounds[-1]
        p = self.rows @ xi
        core = self.u_weights[:, None] * (p**2 - self.row_sqnorms[:, None])
        quad = self.constants.d_h * np.add.reduceat(core, self.interval_starts[:-1], axis=0)
        cell_term = np.sqrt(self.beta_cell_sq[:covered, None]) * (
            zeta_cell[:covered] ** 2 - 1.0
        )
        cell_sums = np.add.reduceat(cell_term, self.interval_cell_bounds[:-1], axis=0)
        int_term = np.sqrt(self.beta_interval_sq[:, None]) * (zeta_interval**2 - 1.0)
        out = quad + cell_sums + int_term
        return out[:, 0] if single else out

    def second_chaos_square_increments(self, xi, zeta_cell, zeta_interval) -> np.ndarray:
        """Pathwise second-chaos component of each squared increment.

        For an increment with kernel M this is the centered quadratic form
        of M^2 on the same noise, computed through the factor rows.
        """
        w_scaled = self.constants.d_h * self.u_weights
        p = self.rows @ xi
        single = xi.ndim == 1
        if single:
            xi = xi[:, None]
            zeta_cell = zeta_cell[:, None]
            zeta_interval = zeta_interval[:, None]
            p = p[:, None]
        n_rep = xi.shape[1]
        out = np.empty((self.n_intervals, n_rep))
        beta_cell = self.beta_cell_sq  # enters squared kernels directly
        for k in range(self.n_intervals):
            lo, hi = self.interval_starts[k], self.interval_starts[k + 1]
            # (M xi) for M = d(H) sum w g g^T restricted to the interval
            v = self.rows[lo:hi].T @ (w_scaled[lo:hi, None] * p[lo:hi])
            c0, c1 = self.interval_cell_bounds[k], self.interval_cell_bounds[k + 1]
            aux = beta_cell[c0:c1, None] * (zeta_cell[c0:c1] ** 2 - 1.0)
            aux_int = self.beta_interval_sq[k] * (zeta_interval[k] ** 2 - 1.0)
            out[k] = (
                np.einsum("mr,mr->r", v, v)
                - self.resolved_incr_sq[k]
                + np.sum(aux, axis=0)
                + aux_int
            )
        return out[:, 0] if single else out


def _cell_averaged_rows(hp_order, c_hp, u_nodes, edges, delta):
    """Rows g_u[i] = delta^{-1/2} * int_{cell_i cap [0,u]} dK(u,y) dy.

    The y-integral of (u/y)^{H'-1/2} (u-y)^{H'-3/2} over [a,b] equals
    u^{H'-1/2} B(3/2-H', H'-1/2) [I_z(b/u) - I_z(a/u)] with I_z the
    regularized incomplete beta, which is exact for every cell.
    """
    a_par = 1.5 - hp_order
    b_par = hp_order - 0.5
    complete_beta = math.exp(betaln(a_par, b_par))
    z = np.clip(edges[None, :] / u_nodes[:, None], 0.0, 1.0)
    reg = betainc(a_par, b_par, z)
    segments = np.diff(reg, axis=1)
    scale = c_hp * u_nodes ** (hp_order - 0.5) * complete_beta / math.sqrt(delta)
    return segments * scale[:, None]


def build_kernel_grid(
    h: HurstParam,
    m: int,
    t_points,
    u_nodes_per_cell: int = 3,
    matrix_budget_bytes: int = 4 << 30,
) -> RosenblattKernelGrid:
    """Build the discretized kernel family for the requested time points.

    t_points must be sorted, inside (0,1], and aligned to the cell grid
    (every t * m an integer); the simulator's increments are exact in
    variance on exactly these intervals.
    """
    h.require_rosenblatt()
    if m < 64:
        raise ValueError(f"grid size must be >= 64, got {m}")
    t_points = np.asarray(sorted(set(float(t) for t in np.atleast_1d(t_points))))
    if t_points.size == 0:
        raise ValueError("t_points must be nonempty")
    if t_points[0] <= 0.0 or t_points[-1] > 1.0 + 1e-12:
        raise ValueError("t_points must lie in (0, 1]")
    aligned = np.rint(t_points * m)
    if np.any(np.abs(t_points * m - aligned) > 1e-9 * m):
        raise ValueError("every t in t_points must be a multiple of 1/m")
    if u_nodes_per_cell < 1:
        raise ValueError("u_nodes_per_cell must be >= 1")

    rows_bytes = u_nodes_per_cell * m * m * 8
    if rows_bytes > matrix_budget_bytes:
        raise MemoryBudgetError(
            f"factor rows need {rows_bytes} bytes, budget is {matrix_budget_bytes}"
        )

    hh = h.h
    hp_order = (hh + 1.0) / 2.0
    c_hp = _volterra_const(hp_order)
    constants = make_constants(h)
    delta = 1.0 / m
    edges = np.arange(m + 1) * delta

    bounds = np.concatenate([[0.0], t_points])
    cell_bounds = np.rint(bounds * m).astype(int)
    covered = cell_bounds[-1]  # inner nodes above the last t are never used

    gl_nodes, gl_weights = leggauss(u_nodes_per_cell)
    cell_left = edges[:covered]
    u_nodes = (cell_left[:, None] + 0.5 * delta * (gl_nodes[None, :] + 1.0)).ravel()
    u_weights = np.tile(0.5 * delta * gl_weights, covered)

    rows = _cell_averaged_rows(hp_order, c_hp, u_nodes, edges, delta)

    # Per-cell completion: each cell's kernel increment must carry
    # ||increment||^2 = delta^{2H} / 2; the shortfall becomes one
    # chi-square coordinate per cell.
    n_u = u_nodes_per_cell
    rows_by_cell = rows.reshape(covered, n_u, m)
    w_by_cell = (constants.d_h * u_weights).reshape(covered, n_u)
    gram = np.einsum("cum,cvm->cuv", rows_by_cell, rows_by_cell)
    cell_norm_sq = np.einsum("cu,cv,cuv->c", w_by_cell, w_by_cell, gram**2)
    beta_cell_sq = np.zeros(m)
    beta_cell_sq[:covered] = np.maximum(
        0.0, 0.5 * delta ** (2.0 * hh) - cell_norm_sq
    )

    # Per-interval top-up: make each requested increment exact in variance.
    n_int = len(t_points)
    interval_starts = cell_bounds * n_u
    resolved_incr_sq = np.empty(n_int)
    for k in range(n_int):
        lo, hi = interval_starts[k], interval_starts[k + 1]
        resolved_incr_sq[k] = _block_norm_sq(
            rows[lo:hi], constants.d_h * u_weights[lo:hi], m, matrix_budget_bytes
        )
    dt = np.diff(bounds)
    cell_sums = np.add.reduceat(beta_cell_sq[:covered], cell_bounds[:-1])
    beta_interval_sq = np.maximum(
        0.0, 0.5 * dt ** (2.0 * hh) - resolved_incr_sq - cell_sums
    )

    return RosenblattKernelGrid(
        h=h,
        m=m,
        t_points=t_points,
        u_nodes=u_nodes,
        u_weights=u_weights,
        rows=rows,
        interval_starts=interval_starts,
        beta_cell_sq=beta_cell_sq,
        beta_interval_sq=beta_interval_sq,
        resolved_incr_sq=resolved_incr_sq,
        constants=constants,
        matrix_budget_bytes=matrix_budget_bytes,
    )


_GRAM_NODE_LIMIT = 1536


def _block_norm_sq(rows, weights, m, budget):
    """||sum_u w_u g_u g_u^T||_F^2 via the node Gram or dense assembly."""
    n = rows.shape[0]
    if n == 0:
        return 0.0
    if n <= _GRAM_NODE_LIMIT:
        gram = rows @ rows.T
        return float(np.einsum("u,v,uv->", weights, weights, gram**2))
    if m * m * 8 > budget:
        raise MemoryBudgetError(
            f"interval norm needs a dense {m}x{m} matrix beyond the budget"
        )
    a = np.zeros((m, m))
    for lo in range(0, n, 1024):
        chunk = rows[lo : lo + 1024]
        a += (chunk * weights[lo : lo + 1024, None]).T @ chunk
    return float(np.sum(a**2))


def simulate_path(grid: RosenblattKernelGrid, d: int, gen: np.random.Generator) -> RosenblattPath:
    """One path on times {k/d} from a grid built with those time points."""
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    wanted = np.arange(1, d + 1) / d
    if grid.t_points.size != d or np.max(np.abs(grid.t_points - wanted)) > 1e-12:
        raise ValueError(
            "grid time points do not match {k/d}; build the grid with t_points=k/d"
        )
    n_main, n_cell, n_int = grid.noise_dims()
    xi = gen.standard_normal(n_main)
    zeta_cell = gen.standard_normal(n_cell)
    zeta_interval = gen.standard_normal(n_int)
    incr = grid.increments_from_noise(xi, zeta_cell, zeta_interval)
    values = np.concatenate([[0.0], np.cumsum(incr)])
    times = np.concatenate([[0.0], grid.t_points])
    return RosenblattPath(
        h=grid.h, times=times, values=values,
        xi=xi, zeta_cell=zeta_cell, zeta_interval=zeta_interval,
    )


def _path_d(path: RosenblattPath) -> int:
    d = len(path.times) - 1
    if d < 2:
        raise ValueError("path needs at least 2 increments")
    wanted = np.arange(d + 1) / d
    if np.max(np.abs(path.times - wanted)) > 1e-12:
        raise ValueError("path times are not the uniform grid {k/d}")
    return d


def v_statistic(path: RosenblattPath) -> float:
    """Normalized quadratic variation
    c1^{-1} d^{-H} sum_k [ (increment_k)^2 d^{2H} - 1 ]."""
    d = _path_d(path)
    hh = path.h.h
    c1 = make_constants(path.h).c1_h
    incr = np.diff(path.values)
    return float(np.sum(incr**2 * d ** (2.0 * hh) - 1.0) / (c1 * d**hh))


def decompose_v_statistic(path: RosenblattPath, grid: RosenblattKernelGrid):
    """Split the quadratic variation into its second- and fourth-chaos parts.

    The second-chaos term is the centered quadratic form of the squared
    increment kernels evaluated on the path's own noise; the fourth-chaos
    term is the exact pathwise complement.
    """
    if path.xi is None or path.xi.size != grid.m:
        raise ValueError("path noise does not match the grid")
    d = _path_d(path)
    hh = path.h.h
    c1 = make_constants(path.h).c1_h
    sq = grid.second_chaos_square_increments(path.xi, path.zeta_cell, path.zeta_interval)
    t2 = float(4.0 * d**hh / c1 * np.sum(sq))
    t4 = v_statistic(path) - t2
    return t2, t4
