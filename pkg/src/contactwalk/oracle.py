"""Exact finite-state reference computations on small one-dimensional tori.

Three continuous-time chains share one construction: the medium alone
("contact" layer, states = occupancy bitmasks), the medium plus a walker
position ("joint" layer), and the medium as seen from the walker
("environment" layer, where a walker jump becomes a rotation of the mask).
Transition rates mirror the event rules of the simulation engines exactly:
occupied sites recover at rate 1, empty sites get infected at rate
lambda times the number of occupied neighbours (offsets +1 and -1 mod L,
counted with multiplicity), and the walker jumps by z at rate
gamma * alpha(window, z).

Transient laws come from uniformization with a certified Poisson-tail
truncation, cross-checkable against a dense matrix exponential.  Because the
all-healthy mask is absorbing for the medium, the environment chain has no
honest stationary law; ``stationary_ep`` exposes the standard surrogates
(quasi-stationary eigenvector, spontaneous-infection regularization, and the
chain conditioned to survive forever) with their residuals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .kernel import KernelSpec
from .lattice import BoxSpec, Configuration

STATE_CAP = 200_000
LAYERS = ("contact", "joint", "environment")


class OracleError(RuntimeError):
    """A certified bound or stochasticity check failed."""


@dataclass(frozen=True)
class TorusChainSpec:
    """One-dimensional periodic system small enough to enumerate."""

    num_sites: int
    lam: float
    kernel: KernelSpec | None = None
    gamma: float = 0.0

    def __post_init__(self):
        L = self.num_sites
        if L < 1:
            raise ValueError("need at least one site")
        if (1 << L) * L > STATE_CAP:
            raise ValueError(
                f"state space 2^{L} * {L} exceeds the cap {STATE_CAP}")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("rates must be nonnegative")
        if self.kernel is not None:
            if self.kernel.dimension != 1:
                raise ValueError("torus chains are one-dimensional")
            if 2 * self.kernel.radius + 1 > L:
                raise ValueError("kernel window does not fit on the torus")

    @property
    def num_masks(self) -> int:
        return 1 << self.num_sites


@dataclass
class RateMatrix:
    """Sparse generator plus the uniformization constant."""

    Q: sp.csr_matrix
    lam_u: float          # >= max total exit rate
    layer: str
    spec: TorusChainSpec
    iota: float = 0.0

    @property
    def num_states(self) -> int:
        return self.Q.shape[0]

    def row_sum_error(self) -> float:
        return float(np.abs(np.asarray(self.Q.sum(axis=1)).ravel()).max(initial=0.0))


def _neighbor_counts(masks: np.ndarray, L: int) -> np.ndarray:
    """(num_masks, L) array: occupied-neighbour count of each site."""
    out = np.empty((masks.size, L), dtype=np.int64)
    for i in range(L):
        left = (masks >> ((i - 1) % L)) & 1
        right = (masks >> ((i + 1) % L)) & 1
        out[:, i] = left + right
    return out


def _window_codes(masks: np.ndarray, x: int, radius: int, L: int) -> np.ndarray:
    """Window codes read at position x: bit j = occupancy of (x + j - radius) mod L."""
    codes = np.zeros(masks.size, dtype=np.int64)
    for j in range(2 * radius + 1):
        site = (x + j - radius) % L
        codes |= ((masks >> site) & 1) << j
    return codes


def rotate_mask(masks, z: int, L: int):
    """Masks seen after the viewer moves by z: bit j of result = bit (j+z) mod L."""
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros_like(masks)
    for j in range(L):
        out |= ((masks >> ((j + z) % L)) & 1) << j
    return out


def _medium_edges(spec: TorusChainSpec, masks: np.ndarray, iota: float):
    """COO triples for recovery and infection flips, plus analytic exit rates."""
    L = spec.num_sites
    lam = spec.lam
    nb = _neighbor_counts(masks, L)
    rows, cols, vals = [], [], []
    occ_count = np.zeros(masks.size, dtype=np.int64)
    inf_weight = np.zeros(masks.size, dtype=np.int64)   # sum of nb over empty sites
    empty_count = np.zeros(masks.size, dtype=np.int64)
    for i in range(L):
        bit = (masks >> i) & 1
        occupied = bit == 1
        occ_count += bit
        flips = masks ^ (1 << i)
        # recovery
        rows.append(masks[occupied]); cols.append(flips[occupied])
        vals.append(np.ones(int(occupied.sum())))
        # infection
        empty = ~occupied
        empty_count += empty
        rate = lam * nb[:, i] + iota
        inf_weight += np.where(empty, nb[:, i], 0)
        keep = empty & (rate > 0)
        rows.append(masks[keep]); cols.append(flips[keep]); vals.append(rate[keep])
    exit_rate = (occ_count.astype(np.float64)
                 + lam * inf_weight.astype(np.float64)
                 + iota * empty_count.astype(np.float64))
    return rows, cols, vals, exit_rate


def _walker_rates(spec: TorusChainSpec, masks: np.ndarray, x: int):
    """Per-mask jump rates (num_masks, K) of the walker standing at x."""
    kern = spec.kernel
    codes = _window_codes(masks, x, kern.radius, spec.num_sites)
    rows = codes    # occupancy kernels have radius 0, so the code is the row
    return spec.gamma * kern.rates[rows, :]


def build_generator(spec: TorusChainSpec, layer: str, iota: float = 0.0) -> RateMatrix:
    """Assemble the generator of one layer.

    The diagonal is set from analytically accumulated exit rates (integer
    neighbour counts scaled once), so states related by a torus rotation get
    bitwise-identical diagonal entries.
    """
    if layer not in LAYERS:
        raise ValueError(f"layer must be one of {LAYERS}")
    if layer in ("joint", "environment") and spec.kernel is None:
        raise ValueError(f"{layer} layer needs a kernel")
    L = spec.num_sites
    masks = np.arange(spec.num_masks, dtype=np.int64)
    m_rows, m_cols, m_vals, m_exit = _medium_edges(spec, masks, iota)

    if layer == "contact":
        rows = np.concatenate(m_rows); cols = np.concatenate(m_cols)
        vals = np.concatenate(m_vals); exit_rate = m_exit
        n = spec.num_masks
    elif layer == "environment":
        rows = [np.concatenate(m_rows)]
        cols = [np.concatenate(m_cols)]
        vals = [np.concatenate(m_vals)]
        exit_rate = m_exit.copy()
        jumps = spec.kernel.jump_array()[:, 0]
        rates = _walker_rates(spec, masks, 0)
        for k, z in enumerate(jumps):
            rot = rotate_mask(masks, int(z), L)
            keep = rates[:, k] > 0
            rows.append(masks[keep]); cols.append(rot[keep])
            vals.append(rates[keep, k])
        exit_rate += rates.sum(axis=1)
        rows = np.concatenate(rows); cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        n = spec.num_masks
    else:  # joint: state index = mask * L + position
        n = spec.num_masks * L
        rows, cols, vals = [], [], []
        exit_rate = np.zeros(n)
        med_r = np.concatenate(m_rows); med_c = np.concatenate(m_cols)
        med_v = np.concatenate(m_vals)
        jumps = spec.kernel.jump_array()[:, 0]
        for x in range(L):
            rows.append(med_r * L + x); cols.append(med_c * L + x)
            vals.append(med_v)
            rates = _walker_rates(spec, masks, x)
            for k, z in enumerate(jumps):
                x2 = (x + int(z)) % L
                keep = rates[:, k] > 0
                rows.append(masks[keep] * L + x)
                cols.append(masks[keep] * L + x2)
                vals.append(rates[keep, k])
            exit_rate[masks * L + x] = m_exit + rates.sum(axis=1)
        rows = np.concatenate(rows); cols = np.concatenate(cols)
        vals = np.concatenate(vals)

    # Self-loop edges (e.g. a rotation that maps a mask to itself) land on the
    # diagonal and are also counted in the exit rate, so they cancel exactly
    # and the generator ignores them, as it should.
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    Q = (off + sp.diags(-exit_rate)).tocsr()
    lam_u = float(exit_rate.max(initial=0.0))
    rm = RateMatrix(Q=Q, lam_u=lam_u, layer=layer, spec=spec, iota=iota)
    err = rm.row_sum_error()
    if err > 1e-12:
        raise OracleError(f"generator row sums off by {err:.3e}")
    return rm


# -- state helpers -----------------------------------------------------------

def mask_from_sites(sites, L: int) -> int:
    m = 0
    for s in sites:
        m |= 1 << (int(s) % L)
    return m


def all_one_mask(L: int) -> int:
    return (1 << L) - 1


def joint_state(mask: int, x: int, L: int) -> int:
    return mask * L + (x % L)


def point_distribution(state: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[int(state)] = 1.0
    return v


def torus_site_of_box_flat(flat: int, box: BoxSpec) -> int:
    """Box flat index -> torus site, matching coordinate c = site mod L."""
    return (flat - box.half_width) % box.side


def mask_from_configuration(config: Configuration) -> int:
    box = config.box
    if box.dimension != 1:
        raise ValueError("only one-dimensional configurations map to masks")
    m = 0
    for f in np.flatnonzero(config.occupancy):
        m |= 1 << torus_site_of_box_flat(int(f), box)
    return m


def occupancy_probability(dist: np.ndarray, site: int, rm: RateMatrix) -> float:
    """P(site occupied) under a distribution on the given layer's states."""
    L = rm.spec.num_sites
    states = np.arange(rm.num_states)
    masks = states // L if rm.layer == "joint" else states
    occupied = ((masks >> (site % L)) & 1) == 1
    return float(dist[occupied].sum())


# -- uniformization ----------------------------------------------------------

_MAX_STEP_MEAN = 30.0


def _as_distribution(initial, n: int) -> np.ndarray:
    if np.isscalar(initial):
        return point_distribution(int(initial), n)
    v = np.asarray(initial, dtype=np.float64)
    if v.shape != (n,):
        raise ValueError("initial distribution has the wrong length")
    if (v < -1e-15).any() or abs(v.sum() - 1.0) > 1e-9:
        raise ValueError("initial is not a probability vector")
    return v.clip(min=0.0)


def _check_distribution(v: np.ndarray, tol: float, mass: float = 1.0) -> np.ndarray:
    if v.min(initial=0.0) < -1e-15:
        raise OracleError(f"negative probability {v.min():.3e}")
    v = v.clip(min=0.0)
    if abs(v.sum() - mass) > tol + 1e-12:
        raise OracleError(f"distribution sums to {v.sum():.15f}, expected {mass}")
    return v


def transient_distribution(rm: RateMatrix, initial, t: float,
                           tol: float = 1e-10) -> np.ndarray:
    """The law at time t from ``initial`` (state index or vector).

    Uniformization in steps of mean at most 30 so the Poisson weights never
    underflow; per-step truncation keeps total discarded mass below tol.  The
    result is checked, never renormalized.
    """
    if t < 0 or tol <= 0:
        raise ValueError("need t >= 0 and tol > 0")
    v = _as_distribution(initial, rm.num_states)
    mass = float(v.sum())
    if t == 0 or rm.lam_u == 0:
        return v
    QT = rm.Q.T.tocsr()
    n_steps = max(1, math.ceil(rm.lam_u * t / _MAX_STEP_MEAN))
    dt = t / n_steps
    mean = rm.lam_u * dt
    tol_step = tol / n_steps
    for _ in range(n_steps):
        p = math.exp(-mean)
        cum = p
        out = p * v
        term = v
        k = 0
        while 1.0 - cum > tol_step:
            k += 1
            term = term + QT.dot(term) / rm.lam_u
            p *= mean / k
            cum += p
            out = out + p * term
            if k > 100 * (mean + 10):
                raise OracleError("uniformization failed to converge")
        v = out
    return _check_distribution(v, tol, mass)


def integrated_distribution(rm: RateMatrix, initial, t: float,
                            tol: float = 1e-10) -> np.ndarray:
    """The occupation measure integral_0^t (law at s) ds, certified to tol.

    Entries sum to t up to the truncation allowance.  Weight of the k-th
    uniformization term on a step of mean m is (1/Lam) P(Pois(m) >= k+1); the
    discarded tail is bounded by dt * P(Pois(m) >= K) via the Poisson
    size-bias identity.
    """
    if t < 0 or tol <= 0:
        raise ValueError("need t >= 0 and tol > 0")
    v = _as_distribution(initial, rm.num_states)
    mass = float(v.sum())
    total = np.zeros_like(v)
    if t == 0:
        return total
    if rm.lam_u == 0:
        return t * v
    QT = rm.Q.T.tocsr()
    n_steps = max(1, math.ceil(rm.lam_u * t / _MAX_STEP_MEAN))
    dt = t / n_steps
    mean = rm.lam_u * dt
    tol_step = tol / n_steps           # allowed mass error per step
    for _ in range(n_steps):
        p = math.exp(-mean)            # pmf(k)
        cum = p                        # cdf(k)
        term = v
        out_t = p * v                  # transient accumulator
        out_i = ((1.0 - cum) / rm.lam_u) * v
        k = 0
        # weight tail after K terms is below dt * P(Pois >= K) = dt*(1-cdf(K-1))
        while dt * (1.0 - cum + p) > tol_step or 1.0 - cum > tol_step:
            k += 1
            term = term + QT.dot(term) / rm.lam_u
            p *= mean / k
            cum += p
            out_t = out_t + p * term
            out_i = out_i + ((1.0 - cum) / rm.lam_u) * term
            if k > 100 * (mean + 10):
                raise OracleError("uniformization failed to converge")
        total += out_i
        v = _check_distribution(out_t, tol, float(mass))
    if abs(total.sum() - mass * t) > (tol + 1e-12) * max(1.0, t):
        raise OracleError(f"occupation measure sums to {total.sum():.12f}, not {mass * t}")
    return total


def dense_transient(rm: RateMatrix, initial, t: float) -> np.ndarray:
    """Second method: dense matrix exponential, for cross-checks."""
    from scipy.linalg import expm
    v = _as_distribution(initial, rm.num_states)
    return expm(t * rm.Q.toarray().T) @ v


# -- absorption and extinction ----------------------------------------------

def absorbed_states(rm: RateMatrix) -> np.ndarray:
    """Indices whose medium component is the all-healthy mask."""
    if rm.layer == "joint":
        return np.arange(rm.spec.num_sites)
    return np.array([0])


def absorption_probability(rm: RateMatrix, initial, t: float,
                           tol: float = 1e-10) -> float:
    dist = transient_distribution(rm, initial, t, tol)
    return float(dist[absorbed_states(rm)].sum())


def expected_extinction_time(rm: RateMatrix, initial) -> float:
    """Exact mean absorption time, from the linear system on live states."""
    dead = absorbed_states(rm)
    alive = np.setdiff1d(np.arange(rm.num_states), dead)
    Q_sub = rm.Q[np.ix_(alive, alive)].tocsc()
    tau = spla.spsolve(Q_sub, -np.ones(alive.size))
    full = np.zeros(rm.num_states)
    full[alive] = tau
    v = _as_distribution(initial, rm.num_states)
    return float(v @ full)


# -- stationary environment surrogates ---------------------------------------

@dataclass
class EPStationary:
    """A surrogate stationary law for the environment chain.

    ``distribution`` is a probability vector over all masks (the absorbing
    mask keeps whatever mass the surrogate gives it: positive under the
    spontaneous-infection chain, zero for the eigenvector modes).
    """

    distribution: np.ndarray
    mode: str
    iota: float
    residual: float
    decay_rate: float | None = None      # -theta for the eigenvector modes
    details: dict = field(default_factory=dict)


def _strongly_connected(Q: sp.csr_matrix) -> bool:
    pattern = (abs(Q) > 0).astype(np.int8)
    pattern.setdiag(0)
    pattern.eliminate_zeros()
    ncomp, _ = csgraph.connected_components(pattern, directed=True,
                                            connection="strong")
    return ncomp == 1


def _perron_pair(Q_sub: np.ndarray):
    """Left and right eigenvectors of the eigenvalue with largest real part."""
    from scipy.linalg import eig
    vals, vl, vr = eig(Q_sub, left=True, right=True)
    idx = int(np.argmax(vals.real))
    theta = vals[idx]
    if abs(theta.imag) > 1e-9:
        raise OracleError("leading eigenvalue is not real")
    u = vl[:, idx].real
    v = vr[:, idx].real
    if u.sum() < 0:
        u = -u
    if v.sum() < 0:
        v = -v
    if u.min() < -1e-10 * max(1.0, abs(u).max()) or \
       v.min() < -1e-10 * max(1.0, abs(v).max()):
        raise OracleError("leading eigenvectors are not nonnegative")
    return float(theta.real), u.clip(min=0.0), v.clip(min=0.0)


def stationary_ep(spec: TorusChainSpec, mode: str = "iota",
                  iota: float = 1e-3) -> EPStationary:
    """Stationary surrogate for the environment chain.

    mode "iota": exact stationary law of the chain with spontaneous
    infections at rate iota per empty site (biased toward survival; the bias
    grows with iota, so report the sensitivity triplet).
    mode "qs": quasi-stationary law, the normalized left Perron eigenvector
    of the sub-generator on live masks (law of the chain conditioned on
    not yet being absorbed).
    mode "qprocess": law of the chain conditioned to survive forever,
    proportional to the entrywise product of left and right Perron
    eigenvectors (the natural match for long-time averages of surviving
    runs).
    """
    n = spec.num_masks
    if mode == "iota":
        if iota <= 0:
            raise ValueError("iota must be positive")
        rm = build_generator(spec, "environment", iota=iota)
        if not _strongly_connected(rm.Q):
            raise OracleError("regularized chain is not irreducible")
        A = rm.Q.T.tolil()
        A[0, :] = 1.0            # replace one balance equation by normalization
        b = np.zeros(n)
        b[0] = 1.0
        pi = spla.spsolve(A.tocsc(), b)
        residual = float(np.abs(rm.Q.T.dot(pi)).max())
        if residual > 1e-10:
            raise OracleError(f"stationarity residual {residual:.3e}")
        if pi.min() < -1e-12:
            raise OracleError("negative stationary mass")
        return EPStationary(distribution=pi.clip(min=0.0), mode=mode,
                            iota=iota, residual=residual)

    if mode not in ("qs", "qprocess"):
        raise ValueError(f"unknown mode {mode!r}")
    rm = build_generator(spec, "environment", iota=0.0)
    alive = np.arange(1, n)
    if alive.size > 2048:
        raise OracleError("eigenvector modes use a dense solve, capped at 2^11 states")
    Q_sub = rm.Q[np.ix_(alive, alive)]
    if not _strongly_connected(Q_sub.tocsr()):
        raise OracleError("live masks do not form one communicating class")
    theta, u, v = _perron_pair(Q_sub.toarray())
    if mode == "qs":
        weights = u
    else:
        weights = u * v
    pi = np.zeros(n)
    pi[alive] = weights / weights.sum()
    res_vec = u @ Q_sub.toarray() - theta * u
    residual = float(np.abs(res_vec).max() / max(1.0, np.abs(u).max()))
    if residual > 1e-8:
        raise OracleError(f"eigen residual {residual:.3e}")
    return EPStationary(distribution=pi, mode=mode, iota=0.0,
                        residual=residual, decay_rate=-theta)


def iota_sensitivity(spec: TorusChainSpec, functional: np.ndarray,
                     iotas=(1e-2, 1e-3, 1e-4)) -> dict:
    """The mandatory regularization-bias report: functional value per iota."""
    out = {}
    for i in iotas:
        st = stationary_ep(spec, mode="iota", iota=i)
        out[i] = float(st.distribution @ functional)
    return out


# -- observables --------------------------------------------------------------

def environment_window_rows(spec: TorusChainSpec) -> np.ndarray:
    """Kernel-table row index of each mask, viewed from the origin."""
    masks = np.arange(spec.num_masks, dtype=np.int64)
    return _window_codes(masks, 0, spec.kernel.radius, spec.num_sites)


def drift_values(spec: TorusChainSpec, gamma: float | None = None) -> np.ndarray:
    """Per-mask instantaneous drift gamma * sum_z z * alpha(window at 0, z)."""
    g = spec.gamma if gamma is None else gamma
    rows = environment_window_rows(spec)
    jumps = spec.kernel.jump_array()[:, 0].astype(np.float64)
    return g * (spec.kernel.rates[rows, :] @ jumps)


def oracle_drift(stationary: EPStationary | np.ndarray, spec: TorusChainSpec,
                 gamma: float | None = None) -> np.ndarray:
    """Stationary-average drift; the exact finite-torus speed analogue."""
    dist = stationary.distribution if isinstance(stationary, EPStationary) else stationary
    val = float(np.asarray(dist) @ drift_values(spec, gamma))
    return np.array([val])


def _column_evolve(rm: RateMatrix, w: np.ndarray, dt: float,
                   tol: float = 1e-12) -> np.ndarray:
    """e^{dt Q} applied to a column vector (expectation semigroup)."""
    if dt == 0 or rm.lam_u == 0:
        return w.copy()
    n_steps = max(1, math.ceil(rm.lam_u * dt / _MAX_STEP_MEAN))
    d = dt / n_steps
    mean = rm.lam_u * d
    tol_step = tol / n_steps
    out = w
    for _ in range(n_steps):
        p = math.exp(-mean)
        cum = p
        term = out
        acc = p * out
        k = 0
        while 1.0 - cum > tol_step:
            k += 1
            term = term + rm.Q.dot(term) / rm.lam_u
            p *= mean / k
            cum += p
            acc = acc + p * term
            if k > 100 * (mean + 10):
                raise OracleError("uniformization failed to converge")
        out = acc
    return out


def conditioned_time_average(rm: RateMatrix, initial, f_values: np.ndarray,
                             t_lo: float, t_hi: float, horizon: float,
                             grid_step: float = 0.05) -> float:
    """E[ (t_hi-t_lo)^{-1} int_{t_lo}^{t_hi} f(state_s) ds | alive at horizon ].

    The matched reference for time averages of runs that survive to the
    horizon: numerator integrand is sum_x P(state_s = x) f(x) P_x(alive for
    horizon - s more), integrated by Simpson's rule on a uniform grid, and the
    denominator P(alive at horizon) is the same expression with f = 1.
    """
    if not (0 <= t_lo < t_hi <= horizon):
        raise ValueError("need 0 <= t_lo < t_hi <= horizon")
    n_panels = max(2, int(math.ceil((t_hi - t_lo) / grid_step)))
    if n_panels % 2:
        n_panels += 1
    grid = np.linspace(t_lo, t_hi, n_panels + 1)
    dead = absorbed_states(rm)
    alive_ind = np.ones(rm.num_states)
    alive_ind[dead] = 0.0
    f_values = np.asarray(f_values, dtype=np.float64)

    # forward laws on the grid, backward survival functions on the grid
    fwd = [transient_distribution(rm, initial, grid[0], tol=1e-12)]
    for a, b in zip(grid[:-1], grid[1:]):
        nxt = transient_distribution(rm, fwd[-1], b - a, tol=1e-12)
        fwd.append(nxt)
    surv = [None] * grid.size
    w = _column_evolve(rm, alive_ind, horizon - grid[-1])
    surv[-1] = w
    for i in range(grid.size - 2, -1, -1):
        w = _column_evolve(rm, w, grid[i + 1] - grid[i])
        surv[i] = w

    num_vals = np.array([d @ (f_values * s) for d, s in zip(fwd, surv)])
    den = float(fwd[0] @ surv[0])      # = P(alive at horizon), s-independent
    if den <= 0:
        raise OracleError("conditioning event has zero probability")
    h = grid[1] - grid[0]
    weights = np.ones(grid.size)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    integral = h / 3.0 * float(weights @ num_vals)
    return integral / ((t_hi - t_lo) * den)


def expected_displacement(spec: TorusChainSpec, initial, t: float,
                          tol: float = 1e-10) -> float:
    """E[X_t - X_0] on the joint chain, via the occupation measure.

    Displacement accumulates in Z even though the position state wraps, so
    it equals the time integral of the instantaneous mean drift.
    """
    rm = build_generator(spec, "joint")
    occ = integrated_distribution(rm, initial, t, tol)
    L = spec.num_sites
    masks = np.arange(spec.num_masks, dtype=np.int64)
    jumps = spec.kernel.jump_array()[:, 0].astype(np.float64)
    per_state = np.empty(rm.num_states)
    for x in range(L):
        codes = _window_codes(masks, x, spec.kernel.radius, L)
        per_state[masks * L + x] = spec.gamma * (spec.kernel.rates[codes, :] @ jumps)
    return float(occ @ per_state)
