"""Smoothing marginal-MAP retracker solved by coordinate descent.

The negative log-posterior, after integrating out the smoothness
hyperparameters, is

    C(Theta, mu, Lambda) = sum_n (r_n/2 + 1) sum_k log lam[k, n]
                         + sum_m x_m' Sigma_m^-1 x_m / 2
                         + sum_i (a_i + M/2) log(|D theta_i|^2 / 2 + b_i)
                         + sum_m mu_m^2 / (2 psi2)

with x_m = y_m - s_m(Theta_m) - mu_m.  Each sweep takes one Fisher-scoring
(natural gradient) step on the stacked track gamma = (swh, tau, pu), then
sets mu and Lambda to their conditional modes.  Every sub-step lowers C, so
the cost trace is non-increasing.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, sparse

from .core import (
    EchoSequence,
    FitReport,
    HyperConfig,
    InstrumentConfig,
    NoiseState,
    ParamTrack,
    StopReason,
    validate,
    variance_floor,
)
from .metrics import enl, enl_flags
from .models import ModelKind, WaveformModel
from .moments import initial_state

__all__ = [
    "IllConditionedFisher",
    "laplacian",
    "default_b",
    "CdProblem",
    "CdState",
    "cost",
    "grad_theta",
    "fisher",
    "natural_step",
    "update_mu",
    "update_lambda",
    "fit",
]

RIDGE_START = 1e-8
RIDGE_MAX = 1e-2
MAX_HALVINGS = 30
# per-gate looks ratio may not exceed this multiple of the block median
ENL_CAP_FACTOR = 4.0


class IllConditionedFisher(np.linalg.LinAlgError):
    """The Fisher matrix stayed singular after the largest ridge."""


def laplacian(M: int) -> sparse.csr_matrix:
    """M x M second-difference operator.

    Rows are [1, -2, 1]; the first and last rows reuse the stencil of their
    inward neighbour, so D annihilates constants and ramps (rank M - 2).
    For M < 3 there is no second difference and D is zero.
    """
    if M < 3:
        return sparse.csr_matrix((M, M))
    centres = np.clip(np.arange(M), 1, M - 2)
    rows = np.repeat(np.arange(M), 3)
    cols = (centres[:, None] + np.array([-1, 0, 1])).ravel()
    vals = np.tile([1.0, -2.0, 1.0], M)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(M, M))


# b_i = (kappa_i * range_i)^2 * M / 2 for (swh, tau, pu)
B_SCALE = (1e-3, 0.5, 3e-4)


def default_b(theta: ParamTrack, scale=B_SCALE) -> np.ndarray:
    """Prior scales b_i = (kappa_i * range_i)^2 * M / 2 from the spread of a track.

    With b_i small next to |D theta_i|^2 / 2 the smoothness level is set by
    the data; with b_i large it is pinned near 2 b_i / M.  The default
    factors let SWH and P_u be smoothed strongly while keeping the epoch
    nearly free, so that abrupt epoch changes are not smeared.
    """
    M = theta.M
    out = np.empty(3)
    for i, v in enumerate((theta.swh, theta.tau, theta.pu)):
        spread = float(np.ptp(v))
        if spread == 0.0:
            spread = max(abs(float(np.mean(v))), 1.0)
        out[i] = (scale[i] * spread) ** 2 * M / 2.0
    return out


def _psd_part(A):
    """Dense eigenvalue flooring at zero, kept as a reference implementation."""
    w, V = np.linalg.eigh(A)
    out = (V * np.maximum(w, 0.0)) @ V.T
    return 0.5 * (out + out.T)


def _band_matvec(bands, x):
    """Product of a symmetric matrix stored as upper diagonals with x."""
    y = bands[0] * x
    for d in range(1, bands.shape[0]):
        y[:-d] += bands[d, :-d] * x[d:]
        y[d:] += bands[d, :-d] * x[:-d]
    return y


def _shifted_solve(bands, A, lam, v):
    """Solve (A DtD - lam I) x = v for lam < 0 (a positive definite band system)."""
    up = np.zeros_like(bands)
    n = bands.shape[1]
    for d in range(bands.shape[0]):
        up[-1 - d, d:] = A * bands[d, :n - d]
    up[-1] -= lam
    return linalg.solveh_banded(up, v, check_finite=False)


def _negative_eigenpair(bands, A, v):
    """Most negative eigenpair of A DtD - v v'.

    DtD is positive semidefinite and v lies in its range, so the rank-one
    downdate has at most one negative eigenvalue.  It solves the secular
    equation v' (A DtD - lam I)^-1 v = 1 on (-|v|^2, 0); at lam -> 0 the
    left side tends to v' (A DtD)^+ v = 2 (A - b) / A, which exceeds 1
    exactly when A > 2b.  Returns (0, None) when there is no negative root.
    """
    vv = float(v @ v)
    if vv == 0.0:
        return 0.0, None

    def f(lam):
        return float(v @ _shifted_solve(bands, A, lam, v)) - 1.0

    hi = -1e-12 * vv
    if f(hi) <= 0.0:
        return 0.0, None
    root = optimize.brentq(f, -vv, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    u = _shifted_solve(bands, A, root, v)
    u /= np.linalg.norm(u)
    # Rayleigh quotient refines the eigenvalue to working precision
    lam = float(u @ (A * _band_matvec(bands, u))) - float(u @ v) ** 2
    return min(lam, 0.0), u


class FisherParts:
    """Fisher matrix kept as band + low rank.

    F = blockdiag-of-diagonals data term + sum_i c_i DtD (in block i)
        + sum_k coef_k z_k z_k' (z_k supported on one parameter block).

    Interleaving the unknowns echo by echo (index 3m + i) turns the first
    two terms into a symmetric band matrix of half-width 8, so F can be
    factored in O(M) and the few rank-one terms are handled with the
    Woodbury identity.
    """

    HALF_WIDTH = 8

    def __init__(self, data_blocks, dtd_bands):
        self.data = np.asarray(data_blocks, dtype=float)  # (M, 3, 3)
        self.M = self.data.shape[0]
        self.dtd_bands = dtd_bands
        self.band_coef = np.zeros(3)
        self.terms = []  # (param index, vector, coefficient)

    def add_band(self, i, c):
        self.band_coef[i] += c

    def add_rank_one(self, i, z, coef):
        if coef != 0.0:
            self.terms.append((i, np.asarray(z, dtype=float), float(coef)))

    def all_finite(self):
        return (np.all(np.isfinite(self.data)) and np.all(np.isfinite(self.band_coef))
                and all(np.isfinite(c) and np.all(np.isfinite(z)) for _, z, c in self.terms))

    # -- dense view ----------------------------------------------------------
    def dense(self) -> np.ndarray:
        """3M x 3M matrix in the stacked (swh..., tau..., pu...) order."""
        M = self.M
        F = np.zeros((3 * M, 3 * M))
        idx = np.arange(M)
        for i in range(3):
            for j in range(i, 3):
                d = self.data[:, i, j]
                F[i * M + idx, j * M + idx] = d
                F[j * M + idx, i * M + idx] = d
        for i in range(3):
            if self.band_coef[i] != 0.0:
                sl = slice(i * M, (i + 1) * M)
                for d in range(self.dtd_bands.shape[0]):
                    if d >= M:
                        break
                    vals = self.band_coef[i] * self.dtd_bands[d, :M - d]
                    F[sl, sl][idx[:M - d], idx[d:]] += vals
                    if d:
                        F[sl, sl][idx[d:], idx[:M - d]] += vals
        for i, z, c in self.terms:
            sl = slice(i * M, (i + 1) * M)
            F[sl, sl] += c * np.outer(z, z)
        return F

    def diagonal(self) -> np.ndarray:
        """diag(F) in the stacked order."""
        out = np.concatenate([self.data[:, i, i] + self.band_coef[i] * self.dtd_bands[0]
                              for i in range(3)])
        M = self.M
        for i, z, c in self.terms:
            out[i * M:(i + 1) * M] += c * z * z
        return out

    # -- solve ---------------------------------------------------------------
    def _lower_bands(self, ridge_diag=None):
        M, w = self.M, self.HALF_WIDTH
        ab = np.zeros((w + 1, 3 * M))
        for i in range(3):
            for j in range(i, 3):
                ab[j - i, i::3] += self.data[:, i, j]
            for d in range(self.dtd_bands.shape[0]):
                if d >= M:
                    break
                ab[3 * d, i::3][:M - d] += self.band_coef[i] * self.dtd_bands[d, :M - d]
        if ridge_diag is not None:
            ab[0] += ridge_diag
        return ab

    def solve(self, g, ridge=0.0):
        """F^-1 g (stacked order); raises LinAlgError unless F + ridge diag(F) is PD."""
        M = self.M
        ridge_diag = None
        if ridge:
            ridge_diag = ridge * self.diagonal().reshape(3, M).T.ravel()
        ab = self._lower_bands(ridge_diag)
        cb = linalg.cholesky_banded(ab, lower=True, check_finite=False)
        rhs = np.asarray(g, dtype=float).reshape(3, M).T.ravel()
        x = linalg.cho_solve_banded((cb, True), rhs, check_finite=False)
        if self.terms:
            # scaled columns: sum_k coef_k z_k z_k' = Z diag(sign) Z'
            k = len(self.terms)
            Z = np.zeros((3 * M, k))
            sign = np.empty(k)
            for col, (i, z, c) in enumerate(self.terms):
                Z[i::3, col] = np.sqrt(abs(c)) * z
                sign[col] = np.sign(c)
            order = np.argsort(-sign, kind="stable")  # positive terms first
            Z, sign = Z[:, order], sign[order]
            Y = linalg.cho_solve_banded((cb, True), Z, check_finite=False)
            E = Z.T @ Y
            E = 0.5 * (E + E.T)
            n_pos = int(np.sum(sign > 0))
            if n_pos < k:
                # F is PD iff the Schur complement I - Z-' (S + Z+ Z+')^-1 Z-
                # of the negative terms is PD
                Epp, Epn, Enn = E[:n_pos, :n_pos], E[:n_pos, n_pos:], E[n_pos:, n_pos:]
                schur = np.eye(k - n_pos) - Enn
                if n_pos:
                    schur += Epn.T @ np.linalg.solve(np.eye(n_pos) + Epp, Epn)
                linalg.cholesky(0.5 * (schur + schur.T), check_finite=False)
            cap = np.diag(sign) + E
            x = x - Y @ np.linalg.solve(cap, Y.T @ rhs)
        return x.reshape(M, 3).T.ravel()


class CdProblem:
    """Data, model and prior of one retracking problem.

    Holds everything that does not change during the descent so that the
    cost and its derivatives can be evaluated from (gamma, mu, lam) alone.
    ``data_weight`` and ``prior`` are test hooks: zero removes the
    likelihood term, False removes the smoothness prior.
    """

    def __init__(self, seq: EchoSequence, hyper: HyperConfig, model, data_weight: float = 1.0,
                 prior: bool = True, lam_floor=None):
        if hyper.b is None:
            raise ValueError("hyper.b must be resolved before building a problem")
        self.y = seq.echoes
        self.M, self.K = self.y.shape
        self.bounds = seq.blocks()
        self.block_of = seq.block_ids()
        self.block_len = np.array([hi - lo for lo, hi in self.bounds], dtype=float)
        self.hyper = hyper
        self.model = model
        self.floor = variance_floor(self.y)
        if lam_floor is not None:
            self.floor = np.maximum(np.asarray(lam_floor, dtype=float), self.floor)
        self.D = laplacian(self.M)
        DtD = (self.D.T @ self.D).tocsr()
        self.DtD = DtD
        self.DtD_bands = np.zeros((3, self.M))
        for d in range(min(3, self.M)):
            self.DtD_bands[d, :self.M - d] = DtD.diagonal(d)
        self.data_weight = float(data_weight)
        self.prior = prior
        self.shape_w = hyper.a + self.M / 2.0  # a_i + M/2

    # -- helpers -------------------------------------------------------------
    def weights(self, lam):
        return self.data_weight / np.asarray(lam)[:, self.block_of].T

    def residual(self, gamma, mu, s=None):
        if s is None:
            s = self.model(*np.split(gamma, 3))
        return self.y - s - np.asarray(mu)[:, None]

    def prior_terms(self, gamma):
        th = gamma.reshape(3, self.M)
        Dth = np.asarray(self.D @ th.T).T
        A = 0.5 * np.sum(Dth ** 2, axis=1) + self.hyper.b
        return th, A

    # -- cost and derivatives ------------------------------------------------
    def cost(self, gamma, mu, lam):
        lam = np.asarray(lam)
        mu = np.asarray(mu)
        x = self.residual(gamma, mu)
        c = float(np.sum((self.block_len / 2.0 + 1.0) * np.sum(np.log(lam), axis=0)))
        c += 0.5 * float(np.sum(self.weights(lam) * x * x))
        if self.prior:
            _, A = self.prior_terms(gamma)
            c += float(np.sum(self.shape_w * np.log(A)))
        c += float(np.sum(mu ** 2)) / (2.0 * self.hyper.psi2)
        return c

    def grad_and_parts(self, gamma, mu, lam, want_fisher=True):
        """Gradient and the structured Fisher matrix (see :class:`FisherParts`)."""
        s, J = self.model.with_jacobian(*np.split(gamma, 3))
        W = self.weights(lam)
        x = self.residual(gamma, mu, s)
        g = -np.einsum("mki,mk->im", J, W * x).ravel()
        parts = None
        if want_fisher:
            parts = FisherParts(np.einsum("mki,mk,mkj->mij", J, W, J), self.DtD_bands)
        if self.prior:
            th, A = self.prior_terms(gamma)
            for i in range(3):
                DtDth = self.DtD @ th[i]
                w = self.shape_w[i]
                g[i * self.M:(i + 1) * self.M] += w * DtDth / A[i]
                if want_fisher:
                    # w (A DtD - v v') / A^2, whose one negative eigenvalue
                    # (present only when |D theta|^2 / 2 > b) is floored at 0
                    parts.add_band(i, w / A[i])
                    parts.add_rank_one(i, DtDth, -w / A[i] ** 2)
                    if A[i] > 2.0 * self.hyper.b[i]:
                        lam_neg, u = _negative_eigenpair(self.DtD_bands, A[i], DtDth)
                        if lam_neg < 0.0:
                            parts.add_rank_one(i, u, -w * lam_neg / A[i] ** 2)
        return g, parts

    def grad_and_fisher(self, gamma, mu, lam, want_fisher=True):
        g, parts = self.grad_and_parts(gamma, mu, lam, want_fisher)
        return g, (parts.dense() if parts is not None else None)

    def grad(self, gamma, mu, lam):
        return self.grad_and_fisher(gamma, mu, lam, want_fisher=False)[0]

    def fisher(self, gamma, mu, lam):
        return self.grad_and_fisher(gamma, mu, lam)[1]

    # -- closed-form noise updates ------------------------------------------
    def update_mu(self, gamma, lam):
        s = self.model(*np.split(gamma, 3))
        W = 1.0 / np.asarray(lam)[:, self.block_of].T
        num = np.sum((self.y - s) * W, axis=1)
        return num / (1.0 / self.hyper.psi2 + np.sum(W, axis=1))

    def update_lambda(self, gamma, mu):
        x = self.residual(gamma, mu)
        beta = np.stack([0.5 * np.sum(x[lo:hi] ** 2, axis=0) for lo, hi in self.bounds], axis=1)
        return np.maximum(beta / (self.block_len / 2.0 + 1.0), self.floor)


def looks_floor(seq: EchoSequence, lam0, factor: float = ENL_CAP_FACTOR) -> np.ndarray:
    """Per-gate lower bound on the block variances.

    Each echo carries its own thermal mean, so a block of ``r`` means can
    reproduce one gate column exactly; the likelihood is then unbounded as
    that gate's variance goes to zero.  The bound caps the per-gate ratio
    (block mean)^2 / lam at ``factor`` times its median over the initial
    variances ``lam0``, which keeps the descent away from that degenerate
    direction while leaving ordinary gates untouched.
    """
    m2 = np.stack([seq.echoes[lo:hi].mean(axis=0) ** 2 for lo, hi in seq.blocks()], axis=1)
    ratio = m2 / np.asarray(lam0, dtype=float)
    cap = factor * np.median(ratio, axis=0)
    return np.maximum(m2 / cap, variance_floor(seq.echoes))


def _solve_fisher(F, g):
    """F^-1 g; on failure retry with a ridge delta diag(F), delta = 1e-8 ... 1e-2."""
    if isinstance(F, FisherParts):
        solve = F.solve
    else:
        def solve(rhs, ridge=0.0):
            Fr = F
            if ridge:
                Fr = F.copy()
                Fr[np.diag_indices_from(Fr)] += ridge * np.diag(F)
            return linalg.cho_solve(linalg.cho_factor(Fr, check_finite=False), rhs)
    try:
        return solve(g)
    except linalg.LinAlgError:
        pass
    delta = RIDGE_START
    while delta <= RIDGE_MAX * (1 + 1e-12):
        try:
            return solve(g, delta)
        except linalg.LinAlgError:
            delta *= 10.0
    raise IllConditionedFisher("ill-conditioned Fisher: no ridge up to 1e-2 made it positive definite")


def _project(gamma, M):
    out = gamma.copy()
    np.maximum(out[:M], 0.0, out=out[:M])
    return out


@dataclass
class CdState:
    gamma: np.ndarray
    noise: NoiseState
    cost: float
    iter: int = 0

    @property
    def theta(self) -> ParamTrack:
        return ParamTrack.from_stacked(self.gamma)


def natural_step(state: CdState, problem: CdProblem) -> CdState:
    """One Fisher-scoring update of the track with backtracking.

    The full step gamma - F^-1 grad C is halved up to 30 times until the
    cost drops; if it never does the track is returned unchanged.  SWH is
    clamped at zero.
    """
    mu, lam = state.noise.mu, state.noise.lam
    g, F = problem.grad_and_parts(state.gamma, mu, lam)
    if not np.any(g):
        return CdState(state.gamma.copy(), state.noise, state.cost, state.iter)
    if not np.all(np.isfinite(g)) or not F.all_finite():
        raise FloatingPointError("non-finite gradient or Fisher matrix")
    d = _solve_fisher(F, g)
    step = 1.0
    for _ in range(MAX_HALVINGS + 1):
        cand = _project(state.gamma - step * d, problem.M)
        try:
            c = problem.cost(cand, mu, lam)
        except ValueError:
            c = np.inf
        if np.isfinite(c) and c < state.cost:
            return CdState(cand, state.noise, c, state.iter)
        step *= 0.5
    return CdState(state.gamma.copy(), state.noise, state.cost, state.iter)


# ---------------------------------------------------------------- wrappers --

def _problem(theta, seq, hyper, model, **kw):
    if hyper.b is None:
        hyper = hyper.with_b(default_b(theta))
    return CdProblem(seq, hyper, model, **kw)


def _as_track(theta) -> ParamTrack:
    return theta if isinstance(theta, ParamTrack) else ParamTrack.from_matrix(theta)


def cost(theta, mu, lam, seq: EchoSequence, hyper: HyperConfig, model: WaveformModel, **kw) -> float:
    """Negative log marginal posterior C(Theta, mu, Lambda)."""
    theta = _as_track(theta)
    return _problem(theta, seq, hyper, model, **kw).cost(theta.stacked(), mu, lam)


def grad_theta(theta, mu, lam, seq, hyper, model, **kw) -> np.ndarray:
    """dC/dgamma, stacked as (swh..., tau..., pu...)."""
    theta = _as_track(theta)
    return _problem(theta, seq, hyper, model, **kw).grad(theta.stacked(), mu, lam)


def fisher(theta, mu, lam, seq, hyper, model, **kw) -> np.ndarray:
    """3M x 3M Fisher matrix with the clamped prior curvature on the diagonal blocks."""
    theta = _as_track(theta)
    return _problem(theta, seq, hyper, model, **kw).fisher(theta.stacked(), mu, lam)


def update_mu(theta, lam, seq, psi2: float, model) -> np.ndarray:
    """Conditional mode of the thermal means."""
    theta = _as_track(theta)
    p = CdProblem(seq, HyperConfig(b=np.ones(3), psi2=psi2), model)
    return p.update_mu(theta.stacked(), lam)


def update_lambda(theta, mu, seq, model) -> np.ndarray:
    """Conditional mode of the block variances, beta / (r/2 + 1), floored."""
    theta = _as_track(theta)
    p = CdProblem(seq, HyperConfig(b=np.ones(3)), model)
    return p.update_lambda(theta.stacked(), mu)


def fit(seq: EchoSequence, hyper: HyperConfig | None = None, cfg: InstrumentConfig | None = None,
        kind: ModelKind | str = ModelKind.BROWN, init=None, model=None,
        enl_cap: float | None = ENL_CAP_FACTOR) -> FitReport:
    """Run the coordinate descent until a stopping rule fires.

    ``init`` is ``None`` (moment retracker) or a tuple
    ``(ParamTrack, mu, lam)``.  ``model`` overrides the waveform model
    built from ``kind`` and ``cfg``.  ``enl_cap`` sets the per-gate
    variance bound of :func:`looks_floor`; ``None`` keeps only the
    absolute floor.
    """
    t0 = time.perf_counter()
    cfg = cfg or InstrumentConfig(gates=seq.K)
    hyper = hyper or HyperConfig()
    validate(seq, cfg)
    model = model or WaveformModel(kind, cfg)
    if init is None:
        theta0, mu0, lam0 = initial_state(seq, cfg, model)
    else:
        theta0, mu0, lam0 = init
        theta0 = _as_track(theta0)
    lam0 = np.maximum(np.asarray(lam0, float), variance_floor(seq.echoes))
    lam_floor = looks_floor(seq, lam0, enl_cap) if enl_cap is not None else None
    problem = _problem(theta0, seq, hyper, model, lam_floor=lam_floor)
    hyper = problem.hyper
    lam0 = np.maximum(lam0, problem.floor)
    gamma = _project(theta0.stacked(), seq.M)
    state = CdState(gamma, NoiseState(mu0, lam0), problem.cost(gamma, mu0, lam0))
    if not np.isfinite(state.cost):
        raise FloatingPointError("non-finite cost at initialisation")
    trace = [state.cost]
    reason = StopReason.MAX_ITER
    for t in range(1, hyper.t_max + 1):
        prev_gamma, prev_cost = state.gamma, state.cost
        state = natural_step(state, problem)
        mu = problem.update_mu(state.gamma, state.noise.lam)
        lam = problem.update_lambda(state.gamma, mu)
        c = problem.cost(state.gamma, mu, lam)
        if not np.isfinite(c):
            raise FloatingPointError(f"non-finite cost at iteration {t}")
        state = CdState(state.gamma, NoiseState(mu, lam), c, t)
        trace.append(c)
        if abs(c - prev_cost) <= hyper.xi1 * abs(prev_cost):
            reason = StopReason.COST_TOL
            break
        step = np.linalg.norm(state.gamma - prev_gamma)
        if step <= hyper.xi2 * (np.linalg.norm(prev_gamma) + hyper.xi2):
            reason = StopReason.PARAM_TOL
            break
    noise = state.noise
    return FitReport(
        theta_hat=state.theta,
        noise_hat=noise,
        enl=enl(seq, noise.lam),
        cost_trace=np.array(trace),
        iterations=state.iter,
        stop_reason=reason,
        wall_time=time.perf_counter() - t0,
        extras={
            "algo": "cd",
            "kind": model.kind.value if hasattr(model, "kind") else "custom",
            "b": hyper.b.tolist(),
            "enl_flags": enl_flags(seq, noise.lam).tolist(),
            "gates_at_bound": int(np.sum(noise.lam <= problem.floor * (1 + 1e-9))),
        },
    )


def multistart(seq: EchoSequence, hyper: HyperConfig | None = None, cfg: InstrumentConfig | None = None,
               kind: ModelKind | str = ModelKind.BROWN, starts: int = 3, seed: int = 0,
               jitter=(0.3, 1.0, 0.05), model=None) -> dict:
    """Refit from jittered starting tracks and report how far the answers spread.

    The first start is the default moment initialisation; the others
    perturb it by relative ``jitter[0]`` in SWH, absolute ``jitter[1]``
    gates in epoch and relative ``jitter[2]`` in amplitude.  The cost is
    not known to be convex, so a large spread flags a sequence whose
    estimate depends on the starting point.

    Returns
    -------
    dict
        ``reports`` (one FitReport per start), ``spread`` (ParamTrack of
        the per-echo max - min over starts), ``max_spread`` (per-parameter
        maxima, shape (3,)) and ``costs`` (final cost per start).
    """
    cfg = cfg or InstrumentConfig(gates=seq.K)
    model = model or WaveformModel(kind, cfg)
    theta0, mu0, lam0 = initial_state(seq, cfg, model)
    rng = np.random.default_rng(seed)
    reports = []
    for s in range(starts):
        if s == 0:
            th = theta0
        else:
            th = ParamTrack(theta0.swh * np.exp(jitter[0] * rng.standard_normal(seq.M)),
                            theta0.tau + jitter[1] * rng.standard_normal(seq.M),
                            theta0.pu * np.exp(jitter[2] * rng.standard_normal(seq.M)))
        reports.append(fit(seq, hyper, cfg, init=(th, mu0, lam0), model=model))
    est = np.stack([r.theta_hat.as_matrix() for r in reports])
    spread = est.max(axis=0) - est.min(axis=0)  # (M, 3)
    return {
        "reports": reports,
        "spread": ParamTrack(*spread.T),
        "max_spread": spread.max(axis=0),
        "costs": np.array([r.cost_trace[-1] for r in reports]),
    }
