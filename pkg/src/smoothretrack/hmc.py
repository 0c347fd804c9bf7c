"""Hybrid Gibbs sampler with Hamiltonian Monte Carlo moves.

One sweep draws, in turn,

* each parameter track theta_i (swh, tau, pu) with an HMC move whose
  potential is minus the log of its conditional density,
* the thermal means mu from their Gaussian conditional,
* the block variances from inverse-gamma IG(r/2, beta) conditionals,
* the smoothness levels eps_i^2 from IG(M/2 + a_i, |D theta_i|^2 / 2 + b_i).

Step sizes are tuned per parameter during burn-in by dual averaging towards
an acceptance rate of 0.65.  The mass matrix of track i is banded: the
data-term curvature at the starting point on the diagonal plus the current
prior precision D'D / eps_i^2, so that momenta follow the smooth directions
the prior favours.  The MMSE estimate is
the mean of the post-burn-in samples.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, special

from .cd import CdProblem, default_b, fit as cd_fit, laplacian, looks_floor
from .core import (EchoSequence, FitReport, HyperConfig, InstrumentConfig, NoiseState,
                   ParamTrack, StopReason, ValidationError, validate, variance_floor)
from .metrics import enl, enl_flags
from .models import ModelKind, WaveformModel

__all__ = [
    "ChainConfig",
    "ChainResult",
    "log_cond_theta",
    "sample_epsilon",
    "sample_mu",
    "sample_lambda",
    "hmc_step",
    "BandedMass",
    "DiagonalMass",
    "DualAveraging",
    "sample_posterior",
]

PARAMS = ("swh", "tau", "pu")


@dataclass(frozen=True)
class ChainConfig:
    """Run length and HMC tuning.

    ``step_size`` holds the initial leapfrog step of each parameter in
    units of its conditional standard deviation; with ``adapt`` the steps
    are retuned during burn-in.
    """

    n_burn: int = 500
    n_run: int = 1500
    leapfrog_steps: int = 20
    step_size: tuple = (0.5, 0.5, 0.5)
    seed: int = 0
    target_accept: float = 0.65
    adapt: bool = True

    def __post_init__(self):
        object.__setattr__(self, "step_size", tuple(float(s) for s in np.broadcast_to(self.step_size, (3,))))
        if self.n_burn < 0:
            raise ValidationError("n_burn must be >= 0")
        if self.n_run < 1:
            raise ValidationError("n_run must be >= 1")
        if self.leapfrog_steps < 1:
            raise ValidationError("leapfrog_steps must be >= 1")
        if not all(s > 0 for s in self.step_size):
            raise ValidationError("step sizes must be > 0")
        if not 0 < self.target_accept < 1:
            raise ValidationError("target_accept must lie in (0, 1)")

    def with_(self, **changes) -> "ChainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {"n_burn": self.n_burn, "n_run": self.n_run, "leapfrog_steps": self.leapfrog_steps,
                "step_size": list(self.step_size), "seed": self.seed,
                "target_accept": self.target_accept, "adapt": self.adapt}

    @classmethod
    def from_dict(cls, d: dict) -> "ChainConfig":
        d = dict(d)
        d["step_size"] = tuple(d.get("step_size", (0.5, 0.5, 0.5)))
        return cls(**d)


# ------------------------------------------------------------ conditionals --

def _weights(lam, block_of):
    return 1.0 / np.asarray(lam)[:, block_of].T


def log_cond_theta(i: int, theta_i, theta, mu, lam, seq: EchoSequence, eps2_i: float, model,
                   D=None, W=None):
    """Log conditional density of track ``i`` (up to a constant) and its gradient.

    ``-|D theta_i|^2 / (2 eps2_i) - sum_m x_m' Sigma_m^-1 x_m / 2`` where the
    residuals ``x_m`` use ``theta_i`` in place of row ``i`` of ``theta``.

    Returns
    -------
    (float, ndarray)
        Value and gradient with respect to ``theta_i`` (length M).
    """
    th = np.array(theta.as_matrix().T if isinstance(theta, ParamTrack) else theta, dtype=float)
    if th.shape[0] != 3:
        th = th.T
    th[i] = theta_i
    s, J = model.with_jacobian(th[0], th[1], th[2])
    if not np.all(np.isfinite(s)):
        raise FloatingPointError("non-finite model output")
    if W is None:
        W = _weights(lam, seq.block_ids())
    x = seq.echoes - s - np.asarray(mu)[:, None]
    Wx = W * x
    val = -0.5 * float(np.sum(x * Wx))
    grad = np.einsum("mk,mk->m", J[..., i], Wx)
    if np.isfinite(eps2_i):
        D = laplacian(seq.M) if D is None else D
        Dt = D @ th[i]
        val -= 0.5 * float(Dt @ Dt) / eps2_i
        grad -= (D.T @ Dt) / eps2_i
    return val, grad


def sample_epsilon(theta, a, b, rng: np.random.Generator, D=None) -> np.ndarray:
    """Draw eps_i^2 ~ IG(M/2 + a_i, |D theta_i|^2 / 2 + b_i) for i = swh, tau, pu."""
    th = theta.as_matrix().T if isinstance(theta, ParamTrack) else np.asarray(theta, dtype=float)
    if th.shape[0] != 3:
        th = th.T
    M = th.shape[1]
    a = np.broadcast_to(np.asarray(a, dtype=float), (3,))
    b = np.broadcast_to(np.asarray(b, dtype=float), (3,))
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValidationError("a and b must be > 0")
    D = laplacian(M) if D is None else D
    Dth = np.asarray(D @ th.T).T
    shape = M / 2.0 + a
    scale = 0.5 * np.sum(Dth ** 2, axis=1) + b
    return scale / rng.gamma(shape)


def sample_mu(resid_no_mu, lam, block_of, psi2: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian conditional draw of the thermal means.

    ``resid_no_mu`` is y - s (M x K).  Precision 1/psi2 + sum_k w_mk,
    mean sum_k w_mk (y - s)_mk / precision.
    """
    W = _weights(lam, block_of)
    prec = 1.0 / psi2 + np.sum(W, axis=1)
    mean = np.sum(W * resid_no_mu, axis=1) / prec
    return mean + rng.standard_normal(len(mean)) / np.sqrt(prec)


def sample_lambda(resid, bounds, rng: np.random.Generator, floor=None) -> np.ndarray:
    """Block variances from IG(r_n/2, beta_kn), beta = sum of squared residuals / 2.

    With ``floor`` the draw is from the same law truncated to lam >= floor
    (exact inverse-CDF sampling of the truncated gamma precision).
    """
    beta = np.stack([0.5 * np.sum(resid[lo:hi] ** 2, axis=0) for lo, hi in bounds], axis=1)
    shape = np.array([(hi - lo) / 2.0 for lo, hi in bounds])[None, :]
    shape = np.broadcast_to(shape, beta.shape)
    beta = np.maximum(beta, np.finfo(float).tiny)
    if floor is None:
        return beta / rng.gamma(shape)
    # precision g = beta / lam ~ Gamma(shape); lam >= floor  <=>  g <= beta / floor
    upper = special.gammainc(shape, beta / floor)
    u = rng.uniform(size=beta.shape) * upper
    g = special.gammaincinv(shape, np.maximum(u, np.finfo(float).tiny))
    return np.maximum(beta / g, floor)


# --------------------------------------------------------------- HMC move --

class BandedMass:
    """Symmetric positive definite band mass matrix.

    ``diag`` plus ``coef`` times the second-difference normal matrix given
    by its upper bands.  Momenta are drawn as N(0, Mass) through the
    band Cholesky factor; velocities need one band solve.
    """

    def __init__(self, diag, dtd_bands, coef):
        n = len(diag)
        w = dtd_bands.shape[0]
        up = np.zeros((w, n))
        for d in range(w):
            up[-1 - d, d:] = coef * dtd_bands[d, :n - d]
        up[-1] += diag
        self.upper = up
        self.chol = linalg.cholesky_banded(up, lower=False, check_finite=False)

    def momentum(self, rng):
        z = rng.standard_normal(self.upper.shape[1])
        # Mass = U'U with U upper triangular, so U' z ~ N(0, Mass)
        U = self.chol
        out = U[-1] * z
        for d in range(1, U.shape[0]):
            out[d:] += U[-1 - d, d:] * z[:-d]
        return out

    def velocity(self, p):
        return linalg.cho_solve_banded((self.chol, False), p, check_finite=False)

    def kinetic(self, p):
        return 0.5 * float(p @ self.velocity(p))


class DiagonalMass:
    """Diagonal mass matrix given by its inverse."""

    def __init__(self, inv_mass):
        self.inv_mass = np.asarray(inv_mass, dtype=float)

    def momentum(self, rng):
        return rng.standard_normal(self.inv_mass.shape) / np.sqrt(self.inv_mass)

    def velocity(self, p):
        return self.inv_mass * p

    def kinetic(self, p):
        return 0.5 * float(np.sum(self.inv_mass * p * p))


def hmc_step(x0, logp_grad, step: float, n_steps: int, mass, rng: np.random.Generator):
    """One HMC transition (leapfrog + Metropolis correction).

    Parameters
    ----------
    x0 : ndarray
        Current position.
    logp_grad : callable
        ``x -> (log density, gradient)``.
    step, n_steps : float, int
        Leapfrog step size and number of steps.
    mass : ndarray, DiagonalMass or BandedMass
        A plain array is taken as the diagonal of the inverse mass matrix.
    rng : Generator

    Returns
    -------
    x, accept_prob, accepted, divergent
    """
    if not hasattr(mass, "velocity"):
        mass = DiagonalMass(mass)
    p0 = mass.momentum(rng)
    lp0, g = logp_grad(x0)
    h0 = -lp0 + mass.kinetic(p0)
    x, p = x0.copy(), p0.copy()
    divergent = False
    try:
        with np.errstate(over="raise", invalid="raise"):
            p = p + 0.5 * step * g
            for k in range(n_steps):
                x = x + step * mass.velocity(p)
                lp, g = logp_grad(x)
                if k < n_steps - 1:
                    p = p + step * g
            p = p + 0.5 * step * g
        h1 = -lp + mass.kinetic(p)
        if not np.isfinite(h1):
            raise FloatingPointError
    except (FloatingPointError, ValueError):
        divergent = True
    if divergent:
        return x0, 0.0, False, True
    accept_prob = float(np.exp(min(0.0, h0 - h1)))
    if rng.uniform() < accept_prob:
        return x, accept_prob, True, False
    return x0, accept_prob, False, False


class DualAveraging:
    """Nesterov dual-averaging step-size adaptation (gamma=0.05, t0=10, kappa=0.75)."""

    def __init__(self, step0: float, target: float = 0.65, gamma: float = 0.05, t0: float = 10.0,
                 kappa: float = 0.75):
        self.mu = np.log(10.0 * step0)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.h_bar = 0.0
        self.log_step = np.log(step0)
        self.log_step_bar = 0.0
        self.t = 0

    def update(self, accept_prob: float) -> float:
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1 - eta) * self.h_bar + eta * (self.target - accept_prob)
        self.log_step = self.mu - np.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** (-self.kappa)
        self.log_step_bar = w * self.log_step + (1 - w) * self.log_step_bar
        return float(np.exp(self.log_step))

    @property
    def final_step(self) -> float:
        return float(np.exp(self.log_step_bar))


# ------------------------------------------------------------ the sampler --

@dataclass
class ChainResult:
    """Posterior samples and summaries.

    ``theta`` has shape (n_run, 3, M), ``eps2`` (n_run, 3), ``mu``
    (n_run, M) and ``lam`` (n_run, K, n_blocks).
    """

    theta: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    eps2: np.ndarray
    mmse: ParamTrack
    posterior_std: ParamTrack
    acceptance: np.ndarray
    step_size: np.ndarray
    divergent: np.ndarray
    report: FitReport = field(repr=False, default=None)

    def flat(self) -> np.ndarray:
        """Sample x parameter matrix (swh_1..M, tau_1..M, pu_1..M, mu_1..M, eps2_1..3)."""
        n = self.theta.shape[0]
        return np.hstack([self.theta.reshape(n, -1), self.mu, self.eps2])

    def split_rhat(self) -> np.ndarray:
        """Split-chain potential scale reduction of each theta coordinate, shape (3, M)."""
        n = self.theta.shape[0] // 2
        if n < 2:
            return np.full(self.theta.shape[1:], np.nan)
        halves = np.stack([self.theta[:n], self.theta[n:2 * n]])
        means = halves.mean(axis=1)
        within = halves.var(axis=1, ddof=1).mean(axis=0)
        between = n * means.var(axis=0, ddof=1)
        var_hat = (n - 1) / n * within + between / n
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.sqrt(var_hat / within)


def _data_curvature(problem: CdProblem, gamma, lam):
    """Diagonal of the data-term Fisher information of each track, shape (3, M)."""
    _, J = problem.model.with_jacobian(*np.split(gamma, 3))
    W = problem.weights(lam)
    return np.einsum("mki,mk,mki->im", J, W, J)


def sample_posterior(seq: EchoSequence, hyper: HyperConfig | None = None,
                     cfg: InstrumentConfig | None = None, kind: ModelKind | str = ModelKind.BROWN,
                     chain: ChainConfig | None = None, init=None, model=None,
                     enl_cap: float | None = 4.0) -> ChainResult:
    """Run the hybrid Gibbs sampler and return chains plus the MMSE track.

    ``init`` is ``None`` (start from the coordinate-descent MAP) or a
    tuple ``(ParamTrack, mu, lam)``.
    """
    t0 = time.perf_counter()
    cfg = cfg or InstrumentConfig(gates=seq.K)
    hyper = hyper or HyperConfig()
    chain = chain or ChainConfig()
    validate(seq, cfg)
    model = model or WaveformModel(kind, cfg)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(chain.seed)))

    if init is None:
        rep = cd_fit(seq, hyper, cfg, model=model, enl_cap=enl_cap)
        theta0, mu, lam = rep.theta_hat, rep.noise_hat.mu.copy(), rep.noise_hat.lam.copy()
        hyper = hyper.with_b(np.asarray(rep.extras["b"]))
    else:
        theta0, mu, lam = init
        theta0 = theta0 if isinstance(theta0, ParamTrack) else ParamTrack.from_matrix(theta0)
        mu, lam = np.array(mu, dtype=float), np.array(lam, dtype=float)
    if hyper.b is None:
        hyper = hyper.with_b(default_b(theta0))
    floor = looks_floor(seq, lam, enl_cap) if enl_cap is not None else variance_floor(seq.echoes)
    lam = np.maximum(lam, floor)
    problem = CdProblem(seq, hyper, model, lam_floor=floor)
    D = problem.D
    M = seq.M
    th = theta0.as_matrix().T.copy()  # (3, M)
    a, b = np.asarray(hyper.a, dtype=float), np.asarray(hyper.b, dtype=float)
    Dth = np.asarray(D @ th.T).T
    eps2 = (0.5 * np.sum(Dth ** 2, axis=1) + b) / (M / 2.0 + a + 1.0)  # IG mode
    # mass of track i: frozen data curvature + current prior precision DtD / eps_i^2
    data_curv = np.maximum(_data_curvature(problem, th.ravel(), lam), 1e-12)

    steps = np.array(chain.step_size, dtype=float)
    adapters = [DualAveraging(s, chain.target_accept) for s in steps]
    n_total = chain.n_burn + chain.n_run
    K, nb = lam.shape
    out_theta = np.empty((chain.n_run, 3, M))
    out_mu = np.empty((chain.n_run, M))
    out_lam = np.empty((chain.n_run, K, nb))
    out_eps = np.empty((chain.n_run, 3))
    acc = np.zeros((n_total, 3))
    div = np.zeros(3, dtype=int)
    bounds, block_of = seq.blocks(), seq.block_ids()
    lower = np.array([0.0, -np.inf, -np.inf])

    for t in range(n_total):
        W = _weights(lam, block_of)
        for i in range(3):
            def logp_grad(x, i=i):
                if x.min() < lower[i]:
                    return -np.inf, np.zeros_like(x)
                return log_cond_theta(i, x, th, mu, lam, seq, eps2[i], model, D, W)

            mass = BandedMass(data_curv[i], problem.DtD_bands, 1.0 / eps2[i])
            x, prob, _, bad = hmc_step(th[i], logp_grad, steps[i], chain.leapfrog_steps, mass, rng)
            th[i] = x
            acc[t, i] = prob
            div[i] += bad
            if chain.adapt and t < chain.n_burn:
                steps[i] = adapters[i].update(prob)
                if t == chain.n_burn - 1:
                    steps[i] = adapters[i].final_step
        s = model(th[0], th[1], th[2])
        mu = sample_mu(seq.echoes - s, lam, block_of, hyper.psi2, rng)
        lam = sample_lambda(seq.echoes - s - mu[:, None], bounds, rng, floor)
        eps2 = sample_epsilon(th, a, b, rng, D)
        if t >= chain.n_burn:
            j = t - chain.n_burn
            out_theta[j], out_mu[j], out_lam[j], out_eps[j] = th, mu, lam, eps2

    mean = out_theta.mean(axis=0)
    sd = out_theta.std(axis=0, ddof=1) if chain.n_run > 1 else np.zeros_like(mean)
    mmse = ParamTrack(*mean)
    noise = NoiseState(out_mu.mean(axis=0), out_lam.mean(axis=0))
    accept_rate = acc[chain.n_burn:].mean(axis=0)
    report = FitReport(
        theta_hat=mmse,
        noise_hat=noise,
        enl=enl(seq, noise.lam),
        cost_trace=np.array([problem.cost(mean.ravel(), noise.mu, noise.lam)]),
        iterations=n_total,
        stop_reason=StopReason.MAX_ITER,
        wall_time=time.perf_counter() - t0,
        extras={
            "algo": "hmc",
            "kind": model.kind.value if hasattr(model, "kind") else "custom",
            "b": b.tolist(),
            "acceptance": accept_rate.tolist(),
            "step_size": steps.tolist(),
            "divergent": div.tolist(),
            "chain": chain.to_dict(),
            "enl_flags": enl_flags(seq, noise.lam).tolist(),
        },
    )
    return ChainResult(out_theta, out_mu, out_lam, out_eps, mmse, ParamTrack(*sd),
                       accept_rate, steps, div, report)
