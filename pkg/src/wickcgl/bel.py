"""Variational flow of the Galerkin system and the Bismut-Elworthy-Li identity.

The primal scheme is exponential Euler for the direct Galerkin SDE.  Writing
``J = Pi_n K`` for the derivative in the initial condition, the direction

    w_k = K_k + h phi1(h L) N_k,   N_k = -nu [2(|u|^2 - c) J + u^2 conj(J)]

makes the derivative of ``u_N`` along the noise shift ``dW_k -> dW_k + eps w_k h``
equal to ``t_N J_N`` exactly, so

    E[ DPhi(u_N)(t J_N) ] = E[ Phi(u_N) sum_k 2 <w_k, dW_k>_R ].

The factor 2 is the Gaussian score for increments with ``E|dW|^2 = h``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .dyadic import BesovParams, besov_norm, partition_for
from .errors import ConfigurationError, InputError
from .ou import NoiseSource, OUState, ou_em_step, renorm_constant, wick_bundle, z_norm
from .solver import GalerkinOperators, SolverConfig
from .spectral import Grid, PhysParams, SpectralField, phi1


@dataclass
class VariationalState:
    J: SpectralField


@dataclass(frozen=True)
class CutoffSpec:
    threshold: float = 2.0
    alpha: float = 0.25
    tau2_threshold: float = 2.0
    sample_every: int = 1


def smooth_cutoff(x):
    """1 on [0, 1], 0 on [2, inf), smooth between."""
    from .spectral import smooth_step

    return 1.0 - smooth_step(np.abs(np.asarray(x, dtype=float)) - 1.0)


@dataclass
class BELReport:
    lhs_estimate: float
    lhs_stderr: float
    rhs_estimate: float
    rhs_stderr: float
    diff_stderr: float
    discarded_fraction: float
    replicas: int
    retained: int
    unreliable: bool
    znorm_quantiles: dict | None = None

    @property
    def z_score(self) -> float:
        return abs(self.lhs_estimate - self.rhs_estimate) / self.diff_stderr if self.diff_stderr > 0 else (
            0.0 if self.lhs_estimate == self.rhs_estimate else math.inf)

    def to_dict(self):
        d = asdict(self)
        d["z_score"] = self.z_score
        return d


def linearised_drift(u_values, J_values, c, nu, grid: Grid):
    """Truncated ``-nu [2(|u|^2 - c) J + u^2 conj(J)]`` from grid values."""
    a2 = (u_values * u_values.conj()).real
    return -nu * grid.from_grid(2 * (a2 - c) * J_values + u_values * u_values * J_values.conj())


def variational_step(v: VariationalState, u: SpectralField, c, h: float, params: PhysParams,
                     ops: GalerkinOperators | None = None) -> VariationalState:
    """Exponential Euler for ``J' = [(i+mu) Lap + lam] J - nu Pi_n[2(|u|^2-c) J + u^2 conj(J)]``."""
    if v.J.grid != u.grid:
        raise InputError("J and u live on different grids")
    ops = ops or GalerkinOperators(u.grid, params, h)
    c = float(getattr(c, "value", c))
    g = u.grid
    N = linearised_drift(g.to_grid(u.coeffs), g.to_grid(v.J.coeffs), c, params.nu, g)
    return VariationalState(SpectralField(g, ops.EL * v.J.coeffs + ops.PL * ops.a * N))


class CoupledSystem:
    """Primal state, variational field and OU field advanced with shared increments."""

    def __init__(self, grid: Grid, params: PhysParams, h: float, c: float | None = None,
                 linear: bool = False):
        self.grid = grid
        self.params = params
        self.nu = 0.0 if linear else params.nu
        self.h = h
        self.ops = GalerkinOperators(grid, params, h)
        self.c = renorm_constant(grid.n, params.mu).value if c is None else float(c)
        self.Pw = h * phi1(h * self.ops.L) * grid.mask
        self.active = self.ops.a > 0

    def step(self, u, K, dW, want_w: bool = True):
        """Advance ``(u, K)`` one step; returns ``(u', K', w)`` on raw coefficients."""
        g, ops = self.grid, self.ops
        uv = g.to_grid(u)
        J = ops.a * K
        N = linearised_drift(uv, g.to_grid(J), self.c, self.nu, g)
        w = np.where(self.active, K + self.Pw * N, 0.0) if want_w else None
        from .hermite import hermite_eval

        cub = -self.nu * ops.a * g.from_grid(hermite_eval(2, 1, uv, self.c))
        u_new = ops.EL * u + ops.PL * cub + ops.a * ops.EL * dW
        K_new = ops.EL * K + ops.PL * N
        return u_new, K_new, w


def tanh_mode0():
    """Observable ``Phi(u) = tanh(Re u_0)`` with its derivative."""

    def value(u: SpectralField):
        n = u.grid.n
        return np.tanh(u.coeffs[..., n, n].real)

    def derivative(u: SpectralField, v: SpectralField):
        n = u.grid.n
        return (1.0 / np.cosh(u.coeffs[..., n, n].real) ** 2) * v.coeffs[..., n, n].real

    return value, derivative


def linear_mode0():
    """Observable ``Phi(u) = Re u_0`` (unbounded; used for the linear closed form)."""

    def value(u):
        n = u.grid.n
        return u.coeffs[..., n, n].real

    def derivative(u, v):
        n = u.grid.n
        return v.coeffs[..., n, n].real

    return value, derivative


def _running_znorm(Z: OUState, t, cutoff: CutoffSpec, c, part):
    if t <= 0:
        return np.zeros(Z.Z.coeffs.shape[:-2])
    return z_norm(wick_bundle(Z.Z, c), t, cutoff.alpha, part)


def bel_estimator(phi, v0, h_dir, t: float, replicas: int, config: SolverConfig,
                  cutoff: CutoffSpec | None = None, batch: int = 20000, max_discard: float = 1e-3,
                  replica_offset: int = 0, linear: bool = False) -> BELReport:
    """Monte Carlo estimate of both sides of the BEL identity at time ``t``.

    ``linear=True`` drops the cubic term, leaving the Ornstein-Uhlenbeck dynamics.
    """
    cutoff = cutoff or CutoffSpec()
    value, deriv = phi
    grid = config.grid
    params = config.params
    h = config.h
    steps = int(round(t / h))
    if steps < 1 or abs(steps * h - t) > 1e-9 * max(t, 1):
        raise ConfigurationError(f"t={t} is not a positive multiple of h={h}")
    sys = CoupledSystem(grid, params, h, config.c_value, linear=linear)
    v0c = _as_coeffs(v0, grid)
    hc = _as_coeffs(h_dir, grid)
    part = partition_for(grid.n)
    lhs_all, rhs_all, keep_all, zn_all = [], [], [], []
    for start in range(0, replicas, batch):
        reps = np.arange(start, min(start + batch, replicas)) + replica_offset
        noise = NoiseSource(config.seed, reps)
        B = reps.size
        u = np.broadcast_to(v0c, (B,) + grid.shape).copy()
        K = np.broadcast_to(hc, (B,) + grid.shape).copy()
        Z = OUState(0.0, SpectralField(grid, np.zeros((B,) + grid.shape, dtype=complex)))
        mart = np.zeros(B)
        znorm = np.zeros(B)
        for k in range(steps):
            dW = noise.increment(grid, k, h) if config.noise else np.zeros((B,) + grid.shape, dtype=complex)
            u, K, w = sys.step(u, K, dW)
            mart += 2.0 * np.sum(w.real * dW.real + w.imag * dW.imag, axis=(-2, -1))
            Z = ou_em_step(Z, h, dW, params.mu)
            if (k + 1) % cutoff.sample_every == 0 or k + 1 == steps:
                znorm = np.maximum(znorm, _running_znorm(Z, (k + 1) * h, cutoff, sys.c, part))
        U = SpectralField(grid, u)
        Jf = SpectralField(grid, sys.ops.a * K)
        lhs_all.append(deriv(U, t * Jf))
        rhs_all.append(value(U) * mart)
        keep_all.append(znorm < cutoff.threshold)
        zn_all.append(znorm)
    lhs = np.concatenate(lhs_all)
    rhs = np.concatenate(rhs_all)
    keep = np.concatenate(keep_all)
    lhs_k = np.where(keep, lhs, 0.0)
    rhs_k = np.where(keep, rhs, 0.0)
    n = lhs.size
    se = lambda x: float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    frac = float(1.0 - keep.mean())
    zn = np.concatenate(zn_all)
    quant = {str(q): float(np.quantile(zn, q)) for q in (0.5, 0.99, 0.999)}
    quant["max"] = float(zn.max())
    return BELReport(
        lhs_estimate=math.fsum(lhs_k) / n, lhs_stderr=se(lhs_k),
        rhs_estimate=math.fsum(rhs_k) / n, rhs_stderr=se(rhs_k),
        diff_stderr=se(lhs_k - rhs_k), discarded_fraction=frac,
        replicas=n, retained=int(keep.sum()), unreliable=frac > max_discard,
        znorm_quantiles=quant,
    )


def _as_coeffs(f, grid: Grid):
    if isinstance(f, SpectralField):
        return (f.rebin(grid) if f.grid.n != grid.n else f).coeffs
    return np.asarray(f, dtype=complex)


def variational_trajectory(v0, h_dir, config: SolverConfig, replicas=(0,), eps: float | None = None):
    """Final ``(u, J)`` after ``config.T``; with ``eps`` also the perturbed primal ``u(v0 + eps h)``."""
    grid = config.grid
    sys = CoupledSystem(grid, config.params, config.h, config.c_value)
    noise = NoiseSource(config.seed, replicas)
    B = noise.batch[0]
    u = np.broadcast_to(_as_coeffs(v0, grid), (B,) + grid.shape).copy()
    K = np.broadcast_to(_as_coeffs(h_dir, grid), (B,) + grid.shape).copy()
    up = None if eps is None else u + eps * sys.ops.a * K
    zero = np.zeros_like(K)
    for k in range(config.steps):
        dW = noise.increment(grid, k, config.h) if config.noise else np.zeros((B,) + grid.shape, dtype=complex)
        u, K, _ = sys.step(u, K, dW, want_w=False)
        if up is not None:
            up, _, _ = sys.step(up, zero, dW, want_w=False)
    J = sys.ops.a * K
    return SpectralField(grid, u), SpectralField(grid, J), (None if up is None else SpectralField(grid, up))


def local_gradient_bound_check(v0, h_dir, config: SolverConfig, R: float = 1.0, kappa: float = 2.0,
                               gamma: float = 0.5, alpha0: float = 0.5, alpha1: float = 0.5,
                               replicas=(0,)):
    """``sup_{t <= T*} t^gamma ||J(t)||_{B^{alpha1}} / ||h||_{B^{-alpha0}}`` with ``T* = (1+R)^{-kappa}``."""
    grid = config.grid
    part = partition_for(grid.n)
    v0c = _as_coeffs(v0, grid)
    v0_norm = float(np.max(besov_norm(SpectralField(grid, v0c), BesovParams(-alpha0), part)))
    if v0_norm > R * (1 + 1e-12):
        raise ConfigurationError(f"initial datum norm {v0_norm:.3g} exceeds R={R}")
    T_star = (1.0 + R) ** (-kappa)
    steps = max(1, int(math.floor(T_star / config.h)))
    sys = CoupledSystem(grid, config.params, config.h, config.c_value)
    noise = NoiseSource(config.seed, replicas)
    B = noise.batch[0]
    hc = _as_coeffs(h_dir, grid)
    h_norm = float(besov_norm(SpectralField(grid, sys.ops.a * hc), BesovParams(-alpha0), part))
    if h_norm == 0:
        raise InputError("direction has zero norm after projection")
    u = np.broadcast_to(v0c, (B,) + grid.shape).copy()
    K = np.broadcast_to(hc, (B,) + grid.shape).copy()
    sup = np.zeros(B)
    for k in range(steps):
        dW = noise.increment(grid, k, config.h) if config.noise else np.zeros((B,) + grid.shape, dtype=complex)
        u, K, _ = sys.step(u, K, dW, want_w=False)
        t = (k + 1) * config.h
        Jn = besov_norm(SpectralField(grid, sys.ops.a * K), BesovParams(alpha1), part)
        sup = np.maximum(sup, t ** gamma * Jn)
    return {"T_star": T_star, "steps": steps, "h_norm": h_norm, "ratio": (sup / h_norm).tolist(),
            "max_ratio": float(np.max(sup / h_norm))}
