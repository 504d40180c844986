"""Time integration of the renormalised stochastic complex Ginzburg-Landau equation.

Two formulations share one Galerkin drift
``(i+mu) Lap u + lam u - nu Pi_n H_{2,1}(u, c)`` with additive noise
``sum_m a_m e_m dW_m``:

* ``split_exp_euler``: ``u = Z + Y`` with ``Z`` the OU field and
  ``Y' = A Y + (1+lam)(Z+Y) - nu Pi_n H_{2,1}(Y+Z, c)``;
* ``galerkin_sde``: exponential Euler on ``u`` directly;
* ``galerkin_cubic_flow``: Lie splitting of the direct system, solving the
  pointwise cubic ODE exactly and the linear part exactly; the increment is
  scaled to the exact OU variance of each mode.  It is robust for very large
  initial data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dyadic import BesovParams, besov_norm, collocation_size, partition_for
from .errors import BlowUpError, ConfigurationError, InputError
from .hermite import hermite_eval
from .ou import (NoiseSource, OUState, RenormConstant, WickBundle, fine_increment, ou_em_step,
                 ou_exact_step, ou_initial, renorm_constant, wick_values)
from .spectral import (Grid, PhysParams, SpectralField, cutoff_array, gradient, lambda_A,
                       lambda_Delta, phi1)

SCHEMES = ("split_exp_euler", "galerkin_sde", "galerkin_cubic_flow")


@dataclass
class SolverConfig:
    params: PhysParams = field(default_factory=PhysParams)
    n: int = 32
    N: int | None = None
    h: float = 1e-3
    T: float = 1.0
    scheme: str = "split_exp_euler"
    ou_init: str = "zero"
    seed: int = 0
    replicas: int = 1
    snapshot_every: int = 0
    sample_every: int = 1
    lp_exponents: tuple = (2, 4)
    besov_alpha: float = 0.5
    noise: bool = True
    shared_noise: bool = False
    refine: int = 1
    c_value: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.h > 0:
            raise ConfigurationError("h must be positive")
        if self.T < self.h:
            raise ConfigurationError("T must be at least h")
        if any(p < 2 for p in self.lp_exponents):
            raise ConfigurationError("energy diagnostics need p >= 2")
        if self.replicas < 1 or self.refine < 1 or self.sample_every < 1:
            raise ConfigurationError("replicas, refine and sample_every must be positive")
        if self.snapshot_every < 0:
            raise ConfigurationError("snapshot_every must be nonnegative")

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.N)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.h))

    def constant(self) -> float:
        if self.c_value is not None:
            return float(self.c_value)
        return renorm_constant(self.n, self.params.mu).value


class GalerkinOperators:
    """Per-mode factors of one (grid, params, h) combination."""

    def __init__(self, grid: Grid, params: PhysParams, h: float):
        self.grid = grid
        self.params = params
        self.h = h
        self.a = cutoff_array(grid)
        self.lamA = lambda_A(params.mu).values(grid)
        self.EA = np.exp(-h * self.lamA) * grid.mask
        self.PA = h * phi1(-h * self.lamA) * grid.mask
        self.L = lambda_Delta(params.mu).values(grid) - params.lam
        self.EL = np.exp(-h * self.L) * grid.mask
        self.PL = h * phi1(-h * self.L) * grid.mask
        x = 2.0 * h * self.L.real
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(np.abs(x) < 1e-12, 1.0, -np.expm1(-x) / np.where(x == 0, 1.0, x))
        self.SL = np.sqrt(ratio) * grid.mask

    def h21(self, u_coeffs, c):
        """Truncated ``H_{2,1}(u, c)`` and the grid values of ``u``."""
        v = self.grid.to_grid(u_coeffs)
        return self.grid.from_grid(hermite_eval(2, 1, v, c)), v

    def cubic_drift(self, u_coeffs, c):
        return -self.params.nu * self.a * self.h21(u_coeffs, c)[0]


# -- nonlinearity --------------------------------------------------------------


def psi_values(Yv, wv: dict, params: PhysParams):
    """Pointwise shifted nonlinearity from grid values of ``Y`` and the Wick powers of ``Z``."""
    Z = wv[(1, 0)]
    Yb = Yv.conj()
    Y2 = Yv * Yv
    cubic = (Y2 * Yb + 2 * Z * Yv * Yb + Z.conj() * Y2 + 2 * wv[(1, 1)] * Yv + wv[(2, 0)] * Yb
             + wv[(2, 1)])
    return (1 + params.lam) * (Z + Yv), -params.nu * cubic


def nonlinearity_psi(Y: SpectralField, zb: WickBundle, params: PhysParams, project: bool = False):
    """``(1+lam)(Z+Y) - nu(|Y|^2 Y + 2Z|Y|^2 + conj(Z) Y^2 + 2 Z^{1,1} Y + Z^{2,0} conj(Y) + Z^{2,1})``.

    With ``project=True`` the cubic part is passed through the smooth projector.
    """
    if Y.grid != zb.z10.grid:
        raise InputError("Y and the Wick bundle live on different grids")
    grid = Y.grid
    wv = zb.values or {kl: zb[kl].to_grid() for kl in ((1, 0), (2, 0), (1, 1), (2, 1))}
    lin, cub = psi_values(Y.to_grid(), wv, params)
    cub = grid.from_grid(cub)
    if project:
        cub = cub * cutoff_array(grid)
    return SpectralField(grid, grid.from_grid(lin) + cub)


# -- split scheme ----------------------------------------------------------------


@dataclass
class SplitState:
    t: float
    Y: SpectralField
    ou: OUState
    c: float
    step: int = 0

    @property
    def u(self) -> SpectralField:
        return SpectralField(self.Y.grid, self.Y.coeffs + self.ou.Z.coeffs)


def _shifted_drift(ops: GalerkinOperators, Y, Z, c):
    """Projected shifted nonlinearity on raw coefficients."""
    grid = ops.grid
    Zv = grid.to_grid(Z)
    lin, cub = psi_values(grid.to_grid(Y), wick_values(Zv, c), ops.params)
    return grid.from_grid(lin) + ops.a * grid.from_grid(cub)


def step_shifted(state: SplitState, ops: GalerkinOperators, noise: NoiseSource | None = None,
                 dW=None) -> SplitState:
    """One exponential Euler step for ``Y`` with the OU field advanced alongside.

    With ``dW`` given the OU field uses the same explicit increment
    (``ou_em_step``); otherwise it is sampled exactly from ``noise``; with
    neither it is propagated deterministically.
    """
    psi = _shifted_drift(ops, state.Y.coeffs, state.ou.Z.coeffs, state.c)
    Y = ops.EA * state.Y.coeffs + ops.PA * psi
    mu = ops.params.mu
    if dW is not None:
        ou = ou_em_step(state.ou, ops.h, dW, mu)
    elif noise is not None:
        ou = ou_exact_step(state.ou, ops.h, noise, mu)
    else:
        ou = ou_em_step(state.ou, ops.h, np.zeros_like(state.ou.Z.coeffs), mu)
    return SplitState(state.t + ops.h, SpectralField(ops.grid, Y), ou, state.c, state.step + 1)


# -- direct schemes --------------------------------------------------------------


def step_galerkin_sde(u: SpectralField, c, h: float, dW, params: PhysParams,
                      ops: GalerkinOperators | None = None) -> SpectralField:
    """Exponential Euler for the direct Galerkin SDE."""
    ops = ops or GalerkinOperators(u.grid, params, h)
    c = float(c.value) if isinstance(c, RenormConstant) else float(c)
    dW = 0.0 if dW is None else (dW.coeffs if isinstance(dW, SpectralField) else dW)
    out = ops.EL * u.coeffs + ops.PL * ops.cubic_drift(u.coeffs, c) + ops.a * ops.EL * dW
    return SpectralField(u.grid, out)


def cubic_flow_values(v, c, nu: complex, h: float):
    """Exact time-``h`` flow of ``v' = -nu (|v|^2 - 2c) v``, pointwise."""
    r0 = (v * v.conj()).real
    kappa = 2.0 * c
    rn = nu.real
    if kappa == 0:
        g = 2.0 * rn * h
        E = 1.0
    else:
        g = -math.expm1(-2.0 * rn * kappa * h) / kappa
        E = math.exp(-2.0 * rn * kappa * h)
    ratio = 1.0 / (r0 * g + E)
    if nu.imag == 0:
        return v * np.sqrt(ratio)
    return v * np.exp(nu / (2.0 * rn) * np.log(ratio))


def step_cubic_flow(u: SpectralField, c, h: float, dW, params: PhysParams,
                    ops: GalerkinOperators | None = None) -> SpectralField:
    ops = ops or GalerkinOperators(u.grid, params, h)
    c = float(c.value) if isinstance(c, RenormConstant) else float(c)
    grid = u.grid
    v = grid.to_grid(u.coeffs)
    incr = grid.from_grid(cubic_flow_values(v, c, params.nu, h) - v)
    ustar = u.coeffs + ops.a * incr
    dW = 0.0 if dW is None else (dW.coeffs if isinstance(dW, SpectralField) else dW)
    return SpectralField(grid, ops.EL * ustar + ops.a * ops.SL * dW)


# -- diagnostics ---------------------------------------------------------------


def _lp_grid(n: int, p: float) -> Grid:
    return Grid(n, collocation_size(n, p), dealias=False)


def gradient_weight_values(Y: SpectralField, p: float, N: int | None = None):
    """Grid values of ``|grad Y|^2 |Y|^{p-2}`` (summed over both directions)."""
    g = Grid(Y.grid.n, N or collocation_size(Y.grid.n, p + 2), dealias=False)
    Yv = g.to_grid(Y.coeffs)
    gx, gy = gradient(Y)
    dx, dy = g.to_grid(gx.coeffs), g.to_grid(gy.coeffs)
    return (np.abs(dx) ** 2 + np.abs(dy) ** 2) * np.abs(Yv) ** (p - 2)


def gradient_pairing_values(Y: SpectralField, p: float, mu: float, N: int | None = None):
    """Grid values of ``Re[-(i+mu) grad Y . grad(conj(Y)|Y|^{p-2})]``."""
    g = Grid(Y.grid.n, N or collocation_size(Y.grid.n, p + 2), dealias=False)
    Yv = g.to_grid(Y.coeffs)
    gx, gy = gradient(Y)
    out = 0.0
    for d in (g.to_grid(gx.coeffs), g.to_grid(gy.coeffs)):
        if p == 2:
            dw = d.conj()
        else:
            a2 = (Yv * Yv.conj()).real
            dw = (p / 2) * a2 ** ((p - 2) / 2) * d.conj() + ((p - 2) / 2) * a2 ** ((p - 4) / 2) * Yv.conj() ** 2 * d
        out = out + d * dw
    return (-(1j + mu) * out).real


def dissipativity_delta(mu: float, p: float) -> float:
    return mu * p / 2 - (p - 2) / 2 * math.sqrt(mu * mu + 1)


def critical_p(mu: float) -> float:
    return 2 * (1 + mu * mu + mu * math.sqrt(1 + mu * mu))


def field_diagnostics(Y: SpectralField, u: SpectralField, lp_exponents, alpha: float, part=None):
    """Per-replica scalar diagnostics."""
    out = {}
    for p in lp_exponents:
        g = _lp_grid(Y.grid.n, p + 2)
        Yv = g.to_grid(Y.coeffs)
        a = np.abs(Yv)
        out[f"Y_Lp{p}"] = np.mean(a ** p, axis=(-2, -1))
        out[f"Y_Lp{p + 2}_pot"] = np.mean(a ** (p + 2), axis=(-2, -1))
        out[f"grad_term_p{p}"] = np.mean(gradient_weight_values(Y, p, g.N), axis=(-2, -1))
    out[f"u_besov_m{alpha}"] = besov_norm(u, BesovParams(-alpha), part or partition_for(u.grid.n))
    return out


def lp_energy_residual(trajectory, p: float, params: PhysParams, c: float, project: bool = True):
    """Residual of the L^p identity along a stored split-scheme trajectory.

    ``trajectory`` is a sequence of ``(t, Y, Z)`` with every step stored.  The
    drift used is the one the split scheme integrates, so the residual measures
    only time discretisation error.  Returns ``(times, residuals)``.
    """
    if len(trajectory) < 2:
        raise InputError("trajectory needs at least two stored states")
    times, lp, rhs = [], [], []
    for t, Y, Z in trajectory:
        grid = Y.grid
        g = Grid(grid.n, collocation_size(grid.n, p + 2), dealias=False)
        Yv = g.to_grid(Y.coeffs)
        a2 = (Yv * Yv.conj()).real
        wgt = Yv.conj() * a2 ** ((p - 2) / 2)
        ops_a = cutoff_array(grid) if project else 1.0
        Zv = grid.to_grid(Z.coeffs)
        lin, cub = psi_values(grid.to_grid(Y.coeffs), wick_values(Zv, c), params)
        psi = grid.from_grid(lin) + ops_a * grid.from_grid(cub)
        psiv = g.to_grid(psi)
        grad = np.mean(gradient_pairing_values(Y, p, params.mu, g.N), axis=(-2, -1))
        lpp = np.mean(a2 ** (p / 2), axis=(-2, -1))
        nl = np.mean(psiv * wgt, axis=(-2, -1)).real
        times.append(t)
        lp.append(lpp)
        rhs.append(grad - lpp + nl)
    times = np.asarray(times)
    lp = np.asarray(lp)
    rhs = np.asarray(rhs)
    dt = np.diff(times).reshape((-1,) + (1,) * (rhs.ndim - 1))
    integral = np.concatenate([np.zeros_like(rhs[:1]), np.cumsum(0.5 * dt * (rhs[1:] + rhs[:-1]), axis=0)])
    return times, (lp - lp[0]) / p - integral


# -- driver --------------------------------------------------------------------


@dataclass
class BlowUpRecord:
    replica: int
    t: float
    step: int
    last_norms: dict


@dataclass
class RunResult:
    samples: list
    blowups: list
    final: dict


class Simulation:
    """Batched trajectories of one scheme; replicas run in lockstep."""

    def __init__(self, config: SolverConfig, replicas=None, noise: NoiseSource | None = None):
        self.config = config
        self.grid = config.grid
        self.params = config.params
        self.c = config.constant()
        self.ops = GalerkinOperators(self.grid, self.params, config.h)
        reps = np.arange(config.replicas) if replicas is None else np.asarray(replicas)
        self.noise = noise or NoiseSource(config.seed, reps)
        self.batch = self.noise.batch
        self.part = partition_for(self.grid.n)
        self.t = 0.0
        self.step_index = 0
        self.alive = np.ones(self.batch, dtype=bool)
        self.blowups: list[BlowUpRecord] = []
        self._last_norms = {}

    # state handling
    def initialise(self, u0=None, Y0=None):
        zero = np.zeros(self.batch + self.grid.shape, dtype=complex)
        start = zero if u0 is None else np.broadcast_to(_coeffs(u0, self.grid), zero.shape).copy()
        if self.config.scheme == "split_exp_euler":
            ou = ou_initial(self.grid, self.params.mu, self.noise, self.config.ou_init)
            Y = start - ou.Z.coeffs if Y0 is None else np.broadcast_to(_coeffs(Y0, self.grid), zero.shape).copy()
            self.state = SplitState(0.0, SpectralField(self.grid, Y), ou, self.c, 0)
        else:
            if self.config.ou_init != "zero":
                ou = ou_initial(self.grid, self.params.mu, self.noise, self.config.ou_init)
                start = start + ou.Z.coeffs
            self.state = SpectralField(self.grid, start)
        self.t = 0.0
        self.step_index = 0
        return self

    def restore(self, t: float, step: int, u=None, Y=None, Z=None):
        if self.config.scheme == "split_exp_euler":
            ou = OUState(t, SpectralField(self.grid, np.asarray(Z, dtype=complex)), step)
            self.state = SplitState(t, SpectralField(self.grid, np.asarray(Y, dtype=complex)), ou, self.c, step)
        else:
            self.state = SpectralField(self.grid, np.asarray(u, dtype=complex))
        self.t = t
        self.step_index = step
        return self

    @property
    def u(self) -> SpectralField:
        return self.state.u if isinstance(self.state, SplitState) else self.state

    @property
    def Y(self) -> SpectralField:
        return self.state.Y if isinstance(self.state, SplitState) else self.state

    def increment(self, step: int):
        cfg = self.config
        if not cfg.noise:
            return np.zeros(self.batch + self.grid.shape, dtype=complex)
        if cfg.refine == 1:
            return self.noise.increment(self.grid, step, cfg.h)
        return fine_increment(self.noise, self.grid, step, cfg.h, cfg.refine)

    def advance(self):
        cfg = self.config
        k = self.step_index
        with np.errstate(all="ignore"):
            if cfg.scheme == "split_exp_euler":
                if cfg.noise and not cfg.shared_noise and cfg.refine == 1:
                    self.state = step_shifted(self.state, self.ops, noise=self.noise)
                else:
                    self.state = step_shifted(self.state, self.ops, dW=self.increment(k))
            elif cfg.scheme == "galerkin_sde":
                self.state = step_galerkin_sde(self.state, self.c, cfg.h, self.increment(k), self.params, self.ops)
            else:
                self.state = step_cubic_flow(self.state, self.c, cfg.h, self.increment(k), self.params, self.ops)
        self.step_index += 1
        self.t = self.step_index * cfg.h
        self._check_finite()

    def _check_finite(self):
        arrays = [self.u.coeffs]
        ok = np.all(np.isfinite(arrays[0]), axis=(-2, -1)) & self.alive
        newly = self.alive & ~ok
        if newly.any():
            for r in np.nonzero(newly)[0]:
                last = {k: float(np.asarray(v)[r]) for k, v in self._last_norms.items()}
                self.blowups.append(BlowUpRecord(int(self.noise.replicas[r]), self.t, self.step_index, last))
            self.alive &= ok
            self._zero_dead()

    def _zero_dead(self):
        dead = ~self.alive
        if isinstance(self.state, SplitState):
            self.state.Y.coeffs[dead] = 0
            self.state.ou.Z.coeffs[dead] = 0
        else:
            self.state.coeffs[dead] = 0

    def diagnostics(self):
        with np.errstate(over="ignore", invalid="ignore"):
            d = field_diagnostics(self.Y, self.u, self.config.lp_exponents, self.config.besov_alpha, self.part)
        self._last_norms = d
        return d

    def run(self, steps: int | None = None, on_sample=None, on_step=None, raise_on_blowup=False):
        """Advance ``steps`` steps (default: to ``T``), sampling diagnostics every ``sample_every``."""
        steps = self.config.steps - self.step_index if steps is None else steps
        samples = []
        if self.step_index == 0:
            samples.append(self._sample(on_sample))
        for _ in range(steps):
            self.advance()
            if raise_on_blowup and self.blowups:
                b = self.blowups[0]
                raise BlowUpError(b.t, b.step, b.last_norms)
            if on_step is not None:
                on_step(self)
            if self.step_index % self.config.sample_every == 0:
                samples.append(self._sample(on_sample))
        return RunResult(samples, list(self.blowups), {"t": self.t, "step": self.step_index})

    def _sample(self, on_sample):
        d = self.diagnostics()
        rec = {"t": self.t, "step": self.step_index, "alive": self.alive.copy(), **d}
        if on_sample is not None:
            on_sample(self, rec)
        return rec


def _coeffs(f, grid: Grid):
    if isinstance(f, SpectralField):
        if f.grid.n != grid.n:
            f = f.rebin(grid)
        return f.coeffs
    return np.asarray(f, dtype=complex)


# -- coming down from infinity -----------------------------------------------------


def coming_down_experiment(R_values, t0: float, replicas: int, config: SolverConfig, p: float = 2.0,
                           alpha: float = 0.5):
    """Median and p-mean of ``||u(t0)||_{B^{-alpha}_{inf,inf}}`` started from ``R e_0``.

    Each ``R`` uses an independent block of replica streams.
    """
    if t0 < 10 * config.h:
        raise ConfigurationError("t0 must be at least 10 steps")
    cfg = replace(config, T=t0, replicas=replicas)
    steps = int(round(t0 / cfg.h))
    rows = []
    part = partition_for(cfg.n)
    for i, R in enumerate(R_values):
        sim = Simulation(cfg, replicas=np.arange(replicas) + i * replicas)
        sim.initialise(u0=cfg.grid.mode((0, 0), R))
        sup_stat = np.zeros(replicas)
        for _ in range(steps):
            sim.advance()
        norms = besov_norm(sim.u, BesovParams(-alpha), part)
        norms = np.where(sim.alive, norms, np.nan)
        live = norms[sim.alive]
        rows.append({
            "R": float(R),
            "median": float(np.median(live)) if live.size else math.nan,
            "p_mean": float(np.mean(live ** p) ** (1 / p)) if live.size else math.nan,
            "blowups": int((~sim.alive).sum()),
            "replicas": replicas,
        })
    return rows


def scalar_mode0_rhs(y, lam: complex, nu: complex):
    """Noise-free mode-0 equation ``y' = -y + (1+lam) y - nu |y|^2 y``."""
    return -y + (1 + lam) * y - nu * abs(y) ** 2 * y
