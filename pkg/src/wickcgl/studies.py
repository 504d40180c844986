"""Numerical studies backing the acceptance suite and the CLI ``--check`` mode.

Each study returns a plain dict with the measured quantities and a boolean
``passed`` evaluated at the stated tolerance.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import hermite as hm
from .bel import (CutoffSpec, bel_estimator, linear_mode0, tanh_mode0, variational_trajectory)
from .dyadic import BesovParams, besov_norm, partition_for
from .kernels import script_K
from .ou import (NoiseSource, OUState, exact_variance, ou_exact_step, ou_initial, renorm_constant,
                 wick_bundle)
from .solver import (GalerkinOperators, SolverConfig, Simulation, coming_down_experiment, dissipativity_delta,
                     gradient_pairing_values, gradient_weight_values, lp_energy_residual)
from .spectral import (Grid, PhysParams, SpectralField, cutoff_array, fast_size, lambda_A,
                       semigroup_apply)


def _slope(x, y):
    return float(np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)[0])


# 1 ---------------------------------------------------------------------------

def renorm_slope(mu: float, ns=(16, 32, 64, 128, 256, 512), tol: float = 0.10):
    cs = [renorm_constant(n, mu).value for n in ns]
    slope = _slope(np.log(ns), cs)
    target = 1.0 / (4 * math.pi * mu)
    return {"mu": mu, "n": list(ns), "c_n": cs, "slope": slope, "target": target,
            "rel_error": abs(slope / target - 1), "passed": abs(slope / target - 1) <= tol}


# 2 ---------------------------------------------------------------------------

def kernel_log_sweep(mu: float = 1.0, xs=None, bound: float = 1.0, slope_tol: float = 0.02):
    xs = np.logspace(-4, math.log10(0.4), 25) if xs is None else np.asarray(xs)
    vals = np.array([script_K(0.0, (x, 0.0), mu).real for x in xs])
    dev = vals - np.log(1 / xs) / (4 * math.pi * mu)
    slope = _slope(np.log(xs), dev)
    return {"x": xs.tolist(), "K0": vals.tolist(), "deviation": dev.tolist(),
            "max_abs_deviation": float(np.abs(dev).max()), "slope": slope,
            "passed": bool(np.abs(dev).max() <= bound and abs(slope) < slope_tol)}


# 3 ---------------------------------------------------------------------------

def hermite_identities(max_kl: int = 6, cs=(0.0, 0.5, 2.0), tol: float = 1e-12):
    """Recursions, binomial shift, conjugation and ``c = 0`` collapse on a 5x5 complex grid.

    Relative errors are measured against the sum of absolute values of the
    terms on the right-hand side, which is the scale at which cancellation occurs.
    """
    ax = np.linspace(-2.1, 1.9, 5) * math.sqrt(1.1)
    z = (ax[:, None] + 1j * ax[None, :]).ravel()
    H = lambda k, l, w, c: hm.hermite_eval(k, l, w, c, max_degree=2 * max_kl + 2) if k >= 0 and l >= 0 else np.zeros_like(w)
    err = {"rec_i": 0.0, "rec_ii": 0.0, "shift": 0.0, "conj": 0.0, "collapse": 0.0}

    def rel(a, terms):
        scale = np.maximum(sum(np.abs(t) for t in terms), 1e-300)
        return float(np.max(np.abs(a - sum(terms)) / scale))

    for c in cs:
        for k in range(max_kl + 1):
            for l in range(max_kl + 1):
                err["rec_i"] = max(err["rec_i"], rel(H(k + 1, l, z, c), [z * H(k, l, z, c), -c * l * H(k, l - 1, z, c)]))
                err["rec_ii"] = max(err["rec_ii"], rel(H(k, l + 1, z, c), [z.conj() * H(k, l, z, c), -c * k * H(k - 1, l, z, c)]))
                err["conj"] = max(err["conj"], rel(np.conj(H(k, l, z, c)), [H(l, k, z, c)]))
                if c == 0:
                    err["collapse"] = max(err["collapse"], rel(H(k, l, z, c), [z ** k * z.conj() ** l]))
        x = 0.3 - 0.7j
        for k in range(4):
            for l in range(4):
                terms = [math.comb(k, i) * math.comb(l, j) * x ** i * np.conj(x) ** j * H(k - i, l - j, z, c)
                         for i in range(k + 1) for j in range(l + 1)]
                err["shift"] = max(err["shift"], rel(H(k, l, x + z, c), terms))
    return {"errors": err, "passed": max(err.values()) <= tol}


# 4 ---------------------------------------------------------------------------

def chaos_moments(samples: int = 10 ** 6, c: float = 0.8, seed: int = 0, max_deg: int = 3):
    """Gram matrix of ``H_{k,l}(Z, c)`` under ``E|Z|^2 = c`` against ``k! l! c^{k+l}`` on the diagonal."""
    rng = np.random.default_rng(seed)
    Z = hm.isotropic_normal(rng, c, samples)
    idx = [(k, l) for d in range(max_deg + 1) for k in range(d + 1) for l in [d - k]]
    H = np.stack([hm.hermite_eval(k, l, Z, c) for k, l in idx])
    worst = 0.0
    table = []
    for i, a in enumerate(idx):
        for j in range(i, len(idx)):
            b = idx[j]
            prod = H[i] * H[j].conj()
            mean = prod.mean()
            se = math.sqrt((prod.real.var() + prod.imag.var()) / samples)
            target = math.factorial(a[0]) * math.factorial(a[1]) * c ** sum(a) if a == b else 0.0
            gap = abs(mean - target)
            z = gap / se if se > 0 else (0.0 if gap <= 1e-12 else math.inf)
            worst = max(worst, z)
            table.append({"a": a, "b": b, "mean": complex(mean), "target": target, "z": z})
    return {"entries": table, "max_z": worst, "passed": worst <= 3.0}


def product_formula_check(samples: int = 10 ** 6, seed: int = 1):
    """``E|J_{1,0}(f)|^2`` against the full contraction, and the centred chaos term."""
    rng = np.random.default_rng(seed)
    cells = hm.CellSystem.from_masses([0.5, 1.5, 2.0])
    f = hm.SimpleKernel(hm.WickIndex(1, 0), {(0,): 1.0 + 0.5j, (1,): -0.7, (2,): 0.3j})
    fbar = f.conj()
    const = hm.contract(f, fbar, [(1, 1)], cells)
    tensor = hm.contract(f, fbar, [], cells)
    draws = hm.sample_cells(cells, rng, samples)
    J = hm.chaos_integral(f, draws)
    sq = np.abs(J) ** 2
    centred = hm.chaos_integral(tensor, draws)
    c0 = const.coefficients.get((), 0.0)
    z_const = abs(sq.mean() - c0) / (sq.std() / math.sqrt(samples))
    z_centred = abs(centred.mean()) / math.sqrt((centred.real.var() + centred.imag.var()) / samples)
    # second-moment bound for an order (2,1) kernel
    g = hm.SimpleKernel(hm.WickIndex(2, 1), {(0, 1, 2): 1.0, (1, 0, 2): -0.5j, (2, 1, 0): 0.8})
    Jg = hm.chaos_integral(g, draws)
    m2 = np.mean(np.abs(Jg) ** 2)
    se2 = np.std(np.abs(Jg) ** 2) / math.sqrt(samples)
    bound = 2 * 1 * g.norm2(cells)
    return {"E_abs2": float(sq.mean()), "contraction": complex(c0), "z_const": z_const,
            "z_centred": z_centred, "second_moment": float(m2), "bound": bound,
            "passed": bool(z_const <= 3 and z_centred <= 3 and m2 <= bound + 3 * se2)}


# 5 ---------------------------------------------------------------------------

def ou_stationary_variance(n: int = 8, mu: float = 1.0, samples: int = 10 ** 5, seed: int = 2,
                           modes=((0, 0), (1, 0), (1, 1), (2, 1), (3, 1), (4, 3), (5, 4))):
    grid = Grid(n)
    noise = NoiseSource(seed, np.arange(samples))
    st = ou_initial(grid, mu, noise, "zero")
    st = ou_exact_step(st, 60.0, noise, mu)
    lam = lambda_A(mu).values(grid)
    a = cutoff_array(grid)
    rows = []
    worst = 0.0
    for m in modes:
        i, j = m[0] + n, m[1] + n
        v = np.abs(st.Z.coeffs[:, i, j]) ** 2
        target = a[i, j] ** 2 / (2 * lam[i, j].real)
        se = v.std() / math.sqrt(samples)
        z = abs(v.mean() - target) / se if se > 0 else (0.0 if v.mean() == target else math.inf)
        worst = max(worst, z)
        rows.append({"m": m, "mc": float(v.mean()), "target": float(target), "z": z})
    # two half steps versus one step: mean map and variance, analytically
    h = 0.37
    lam_r = lam
    mean_err = np.max(np.abs(np.exp(-lam_r * h / 2) ** 2 - np.exp(-lam_r * h)))
    var_two = np.abs(np.exp(-lam_r * h / 2)) ** 2 * exact_variance(lam_r, h / 2) + exact_variance(lam_r, h / 2)
    var_err = np.max(np.abs(var_two - exact_variance(lam_r, h)) / exact_variance(lam_r, h))
    return {"modes": rows, "max_z": worst, "mean_map_err": float(mean_err), "var_rel_err": float(var_err),
            "passed": bool(worst <= 3 and mean_err <= 1e-14 and var_err <= 1e-14)}


# 6 ---------------------------------------------------------------------------

def lp_suite(fields: int = 100, n: int = 16, seed: int = 3):
    rng = np.random.default_rng(seed)
    grid = Grid(n)
    part = partition_for(n)
    f = grid.random(rng, batch=(fields,), decay=0.5)
    recon = sum(f.coeffs * part.weight(k, grid.absm) for k in part.blocks)
    recon_err = float(np.max(np.abs(recon - f.coeffs)))
    viol = {"alpha": 0, "p": 0, "interp": 0}
    alphas = (-0.5, 0.0, 0.5)
    for q in (1.0, 2.0, math.inf):
        for p in (1.0, 2.0, 4.0, math.inf):
            norms = [besov_norm(f, BesovParams(a, p, q), part) for a in alphas]
            for lo, hi in zip(norms, norms[1:]):
                viol["alpha"] += int(np.sum(lo > hi * (1 + 1e-12)))
            for nu in (0.25, 0.5, 0.75):
                a0, a1 = -0.5, 0.5
                mid = besov_norm(f, BesovParams((1 - nu) * a0 + nu * a1, p, q), part)
                viol["interp"] += int(np.sum(mid > norms[0] ** (1 - nu) * norms[2] ** nu * (1 + 1e-12)))
        for a in alphas:
            byp = [besov_norm(f, BesovParams(a, p, q), part) for p in (1.0, 2.0, 4.0, math.inf)]
            for lo, hi in zip(byp, byp[1:]):
                viol["p"] += int(np.sum(lo > hi * (1 + 1e-12)))
    return {"reconstruction_error": recon_err, "violations": viol,
            "passed": bool(recon_err <= 1e-12 and sum(viol.values()) == 0)}


# 7 ---------------------------------------------------------------------------

def _mode_family(grid: Grid):
    n = grid.n
    ms = sorted({(j, 0) for j in range(n + 1)} | {(j, j) for j in range(1, int(n / math.sqrt(2)) + 1)})
    F = np.zeros((len(ms),) + grid.shape, dtype=complex)
    for i, (a, b) in enumerate(ms):
        F[i, a + n, b + n] = 1.0
    return SpectralField(grid, F)


def semigroup_slope(beta: float, alpha: float, mu: float, t_range, kind: str = "smoothing",
                    n: int = 64, points: int = 13, tol: float = 0.15):
    """Fitted exponent of ``sup_f ||e^{tA} f||_{B^alpha} / ||f||_{B^beta}`` (or of ``(1 - e^{tA}) f``)."""
    grid = Grid(n, 2 * n + 2, dealias=False)
    part = partition_for(n)
    F = _mode_family(grid)
    den = besov_norm(F, BesovParams(beta), part)
    ts = np.logspace(math.log10(t_range[0]), math.log10(t_range[1]), points)
    ratios = []
    for t in ts:
        e = semigroup_apply(F, t, lambda_A(mu))
        if kind == "time":
            e = F - e
        ratios.append(float(np.max(besov_norm(e, BesovParams(alpha), part) / den)))
    slope = _slope(np.log(ts), np.log(ratios))
    target = -(alpha - beta) / 2
    return {"beta": beta, "alpha": alpha, "mu": mu, "t_range": list(t_range), "slope": slope,
            "target": target, "rel_error": abs(slope / target - 1),
            "passed": abs(slope / target - 1) <= tol}


def block_normalised_fields(grid: Grid, lam: float, fields: int, rng, part=None):
    """Random fields whose dyadic blocks have ``L^inf`` norm ``2^{-k lam}``, saturating ``B^lam_{inf,inf}``."""
    from .dyadic import block_norms

    part = part or partition_for(grid.n)
    g = grid.random(rng, batch=(fields,), decay=0.0)
    out = np.zeros_like(g.coeffs)
    for i, k in enumerate(part.blocks):
        blk = SpectralField(grid, g.coeffs * part.weight(k, grid.absm))
        nrm = block_norms(blk, math.inf, part)[i]
        out += blk.coeffs * (2.0 ** (-max(k, 0) * lam) / nrm)[:, None, None]
    return SpectralField(grid, out)


def pi_decay(lam: float = 0.5, delta: float = 0.5, ns=(8, 16, 32, 64), band: int = 128, fields: int = 8,
             seed: int = 4):
    """Fitted exponent of ``sup_f ||Pi_n f - f||_{B^{lam-delta}} / ||f||_{B^lam}`` in ``n``.

    The sup runs over two random families: power-law coefficient decay and
    fields normalised block by block.
    """
    from .spectral import project_pi

    rng = np.random.default_rng(seed)
    grid = Grid(band, 2 * band + 2, dealias=False)
    part = partition_for(band)
    fams = [grid.random(rng, batch=(fields,), decay=lam + 1.0),
            block_normalised_fields(grid, lam, fields, rng, part)]
    ratios = np.zeros(len(ns))
    for f in fams:
        den = besov_norm(f, BesovParams(lam), part)
        for i, n in enumerate(ns):
            d = project_pi(f, n) - f
            ratios[i] = max(ratios[i], float(np.max(besov_norm(d, BesovParams(lam - delta), part) / den)))
    slope = _slope(np.log(ns), np.log(ratios))
    return {"n": list(ns), "ratios": ratios.tolist(), "slope": slope, "bound": -0.9 * delta,
            "passed": slope <= -0.9 * delta}


# 8 ---------------------------------------------------------------------------

def brute_cubic(u: SpectralField):
    """``O(n^6)`` spectral triple convolution truncated to the band."""
    grid = u.grid
    n = grid.n
    c = u.coeffs
    ms = [(a, b) for a in range(-n, n + 1) for b in range(-n, n + 1) if a * a + b * b <= n * n]
    conj_c = np.conj(c[::-1, ::-1])
    out = np.zeros_like(c)
    for a in ms:
        ca = c[a[0] + n, a[1] + n]
        for b in ms:
            cab = ca * c[b[0] + n, b[1] + n]
            s1, s2 = a[0] + b[0], a[1] + b[1]
            # third factor index e with |s + e| <= n, vectorised over e
            for e in ms:
                r1, r2 = s1 + e[0], s2 + e[1]
                if r1 * r1 + r2 * r2 <= n * n:
                    out[r1 + n, r2 + n] += cab * conj_c[e[0] + n, e[1] + n]
    return out


def dealias_check(ns=(2, 4, 6), seed: int = 5):
    from .spectral import dealiased_cubic

    rng = np.random.default_rng(seed)
    errs = []
    for n in ns:
        u = Grid(n).random(rng)
        ref = _fast_brute_cubic(u)
        errs.append(float(np.max(np.abs(dealiased_cubic(u).coeffs - ref)) / np.max(np.abs(ref))))
    return {"n": list(ns), "rel_error": errs, "passed": max(errs) <= 1e-12}


def _fast_brute_cubic(u: SpectralField):
    """Direct convolution via dense 2D index arithmetic (same sum as :func:`brute_cubic`)."""
    n = u.grid.n
    c = u.coeffs
    cb = np.conj(c[::-1, ::-1])
    size = 6 * n + 1
    # u*u on the full lattice
    uu = np.zeros((4 * n + 1, 4 * n + 1), dtype=complex)
    for a1 in range(2 * n + 1):
        for a2 in range(2 * n + 1):
            if c[a1, a2] != 0:
                uu[a1:a1 + 2 * n + 1, a2:a2 + 2 * n + 1] += c[a1, a2] * c
    full = np.zeros((size, size), dtype=complex)
    for e1 in range(2 * n + 1):
        for e2 in range(2 * n + 1):
            if cb[e1, e2] != 0:
                full[e1:e1 + 4 * n + 1, e2:e2 + 4 * n + 1] += cb[e1, e2] * uu
    out = full[2 * n:4 * n + 1, 2 * n:4 * n + 1]
    return out * u.grid.mask


# 9 ---------------------------------------------------------------------------

def scheme_gap(n: int = 16, T: float = 0.5, hs=(4e-3, 2e-3, 1e-3), replicas: int = 8, seed: int = 11,
               params: PhysParams | None = None):
    """L^2 gap between split and direct schemes under one Brownian path, for decreasing h."""
    params = params or PhysParams()
    hmin = min(hs)
    gaps = []
    for h in hs:
        refine = int(round(h / hmin))
        base = SolverConfig(params=params, n=n, h=h, T=T, shared_noise=True, replicas=replicas,
                            refine=refine, seed=seed)
        a = Simulation(replace(base, scheme="split_exp_euler")).initialise()
        a.run(steps=base.steps)
        b = Simulation(replace(base, scheme="galerkin_sde")).initialise()
        b.run(steps=base.steps)
        d = a.u.coeffs - b.u.coeffs
        gaps.append(float(np.sqrt(np.mean(np.sum(np.abs(d) ** 2, axis=(-2, -1))))))
    ratios = [gaps[i] / gaps[i + 1] for i in range(len(gaps) - 1)]
    return {"h": list(hs), "gap": gaps, "ratios": ratios,
            "passed": all(1.5 <= r <= 2.5 for r in ratios)}


# 10 --------------------------------------------------------------------------

def energy_residual_study(n: int = 8, amplitude: float = 0.2, hs=(2e-3, 1e-3, 5e-4), ps=(2, 4),
                          T: float = 1.0, seed: int = 3):
    rng = np.random.default_rng(seed)
    grid = Grid(n)
    Y0 = grid.random(rng)
    Y0.coeffs *= (grid.absm <= 2) * amplitude
    params = PhysParams(1.0, 1.0, 0.0)
    table = {}
    for p in ps:
        res = []
        for h in hs:
            cfg = SolverConfig(params=params, n=n, h=h, T=T, noise=False)
            sim = Simulation(cfg).initialise(u0=Y0)
            traj = [(0.0, sim.Y.copy(), sim.state.ou.Z.copy())]
            sim.run(on_step=lambda s: traj.append((s.t, s.Y.copy(), s.state.ou.Z.copy())))
            _, r = lp_energy_residual(traj, p, params, sim.c)
            res.append(float(np.max(np.abs(r))))
        orders = [math.log2(res[i] / res[i + 1]) for i in range(len(res) - 1)]
        table[p] = {"h": list(hs), "max_residual": res, "orders": orders}
    ok = all(min(v["orders"]) >= 0.75 for v in table.values())
    return {"table": table, "passed": ok}


def dissipativity_check(mu: float = 1.0, p: float = 4.0, fields: int = 100, n: int = 8, seed: int = 6):
    rng = np.random.default_rng(seed)
    grid = Grid(n)
    delta = dissipativity_delta(mu, p)
    viol = 0
    worst = -math.inf
    for _ in range(fields):
        Y = grid.random(rng, decay=1.0)
        lhs = gradient_pairing_values(Y, p, mu)
        w = gradient_weight_values(Y, p)
        excess = lhs + delta * w
        scale = np.max(np.abs(w)) + 1e-300
        viol += int(np.sum(excess > 1e-12 * scale))
        worst = max(worst, float(np.max(excess / scale)))
    return {"delta": delta, "violations": viol, "worst_normalised_excess": worst, "passed": viol == 0}


# 11 --------------------------------------------------------------------------

def coming_down(R_values=(0, 10, 100, 1e3, 1e4), t0: float = 0.5, replicas: int = 64, n: int = 32,
                h: float = 1e-3, seed: int = 5, alpha: float = 0.5):
    cfg = SolverConfig(params=PhysParams(1.0, 1.0, 0.0), n=n, N=fast_size(n), h=h, T=t0,
                       scheme="galerkin_cubic_flow", seed=seed)
    rows = coming_down_experiment(R_values, t0, replicas, cfg, alpha=alpha)
    med = [r["median"] for r in rows]
    spread = max(med) / min(med)
    blow = sum(r["blowups"] for r in rows)
    return {"rows": rows, "spread": spread, "blowups": blow, "passed": bool(spread <= 2.0 and blow == 0)}


# 12 --------------------------------------------------------------------------

def wick_necessity(ns=(16, 32, 64), replicas: int = 256, T: float = 0.25, h: float = 5e-3, y0: float = 2.0,
                   params: PhysParams | None = None, seed: int = 9):
    """Mean of ``Re u_0(T)`` from ``u_0 = y0 e_0`` with and without the Wick constant.

    Each cutoff uses its own independent replica block, so the standard error of
    a difference is the combined standard error of two independent means.
    """
    params = params or PhysParams(0.25, 1.0, 0.0)
    out = {}
    for label, cval in (("c_zero", 0.0), ("c_n", None)):
        means, ses = [], []
        for i, n in enumerate(ns):
            cfg = SolverConfig(params=params, n=n, N=fast_size(n), h=h, T=T, scheme="galerkin_cubic_flow",
                               seed=seed, replicas=replicas, c_value=cval)
            sim = Simulation(cfg, replicas=np.arange(replicas) + i * replicas)
            sim.initialise(u0=cfg.grid.mode((0, 0), y0))
            for _ in range(cfg.steps):
                sim.advance()
            v = sim.u.coeffs[:, n, n].real
            means.append(float(v.mean()))
            ses.append(float(v.std(ddof=1) / math.sqrt(replicas)))
        z_end = (means[0] - means[-1]) / math.hypot(ses[0], ses[-1])
        diffs = np.diff(means)
        monotone = bool(np.all(diffs > 0) or np.all(diffs < 0))
        out[label] = {"n": list(ns), "mean": means, "stderr": ses, "z_first_last": z_end, "monotone": monotone}
    zc, zn = out["c_zero"], out["c_n"]
    stable = all(abs(zn["mean"][i] - zn["mean"][j]) <= 3 * math.hypot(zn["stderr"][i], zn["stderr"][j])
                 for i in range(len(ns)) for j in range(i + 1, len(ns)))
    out["passed"] = bool(zc["monotone"] and abs(zc["z_first_last"]) > 3 and stable)
    return out


# 13 --------------------------------------------------------------------------

def variational_fd(n: int = 8, T: float = 0.1, h: float = 1e-3, eps=None, seed: int = 7):
    eps = [10.0 ** -k for k in range(1, 11)] if eps is None else list(eps)
    grid = Grid(n)
    cfg = SolverConfig(params=PhysParams(1.0, 1.0, 0.0), n=n, h=h, T=T, seed=seed)
    rng = np.random.default_rng(seed)
    v0 = grid.random(rng, decay=2.0)
    hd = grid.random(rng, decay=2.0)
    errs = []
    for e in eps:
        u, J, up = variational_trajectory(v0, hd, cfg, eps=e)
        fd = (up.coeffs - u.coeffs) / e
        errs.append(float(np.sqrt(np.sum(np.abs(J.coeffs - fd) ** 2))))
    h2 = grid.random(rng, decay=2.0)
    _, J1, _ = variational_trajectory(v0, hd, cfg)
    _, J2, _ = variational_trajectory(v0, h2, cfg)
    _, J3, _ = variational_trajectory(v0, 0.7 * hd - 1.3 * h2, cfg)
    lin = float(np.max(np.abs(J3.coeffs - (0.7 * J1.coeffs - 1.3 * J2.coeffs))) / np.max(np.abs(J3.coeffs)))
    orders = [math.log10(errs[i] / errs[i + 1]) for i in range(3)]
    imin = int(np.argmin(errs))
    plateau = 0 < imin < len(errs) - 1 and errs[-1] > errs[imin]
    return {"eps": eps, "errors": errs, "first_orders": orders, "linearity_error": lin,
            "argmin_eps": eps[imin],
            "passed": bool(all(0.8 <= o <= 1.2 for o in orders) and plateau and lin <= 1e-12)}


# 14 --------------------------------------------------------------------------

def bel_identity(replicas: int = 10 ** 5, n: int = 4, t: float = 0.1, h: float = 5e-3, seed: int = 3,
                 threshold: float = 2.0):
    grid = Grid(n, fast_size(n))
    cfg = SolverConfig(params=PhysParams(1.0, 1.0, 0.0), n=n, N=grid.N, h=h, T=t, seed=seed)
    v0 = grid.mode((0, 0), 0.3) + grid.mode((1, 0), 0.2)
    hd = grid.mode((0, 0), 1.0) + grid.mode((0, 1), 0.5j)
    cut = CutoffSpec(threshold=threshold, alpha=0.25, sample_every=4)
    rep = bel_estimator(tanh_mode0(), v0, hd, t, replicas, cfg, cut)
    # linear case: Phi = Re u_0 has the deterministic derivative t Re(E_0^N a_0 h_0)
    lin_cfg = replace(cfg, params=PhysParams(1.0, 1.0, 0.3))
    lin_rep = bel_estimator(linear_mode0(), v0, hd, t, replicas, lin_cfg, cut, replica_offset=replicas,
                            linear=True)
    ops = GalerkinOperators(grid, lin_cfg.params, h)
    n0 = grid.n
    closed = t * (ops.EL[n0, n0] ** int(round(t / h)) * ops.a[n0, n0] * hd.coeffs[n0, n0]).real
    z_lin = float(abs(lin_rep.rhs_estimate - closed) / lin_rep.rhs_stderr)
    lhs_lin_err = float(abs(lin_rep.lhs_estimate - closed))
    passed = (rep.z_score <= 3 and rep.discarded_fraction < 1e-3 and z_lin <= 3 and lhs_lin_err <= 1e-12)
    return {"nonlinear": rep.to_dict(), "linear": lin_rep.to_dict(), "closed_form": float(closed),
            "z_linear": z_lin, "lhs_linear_error": lhs_lin_err, "passed": bool(passed)}


# 15 --------------------------------------------------------------------------

def wick_ladder(ns=(8, 16, 32, 64), replicas: int = 64, T: float = 0.2, samples: int = 10, alpha: float = 0.3,
                p: float = 4.0, mu: float = 1.0, seed: int = 13, chunk: int = 8,
                kls=((1, 1), (2, 1))):
    """Median over replicas of ``sup_t ||wick(n) - wick(2n)||_{B^{-alpha}_{p,p}}`` per rung."""
    dt = T / samples
    rungs = {kl: [] for kl in kls}
    per_rep = {kl: np.zeros((len(ns), replicas)) for kl in kls}
    for s0 in range(0, replicas, chunk):
        reps = np.arange(s0, min(s0 + chunk, replicas))
        noise = NoiseSource(seed, reps)
        for r, n in enumerate(ns):
            lo, hi = Grid(n), Grid(2 * n)
            zl = ou_initial(lo, mu, noise)
            zh = ou_initial(hi, mu, noise)
            cl, ch = renorm_constant(n, mu).value, renorm_constant(2 * n, mu).value
            part = partition_for(2 * n)
            sup = {kl: np.zeros(reps.size) for kl in kls}
            for _ in range(samples):
                zl = ou_exact_step(zl, dt, noise, mu)
                zh = ou_exact_step(zh, dt, noise, mu)
                bl, bh = wick_bundle(zl.Z, cl), wick_bundle(zh.Z, ch)
                for kl in kls:
                    d = bh[kl] - bl[kl].rebin(hi)
                    sup[kl] = np.maximum(sup[kl], besov_norm(d, BesovParams(-alpha, p, p), part))
            for kl in kls:
                per_rep[kl][r, reps] = sup[kl]
    out = {}
    ok = True
    for kl in kls:
        med = np.median(per_rep[kl], axis=1).tolist()
        dec = all(a > b for a, b in zip(med, med[1:]))
        ok &= dec
        out[f"{kl[0]}{kl[1]}"] = {"n": list(ns), "median_sup": med, "strictly_decreasing": dec}
    out["passed"] = bool(ok)
    return out


# convergence helpers -----------------------------------------------------------

def timestep_table(scheme: str = "split_exp_euler", n: int = 8, T: float = 0.05,
                   hs=(4e-4, 2e-4, 1e-4, 5e-5), replicas: int = 8, seed: int = 17,
                   params: PhysParams | None = None):
    """Self-convergence in ``h``: RMS ``||u_h - u_{h/2}||_{L^2}`` on one Brownian path per replica.

    The asymptotic rate needs ``h * lambda_max < 1`` on the stiffest retained mode,
    hence the small default steps.
    """
    params = params or PhysParams()
    hmin = min(hs)
    finals = []
    for h in hs:
        cfg = SolverConfig(params=params, n=n, h=h, T=T, scheme=scheme, shared_noise=True, replicas=replicas,
                           refine=int(round(h / hmin)), seed=seed)
        sim = Simulation(cfg).initialise()
        sim.run()
        finals.append(sim.u.coeffs)
    err = [float(np.sqrt(np.mean(np.sum(np.abs(a - b) ** 2, axis=(-2, -1))))) for a, b in zip(finals, finals[1:])]
    ratios = [a / b for a, b in zip(err, err[1:])]
    return {"scheme": scheme, "h": list(hs[:-1]), "error": err, "ratios": ratios,
            "passed": all(1.5 <= r <= 2.5 for r in ratios)}


def u_ladder(ns=(8, 16, 32), T: float = 0.1, h: float = 1e-3, replicas: int = 16, alpha: float = 0.5,
             seed: int = 19, params: PhysParams | None = None):
    """Median ``||u_n - u_{2n}||_{B^{-alpha}_{inf,inf}}`` at time ``T`` under coupled noise."""
    params = params or PhysParams()
    finals = {}
    for n in sorted(set(ns) | {2 * n for n in ns}):
        cfg = SolverConfig(params=params, n=n, N=fast_size(n), h=h, T=T, scheme="galerkin_cubic_flow",
                           replicas=replicas, seed=seed)
        sim = Simulation(cfg).initialise()
        sim.run()
        finals[n] = sim.u
    med = []
    for n in ns:
        hi = finals[2 * n]
        d = hi - finals[n].rebin(hi.grid)
        med.append(float(np.median(besov_norm(d, BesovParams(-alpha), partition_for(2 * n)))))
    return {"n": list(ns), "median": med, "decreasing": all(a > b for a, b in zip(med, med[1:]))}
