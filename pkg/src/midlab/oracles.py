"""
Brute-force divergence oracles on discretized distributions.

Everything here works on a DensityGrid: a probability mass function over
the cells of a fixed rectangular grid. On such grids the optimal
discriminators, the value of the three-player objective, and the
Jensen-Shannon centroid of two domains can all be computed exactly, which
is what lets the trained networks be checked against theory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import GridMismatchError, SolverError, VerificationError

SMOOTHING = 1e-6
LOG4 = math.log(4.0)
LOG2 = math.log(2.0)


@dataclass
class DensityGrid:
    bounds: tuple  # ((lo, hi), ...) per dimension
    bins: tuple  # (n0, n1, ...)
    mass: np.ndarray  # shape == bins

    def __post_init__(self):
        self.bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        self.bins = tuple(int(b) for b in self.bins)
        self.mass = np.asarray(self.mass, dtype=np.float64).reshape(self.bins)
        if len(self.bounds) != len(self.bins):
            raise ValueError("bounds and bins disagree on dimension")
        if any(not (math.isfinite(lo) and math.isfinite(hi) and hi > lo) for lo, hi in self.bounds):
            raise ValueError(f"bounds must be finite with hi > lo: {self.bounds}")
        if np.any(self.mass < 0):
            raise ValueError("masses must be nonnegative")
        total = self.mass.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"masses sum to {total!r}, not 1")

    @property
    def dim(self):
        return len(self.bins)

    @property
    def cells(self):
        return self.mass.size

    def edges(self):
        return [np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(self.bounds, self.bins)]

    def centers(self):
        """Cell centers as an (n_cells, dim) array in C order of ``mass``."""
        mids = [0.5 * (e[:-1] + e[1:]) for e in self.edges()]
        mesh = np.meshgrid(*mids, indexing="ij")
        return np.column_stack([m.reshape(-1) for m in mesh])

    def like(self, mass) -> "DensityGrid":
        return DensityGrid(self.bounds, self.bins, mass)

    def to_csv(self) -> str:
        flat = self.mass.reshape(-1)
        lines = ["cell_index,mass"]
        lines += [f"{i},{m:.17g}" for i, m in enumerate(flat)]
        return "\n".join(lines) + "\n"


def grid_like(bounds, bins, mass):
    return DensityGrid(bounds, bins, mass)


def _check_same(*grids):
    g0 = grids[0]
    for g in grids[1:]:
        if g.bins != g0.bins or g.bounds != g0.bounds:
            raise GridMismatchError(
                f"grid {g.bounds}x{g.bins} does not match {g0.bounds}x{g0.bins}"
            )


def estimate_density(samples, bounds, bins, alpha: float = SMOOTHING) -> DensityGrid:
    """Histogram with additive smoothing ``alpha`` per cell, renormalized.

    ``samples`` is a LabeledDataset or an (n, d) array. Samples outside the
    bounds are dropped; if none remain the call is rejected.
    """
    pts = getattr(samples, "points", samples)
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] < 1:
        raise ValueError("need at least one sample")
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    bins = tuple(int(b) for b in bins)
    if pts.shape[1] != len(bins):
        raise ValueError(f"{pts.shape[1]}-D samples on a {len(bins)}-D grid")
    counts, _ = np.histogramdd(pts, bins=bins, range=bounds)
    inside = counts.sum()
    if inside == 0:
        raise ValueError("all samples fall outside the grid bounds")
    mass = counts / inside + alpha
    return DensityGrid(bounds, bins, mass / mass.sum())


def gaussian_grid(means, stds, weights, bounds, bins) -> DensityGrid:
    """Exact cell masses of a 1-D Gaussian mixture, renormalized to the grid."""
    (lo, hi), = bounds
    edges = np.linspace(lo, hi, int(bins[0]) + 1)
    mass = np.zeros(int(bins[0]))
    for mu, sd, w in zip(means, stds, weights):
        mass += w * np.diff(stats.norm.cdf(edges, loc=mu, scale=sd))
    return DensityGrid(((lo, hi),), (int(bins[0]),), mass / mass.sum())


def kl(p: DensityGrid, q: DensityGrid) -> float:
    """KL(p||q) = sum p log(p/q) over cells with p > 0; q floored at 1e-12."""
    _check_same(p, q)
    return _kl(p.mass, q.mass)


def _kl(p, q, floor=1e-12):
    mask = p > 0
    pm = p[mask]
    return float(np.sum(pm * np.log(pm / np.maximum(q[mask], floor))))


def jsd(p: DensityGrid, q: DensityGrid) -> float:
    _check_same(p, q)
    return _jsd(p.mass, q.mass)


def _jsd(p, q):
    # m >= p/2 > 0 wherever p > 0, so no floor is needed; skipping it keeps
    # jsd(p, p) exactly zero even for masses below 1e-12
    m = 0.5 * (p + q)
    return 0.5 * _kl(p, m, 0.0) + 0.5 * _kl(q, m, 0.0)


def total_variation(p: DensityGrid, q: DensityGrid) -> float:
    _check_same(p, q)
    return 0.5 * float(np.abs(p.mass - q.mass).sum())


def optimal_discriminator(p: DensityGrid, pm: DensityGrid, complement=False):
    """Cellwise p / (p + pm).

    Returns (values, undefined) where ``undefined`` flags 0/0 cells, which
    are set to 0.5. With ``complement`` the values are 1 - D* computed as
    pm / (p + pm), which stays positive where 1 - D* would round to 0.
    """
    _check_same(p, pm)
    denom = p.mass + pm.mass
    undefined = denom == 0
    num = pm.mass if complement else p.mass
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(undefined, 0.5, num / np.where(undefined, 1.0, denom))
    return d, undefined


def _xlogy(x, y):
    # 0 * log 0 = 0 convention
    out = np.zeros_like(x)
    mask = x > 0
    out[mask] = x[mask] * np.log(y[mask])
    return out


def grid_value(ps: DensityGrid, pt: DensityGrid, pm: DensityGrid, ds, dt, ds_rest=None, dt_rest=None) -> float:
    """The three-player objective integrated over the grid.

    ``ds`` and ``dt`` are discriminator values per cell; ``ds_rest`` and
    ``dt_rest`` optionally give 1 - D per cell when it is known more
    precisely than the subtraction.
    """
    _check_same(ps, pt, pm)

    def cells(a):
        return np.asarray(a, dtype=np.float64).reshape(ps.bins)

    ds, dt = cells(ds), cells(dt)
    ds_rest = 1.0 - ds if ds_rest is None else cells(ds_rest)
    dt_rest = 1.0 - dt if dt_rest is None else cells(dt_rest)
    return float(
        _xlogy(ps.mass, ds).sum()
        + _xlogy(pm.mass, ds_rest).sum()
        + _xlogy(pt.mass, dt).sum()
        + _xlogy(pm.mass, dt_rest).sum()
    )


def virtual_criterion(ps: DensityGrid, pt: DensityGrid, pm: DensityGrid) -> float:
    """C = -2 log 4 + 2 JSD(ps||pm) + 2 JSD(pt||pm)."""
    _check_same(ps, pt, pm)
    return -2.0 * LOG4 + 2.0 * _jsd(ps.mass, pm.mass) + 2.0 * _jsd(pt.mass, pm.mass)


def identity_residual(ps: DensityGrid, pt: DensityGrid, pm: DensityGrid) -> float:
    """|grid value at the optimal discriminators - virtual criterion|."""
    ds, _ = optimal_discriminator(ps, pm)
    dt, _ = optimal_discriminator(pt, pm)
    ds_rest, _ = optimal_discriminator(ps, pm, complement=True)
    dt_rest, _ = optimal_discriminator(pt, pm, complement=True)
    return abs(grid_value(ps, pt, pm, ds, dt, ds_rest, dt_rest) - virtual_criterion(ps, pt, pm))


# ---- JSD centroid ------------------------------------------------------------


@dataclass
class CentroidSolverConfig:
    method: str = "simplex_descent"  # or "mixture_sweep"
    sweep_resolution: int = 101  # number of mixture weights, endpoints included
    descent_steps: int = 500
    descent_rate: float = 0.1
    tolerance: float = 1e-9

    def __post_init__(self):
        if self.method not in ("mixture_sweep", "simplex_descent"):
            raise ValueError(f"unknown centroid method {self.method!r}")
        if self.sweep_resolution < 11:
            raise ValueError("sweep_resolution must be at least 11")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.descent_steps < 0 or not self.descent_rate > 0:
            raise ValueError("descent_steps >= 0 and descent_rate > 0 required")


@dataclass
class CentroidResult:
    centroid: DensityGrid
    objective: float  # JSD(ps||c) + JSD(pt||c)
    alpha: float  # best mixture weight on ps from the sweep
    trace: list = field(default_factory=list)  # objective per descent iterate


def centroid_objective(ps, pt, q) -> float:
    return _jsd(ps, q) + _jsd(pt, q)


def _objective_grad(ps, pt, q):
    # d JSD(p||q) / dq_i = 0.5 log(2 q_i / (p_i + q_i))
    return 0.5 * (np.log(2.0 * q / (ps + q)) + np.log(2.0 * q / (pt + q)))


def jsd_centroid(ps: DensityGrid, pt: DensityGrid, cfg: CentroidSolverConfig | None = None) -> CentroidResult:
    """argmin over pm of JSD(ps||pm) + JSD(pt||pm).

    The sweep scans pm = a*ps + (1-a)*pt. simplex_descent then descends
    over the whole simplex from the best sweep point using multiplicative
    (exponentiated-gradient) steps, q <- q * exp(-rate * grad), renormalized.
    Every step backtracks until the objective strictly decreases, so the
    trace is monotone by construction; the trial rate grows by 1.5x after
    an accepted step.
    """
    cfg = cfg or CentroidSolverConfig()
    _check_same(ps, pt)
    p, t = ps.mass.reshape(-1), pt.mass.reshape(-1)
    alphas = np.union1d(np.linspace(0.0, 1.0, cfg.sweep_resolution), [0.5])
    best_a, best_f = None, math.inf
    for a in alphas:
        f = centroid_objective(p, t, a * p + (1.0 - a) * t)
        if f < best_f:
            best_a, best_f = float(a), f
    q = best_a * p + (1.0 - best_a) * t
    trace = [best_f]

    if cfg.method == "simplex_descent" and cfg.descent_steps > 0:
        # a cell empty in both domains is empty in the optimum
        support = (p + t) > 0
        # an endpoint sweep weight leaves cells of the other domain at zero
        q = np.where(support, np.maximum(q, 1e-300), 0.0)
        q /= q.sum()
        f = centroid_objective(p, t, q)
        trace = [min(f, best_f)]
        ps_s, pt_s = p[support], t[support]
        rate = cfg.descent_rate
        for it in range(1, cfg.descent_steps + 1):
            qs = q[support]
            g = _objective_grad(ps_s, pt_s, qs)
            if not np.all(np.isfinite(g)):
                raise SolverError(f"non-finite gradient at iterate {it}", it)
            if np.ptp(g) < 1e-13:
                break  # stationary: gradient constant on the support
            g -= g.max()
            accepted = False
            for _ in range(60):
                step = qs * np.exp(-rate * g)
                cand = np.zeros_like(q)
                cand[support] = step / step.sum()
                fc = centroid_objective(p, t, cand)
                if not math.isfinite(fc):
                    raise SolverError(f"non-finite objective at iterate {it}", it)
                if fc < f:
                    accepted = True
                    break
                rate *= 0.5
            if not accepted:
                break
            q, f = cand, fc
            trace.append(f)
            rate *= 1.5
        if f < best_f:
            best_f = f
        else:
            q = best_a * p + (1.0 - best_a) * t

    return CentroidResult(ps.like(q.reshape(ps.bins)), float(best_f), best_a, trace)


@dataclass
class CentroidReport:
    centroid: DensityGrid
    centroid_objective: float
    criterion_at_centroid: float
    probes_checked: int
    max_violation: float  # max over probes of C(centroid) - C(probe)
    trace_monotone: bool
    passed: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "centroid_objective": self.centroid_objective,
                "probes_checked": self.probes_checked,
                "max_violation": self.max_violation,
                "criterion_at_centroid": self.criterion_at_centroid,
                "trace_monotone": self.trace_monotone,
                "passed": self.passed,
            },
            indent=2,
            sort_keys=True,
        )


def verify_theorem2(
    ps: DensityGrid,
    pt: DensityGrid,
    cfg: CentroidSolverConfig | None = None,
    n_probes: int = 100,
    seed: int = 0,
) -> CentroidReport:
    """Certify that the solver's centroid minimizes the virtual criterion.

    C at the centroid is compared against ``n_probes`` random simplex
    points (half Dirichlet draws, half small random perturbations of the
    centroid itself) and against ps, pt, their midpoint and the uniform
    distribution. Raises VerificationError if any probe beats the centroid
    by more than ``cfg.tolerance`` or the descent trace ever rises.
    """
    cfg = cfg or CentroidSolverConfig()
    res = jsd_centroid(ps, pt, cfg)
    c_star = virtual_criterion(ps, pt, res.centroid)
    rng = np.random.default_rng(seed)
    n = ps.cells
    q_star = res.centroid.mass.reshape(-1)
    probes = [
        ("source", ps.mass.reshape(-1)),
        ("target", pt.mass.reshape(-1)),
        ("midpoint", 0.5 * (ps.mass + pt.mass).reshape(-1)),
        ("uniform", np.full(n, 1.0 / n)),
    ]
    for i in range(n_probes):
        r = rng.dirichlet(np.ones(n))
        if i % 2:
            eps = 10.0 ** rng.uniform(-4, -1)
            r = (1.0 - eps) * q_star + eps * r
        probes.append((f"random[{i}]", r))

    monotone = all(b <= a for a, b in zip(res.trace, res.trace[1:]))
    worst, worst_name = -math.inf, None
    for name, q in probes:
        c = virtual_criterion(ps, pt, ps.like((q / q.sum()).reshape(ps.bins)))
        if c_star - c > worst:
            worst, worst_name = c_star - c, name
    report = CentroidReport(
        res.centroid,
        res.objective,
        c_star,
        len(probes),
        float(worst),
        monotone,
        passed=monotone and worst <= cfg.tolerance,
    )
    if not monotone:
        raise VerificationError("centroid descent trace increased", report=report)
    if worst > cfg.tolerance:
        raise VerificationError(
            f"probe {worst_name} beats the centroid by {worst:.3e}", probe=worst_name, report=report
        )
    return report


def random_grid(rng: np.random.Generator, bins=(16,), bounds=((-1.0, 1.0),), concentration=1.0):
    """A random pmf on a grid, for property sweeps."""
    cells = int(np.prod(bins))
    return DensityGrid(bounds, bins, rng.dirichlet(np.full(cells, concentration)).reshape(bins))
