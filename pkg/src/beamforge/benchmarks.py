"""Comparison partition schemes (UBW, ESC, NUBW-M, NUBW-S) and the
per-interval max-min beam fit used to evaluate them on equal footing.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .channel import AoDGrid, Beam, Codebook, coverage_set, gains_over
from .scenario import ScenarioConfig, SolverParams, aod_to_position
from .search import minmax_feasibility_check

RATE_QUAD_POINTS = 200


@dataclass
class Partition:
    """Switch angles phi_1..phi_{N+1}, strictly increasing, endpoints pinned."""

    angles: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        if len(self.angles) < 2:
            raise ValueError("partition needs at least two angles")
        if np.any(np.diff(self.angles) <= 0):
            raise ValueError("partition angles must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.angles) - 1


def ubw_partition(cfg: ScenarioConfig, n: int) -> Partition:
    """Equal beam widths: uniform spacing in sin(psi)."""
    sins = np.linspace(math.sin(cfg.psi_min), math.sin(cfg.psi_max), n + 1)
    angles = np.arcsin(sins)
    angles[0], angles[-1] = cfg.psi_min, cfg.psi_max
    return Partition(angles)


def _arc_length(cfg: ScenarioConfig, psi: float) -> float:
    """Distance along the railway from the psi_min position."""
    x0, y0 = aod_to_position(cfg, cfg.psi_min)
    x, y = aod_to_position(cfg, psi)
    return math.hypot(x - x0, y - y0)


def esc_partition(cfg: ScenarioConfig, n: int) -> Partition:
    """Equal railway arc length per beam; breakpoints by scalar root-finding."""
    total = _arc_length(cfg, cfg.psi_max)
    angles = [cfg.psi_min]
    for i in range(1, n):
        target = total * i / n
        angles.append(brentq(lambda p: _arc_length(cfg, p) - target,
                             cfg.psi_min, cfg.psi_max, xtol=1e-13))
    angles.append(cfg.psi_max)
    return Partition(np.array(angles))


def _time_at_angle(cfg: ScenarioConfig, psi: float) -> float:
    return _arc_length(cfg, psi) / cfg.v


def avg_rate_integral(cfg: ScenarioConfig, phi_a: float, phi_b: float,
                      npts: int = RATE_QUAD_POINTS) -> float:
    """Travel-time integral of the log-rate with the flat-top gain pi/width."""
    if phi_b <= phi_a:
        return 0.0
    t_a, t_b = _time_at_angle(cfg, phi_a), _time_at_angle(cfg, phi_b)
    x0, y0 = aod_to_position(cfg, cfg.psi_min)
    t = np.linspace(t_a, t_b, npts)
    x = x0 + cfg.v * t * math.cos(cfg.alpha)
    y = y0 + cfg.v * t * math.sin(cfg.alpha)
    psi = np.arctan(x / y)
    p_bar = cfg.n_t * cfg.p_tilde
    snr = p_bar * math.pi * np.cos(psi + cfg.alpha) ** cfg.eta / (
        cfg.p_n * (phi_b - phi_a))
    return float(np.trapezoid(np.log(1.0 + snr), t))


def _cyclic_descent(cfg: ScenarioConfig, angles: np.ndarray, objective,
                    maximize: bool, tol: float = 1e-6, max_sweeps: int = 60):
    """Coordinate-wise golden-section over interior breakpoints.

    Returns (angles, per-sweep objective values)."""
    angles = angles.copy()
    sign = -1.0 if maximize else 1.0
    history = [objective(angles)]
    pad = 1e-9
    for _ in range(max_sweeps):
        for i in range(1, len(angles) - 1):
            lo, hi = angles[i - 1] + pad, angles[i + 1] - pad
            if hi <= lo:
                continue

            def coord(phi, i=i):
                trial = angles.copy()
                trial[i] = phi
                return sign * objective(trial)

            res = minimize_scalar(coord, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-10})
            # keep the sweep monotone: only accept non-worsening moves
            if res.fun <= sign * objective(angles):
                angles[i] = float(res.x)
        history.append(objective(angles))
        if abs(history[-1] - history[-2]) < tol:
            break
    return angles, history


def _rate_sum(cfg: ScenarioConfig, angles: np.ndarray) -> float:
    return sum(avg_rate_integral(cfg, a, b) for a, b in zip(angles, angles[1:]))


def _rate_gap(cfg: ScenarioConfig, angles: np.ndarray) -> float:
    """Mean |adjacent time-averaged-rate ratio - 1|, first interval as reference."""
    rates = []
    for a, b in zip(angles, angles[1:]):
        dt = _time_at_angle(cfg, b) - _time_at_angle(cfg, a)
        rates.append(avg_rate_integral(cfg, a, b) / dt)
    n = len(rates)
    return sum(abs(rates[i] / rates[i - 1] - 1.0) for i in range(1, n)) / n


def nubw_m_partition(cfg: ScenarioConfig, n: int, return_history: bool = False):
    """Breakpoints maximizing the summed average-rate integrals."""
    angles, hist = _cyclic_descent(cfg, ubw_partition(cfg, n).angles,
                                   lambda a: _rate_sum(cfg, a), maximize=True)
    part = Partition(angles)
    return (part, hist) if return_history else part


def nubw_s_partition(cfg: ScenarioConfig, n: int, return_history: bool = False):
    """Breakpoints equalizing time-averaged rates of adjacent beams."""
    if n == 1:
        part = Partition(np.array([cfg.psi_min, cfg.psi_max]))
        return (part, [0.0]) if return_history else part
    angles, hist = _cyclic_descent(cfg, ubw_partition(cfg, n).angles,
                                   lambda a: _rate_gap(cfg, a), maximize=False)
    part = Partition(angles)
    return (part, hist) if return_history else part


def maxmin_beam(grid: AoDGrid, phi_a: float, phi_b: float, params: SolverParams,
                cfg: ScenarioConfig, rng: np.random.Generator | None = None,
                tol_db: float = 0.05):
    """Best-effort max-min beam over one interval: the gain-threshold scale is
    bisected to tol_db around the feasibility boundary.

    Returns (weights, worst_rsnr linear)."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    idx = coverage_set(grid, phi_a, phi_b)
    if len(idx) == 0:
        raise ValueError(f"no grid samples in [{phi_a}, {phi_b})")
    steering, gamma = grid.steering[idx], grid.gamma[idx]

    # matched beam at the middle sample: always-feasible starting scale
    mid = len(idx) // 2
    weights = steering[mid].copy()
    ratio = float(np.min(gains_over(steering, weights) / gamma))
    lo_db = 10.0 * math.log10(ratio)
    hi_db = 10.0 * math.log10(1.0 / float(np.max(gamma)))

    best = weights
    while hi_db - lo_db > tol_db:
        mid_db = 0.5 * (lo_db + hi_db)
        tau = 10.0 ** (mid_db / 10.0)
        ok, cand = minmax_feasibility_check(steering, gamma * tau, params, rng,
                                            restarts=1)
        if ok:
            lo_db, best = mid_db, cand
        else:
            hi_db = mid_db
    worst_ratio = float(np.min(gains_over(steering, best) / gamma))
    # gamma encodes RSNR threshold gamma_th, so worst RSNR = gamma_th * ratio
    worst_rsnr = cfg.gamma_th * worst_ratio
    return best, worst_rsnr


def partition_codebook(grid: AoDGrid, part: Partition, params: SolverParams,
                       cfg: ScenarioConfig, threads: int = 1,
                       tol_db: float = 0.05) -> Codebook:
    """Fit a max-min beam to every interval of a fixed partition."""
    intervals = list(zip(part.angles[:-1], part.angles[1:]))
    # widen the last interval so the final grid sample is covered (half-open)
    intervals[-1] = (intervals[-1][0], math.nextafter(float(grid.psi[-1]), math.inf))

    def fit(i):
        a, b = intervals[i]
        rng = np.random.default_rng(params.seed + i)
        w, _ = maxmin_beam(grid, a, b, params, cfg, rng, tol_db=tol_db)
        return Beam(weights=w, phi_lo=a, phi_hi=b)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            beams = list(pool.map(fit, range(len(intervals))))
    else:
        beams = [fit(i) for i in range(len(intervals))]
    return Codebook(beams=beams, diagnostics={"scheme": "partition"})
