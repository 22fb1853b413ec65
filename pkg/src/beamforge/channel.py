"""Trajectory grid, near-field steering, beam gain / RSNR, coverage sets, BAND."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .scenario import ScenarioConfig, aod_at_time, aod_to_position, bs_to_relay_distance


def q_function(x):
    """Standard Gaussian tail probability."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


@dataclass
class AoDGrid:
    """Sampled trajectory: times, AoDs, distances, gain thresholds, steering vectors."""

    t: np.ndarray          # (M,) sample times, strictly increasing, t[0]=0
    psi: np.ndarray        # (M,) AoDs, strictly increasing
    r: np.ndarray          # (M,) BS-to-relay distances
    gamma: np.ndarray      # (M,) per-sample beam-gain thresholds (linear)
    steering: np.ndarray   # (M, N_T) complex unit-norm steering vectors

    @property
    def m_count(self) -> int:
        return len(self.psi)


@dataclass
class Beam:
    """Constant-modulus weight vector with its switch interval [phi_lo, phi_hi)."""

    weights: np.ndarray
    phi_lo: float
    phi_hi: float


@dataclass
class Codebook:
    beams: list[Beam]
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.beams)

    @property
    def switch_angles(self) -> list[float]:
        """phi_1 .. phi_{N+1}."""
        return [self.beams[0].phi_lo] + [b.phi_hi for b in self.beams]

    def validate(self, psi_min: float, psi_max: float):
        if not self.beams:
            raise ValueError("empty codebook")
        if self.beams[0].phi_lo != psi_min:
            raise ValueError("codebook must start at psi_min")
        for a, b in zip(self.beams, self.beams[1:]):
            if a.phi_hi != b.phi_lo:
                raise ValueError("codebook switch angles must be contiguous")
        if self.beams[-1].phi_hi < psi_max:
            raise ValueError("codebook must cover up to psi_max")


def steering_vector(n_t: int, psi: float, f: float, r: float, *,
                    delta_t: float, lambda_c: float, f_c: float) -> np.ndarray:
    """Near-field (Fresnel) ULA steering vector, unit l2-norm."""
    if r <= 0:
        raise ValueError("r must be positive")
    n = np.arange(n_t)
    phase = -math.pi * (2.0 * delta_t / lambda_c) * (1.0 + f / f_c) * (
        n * math.sin(psi) - (delta_t / (2.0 * r)) * n**2 * math.cos(psi) ** 2)
    return np.exp(1j * phase) / math.sqrt(n_t)


def steering_for(cfg: ScenarioConfig, psi, r) -> np.ndarray:
    """Steering vectors at f=0 for arrays of angles/distances, shape (M, N_T)."""
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    n = np.arange(cfg.n_t)
    phase = -math.pi * (2.0 * cfg.delta_t / cfg.lambda_c) * (
        np.sin(psi)[:, None] * n
        - (cfg.delta_t / (2.0 * r))[:, None] * n**2 * np.cos(psi)[:, None] ** 2)
    return np.exp(1j * phase) / math.sqrt(cfg.n_t)


def build_grid(cfg: ScenarioConfig, max_samples: int = 5_000_000) -> AoDGrid:
    """Sample the trajectory from psi_min until psi_max with the adaptive time step.

    t_{m+1} = t_m + eps_t * Delta_m, Delta_m = (1/v) sqrt(2 r_m lambda_c / (1 + B_f/(2 f_c))).
    """
    r_start = aod_to_position(cfg, cfg.psi_min)
    band_factor = 1.0 + cfg.b_f / (2.0 * cfg.f_c)

    ts, psis, rs = [0.0], [cfg.psi_min], [bs_to_relay_distance(cfg, cfg.psi_min)]
    while psis[-1] < cfg.psi_max:
        if len(ts) > max_samples:
            raise RuntimeError("grid exceeded max_samples before reaching psi_max")
        delta_m = math.sqrt(2.0 * rs[-1] * cfg.lambda_c / band_factor) / cfg.v
        t_next = ts[-1] + cfg.eps_t * delta_m
        psi_next = aod_at_time(cfg, t_next, r_start)
        if psi_next <= psis[-1]:
            raise RuntimeError("psi_max unreachable: AoD stopped increasing")
        ts.append(t_next)
        psis.append(psi_next)
        rs.append(bs_to_relay_distance(cfg, psi_next))

    t = np.array(ts)
    psi = np.array(psis)
    r = np.array(rs)
    gamma = cfg.gamma_th * cfg.p_n / (
        cfg.n_t * cfg.p_tilde * np.cos(psi + cfg.alpha) ** cfg.eta)
    return AoDGrid(t=t, psi=psi, r=r, gamma=gamma, steering=steering_for(cfg, psi, r))


def beam_gain(beam_weights: np.ndarray, grid: AoDGrid, m: int) -> float:
    """Normalized gain |a_m^H f|^2 of the beam at sample m."""
    return float(np.abs(grid.steering[m].conj() @ beam_weights) ** 2)


def gains_over(steering: np.ndarray, beam_weights: np.ndarray) -> np.ndarray:
    """|a^H f|^2 for each row of a steering matrix."""
    return np.abs(steering.conj() @ beam_weights) ** 2


def rsnr(beam_weights: np.ndarray, grid: AoDGrid, cfg: ScenarioConfig, m: int) -> float:
    """Receive SNR (linear) at sample m for the given beam."""
    beta_sq = cfg.n_t * cfg.p_tilde * math.cos(grid.psi[m] + cfg.alpha) ** cfg.eta
    return beta_sq / cfg.p_n * beam_gain(beam_weights, grid, m)


def coverage_set(grid: AoDGrid, phi_lo: float, phi_hi: float,
                 sigma_psi: float = 0.0, p_th: float = 0.5) -> np.ndarray:
    """Indices of samples a beam over [phi_lo, phi_hi) is responsible for."""
    if phi_lo >= phi_hi:
        raise ValueError("phi_lo < phi_hi required")
    if sigma_psi == 0.0:
        mask = (grid.psi >= phi_lo) & (grid.psi < phi_hi)
    else:
        prob = (q_function((phi_lo - grid.psi) / sigma_psi)
                - q_function((phi_hi - grid.psi) / sigma_psi))
        mask = prob >= p_th
    return np.nonzero(mask)[0]


def nearfield_loss(r: float, psi: float, f: float, n_t: int, cfg: ScenarioConfig) -> float:
    """Normalized-gain loss of the far-field beamformer against the near-field response."""
    if r <= 0:
        raise ValueError("r must be positive")
    n = np.arange(n_t)
    lam = cfg.lambda_c
    far = np.exp(-2j * math.pi * (f / cfg.f_c) * n * (cfg.delta_t / lam) * math.sin(psi))
    near = np.exp(2j * math.pi * (1.0 + f / cfg.f_c)
                  * n**2 * cfg.delta_t**2 * math.cos(psi) ** 2 / (2.0 * r * lam))
    return 1.0 - abs(np.sum(far * near)) / n_t


def band(psi: float, n_t: int, b_f: float, l_th: float, cfg: ScenarioConfig,
         r_floor: float = 0.1) -> float:
    """Smallest distance beyond which the far-field loss stays below l_th.

    Narrowband rule: for b_f << f_c the boundary is evaluated at f=0 only.
    The loss is not monotone in r, so a geometric scan (x1.05 steps) finds the
    last violation before bisection refines the crossing.
    """
    if not 0.0 < l_th < 1.0:
        raise ValueError("l_th in (0, 1) required")
    freqs = [0.0] if b_f == 0.0 else [-b_f / 2.0, 0.0, b_f / 2.0]

    def worst_loss(r):
        return max(nearfield_loss(r, psi, f, n_t, cfg) for f in freqs)

    # scan beyond the classical Rayleigh distance so the tail is certainly clean
    aperture = n_t * cfg.delta_t
    r_top = max(4.0 * 2.0 * aperture**2 / cfg.lambda_c, 10.0 * r_floor)
    scan = [r_floor]
    while scan[-1] < r_top:
        scan.append(scan[-1] * 1.05)

    losses = np.array([worst_loss(r) for r in scan])
    bad = np.nonzero(losses > l_th)[0]
    if len(bad) == 0:
        return r_floor
    lo = scan[bad[-1]]
    hi = scan[bad[-1] + 1] if bad[-1] + 1 < len(scan) else scan[-1] * 1.05
    while (hi - lo) / hi > 1e-4:
        mid = 0.5 * (lo + hi)
        if worst_loss(mid) > l_th:
            lo = mid
        else:
            hi = mid
    return hi


def codebook_rsnr_trace(codebook: Codebook, grid: AoDGrid, cfg: ScenarioConfig,
                        rng_seed: int = 0, sigma_psi: float = 0.0):
    """Per-sample RSNR with beam selection driven by the (noisy) AoD estimate.

    Returns (rsnr array aligned with grid.t, switch event count). A sample whose
    estimate falls outside every switch interval records RSNR 0.
    """
    m_count = grid.m_count
    psi_hat = grid.psi.copy()
    if sigma_psi > 0.0:
        rng = np.random.Generator(np.random.Philox(rng_seed))
        psi_hat = psi_hat + rng.normal(0.0, sigma_psi, size=m_count)

    edges = np.array(codebook.switch_angles)
    idx = np.searchsorted(edges, psi_hat, side="right") - 1
    idx[(psi_hat < edges[0]) | (psi_hat >= edges[-1])] = -1

    beta_sq = cfg.n_t * cfg.p_tilde * np.cos(grid.psi + cfg.alpha) ** cfg.eta
    out = np.zeros(m_count)
    for i, beam in enumerate(codebook.beams):
        sel = idx == i
        if np.any(sel):
            out[sel] = beta_sq[sel] / cfg.p_n * gains_over(grid.steering[sel], beam.weights)

    switches = int(np.count_nonzero(np.diff(idx) != 0))
    return out, switches
