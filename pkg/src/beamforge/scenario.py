"""Scenario constants and railway geometry.

The base station sits at the origin with a horizontal ULA; the railway is a
straight line crossing the y-axis at y_0 with slope angle alpha. All angles
are radians, all powers linear watts. Unit conversion (degrees, dBm, km/h)
happens once at config construction; see `cli.parse_config`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

C_LIGHT = 299_792_458.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and geometric constants of one railway scenario."""

    f_c: float            # carrier frequency (Hz)
    n_t: int              # antenna count
    y_0: float            # railway y-intercept (m)
    alpha: float          # railway angle vs x-axis (rad)
    v: float              # train speed (m/s)
    p_t: float            # transmit power (W)
    p_n: float            # noise power (W)
    eta: float            # path-loss exponent
    r_0: float            # reference distance (m)
    psi_min: float        # design AoD range (rad)
    psi_max: float
    gamma_th: float       # RSNR threshold (linear)
    eps_t: float          # grid sample precision
    b_f: float = 0.0      # bandwidth (Hz), 0 for narrowband
    delta_t: float | None = None  # antenna spacing (m); default lambda_c/2
    sigma_psi: float = 0.0        # AoD estimation-error std (rad)
    p_th: float = 0.5             # coverage probability threshold

    def __post_init__(self):
        if self.delta_t is None:
            object.__setattr__(self, "delta_t", self.lambda_c / 2.0)
        self._validate()

    @property
    def lambda_c(self) -> float:
        return C_LIGHT / self.f_c

    @property
    def p_tilde(self) -> float:
        """Effective transmit power P_T*lambda^2*r0^(eta-2)/(16 pi^2 y0^eta cos^eta alpha)."""
        lam = self.lambda_c
        return (self.p_t * lam**2 * self.r_0 ** (self.eta - 2.0)
                / (16.0 * math.pi**2 * self.y_0**self.eta * math.cos(self.alpha) ** self.eta))

    def _validate(self):
        checks = [
            (self.y_0 > 0, "y_0 > 0"),
            (self.alpha >= 0, "alpha >= 0"),
            (0 < self.eps_t < 1, "eps_t in (0, 1)"),
            (self.delta_t > 0, "delta_t > 0"),
            (self.psi_min < self.psi_max, "psi_min < psi_max"),
            (-math.pi / 2 < self.psi_min, "psi_min > -pi/2"),
            (self.psi_max < math.pi / 2 - self.alpha, "psi_max < pi/2 - alpha"),
            (self.n_t >= 1, "n_t >= 1"),
            (self.f_c > 0, "f_c > 0"),
            (self.v > 0, "v > 0"),
            (self.p_t > 0 and self.p_n > 0, "powers > 0 (linear watts)"),
            (self.gamma_th > 0, "gamma_th > 0 (linear)"),
            (self.sigma_psi >= 0, "sigma_psi >= 0"),
            (0 < self.p_th < 1, "p_th in (0, 1)"),
        ]
        for ok, inv in checks:
            if not ok:
                raise ValueError(f"scenario invariant violated: {inv}")


@dataclass(frozen=True)
class SolverParams:
    """Tolerances, penalties, weights and caps for both design schemes."""

    rho_1: float = 10.0           # rank-one penalty weight
    rho_2_init: float = 0.0       # min-max constant-modulus penalty
    delta_rho_2: float = 0.1
    eps_1: float = 1e-6           # DC objective-decrease stop
    eps_2: float = 1e-7           # DC spectral-norm-gap stop
    eps_min: float = 0.005        # stationarity tolerance bounds
    eps_max: float = 0.05
    eps_phi: float | None = None  # angle search tolerance; None = one grid sample
    eps_f: float = 1e-3           # norm-violation threshold
    delta_phi: float | None = None  # monotonic step; None = 20 grid samples
    w_max: float = 0.5
    w_min: float = 0.003
    w_mu: float = 0.5
    q_cap: int = 200              # max PP iterations
    seed: int = 0
    dykstra_tol: float = 1e-9
    dykstra_max_iter: int = 2000
    subgrad_max_iter: int = 1500

    def __post_init__(self):
        checks = [
            (0 < self.w_mu < 1, "0 < w_mu < 1"),
            (0 < self.w_min <= self.w_max < 1, "0 < w_min <= w_max < 1"),
            (self.eps_min <= self.eps_max, "eps_min <= eps_max"),
            (self.eps_1 > 0 and self.eps_2 > 0, "eps_1, eps_2 > 0"),
            (self.eps_min > 0, "eps_min > 0"),
            (self.eps_f > 0, "eps_f > 0"),
            (self.eps_phi is None or self.eps_phi > 0, "eps_phi > 0"),
            (self.delta_phi is None or self.delta_phi > 0, "delta_phi > 0"),
            (self.delta_rho_2 > 0, "delta_rho_2 > 0"),
            (self.rho_1 > 0, "rho_1 > 0"),
            (self.q_cap >= 1, "q_cap >= 1"),
            (self.dykstra_tol > 0, "dykstra_tol > 0"),
        ]
        for ok, inv in checks:
            if not ok:
                raise ValueError(f"solver invariant violated: {inv}")


def aod_to_position(cfg: ScenarioConfig, psi: float) -> tuple[float, float]:
    """Relay coordinate on the railway for departure angle psi."""
    denom = 1.0 - math.tan(cfg.alpha) * math.tan(psi)
    if denom <= 0.0:
        raise ValueError(f"psi={psi} outside railway domain (1 - tan(alpha)tan(psi) <= 0)")
    return (cfg.y_0 * math.tan(psi) / denom, cfg.y_0 / denom)


def bs_to_relay_distance(cfg: ScenarioConfig, psi: float) -> float:
    """Distance from antenna 1 (origin) to the relay at angle psi."""
    c = math.cos(psi + cfg.alpha)
    if c <= 0.0:
        raise ValueError(f"psi={psi} outside railway domain (cos(psi+alpha) <= 0)")
    return cfg.y_0 * math.cos(cfg.alpha) / c


def aod_at_time(cfg: ScenarioConfig, t: float, r_start: tuple[float, float]) -> float:
    """AoD after the train travels for t seconds from r_start along the railway."""
    x = r_start[0] + cfg.v * t * math.cos(cfg.alpha)
    y = r_start[1] + cfg.v * t * math.sin(cfg.alpha)
    if y <= 0.0:
        raise ValueError("relay y-coordinate must stay positive")
    return math.atan(x / y)
