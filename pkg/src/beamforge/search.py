"""Two-stage coverage search: fix a trial switch angle, solve the feasibility
problem, and move the angle by bisection (SDR-DC scheme) or by the adaptive
monotonic-plus-bisection mixed search (PP-PDG scheme). `sequential_design`
chains the per-beam searches into a full codebook.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import minmax, sdr
from .channel import AoDGrid, Beam, Codebook, coverage_set, gains_over
from .minmax import SampleBundle, lift, unit_modulus_projection, unlift
from .scenario import ScenarioConfig, SolverParams

SCHEMES = ("sdr_dc_bis", "pp_pdg_ms")


class SolverError(RuntimeError):
    """Raised when no feasible beam exists even for a single-sample coverage."""


def local_spacing(grid: AoDGrid, phi: float) -> float:
    """Angle gap between grid samples near phi."""
    diffs = np.diff(grid.psi)
    m = min(int(np.searchsorted(grid.psi, phi)), len(diffs) - 1)
    return float(diffs[m])


def resolve_eps_phi(grid: AoDGrid, params: SolverParams, phi: float) -> float:
    return params.eps_phi if params.eps_phi is not None else local_spacing(grid, phi)


def resolve_delta_phi(grid: AoDGrid, params: SolverParams, phi: float) -> float:
    return params.delta_phi if params.delta_phi is not None else 20.0 * local_spacing(grid, phi)


def next_grid_angle(grid: AoDGrid, phi: float) -> float:
    """min{psi_m > phi}; one ulp beyond the last sample when phi passes the grid."""
    m = int(np.searchsorted(grid.psi, phi, side="right"))
    if m < grid.m_count:
        return float(grid.psi[m])
    return math.nextafter(float(grid.psi[-1]), math.inf)


def exact_feasible(steering: np.ndarray, gamma: np.ndarray, weights: np.ndarray) -> bool:
    """Gain >= gamma on every sample, zero tolerance."""
    return bool(np.all(gains_over(steering, weights) >= gamma))


def _matched_fallback(grid: AoDGrid, cfg: ScenarioConfig, phi_i: float):
    """Single-sample coverage with the matched beam, or a hard error."""
    phi_hat = next_grid_angle(grid, phi_i)
    idx = coverage_set(grid, phi_i, phi_hat, cfg.sigma_psi, cfg.p_th)
    if len(idx) == 0:
        raise SolverError(f"no grid sample covered starting at phi={phi_i}")
    weights = grid.steering[idx[0]].copy()
    if not exact_feasible(grid.steering[idx], grid.gamma[idx], weights):
        raise SolverError(
            f"RSNR threshold unreachable even for one sample at psi={grid.psi[idx[0]]}")
    return weights, phi_hat


@dataclass
class BeamSearchResult:
    weights: np.ndarray
    phi_hat: float
    trials: int
    diagnostics: dict = field(default_factory=dict)


ACTIVE_SET_BUDGET = 256
_RHO2_CAP = 10.0  # runaway-penalty guard; verdict falls back to infeasible


def _initial_active(n_full: int, carry: np.ndarray | None) -> np.ndarray:
    stride = max(1, n_full // ACTIVE_SET_BUDGET)
    base = np.arange(0, n_full, stride)
    base = np.union1d(base, [0, n_full - 1])
    if carry is not None:
        base = np.union1d(base, carry[carry < n_full])
    return base


def _pp_trial(steering: np.ndarray, gamma: np.ndarray, rho2: float,
              v: np.ndarray, params: SolverParams, eps3: float, w: float,
              active: np.ndarray):
    """One PP-PDG solve with constraint generation.

    The solver only sees the active subset; whenever its projected beam is
    feasible on the subset but violated elsewhere, the worst violators join
    the subset and the solve repeats (warm-started). A subset-infeasible
    verdict is final: the full set can only be harder.

    Returns (pp_result, projected_v, sub_bundle, active, full_feasible).
    """
    while True:
        sub = SampleBundle(steering[active], gamma[active], rho2)
        res = minmax.pp_pdg(sub, v, params, eps3, w)
        v = res.v
        proj = unit_modulus_projection(v)
        weights = unlift(proj)
        if res.capped or not exact_feasible(sub.steering, sub.gamma, weights):
            return res, proj, sub, active, False
        short = gamma - gains_over(steering, weights)
        viol = np.nonzero(short > 0.0)[0]
        if len(viol) == 0:
            return res, proj, sub, active, True
        order = viol[np.argsort(short[viol])[::-1]]
        grow = max(8, len(order) // 8)
        active = np.union1d(active, order[:grow])


def _prune_active(active: np.ndarray, bundle: SampleBundle, weights: np.ndarray,
                  keep_factor: float = 2.0) -> np.ndarray:
    """Keep only near-binding samples for the next trial's warm active set."""
    ratio = gains_over(bundle.steering, weights) / bundle.gamma
    return active[ratio < keep_factor]


def bisection_search(grid: AoDGrid, cfg: ScenarioConfig, params: SolverParams,
                     phi_i: float, rng: np.random.Generator | None = None) -> BeamSearchResult:
    """SDR-DC feasibility solves inside a plain bisection on the switch angle."""
    eps_phi = resolve_eps_phi(grid, params, phi_i)
    dphi0 = resolve_delta_phi(grid, params, phi_i)
    psi_last = float(grid.psi[-1])
    trials = 0

    def evaluate(trial_hi: float):
        nonlocal trials
        trials += 1
        idx = coverage_set(grid, phi_i, trial_hi, cfg.sigma_psi, cfg.p_th)
        if len(idx) == 0:
            return True, None
        steering, gamma = grid.steering[idx], grid.gamma[idx]
        f0, d1_lb, slack = sdr.sdr_lower_bound(steering, gamma, params)
        if d1_lb - slack > -1.0:
            return False, None
        res = sdr.dc_iterate(steering, gamma, params, f_init=f0)
        ok = exact_feasible(steering, gamma, res.weights)
        return ok, res.weights if ok else None

    # bracket the boundary by doubling the step until an infeasible trial
    phi_lb, best = phi_i, None
    step = dphi0
    phi_ub = None
    while phi_ub is None:
        trial = phi_i + step
        if trial > psi_last:
            trial = math.nextafter(psi_last, math.inf)
        ok, weights = evaluate(trial)
        if ok:
            if weights is not None:
                phi_lb, best = trial, weights
            if trial > psi_last:
                return BeamSearchResult(best, trial, trials, {"full_range": True})
            step *= 2.0
        else:
            phi_ub = trial

    gap0 = phi_ub - phi_lb
    bis_trials = 0
    while phi_ub - phi_lb > eps_phi:
        mid = 0.5 * (phi_lb + phi_ub)
        ok, weights = evaluate(mid)
        bis_trials += 1
        if ok and weights is not None:
            phi_lb, best = mid, weights
        else:
            phi_ub = mid

    if best is None:
        best, phi_hat = _matched_fallback(grid, cfg, phi_i)
        return BeamSearchResult(best, phi_hat, trials, {"fallback": True})
    phi_hat = next_grid_angle(grid, phi_lb)
    return BeamSearchResult(best, phi_hat, trials,
                            {"bisection_trials": bis_trials, "initial_gap": gap0})


def mixed_search(grid: AoDGrid, cfg: ScenarioConfig, params: SolverParams,
                 phi_i: float, rng: np.random.Generator,
                 max_trials: int = 100_000) -> BeamSearchResult:
    """Adaptive monotonic search then bisection, with PP-PDG feasibility solves."""
    eps_phi = resolve_eps_phi(grid, params, phi_i)
    dphi0 = resolve_delta_phi(grid, params, phi_i)
    psi_last = float(grid.psi[-1])

    phi_lb, phi_ub = phi_i, None
    trial = phi_i + dphi0
    dphi = dphi0
    eps3, w, rho2 = params.eps_max, params.w_max, params.rho_2_init
    v = minmax.random_unit_lift(cfg.n_t, rng)
    best = None
    trials = 0
    accept_eps3 = []
    carry = None

    while abs(dphi) > eps_phi and trials < max_trials:
        trials += 1
        idx = coverage_set(grid, phi_i, min(trial, math.nextafter(psi_last, math.inf)),
                           cfg.sigma_psi, cfg.p_th)
        if len(idx) == 0:
            raise SolverError(f"empty coverage at trial angle {trial}")
        active = _initial_active(len(idx), carry)
        res, f_hat_v, bundle, active, feasible = _pp_trial(
            grid.steering[idx], grid.gamma[idx], rho2, v, params, eps3, w, active)
        v = res.v
        weights = unlift(f_hat_v)
        carry = _prune_active(active, bundle, weights)

        if not feasible:
            # escalate before delivering an infeasible verdict: cap events
            # shrink the PDG weight, constant-modulus disagreement raises the
            # penalty, otherwise the stationarity tolerance tightens
            if res.capped and w > params.w_min:
                w = max(w / 2.0, params.w_min)
                continue
            if (rho2 < _RHO2_CAP
                    and ((1.0 - res.v @ res.v > params.eps_f and abs(dphi) < dphi0)
                         or minmax.violation_check(bundle, res.v, f_hat_v))):
                rho2 += params.delta_rho_2
                eps3 = max(eps3 / 2.0, params.eps_min)
                continue
            if eps3 > params.eps_min:
                eps3 = max(eps3 / 2.0, params.eps_min)
                continue
            # last resort: one tight solve from a matched beam inside the
            # coverage; escapes local minima the warm-started chain inherits
            v_try = minmax.lift(grid.steering[idx[len(idx) // 4]])
            res2, f2, b2, a2, ok2 = _pp_trial(
                grid.steering[idx], grid.gamma[idx], rho2, v_try, params,
                params.eps_min, params.w_max, _initial_active(len(idx), carry))
            if ok2:
                res, f_hat_v, bundle, active, feasible = res2, f2, b2, a2, True
                v = res2.v
                weights = unlift(f_hat_v)
                carry = _prune_active(a2, b2, weights)

        # verdict reached: move the trial angle
        if feasible:
            phi_lb, best = trial, weights
            accept_eps3.append(eps3)
            if trial > psi_last:
                break
            if phi_ub is not None:
                dphi = (phi_ub - phi_lb) / 2.0
            else:
                eps3 = params.eps_max
        else:
            phi_ub = trial
            dphi = (phi_lb - phi_ub) / 2.0
            v = f_hat_v
        trial = trial + dphi
        if trial > psi_last and dphi > 0:
            trial = math.nextafter(psi_last, math.inf)
        w, rho2 = params.w_max, params.rho_2_init

    if best is None:
        weights, phi_hat = _matched_fallback(grid, cfg, phi_i)
        return BeamSearchResult(weights, phi_hat, trials, {"fallback": True})
    phi_hat = next_grid_angle(grid, phi_lb)
    return BeamSearchResult(best, phi_hat, trials, {"accept_eps3": accept_eps3})


def minmax_feasibility_check(steering: np.ndarray, gamma: np.ndarray,
                             params: SolverParams, rng: np.random.Generator,
                             restarts: int = 3):
    """Feasibility verdict for one fixed coverage via PP-PDG with the adaptive
    tolerance/penalty escalation; restarts guard against bad local minima.

    Returns (feasible, weights or None).
    """
    for attempt in range(restarts):
        # first attempt from a matched beam at the coverage middle, then random
        if attempt == 0:
            v = minmax.lift(steering[len(gamma) // 2])
        else:
            v = minmax.random_unit_lift(steering.shape[1], rng)
        eps3, w, rho2 = params.eps_max, params.w_max, params.rho_2_init
        carry = None
        while True:
            active = _initial_active(len(gamma), carry)
            res, f_hat_v, bundle, active, feasible = _pp_trial(
                steering, gamma, rho2, v, params, eps3, w, active)
            v = res.v
            weights = unlift(f_hat_v)
            carry = _prune_active(active, bundle, weights)
            if feasible:
                return True, weights
            if res.capped and w > params.w_min:
                w = max(w / 2.0, params.w_min)
            elif (rho2 < _RHO2_CAP
                  and ((1.0 - res.v @ res.v > params.eps_f)
                       or minmax.violation_check(bundle, res.v, f_hat_v))):
                rho2 += params.delta_rho_2
                eps3 = max(eps3 / 2.0, params.eps_min)
            elif eps3 > params.eps_min:
                eps3 = max(eps3 / 2.0, params.eps_min)
            else:
                break
    return False, None


def sdr_feasibility_check(steering: np.ndarray, gamma: np.ndarray,
                          params: SolverParams):
    """Feasibility verdict for one fixed coverage via the SDR-DC path."""
    f0, d1_lb, slack = sdr.sdr_lower_bound(steering, gamma, params)
    if d1_lb - slack > -1.0:
        return False, None
    res = sdr.dc_iterate(steering, gamma, params, f_init=f0)
    if exact_feasible(steering, gamma, res.weights):
        return True, res.weights
    return False, None


def sequential_design(grid: AoDGrid, cfg: ScenarioConfig, params: SolverParams,
                      scheme: str) -> Codebook:
    """Design beams one by one until the switch angle passes psi_max."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    rng = np.random.default_rng(params.seed)
    phi = float(grid.psi[0])
    beams: list[Beam] = []
    per_beam = []
    t0 = time.perf_counter()
    while phi < cfg.psi_max:
        t_beam = time.perf_counter()
        if scheme == "sdr_dc_bis":
            res = bisection_search(grid, cfg, params, phi, rng)
        else:
            res = mixed_search(grid, cfg, params, phi, rng)
        idx = coverage_set(grid, phi, res.phi_hat, cfg.sigma_psi, cfg.p_th)
        if len(idx) and not exact_feasible(grid.steering[idx], grid.gamma[idx], res.weights):
            raise SolverError(
                f"post-hoc recheck failed for beam over [{phi}, {res.phi_hat})")
        beams.append(Beam(weights=res.weights, phi_lo=phi, phi_hi=res.phi_hat))
        per_beam.append({"trials": res.trials,
                         "seconds": time.perf_counter() - t_beam,
                         **res.diagnostics})
        phi = res.phi_hat
    cb = Codebook(beams=beams, diagnostics={
        "scheme": scheme, "per_beam": per_beam,
        "seconds": time.perf_counter() - t0})
    cb.validate(float(grid.psi[0]), cfg.psi_max)
    return cb
