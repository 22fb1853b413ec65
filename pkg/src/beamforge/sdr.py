"""Semidefinite lifting with rank-one DC penalty, solved by projected
subgradient over the lifted feasible set (PSD cone with fixed diagonal).

The interior-point step of the original formulation is replaced by a
self-contained first-order method: Dykstra alternating projection handles
the feasible set, a projected subgradient loop handles each convex
subproblem. Suitable for small antenna counts only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .scenario import SolverParams

LARGE_NT_WARN = 32


def _project_psd(h: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(h)
    vals = np.maximum(vals, 0.0)
    return (vecs * vals) @ vecs.conj().T


def _project_diag(h: np.ndarray, n_t: int) -> np.ndarray:
    out = h.copy()
    np.fill_diagonal(out, 1.0 / n_t)
    return out


def project_f1(h: np.ndarray, tol: float = 1e-9, max_iter: int = 2000):
    """Dykstra projection onto {F PSD, diag(F) = 1/N_T}.

    Returns (F, converged). The best iterate so far is returned when the
    iteration cap is hit.
    """
    n_t = h.shape[0]
    x = 0.5 * (h + h.conj().T)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    prev = x
    for _ in range(max_iter):
        y = _project_psd(x + p)
        p = x + p - y
        x = _project_diag(y + q, n_t)
        q = y + q - x
        if np.linalg.norm(x - prev) < tol:
            return x, True
        prev = x
    return x, False


def d1_value(f_mat: np.ndarray, steering: np.ndarray, gamma: np.ndarray) -> float:
    """max_m -(1/gamma_m) a_m^H F a_m."""
    t = steering.conj() @ f_mat
    quad = np.real(np.sum(t * steering, axis=1))
    return float(np.max(-quad / gamma))


def _d1_subgradient(f_mat, steering, gamma):
    t = steering.conj() @ f_mat
    quad = np.real(np.sum(t * steering, axis=1))
    m_star = int(np.argmax(-quad / gamma))
    a = steering[m_star]
    return -np.outer(a, a.conj()) / gamma[m_star]


@dataclass
class SubgradResult:
    f_mat: np.ndarray
    value: float
    half_value: float  # best value after half the iterations (slack estimate)


def _projected_subgradient(f_init, steering, gamma, xi, params: SolverParams) -> SubgradResult:
    """Minimize D1(F) - Tr{Xi F} over F1, tracking the best iterate."""
    def objective(f_mat):
        return d1_value(f_mat, steering, gamma) - float(np.real(np.vdot(xi, f_mat)))

    f_mat = f_init
    best_f, best_val = f_mat, objective(f_mat)
    half_val = best_val
    max_iter = params.subgrad_max_iter
    radius = 2.0  # Frobenius diameter bound of F1 (PSD, trace 1)
    for k in range(1, max_iter + 1):
        sub = _d1_subgradient(f_mat, steering, gamma) - xi
        g_norm = np.linalg.norm(sub)
        if g_norm == 0.0:
            break
        step = radius / (g_norm * math.sqrt(k))
        f_mat, _ = project_f1(f_mat - step * sub, params.dykstra_tol,
                              params.dykstra_max_iter)
        val = objective(f_mat)
        if val < best_val:
            best_val, best_f = val, f_mat
        if k == max_iter // 2:
            half_val = best_val
    return SubgradResult(best_f, best_val, half_val)


def sdr_lower_bound(steering: np.ndarray, gamma: np.ndarray, params: SolverParams):
    """Minimize D1 over F1 with the rank constraint removed.

    Returns (F0, d1_lb, slack). Infeasibility of the covered samples is
    certified only when d1_lb - slack > -1; the slack extrapolates the
    remaining subgradient progress from the observed second-half improvement.
    """
    n_t = steering.shape[1]
    f0 = np.eye(n_t, dtype=complex) / n_t
    res = _projected_subgradient(f0, steering, gamma, np.zeros((n_t, n_t)), params)
    slack = 3.0 * max(res.half_value - res.value, 0.0) + 1e-9
    return res.f_mat, res.value, slack


def top_eigvec(f_mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(f_mat)
    return vecs[:, -1]


def extract_beamformer(f_mat: np.ndarray) -> np.ndarray:
    """Constant-modulus beam from the top eigenvector (zero entries get phase 0)."""
    n_t = f_mat.shape[0]
    xi = top_eigvec(f_mat)
    mods = np.abs(xi)
    out = np.where(mods > 0.0, xi / np.where(mods > 0.0, mods, 1.0), 1.0)
    return out / math.sqrt(n_t)


def dc_subproblem_solve(f_mat: np.ndarray, xi: np.ndarray, steering: np.ndarray,
                        gamma: np.ndarray, params: SolverParams) -> np.ndarray:
    """Approximately minimize D1(F) - Tr{Xi F} over F1, never worse than f_mat."""
    res = _projected_subgradient(f_mat, steering, gamma, xi, params)
    return res.f_mat


@dataclass
class DCResult:
    weights: np.ndarray
    converged: bool
    d_history: list   # D values for the final penalty weight (non-increasing)
    f_mat: np.ndarray


def dc_iterate(steering: np.ndarray, gamma: np.ndarray, params: SolverParams,
               f_init: np.ndarray | None = None, max_rho_doublings: int = 3) -> DCResult:
    """Alternate rank-one subgradient selection and convex subproblem solves
    until the DC objective stalls and the spectral-norm gap closes.

    When the objective stalls while the iterate is still far from rank one,
    the rank penalty is doubled (bounded number of times) and the loop
    continues; on a persistent stall the best iterate is extracted anyway
    and the caller decides feasibility by exact recheck.
    """
    n_t = steering.shape[1]
    if n_t > LARGE_NT_WARN:
        warnings.warn(f"first-order SDR path is intended for N_T <= {LARGE_NT_WARN}",
                      stacklevel=2)
    rho_1 = params.rho_1
    if f_init is None:
        f_mat, _ = project_f1(np.eye(n_t, dtype=complex) / n_t,
                              params.dykstra_tol, params.dykstra_max_iter)
    else:
        f_mat = f_init

    def d_value(f, rho):
        return d1_value(f, steering, gamma) - rho * float(np.linalg.norm(f, 2))

    d_hist = [d_value(f_mat, rho_1)]
    converged = False
    doublings = 0
    for _ in range(params.q_cap):
        xi_vec = top_eigvec(f_mat)
        xi = rho_1 * np.outer(xi_vec, xi_vec.conj())
        f_mat = dc_subproblem_solve(f_mat, xi, steering, gamma, params)
        d_hist.append(d_value(f_mat, rho_1))
        spectral_gap = 1.0 - float(np.linalg.norm(f_mat, 2))
        if d_hist[-2] - d_hist[-1] <= params.eps_1:
            if spectral_gap <= params.eps_2:
                converged = True
                break
            if doublings < max_rho_doublings:
                rho_1 *= 2.0
                doublings += 1
                d_hist = [d_value(f_mat, rho_1)]
            else:
                break
    return DCResult(extract_beamformer(f_mat), converged, d_hist, f_mat)
