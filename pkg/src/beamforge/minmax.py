"""Penalty min-max feasibility solver: proximal-point outer loop with an
excessive-gap primal-dual gradient inner loop, all subproblems in closed form.

Everything operates on the real lift v = [Re f; Im f] of the complex beam
weights. Per-sample quadratic forms use the rank-one structure of A_m, so no
dense 2N_T x 2N_T matrix is ever materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import SolverParams


def lift(f: np.ndarray) -> np.ndarray:
    return np.concatenate([f.real, f.imag])


def unlift(v: np.ndarray) -> np.ndarray:
    n = len(v) // 2
    return v[:n] + 1j * v[n:]


class SampleBundle:
    """Coverage samples of one beam-design trial.

    Holds steering vectors a_j (rows), gain thresholds gamma_j and the current
    constant-modulus penalty rho_2. Quadratic forms v^T Atilde_j v are
    |a_j^H f|^2 + rho_2 ||v||^2 with f the unlifted beam.
    """

    def __init__(self, steering: np.ndarray, gamma: np.ndarray, rho_2: float = 0.0):
        if len(steering) == 0:
            raise ValueError("empty sample bundle")
        self.steering = np.asarray(steering)
        self.gamma = np.asarray(gamma, dtype=float)
        self.rho_2 = float(rho_2)
        self.n_t = self.steering.shape[1]
        self.j_count = len(self.gamma)

    @property
    def lip(self) -> float:
        """Weak-convexity constant L = 2(1 + rho_2)."""
        return 2.0 * (1.0 + self.rho_2)

    def with_rho(self, rho_2: float) -> "SampleBundle":
        return SampleBundle(self.steering, self.gamma, rho_2)

    def gains(self, v: np.ndarray) -> np.ndarray:
        """|a_j^H f|^2 for all samples (without the rho_2 term)."""
        f = unlift(v)
        return np.abs(self.steering.conj() @ f) ** 2

    def values(self, v: np.ndarray) -> np.ndarray:
        """u_j(v) = gamma_j - v^T Atilde_j v."""
        return self.gamma - self.gains(v) - self.rho_2 * (v @ v)

    def grad_matrix(self, v: np.ndarray) -> np.ndarray:
        """G with columns grad u_j(v) = -2 Atilde_j v, shape (2 N_T, J)."""
        f = unlift(v)
        s = self.steering.conj() @ f                     # a_j^H f
        w = self.steering * s[:, None] + self.rho_2 * f  # Atilde_j v, complex form
        return -2.0 * np.concatenate([w.real.T, w.imag.T], axis=0)


def penalty_objective(bundle: SampleBundle, v: np.ndarray) -> float:
    """U(v) = max_j u_j(v)."""
    return float(np.max(bundle.values(v)))


def surrogate_value(bundle: SampleBundle, v: np.ndarray, v_anchor: np.ndarray,
                    sigma: float) -> float:
    """Linearized-max surrogate around v_anchor with proximal weight sigma."""
    gmat = bundle.grad_matrix(v_anchor)
    dvec = bundle.gamma + bundle.gains(v_anchor) + bundle.rho_2 * (v_anchor @ v_anchor)
    dv = v - v_anchor
    return float(np.max(dvec + gmat.T @ v) + 0.5 * sigma * (dv @ dv))


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sorted-threshold rule)."""
    s = np.sort(x)[::-1]
    css = np.cumsum(s) - 1.0
    ks = np.arange(1, len(x) + 1)
    cond = s - css / ks > 0
    k = ks[cond][-1]
    nu = css[k - 1] / k
    return np.maximum(x - nu, 0.0)


def _disk_project(c: np.ndarray, n_t: int) -> np.ndarray:
    """Clip each (real, imag) antenna pair of a lifted vector to radius 1/sqrt(N_T)."""
    pairs = np.hypot(c[:n_t], c[n_t:])
    radius = 1.0 / math.sqrt(n_t)
    scale = np.where(pairs > radius, radius / np.maximum(pairs, 1e-300), 1.0)
    return c * np.concatenate([scale, scale])


def solve_sub1(gmat: np.ndarray, z: np.ndarray, v_anchor: np.ndarray,
               sigma: float, n_t: int) -> np.ndarray:
    """argmin_{v in F2} v^T G z + (sigma/2)||v - anchor||^2, in closed form."""
    b = gmat @ z - sigma * v_anchor
    return _disk_project(-b / sigma, n_t)


def solve_sub2(gmat: np.ndarray, dvec: np.ndarray, v: np.ndarray,
               mu_z: float, z0: np.ndarray) -> np.ndarray:
    """argmax_z z^T(d + G^T v) - (mu_z/2)||z - z0||^2 over the simplex."""
    c = dvec + gmat.T @ v + mu_z * z0
    return project_simplex(c / mu_z)


def solve_sub3(gmat: np.ndarray, dvec: np.ndarray, z: np.ndarray,
               v_of_z: np.ndarray, l_q: float) -> np.ndarray:
    """Gradient-mapping step on the simplex with curvature l_q."""
    w = dvec + gmat.T @ v_of_z + l_q * z
    return project_simplex(w / l_q)


def spectral_norm(gmat: np.ndarray, iters: int = 400, tol: float = 1e-12) -> float:
    """Largest singular value by power iteration on G^T G, deterministic start."""
    n = gmat.shape[1]
    z = np.full(n, 1.0 / math.sqrt(n))
    val = 0.0
    for _ in range(iters):
        y = gmat.T @ (gmat @ z)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        z = y / nrm
        new = math.sqrt(nrm)
        if abs(new - val) <= tol * max(new, 1.0):
            val = new
            break
        val = new
    return val


@dataclass
class PDGResult:
    v: np.ndarray
    z: np.ndarray
    iterations: int
    converged: bool


def pdg_solve(bundle: SampleBundle, v_anchor: np.ndarray, sigma: float,
              eps_tilde_2: float, max_inner: int = 500_000) -> PDGResult:
    """One inexact proximal step: minimize the surrogate at v_anchor over F2
    to within eps_tilde_2, via the excessive-gap primal-dual loop."""
    n_t = bundle.n_t
    gmat = bundle.grad_matrix(v_anchor)
    dvec = bundle.gamma + bundle.gains(v_anchor) + bundle.rho_2 * (v_anchor @ v_anchor)
    l_q = spectral_norm(gmat) ** 2 / sigma
    j = bundle.j_count
    z0 = np.full(j, 1.0 / j)

    def surrogate(v):
        dv = v - v_anchor
        return np.max(dvec + gmat.T @ v) + 0.5 * sigma * (dv @ dv)

    def saddle_lower(z):
        v = solve_sub1(gmat, z, v_anchor, sigma, n_t)
        dv = v - v_anchor
        return 0.5 * sigma * (dv @ dv) + v @ (gmat @ z) + dvec @ z

    if l_q == 0.0:
        # G vanished: the surrogate max is attained at the largest constant term
        z = np.zeros(j)
        z[int(np.argmax(dvec))] = 1.0
        return PDGResult(solve_sub1(gmat, z, v_anchor, sigma, n_t), z, 0, True)

    f_bar = solve_sub1(gmat, z0, v_anchor, sigma, n_t)
    z_bar = solve_sub3(gmat, dvec, z0, f_bar, l_q)
    mu_z = 2.0 * l_q

    # the G^T f matvec is shared by sub2, sub3 and the primal gap value;
    # the gap check itself costs a matvec, so thin it out as k grows
    k = 0
    check_at = 0
    gtf = gmat.T @ f_bar
    while True:
        if k >= check_at:
            dv = f_bar - v_anchor
            up = np.max(dvec + gtf) + 0.5 * sigma * (dv @ dv)
            if up - saddle_lower(z_bar) <= eps_tilde_2:
                return PDGResult(f_bar, z_bar, k, True)
            check_at = k + min(1 + k // 4, 64)
        if k >= max_inner:
            return PDGResult(f_bar, z_bar, k, False)
        theta = 2.0 / (k + 3.0)
        z_hat = (1.0 - theta) * z_bar + theta * project_simplex(
            (dvec + gtf + mu_z * z0) / mu_z)
        mu_z *= 1.0 - theta
        f_bar = (1.0 - theta) * f_bar + theta * solve_sub1(gmat, z_hat, v_anchor, sigma, n_t)
        gtf = gmat.T @ f_bar
        z_bar = project_simplex((dvec + gtf + l_q * z_hat) / l_q)
        k += 1


@dataclass
class PPResult:
    v: np.ndarray
    q_star: int
    capped: bool
    u_history: list
    premature: bool = False


def pp_pdg(bundle: SampleBundle, v0: np.ndarray, params: SolverParams,
           eps_3: float, w: float, early_feasible: bool = True) -> PPResult:
    """Proximal-point outer loop; returns a nearly eps_3-stationary point.

    Stops once U(v_q) - Uhat(v_{q+1}, v_q) <= eps_3^2 mu^2 sigma / 8 - eps~2,
    or after q_cap outer iterations (capped flag set for the caller). With
    early_feasible set, exits as soon as the constant-modulus projection of
    the current iterate already meets every threshold (premature stop).
    """
    lip = bundle.lip
    mu = params.w_mu / lip
    sigma = (1.0 / params.w_mu - 1.0) * lip
    eps_tilde_2 = w * params.w_mu * (1.0 - params.w_mu) * eps_3**2 / (8.0 * lip)
    stop_gap = eps_3**2 * mu**2 * sigma / 8.0 - eps_tilde_2

    # the stop test assumes the anchor lies in F2
    v = _disk_project(np.asarray(v0, dtype=float), bundle.n_t)
    u_hist = [penalty_objective(bundle, v)]
    for q in range(params.q_cap + 1):
        if early_feasible:
            proj = unit_modulus_projection(v)
            if np.max(bundle.gamma - bundle.gains(proj)) <= 0.0:
                return PPResult(v, q, False, u_hist, premature=True)
        res = pdg_solve(bundle, v, sigma, eps_tilde_2)
        if not res.converged:
            return PPResult(v, q, True, u_hist)
        u_hat = surrogate_value(bundle, res.v, v, sigma)
        if u_hist[-1] - u_hat <= stop_gap:
            return PPResult(v, q, False, u_hist)
        v = res.v
        u_hist.append(penalty_objective(bundle, v))
    return PPResult(v, params.q_cap, True, u_hist)


def unit_modulus_projection(v: np.ndarray) -> np.ndarray:
    """Rescale each antenna pair to modulus exactly 1/sqrt(N_T), preserving phase.

    A zero pair defaults to phase 0."""
    n_t = len(v) // 2
    pairs = np.hypot(v[:n_t], v[n_t:])
    radius = 1.0 / math.sqrt(n_t)
    out = np.empty_like(v, dtype=float)
    nz = pairs > 0.0
    out[:n_t] = np.where(nz, v[:n_t] * radius / np.where(nz, pairs, 1.0), radius)
    out[n_t:] = np.where(nz, v[n_t:] * radius / np.where(nz, pairs, 1.0), 0.0)
    return out


def violation_check(bundle: SampleBundle, v_star: np.ndarray,
                    v_projected: np.ndarray) -> bool:
    """True when the relaxed point and its constant-modulus projection disagree
    about feasibility (sign product of the shifted objectives is <= 0)."""
    u_star = penalty_objective(bundle, v_star) + bundle.rho_2 * np.linalg.norm(v_star)
    u_proj = penalty_objective(bundle, v_projected) + bundle.rho_2
    return u_star * u_proj <= 0.0


def random_unit_lift(n_t: int, rng: np.random.Generator) -> np.ndarray:
    """Random constant-modulus beam (uniform phases), lifted."""
    theta = rng.uniform(0.0, 2.0 * math.pi, n_t)
    radius = 1.0 / math.sqrt(n_t)
    return np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])
