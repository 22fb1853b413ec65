"""End-to-end checks of the full design pipeline.

Each test emits a single PASS/FAIL line for its criterion. The near-field
run needs hours of CPU and is opt-in: set RUN_NEARFIELD=1.
"""

import math
import os
import time

import numpy as np
import pytest

from beamforge import benchmarks, minmax
from beamforge.benchmarks import (esc_partition, nubw_m_partition,
                                  nubw_s_partition, partition_codebook,
                                  ubw_partition)
from beamforge.channel import AoDGrid, band, build_grid, coverage_set, gains_over
from beamforge.minmax import (SampleBundle, pdg_solve, pp_pdg, project_simplex,
                              random_unit_lift, solve_sub1, solve_sub2,
                              solve_sub3, surrogate_value)
from beamforge.scenario import SolverParams, aod_to_position, db_to_linear
from beamforge.search import (minmax_feasibility_check, sdr_feasibility_check,
                              sequential_design)
from beamforge.sdr import dc_iterate

from conftest import farfield_config, tiny_config

TABLE2_ANGLES = {1: -1.2872, 2: -1.0616, 4: -0.1537, 5: 0.2956, 8: 0.9179}


def verdict(label, ok, detail=""):
    print(f"{label}: {'PASS' if ok else 'FAIL'} {detail}".rstrip(), flush=True)
    assert ok, f"{label}: {detail}"


@pytest.fixture(scope="module")
def far_design(far_cfg, far_grid):
    t0 = time.perf_counter()
    cb = sequential_design(far_grid, far_cfg, SolverParams(), "pp_pdg_ms")
    return cb, time.perf_counter() - t0


def _rsnr_per_beam(cb, grid, cfg):
    """(gains, thresholds, rsnr linear) per beam over its noiseless coverage."""
    out = []
    for beam in cb.beams:
        idx = coverage_set(grid, beam.phi_lo, beam.phi_hi)
        g = gains_over(grid.steering[idx], beam.weights)
        out.append((g, grid.gamma[idx], cfg.gamma_th * g / grid.gamma[idx]))
    return out


def test_wide_range_design_beam_count_and_switch_angles(far_cfg, far_design):
    cb, seconds = far_design
    ok = cb.n == 8
    angles = ""
    if ok:
        sw = cb.switch_angles
        errs = {i: abs(sw[i] - ref) for i, ref in TABLE2_ANGLES.items()}
        ok = all(e <= 0.02 for e in errs.values())
        angles = " ".join(f"{sw[i]:+.4f}" for i in sorted(TABLE2_ANGLES))
    verdict("criterion 1 (beam count and switch angles)", ok,
            f"N={cb.n} angles=[{angles}] in {seconds:.0f}s")


def test_wide_range_design_feasibility_and_rsnr_spread(far_cfg, far_grid, far_design):
    cb, _ = far_design
    feasible, spreads = True, []
    for g, gam, rs in _rsnr_per_beam(cb, far_grid, far_cfg):
        feasible &= bool(np.all(g >= gam))
        spreads.append(10.0 * math.log10(float(rs.max()) / float(rs.min())))
    ok = feasible and max(spreads) <= 8.0
    verdict("criterion 2 (zero-tolerance feasibility, per-beam spread)", ok,
            f"feasible={feasible} max_spread={max(spreads):.2f} dB")


@pytest.mark.skipif(os.environ.get("RUN_NEARFIELD") != "1",
                    reason="multi-hour run; set RUN_NEARFIELD=1 to enable")
def test_short_range_large_array_design_and_distance_boundary():
    cfg = farfield_config(n_t=128, gamma_th=db_to_linear(13.0), y_0=5.0,
                          eps_t=0.001)
    params = SolverParams(eps_min=0.001, eps_max=0.02)
    grid = build_grid(cfg)
    cb = sequential_design(grid, cfg, params, "pp_pdg_ms")
    # every trajectory distance sits inside the 128-element boundary at 5% loss
    sub = np.unique(np.r_[np.arange(0, grid.m_count, 500), grid.m_count - 1])
    inside = all(grid.r[m] < band(float(grid.psi[m]), cfg.n_t, cfg.b_f, 0.05, cfg)
                 for m in sub)
    ok = cb.n in (13, 14, 15) and inside
    verdict("criterion 3 (large-array design, distance boundary)", ok,
            f"N={cb.n} all_inside_boundary={inside}")


def test_scheme_agreement_and_runtime_ordering():
    cfg = farfield_config(n_t=16, psi_min=-0.6, psi_max=0.6, eps_t=0.02)
    grid = build_grid(cfg)
    params = SolverParams()
    t0 = time.perf_counter()
    cb_pp = sequential_design(grid, cfg, params, "pp_pdg_ms")
    t_pp = time.perf_counter() - t0
    t0 = time.perf_counter()
    cb_sdr = sequential_design(grid, cfg, params, "sdr_dc_bis")
    t_sdr = time.perf_counter() - t0

    same_n = cb_pp.n == cb_sdr.n
    close = False
    if same_n:
        ia = np.searchsorted(grid.psi, cb_pp.switch_angles[1:-1])
        ib = np.searchsorted(grid.psi, cb_sdr.switch_angles[1:-1])
        close = bool(np.all(np.abs(ia - ib) <= 2))
    ok = same_n and close and t_sdr > t_pp
    verdict("criterion 4 (scheme agreement, runtime ordering)", ok,
            f"N_pp={cb_pp.n} N_sdr={cb_sdr.n} angles_close={close} "
            f"t_pp={t_pp:.0f}s t_sdr={t_sdr:.0f}s")


# --------------------------------------------------- independent oracles


def _simplex_oracle(x):
    """O(J^2) sort-free projection: try each entry as the support boundary."""
    n = len(x)
    for i in range(n):
        s, k = 0.0, 0
        for j in range(n):
            if x[j] >= x[i]:
                s += x[j]
                k += 1
        nu = (s - 1.0) / k
        z = np.maximum(x - nu, 0.0)
        if abs(z.sum() - 1.0) < 1e-9:
            return z
    raise AssertionError("oracle found no consistent support")


def _sub1_oracle(gmat, z, anchor, sigma, n_t, iters=300):
    """Projected gradient with a contraction step on the strongly convex sub1."""
    b = gmat @ z
    v = np.zeros(2 * n_t)
    for _ in range(iters):
        v = minmax._disk_project(v - 0.5 / sigma * (b + sigma * (v - anchor)), n_t)
    return v


def test_subproblem_solutions_match_independent_oracles():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst1 = worst2 = worst3 = 0.0
    for _ in range(1000):
        n_t, j = int(rng.integers(2, 6)), int(rng.integers(1, 10))
        a = rng.standard_normal((j, n_t)) + 1j * rng.standard_normal((j, n_t))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        bundle = SampleBundle(a, rng.uniform(0.1, 0.9, j), float(rng.uniform(0, 0.5)))
        v = rng.standard_normal(2 * n_t)
        gmat = bundle.grad_matrix(v)
        dvec = bundle.gamma + bundle.gains(v) + bundle.rho_2 * (v @ v)
        z = project_simplex(rng.standard_normal(j))
        anchor = random_unit_lift(n_t, rng)
        sigma = float(rng.uniform(0.5, 4.0))

        got1 = solve_sub1(gmat, z, anchor, sigma, n_t)
        worst1 = max(worst1, float(np.max(np.abs(
            got1 - _sub1_oracle(gmat, z, anchor, sigma, n_t)))))

        mu_z = float(rng.uniform(0.2, 3.0))
        z0 = project_simplex(rng.standard_normal(j))
        got2 = solve_sub2(gmat, dvec, v, mu_z, z0)
        worst2 = max(worst2, float(np.max(np.abs(
            got2 - _simplex_oracle((dvec + gmat.T @ v + mu_z * z0) / mu_z)))))

        l_q = float(rng.uniform(0.2, 3.0))
        got3 = solve_sub3(gmat, dvec, z0, v, l_q)
        worst3 = max(worst3, float(np.max(np.abs(
            got3 - _simplex_oracle((dvec + gmat.T @ v + l_q * z0) / l_q)))))
    dt = time.perf_counter() - t0
    ok = max(worst1, worst2, worst3) <= 1e-8 and dt < 60.0
    verdict("criterion 5 (closed-form solutions vs oracles)", ok,
            f"max_err={max(worst1, worst2, worst3):.2e} in {dt:.1f}s")


def test_descent_and_termination_properties():
    params = SolverParams()
    eps3, w = 0.05, 0.5
    monotone = bounded = gap_ok = dc_monotone = True
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n_t, j = 4, 6
        a = rng.standard_normal((j, n_t)) + 1j * rng.standard_normal((j, n_t))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        bundle = SampleBundle(a, rng.uniform(0.1, 1.1, j), 0.0)
        v0 = random_unit_lift(n_t, rng)
        res = pp_pdg(bundle, v0, params, eps3, w, early_feasible=False)
        hist = np.array(res.u_history)
        monotone &= bool(np.all(np.diff(hist) <= 1e-9))
        if not res.capped:
            lip = bundle.lip
            mu = params.w_mu / lip
            sigma = (1.0 / params.w_mu - 1.0) * lip
            stop_gap = (1.0 - w) * eps3**2 * mu**2 * sigma / 8.0
            bounded &= res.q_star <= (hist[0] - hist[-1]) / stop_gap + 1.0

        # smoothed primal-dual gap certified at the inner loop's exit
        anchor = random_unit_lift(n_t, rng)
        inner = pdg_solve(bundle, anchor, 2.0, 1e-4)
        gmat = bundle.grad_matrix(anchor)
        dvec = bundle.gamma + bundle.gains(anchor)
        up = float(np.max(dvec + gmat.T @ inner.v)
                   + 1.0 * np.sum((inner.v - anchor) ** 2))
        v_lo = solve_sub1(gmat, inner.z, anchor, 2.0, n_t)
        lo = float(1.0 * np.sum((v_lo - anchor) ** 2)
                   + v_lo @ (gmat @ inner.z) + dvec @ inner.z)
        gap_ok &= inner.converged and (up - lo <= 1e-4 + 1e-12)

        if seed < 5:
            dc = dc_iterate(a, 0.3 * rng.uniform(0.1, 0.9, j), params)
            dc_monotone &= bool(np.all(np.diff(dc.d_history) <= 1e-9))
    ok = monotone and bounded and gap_ok and dc_monotone
    verdict("criterion 6 (descent and termination)", ok,
            f"pp_monotone={monotone} pp_bound={bounded} "
            f"gap={gap_ok} dc_monotone={dc_monotone}")


def _trace_spread_db(cb, grid, cfg):
    vals = [rs for _, _, rs in _rsnr_per_beam(cb, grid, cfg)]
    v = np.concatenate(vals)
    return 10.0 * math.log10(float(v.max()) / float(v.min()))


def test_benchmark_partitions_and_rsnr_stability(far_cfg, far_grid, far_design):
    cfg = far_cfg
    p_ubw = ubw_partition(cfg, 8)
    widths = np.diff(np.sin(p_ubw.angles))
    ubw_eq = bool(np.all(np.abs(widths - widths[0]) <= 1e-9))

    p_esc = esc_partition(cfg, 8)
    pts = np.array([aod_to_position(cfg, float(a)) for a in p_esc.angles])
    arcs = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    esc_eq = bool(np.all(np.abs(arcs - arcs.mean()) <= 1e-9 * arcs.sum()))

    _, hist_m = nubw_m_partition(cfg, 4, return_history=True)
    _, hist_s = nubw_s_partition(cfg, 4, return_history=True)
    sweeps_ok = (bool(np.all(np.diff(hist_m) >= -1e-9))
                 and bool(np.all(np.diff(hist_s) <= 1e-9)))

    # equal-width beams on the same scenario fluctuate far more than the
    # designed codebook; a decimated grid keeps the comparison affordable
    stride = 8
    dec = AoDGrid(t=far_grid.t[::stride], psi=far_grid.psi[::stride],
                  r=far_grid.r[::stride], gamma=far_grid.gamma[::stride],
                  steering=far_grid.steering[::stride])
    fit_params = SolverParams(delta_rho_2=1.0)
    cb_ubw = partition_codebook(dec, p_ubw, fit_params, cfg, tol_db=2.0)
    cb_design, _ = far_design
    s_ubw = _trace_spread_db(cb_ubw, dec, cfg)
    s_design = _trace_spread_db(cb_design, dec, cfg)

    ok = ubw_eq and esc_eq and sweeps_ok and s_ubw > s_design
    verdict("criterion 7 (benchmark partitions, spread comparison)", ok,
            f"ubw_eq={ubw_eq} esc_eq={esc_eq} sweeps={sweeps_ok} "
            f"spread_ubw={s_ubw:.2f} dB spread_design={s_design:.2f} dB")


def _quantized_feasible(steering, gamma, levels=16):
    """Exhaustive search over phase-quantized beams, first phase pinned to 0."""
    n_t = steering.shape[1]
    phases = 2.0 * math.pi * np.arange(levels) / levels
    mesh = np.meshgrid(*([phases] * (n_t - 1)), indexing="ij")
    ph = np.stack([m.ravel() for m in mesh], axis=1)
    ph = np.concatenate([np.zeros((len(ph), 1)), ph], axis=1)
    cand = np.exp(1j * ph) / math.sqrt(n_t)
    gains = np.abs(steering.conj() @ cand.T) ** 2
    return bool(np.any(np.all(gains >= gamma[:, None], axis=0)))


def test_no_false_infeasibility_vs_exhaustive_search():
    cfg = tiny_config(n_t=4)
    grid = build_grid(cfg)
    params = SolverParams()
    brute_feasible = 0
    false_calls = []
    rng = np.random.default_rng(11)
    for trial in range(50):
        start = int(rng.integers(0, grid.m_count - 8))
        idx = np.arange(start, start + 8)
        scale = float(rng.uniform(0.5, 3.5))
        steering, gamma = grid.steering[idx], grid.gamma[idx] * scale
        if not _quantized_feasible(steering, gamma):
            continue
        brute_feasible += 1
        ok_mm, _ = minmax_feasibility_check(steering, gamma, params, rng)
        ok_sdr, _ = sdr_feasibility_check(steering, gamma, params)
        if not (ok_mm and ok_sdr):
            false_calls.append((trial, ok_mm, ok_sdr))
    ok = brute_feasible > 0 and not false_calls
    verdict("criterion 8 (no false infeasibility vs exhaustive search)", ok,
            f"brute_feasible={brute_feasible}/50 false_calls={false_calls}")
