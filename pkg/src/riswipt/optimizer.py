"""Max-min harvested-energy resource allocation.

Three nested blocks:

* power block -- for a fixed phase configuration the energy floor, the SINR
  targets, and the budget are all affine in the transmit powers, so each
  SCA round reduces to one epigraph LP plus a scalar inversion of the
  linearized DC-floor bound;
* phase block -- fractional energy terms are decoupled with the quadratic
  transform, majorized into a single quadratic form, lifted to a unit-diagonal
  PSD matrix, and driven to rank one by a shrinking difference-of-norms
  penalty (inner SDP loop, outer auxiliary-variable/penalty loop);
* outer block -- coordinate descent alternating the two, keeping the best
  iterate measured by the exact closed-form energies.

Power variables are carried noise-normalized in the public types but the LP
is assembled in watts for conditioning. The SDP objective trades the DC
variable in saturation-power units against a penalty normalized by the lift
dimension so the stated geometric penalty schedule is scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linprog

from .scenario import Scenario, StatCsi, EhModel
from .channel import PhaseShift, as_theta, ris_gain, xi_matrix
from .estimation import PilotPlan, EstimationStats
from .analysis import (PowerAllocation, eh_logistic, eh_nonlinear, q_pzf,
                       q_ppzf, shared_pilot_fourth_moment, sinr_pzf, sinr_ppzf)
from .precoding import PZF_MRT, PZF_PMRT
from .sdp import SdpSolveError, solve_phase_lift

EPS_CONV = 1e-5      # relative convergence tolerance of all iterative loops
ETA0 = 1.0           # initial penalty factor
KAPPA1 = 0.5         # geometric penalty shrink per outer round


class InfeasibleError(RuntimeError):
    """Optimization subproblem infeasible; carries the violated constraints."""

    def __init__(self, message, violated=None):
        super().__init__(message)
        self.violated = violated or []


class SolverFailure(RuntimeError):
    """Convex subsolver did not return a usable solution."""


@dataclass
class OptState:
    """Variables threaded through the phase-shift block."""
    theta: np.ndarray          # (N,) unit modulus
    rho: PowerAllocation
    varrho: float              # current DC floor in the logistic domain (W)
    eta: float = ETA0
    y: np.ndarray = None       # (K_E, K_E) quadratic-transform auxiliaries
    y_bar: np.ndarray = None   # (K_E, K_E) real auxiliaries
    Q: np.ndarray = None       # (N+1, N+1) PSD lift
    outer_iter: int = 0
    inner_iter: int = 0


# ---------------------------------------------------------------------------
# baselines


def baseline_epa(scenario: Scenario) -> PowerAllocation:
    """Equal split of the normalized budget across all users."""
    share = scenario.rho_budget / (scenario.K_I + scenario.K_E)
    return PowerAllocation(rho_I=np.full(scenario.K_I, share),
                           rho_E=np.full(scenario.K_E, share))


def baseline_dft_phase(N: int, index: int) -> PhaseShift:
    """Column `index` of the N-point DFT codebook."""
    if not 0 <= index < N:
        raise ValueError(f"codebook index {index} outside 0..{N - 1}")
    n = np.arange(N)
    return PhaseShift(np.exp(-2j * np.pi * n * index / N))


# ---------------------------------------------------------------------------
# shared coefficient assembly


def _self_gain(M: int, tau_KI: int, scheme: str) -> int:
    return M + 1 if scheme == PZF_MRT else M - tau_KI + 1


def energy_coefficients(csi: StatCsi, plan: PilotPlan, stats: EstimationStats,
                        theta, delta: float, scheme: str = PZF_MRT):
    """Affine watt-domain energy model at fixed phases.

    Returns (c_iu, C_eu) with per-EU floor
    E_l / (tau_c - tau) ~= c_iu[l] * sum(p_I) + sum_t C_eu[l, t] * p_E[t];
    cross terms use the non-shared interference coefficients for every
    partner and the shared fourth moment only for the self term, mirroring
    the power-block model of the optimization problem (the exact averages
    partition pilot-sharing sets instead).
    """
    M, tau_KI, N = csi.M, plan.tau_KI, csi.N
    Xi = xi_matrix(theta, csi)
    xi_d = np.real(np.diag(Xi))
    gam = stats.gamma_g
    lam = csi.lam
    if scheme == PZF_MRT:
        a2 = 1.0 / (M * (gam + lam * delta * xi_d))
    else:
        a2 = 1.0 / ((M - tau_KI) * (gam + lam * delta * xi_d))

    c_iu = lam * (N + delta * xi_d)
    C_eu = np.empty((plan.K_E, plan.K_E))
    for l in range(plan.K_E):
        for t in range(plan.K_E):
            if t == l:
                psi2 = shared_pilot_fourth_moment(
                    csi, stats, theta, delta, l, l,
                    projected=(scheme == PZF_PMRT), tau_KI=tau_KI)
                C_eu[l, l] = a2[l] * psi2 + (N * lam[l] - gam[l])
            elif scheme == PZF_MRT:
                C_eu[l, t] = (a2[t] * M * lam[l] * delta
                              * (gam[t] * xi_d[l]
                                 + M * lam[t] * delta * np.abs(Xi[l, t]) ** 2)
                              + N * lam[l])
            else:
                C_eu[l, t] = a2[t] * (M - tau_KI) * lam[l] * (
                    delta * (gam[t] * xi_d[l] + N * lam[t] * xi_d[t])
                    + M * lam[t] * delta ** 2 * xi_d[t] * xi_d[l]
                    + N * gam[t])
    return c_iu, C_eu


def qos_rows(csi: StatCsi, plan: PilotPlan, stats: EstimationStats,
             qos: np.ndarray, scheme: str):
    """SINR targets as affine rows A @ p <= b over p = [p_I, p_E] in watts."""
    M, tau_KI = csi.M, plan.tau_KI
    gam = stats.gamma_h
    K_I, K_E = plan.K_I, plan.K_E
    A = np.zeros((K_I, K_I + K_E))
    b = np.zeros(K_I)
    sigma_like = 1.0  # rows are scaled by sigma2 outside if needed
    for k in range(K_I):
        mates = [t for t in plan.share_I[k] if t != k]
        row = np.zeros(K_I + K_E)
        row[mates] = (M - tau_KI) * gam[k]
        row[:K_I] += csi.beta_BI[k] - gam[k]
        leak = csi.beta_BI[k] if scheme == PZF_MRT else csi.beta_BI[k] - gam[k]
        row[K_I:] += leak
        row *= qos[k]
        row[k] -= (M - tau_KI) * gam[k]
        A[k] = row
        b[k] = -qos[k] * sigma_like
    return A, b


# ---------------------------------------------------------------------------
# DC conversion helpers


def g_tilde(varrho, varrho_r: float, model: EhModel):
    """Linearized-in-the-concave-part upper bound on the inverse DC map.

    Majorizes the required input energy at every point and touches it at the
    expansion point varrho_r; strictly increasing and convex in varrho.
    """
    v = np.asarray(varrho, dtype=float)
    out = model.b - (np.log((model.phi - v) / varrho_r)
                     - (v - varrho_r) / varrho_r) / model.a
    return out if out.ndim else float(out)


def g_tilde_inverse(target: float, varrho_r: float, model: EhModel) -> float:
    """Solve g_tilde(varrho, varrho_r) = target for varrho in (0, phi)."""
    lo = model.phi * 1e-14
    hi = model.phi * (1.0 - 1e-14)
    if g_tilde(lo, varrho_r, model) >= target:
        return lo
    if g_tilde(hi, varrho_r, model) <= target:
        return hi
    return float(brentq(lambda v: g_tilde(v, varrho_r, model) - target, lo, hi,
                        xtol=model.phi * 1e-15, rtol=1e-14))


# ---------------------------------------------------------------------------
# power block


@dataclass
class PowerStepResult:
    rho: PowerAllocation
    varrho: float
    floor_watts: float        # optimized min energy coefficient, per symbol
    iterations: int
    trace: list = field(default_factory=list)


def _power_lp(csi, plan, stats, theta, qos, scenario, scheme):
    """Epigraph LP: maximize the minimum per-EU energy floor in watts."""
    K_I, K_E = plan.K_I, plan.K_E
    n = K_I + K_E
    c_iu, C_eu = energy_coefficients(csi, plan, stats, theta, scenario.delta, scheme)

    # variables [p_I, p_E, u]; maximize u. Energy rows are normalized by the
    # median floor coefficient and QoS rows by their own scale so the solver's
    # absolute feasibility slack stays far below the SINR tolerance; targets
    # carry a one-in-a-million margin to absorb what slack remains.
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub, b_ub = [], []
    floor_scale = float(np.median(C_eu.diagonal()))
    for l in range(K_E):
        row = np.zeros(n + 1)
        row[:K_I] = -c_iu[l] / floor_scale
        row[K_I:n] = -C_eu[l] / floor_scale
        row[-1] = 1.0 / floor_scale
        A_ub.append(row)
        b_ub.append(0.0)
    Aq, bq = qos_rows(csi, plan, stats, qos * (1.0 + 1e-6), scheme)
    bq = bq * scenario.sigma2
    for k in range(K_I):
        scale = np.linalg.norm(Aq[k]) * scenario.p_bs + abs(bq[k])
        row = np.zeros(n + 1)
        row[:n] = Aq[k] / scale
        A_ub.append(row)
        b_ub.append(bq[k] / scale)
    budget = np.zeros(n + 1)
    budget[:n] = 1.0 / scenario.p_bs
    A_ub.append(budget)
    b_ub.append(1.0)

    res = linprog(c, A_ub=np.array(A_ub), b_ub=np.array(b_ub),
                  bounds=[(0, None)] * n + [(0, None)],
                  method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        violated = _diagnose_infeasibility(Aq, bq * scenario.sigma2, scenario)
        raise InfeasibleError(
            f"power allocation LP failed (status {res.status}: {res.message})",
            violated=violated)
    p = res.x[:n]
    # clamp the budget exactly; the scaling slack is far below QoS tolerance
    total = p.sum()
    if total > scenario.p_bs:
        p *= scenario.p_bs / total
    rho = PowerAllocation(rho_I=p[:K_I] / scenario.sigma2,
                          rho_E=p[K_I:] / scenario.sigma2)
    return rho, float(res.x[-1])


def _diagnose_infeasibility(Aq, bq, scenario):
    """Feasibility sub-LP over QoS+budget only: report violated constraint ids."""
    K = Aq.shape[1]
    c = np.zeros(K + 1)
    c[-1] = -1.0  # maximize slack
    A = np.hstack([Aq, np.ones((Aq.shape[0], 1))])
    budget = np.zeros(K + 1)
    budget[:K] = 1.0
    A = np.vstack([A, budget])
    b = np.concatenate([np.atleast_1d(bq), [scenario.p_bs]])
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(0, None)] * K + [(None, None)],
                  method="highs")
    if res.status != 0 or res.x is None:
        return ["qos (unresolved)"]
    if res.x[-1] >= 0:
        # targets satisfiable within budget, so the main LP failed numerically
        return ["none (numerical failure)"]
    slack = Aq @ res.x[:K] - np.atleast_1d(bq)
    return [f"qos_iu{k}" for k in np.flatnonzero(slack > 0)]


def sca_power_step(csi, plan, stats, theta, qos, varrho_r, scenario,
                   scheme: str = PZF_MRT):
    """One convexified power-allocation round at a fixed phase configuration.

    Returns (rho, varrho): the LP-optimal powers and the DC floor obtained by
    inverting the linearized bound at the expansion point varrho_r.
    """
    rho, u = _power_lp(csi, plan, stats, theta, qos, scenario, scheme)
    target = (scenario.tau_c - plan.tau) * u
    varrho = g_tilde_inverse(target, varrho_r, scenario.eh)
    return rho, varrho, u


def power_allocation(csi, plan, stats, theta, qos, varrho0, scenario,
                     scheme: str = PZF_MRT, eps: float = EPS_CONV,
                     max_iter: int = 25) -> PowerStepResult:
    """Iterate the convexified power step until the DC floor settles.

    The LP optimum does not move between rounds (the energy floor bound is
    strictly increasing in the DC variable), so successive rounds refine only
    the expansion point; convergence is superlinear.
    """
    rho, varrho, u = sca_power_step(csi, plan, stats, theta, qos, varrho0,
                                    scenario, scheme)
    trace = [varrho]
    it = 1
    target = (scenario.tau_c - plan.tau) * u
    while it < max_iter:
        new = g_tilde_inverse(target, varrho, scenario.eh)
        it += 1
        trace.append(new)
        if abs(new - varrho) <= eps * max(abs(new), 1e-300):
            varrho = new
            break
        varrho = new
    return PowerStepResult(rho=rho, varrho=float(varrho), floor_watts=u,
                           iterations=it, trace=trace)


# ---------------------------------------------------------------------------
# phase block


def ris_weight_vectors(csi: StatCsi):
    """Columns u_j = diag(f_bar_j^H) a_N, so theta^H u_j = conj(e_j)."""
    return csi.f_bar.conj() * csi.a_N[:, None]


def _denominators(theta, csi, stats, delta):
    e = ris_gain(theta, csi)
    return csi.lam * delta * np.abs(e) ** 2 + stats.gamma_g


def quad_transform_update(theta, csi: StatCsi, stats: EstimationStats,
                          rho: PowerAllocation, delta: float, M: int,
                          scheme: str = PZF_MRT, tau_KI: int = 0):
    """Closed-form optimal auxiliaries of the quadratic transform at fixed phases.

    y[l, t] multiplies the phase-dependent numerator part and y_bar[l, t] the
    constant part of the (l, t) ratio term; the diagonal holds the
    beamforming self-term auxiliaries.
    """
    K_E = csi.K_E
    sg = _self_gain(M, tau_KI, scheme)
    e = ris_gain(theta, csi)
    c_th = e.conj()                       # theta^H u_j
    den = _denominators(theta, csi, stats, delta)
    gam, lam = stats.gamma_g, csi.lam
    y = np.zeros((K_E, K_E), dtype=complex)
    y_bar = np.zeros((K_E, K_E))
    for l in range(K_E):
        for t in range(K_E):
            if t == l:
                y[l, l] = np.sqrt(2 * rho.rho_E[l] * sg * gam[l] * lam[l] * delta) \
                    * c_th[l] / den[l]
                y_bar[l, l] = gam[l] * np.sqrt(rho.rho_E[l] * sg) / den[l]
            else:
                y[l, t] = np.sqrt(rho.rho_E[t] * lam[l] * gam[t] * delta) \
                    * c_th[l] / den[t]
                y_bar[l, t] = np.sqrt(rho.rho_E[t] * lam[l] * gam[t] * csi.N) / den[t]
    return y, y_bar


@dataclass
class QuadraticForms:
    """Per-EU quadratic surrogate -theta^H W theta + 2 Re{theta^H v} + c3 and
    its linear majorization data."""
    W: list
    v: list
    c3: np.ndarray
    lam_max: np.ndarray
    c4: np.ndarray
    W_bar: list
    offsets: np.ndarray   # constraint offsets folded out of the DC bound


def assemble_quadratic(theta_r, y, y_bar, csi: StatCsi, stats: EstimationStats,
                       rho: PowerAllocation, delta: float, M: int,
                       scheme: str = PZF_MRT, tau_KI: int = 0) -> QuadraticForms:
    th_r = as_theta(theta_r)
    K_E, N = csi.K_E, csi.N
    sg = _self_gain(M, tau_KI, scheme)
    U = ris_weight_vectors(csi)
    gam, lam = stats.gamma_g, csi.lam
    W, v, c3 = [], [], np.zeros(K_E)
    for l in range(K_E):
        mag = np.abs(y[l]) ** 2 + y_bar[l] ** 2
        Wl = (U * (lam * delta * mag)) @ U.conj().T
        Wl -= lam[l] * delta * rho.rho_I.sum() * np.outer(U[:, l], U[:, l].conj())
        Wl = (Wl + Wl.conj().T) / 2
        vl = np.zeros(N, dtype=complex)
        cl = 0.0
        for t in range(K_E):
            if t == l:
                vl += np.conj(y[l, l]) * np.sqrt(
                    2 * rho.rho_E[l] * sg * gam[l] * lam[l] * delta) * U[:, l]
                cl += 2 * y_bar[l, l] * gam[l] * np.sqrt(rho.rho_E[l] * sg)
            else:
                vl += np.conj(y[l, t]) * np.sqrt(
                    rho.rho_E[t] * lam[l] * gam[t] * delta) * U[:, l]
                cl += 2 * y_bar[l, t] * np.sqrt(rho.rho_E[t] * lam[l] * gam[t] * N)
        cl -= float(mag @ gam)
        W.append(Wl)
        v.append(vl)
        c3[l] = cl

    lam_max = np.array([np.linalg.eigvalsh(Wl)[-1] for Wl in W])
    c4 = np.array([c3[l] - float(np.real(th_r.conj() @ ((lam_max[l] * np.eye(N) - W[l]) @ th_r)))
                   for l in range(K_E)])
    W_bar = []
    for l in range(K_E):
        corner = -(lam_max[l] * np.eye(N) - W[l]) @ th_r - v[l]
        Wb = np.zeros((N + 1, N + 1), dtype=complex)
        Wb[:N, :N] = lam_max[l] * np.eye(N)
        Wb[:N, N] = corner
        Wb[N, :N] = corner.conj()
        W_bar.append(Wb)
    offsets = csi.N * lam * rho.rho_I.sum() + rho.rho_E * (csi.N * lam - gam)
    return QuadraticForms(W=W, v=v, c3=c3, lam_max=lam_max, c4=c4,
                          W_bar=W_bar, offsets=offsets)


def f_surrogate(theta, csi, stats, rho, delta, M, scheme=PZF_MRT, tau_KI=0):
    """Simplified per-EU energy surrogate (two-path-loss products dropped)."""
    e = ris_gain(theta, csi)
    xi_d = np.abs(e) ** 2
    den = _denominators(theta, csi, stats, delta)
    gam, lam = stats.gamma_g, csi.lam
    sg = _self_gain(M, tau_KI, scheme)
    K_E = csi.K_E
    out = np.empty(K_E)
    for l in range(K_E):
        val = rho.rho_E[l] * sg * gam[l] * (2 * lam[l] * delta * xi_d[l] + gam[l]) / den[l]
        for t in range(K_E):
            if t != l:
                val += rho.rho_E[t] * lam[l] * gam[t] * (delta * xi_d[l] + csi.N) / den[t]
        val += rho.rho_I.sum() * lam[l] * delta * xi_d[l]
        out[l] = val
    return out


def f_quadratic(theta, y, y_bar, csi, stats, rho, delta, M,
                scheme=PZF_MRT, tau_KI=0):
    """Quadratic-transform objective at explicit auxiliaries (test hook).

    Equals `f_surrogate` when the auxiliaries are at their closed-form
    optimum for the same phases.
    """
    th = as_theta(theta)
    e = ris_gain(theta, csi)
    c_th = e.conj()
    gam, lam = stats.gamma_g, csi.lam
    sg = _self_gain(M, tau_KI, scheme)
    den_parts = lam * delta * np.abs(c_th) ** 2 + gam
    K_E = csi.K_E
    out = np.empty(K_E)
    for l in range(K_E):
        val = rho.rho_I.sum() * lam[l] * delta * np.abs(c_th[l]) ** 2
        for t in range(K_E):
            mag = np.abs(y[l, t]) ** 2 + y_bar[l, t] ** 2
            if t == l:
                val += 2 * np.sqrt(rho.rho_E[l] * sg * gam[l]) * np.real(
                    np.conj(y[l, l]) * np.sqrt(2 * lam[l] * delta) * c_th[l]
                    + y_bar[l, l] * np.sqrt(gam[l]))
            else:
                val += 2 * np.sqrt(rho.rho_E[t] * lam[l] * gam[t]) * np.real(
                    np.conj(y[l, t]) * np.sqrt(delta) * c_th[l] + y_bar[l, t] * np.sqrt(csi.N))
            val -= mag * den_parts[t]
        out[l] = val
    return out


def varrho_of_theta(theta, csi, plan, stats, rho, scenario,
                    scheme: str = PZF_MRT):
    """DC floor implied by the simplified surrogate at fixed (theta, rho)."""
    f = f_surrogate(theta, csi, stats, rho, scenario.delta, csi.M,
                    scheme, plan.tau_KI)
    offsets = csi.N * csi.lam * rho.rho_I.sum() + rho.rho_E * (csi.N * csi.lam - stats.gamma_g)
    floor = scenario.sigma2 * (scenario.tau_c - plan.tau) * np.min(f + offsets)
    return float(eh_logistic(max(floor, 0.0), scenario.eh))


def extract_theta(Q: np.ndarray, tol: float = 1e-9) -> PhaseShift:
    """Rank-one phase recovery from the PSD lift.

    Takes the leading eigenvector, removes the reference phase carried by the
    last coordinate (falling back to a global-phase-free normalization when
    that coordinate vanishes), and projects every entry to unit modulus.
    """
    n = Q.shape[0]
    w, V = np.linalg.eigh((Q + Q.conj().T) / 2)
    u = V[:, -1]
    if np.abs(u[n - 1]) > tol:
        u = u / u[n - 1]
    vec = u[:n - 1]
    mags = np.abs(vec)
    safe = np.where(mags > tol, vec / np.where(mags > tol, mags, 1.0), 1.0)
    return PhaseShift(safe)


def rank_gap(Q: np.ndarray) -> float:
    """Nuclear norm minus spectral norm; zero iff the lift is rank one."""
    w = np.linalg.eigvalsh((Q + Q.conj().T) / 2)
    return float(np.sum(np.abs(w)) - np.max(np.abs(w)))


def penalty_sdp_step(forms: QuadraticForms, state: OptState,
                     scenario: Scenario, plan: PilotPlan, pen_unit: float = 1.0):
    """Solve one convexified lift problem around (Q^(r), eta).

    The DC floor enters every energy constraint through the same strictly
    increasing map of the floor variable, so the subproblem is solved over
    the required-input-energy bound directly: the constraint set is linear in
    (Q, s) with no approximation and the floor is recovered exactly through
    the logistic map afterwards. The unit diagonal makes the nuclear norm
    constant, so only the linearized spectral-norm term survives in the
    penalty; it is normalized by the lift dimension and by `pen_unit` so the
    geometric penalty schedule starts balanced against the floor objective
    instead of freezing the lift at its anchor. Returns the lift, the exact
    implied DC floor, and the solver objective.
    """
    n = forms.W_bar[0].shape[0]
    _, V = np.linalg.eigh((state.Q + state.Q.conj().T) / 2)
    vmax = V[:, -1]
    pen = np.outer(vmax, vmax.conj()) * (pen_unit / (state.eta * n))
    pen = (pen + pen.conj().T) / 2
    # normalize rows so quadratic forms and bounds are O(1)
    rhs_raw = forms.c4 + forms.offsets
    row_scale = float(np.median([max(np.linalg.norm(Wb), 1e-30)
                                 for Wb in forms.W_bar]))
    W_scaled = [Wb / row_scale for Wb in forms.W_bar]
    s_weight = 1.0 / max(np.abs(rhs_raw).max() / row_scale, 1e-12)
    try:
        sol = solve_phase_lift(W_scaled, rhs_raw / row_scale, pen, s_weight)
    except SdpSolveError:
        sol = _cvxpy_fallback(W_scaled, rhs_raw / row_scale, pen, s_weight)
    dc_scale = 1.0 / (scenario.sigma2 * (scenario.tau_c - plan.tau))
    varrho = float(eh_logistic(sol.s * row_scale / dc_scale, scenario.eh))
    return sol.Q, varrho, sol.objective


def _cvxpy_fallback(W, b, P, w_s):
    """General conic solve of the same subproblem; rare-path safety net."""
    import cvxpy as cp
    from .sdp import SdpSolution
    n = W[0].shape[0]
    Q = cp.Variable((n, n), hermitian=True)
    s = cp.Variable()
    cons = [cp.diag(Q) == 1, Q >> 0]
    cons += [cp.real(cp.trace(W[l] @ Q)) + s <= b[l] for l in range(len(W))]
    prob = cp.Problem(cp.Maximize(w_s * s + cp.real(cp.trace(P @ Q))), cons)
    prob.solve(solver=cp.CLARABEL)
    if Q.value is None:
        raise SolverFailure(f"fallback conic solve failed: {prob.status}")
    return SdpSolution(Q=np.array(Q.value), s=float(s.value),
                       objective=float(prob.value), y=None, lam=None,
                       gap=float("nan"), iterations=-1, status=prob.status)


@dataclass
class PhaseOptResult:
    theta: PhaseShift
    varrho: float
    outer_iterations: int
    inner_iterations: list
    gap: float
    trace: list = field(default_factory=list)


def phase_opt(state: OptState, csi: StatCsi, plan: PilotPlan,
              stats: EstimationStats, scenario: Scenario,
              scheme: str = PZF_MRT, eps: float = EPS_CONV,
              eps0: float = None, max_outer: int = 30,
              max_inner: int = 25, n_probes: int = 128) -> PhaseOptResult:
    """Double-loop penalty method for the phase-shift block at fixed powers.

    Outer rounds refresh the quadratic-transform auxiliaries and shrink the
    penalty factor; inner rounds iterate the convexified SDP until its
    objective settles. The incoming phases compete with a deterministic batch
    of random probes for the starting point, because the refinement is local
    and the codebook start can sit in a poor basin. Returns the best phase
    vector seen, measured by the surrogate DC floor.
    """
    N = csi.N
    if eps0 is None:
        eps0 = 1e-6 * (N + 1)
    theta = as_theta(state.theta).copy()
    rho = state.rho
    if n_probes > 0:
        prng = np.random.default_rng([scenario.seed, 0x5eed])
        probes = np.exp(1j * prng.uniform(0, 2 * np.pi, (n_probes, N)))
        score = varrho_of_theta(theta, csi, plan, stats, rho, scenario, scheme)
        for cand in probes:
            v = varrho_of_theta(cand, csi, plan, stats, rho, scenario, scheme)
            if v > score:
                score, theta = v, cand.copy()
    best_theta = theta.copy()
    best_val = varrho_of_theta(theta, csi, plan, stats, rho, scenario, scheme)
    prev_outer = best_val
    pen_unit = max(best_val / scenario.eh.phi, 1e-6) * 0.1
    inner_counts, trace = [], []
    gap = float("inf")

    for outer in range(1, max_outer + 1):
        y, y_bar = quad_transform_update(theta, csi, stats, rho, scenario.delta,
                                         csi.M, scheme, plan.tau_KI)
        theta_bar = np.concatenate([theta, [1.0]])
        state.Q = np.outer(theta_bar, theta_bar.conj())
        state.y, state.y_bar = y, y_bar
        prev_obj = None
        inner = 0
        while inner < max_inner:
            # every convexified round re-expands all SCA data: the
            # majorization point, the DC expansion point, and the penalty
            # linearization move together with the current iterate
            forms = assemble_quadratic(theta, y, y_bar, csi, stats, rho,
                                       scenario.delta, csi.M, scheme,
                                       plan.tau_KI)
            Q, varrho, obj = penalty_sdp_step(forms, state, scenario,
                                              plan, pen_unit)
            inner += 1
            gap = rank_gap(Q)
            state.Q = Q
            state.varrho = max(varrho, scenario.eh.phi * 1e-9)
            theta = extract_theta(Q).theta
            if prev_obj is not None and abs(obj - prev_obj) <= eps * max(1.0, abs(obj)):
                break
            prev_obj = obj
        inner_counts.append(inner)
        val = varrho_of_theta(theta, csi, plan, stats, rho, scenario, scheme)
        trace.append({"outer": outer, "eta": state.eta, "inner": inner,
                      "gap": gap, "dc_floor": val})
        if val > best_val:
            best_val, best_theta = val, theta.copy()
        state.eta *= KAPPA1
        state.outer_iter = outer
        rel = abs(val - prev_outer) / max(abs(val), 1e-300)
        if outer >= 2 and rel < eps and gap <= eps0:
            break
        prev_outer = val

    state.theta = best_theta
    state.varrho = best_val
    return PhaseOptResult(theta=PhaseShift(best_theta), varrho=best_val,
                          outer_iterations=len(inner_counts),
                          inner_iterations=inner_counts, gap=gap, trace=trace)


# ---------------------------------------------------------------------------
# outer block


@dataclass
class BcdResult:
    theta: PhaseShift
    rho: PowerAllocation
    varrho: float              # logistic-domain DC floor from the power block
    min_dc: float              # exact nonlinear DC of the worst EU (W-equivalent)
    q_rf: np.ndarray
    iterations: int
    converged: bool
    qos: np.ndarray
    trace: list = field(default_factory=list)


def _exact_q(csi, plan, stats, rho, theta, scenario, scheme):
    fn = q_pzf if scheme == PZF_MRT else q_ppzf
    return fn(csi, plan, stats, rho, theta, scenario.tau_c, scenario.sigma2,
              scenario.delta)


def derive_qos_from_epa(csi, plan, stats, scenario, scheme: str = PZF_MRT,
                        margin: float = 1.0):
    """SINR targets equal to what equal power allocation achieves."""
    rho = baseline_epa(scenario)
    fn = sinr_pzf if scheme == PZF_MRT else sinr_ppzf
    return fn(csi, plan, stats, rho) * margin


def bcd(scenario: Scenario, csi: StatCsi, plan: PilotPlan,
        stats: EstimationStats, scheme: str = PZF_MRT, qos=None,
        eps: float = EPS_CONV, max_iter: int = 60,
        phase_max_outer: int = 30, phase_max_inner: int = 25) -> BcdResult:
    """Alternate the power and phase blocks from the codebook/equal-power start.

    Tracks the best iterate by the exact closed-form worst-EU DC energy and
    reports that iterate; the reported floor sequence is therefore
    non-decreasing even though individual surrogate steps need not be.
    """
    if qos is None:
        qos = scenario.qos
    if qos is None:
        qos = derive_qos_from_epa(csi, plan, stats, scenario, scheme)
    qos = np.broadcast_to(np.asarray(qos, dtype=float), (plan.K_I,)).copy()

    theta = baseline_dft_phase(scenario.N, 0).theta
    rho = baseline_epa(scenario)
    q0 = _exact_q(csi, plan, stats, rho, theta, scenario, scheme)
    varrho = float(np.clip(eh_nonlinear(q0.min(), scenario.eh),
                           scenario.eh.phi * 1e-9, scenario.eh.phi * (1 - 1e-9)))
    state = OptState(theta=theta, rho=rho, varrho=varrho)
    best = None
    prev_varrho = None
    trace = []
    converged = False
    for it in range(1, max_iter + 1):
        step = power_allocation(csi, plan, stats, state.theta, qos,
                                state.varrho, scenario, scheme)
        state.rho = step.rho
        state.varrho = float(np.clip(step.varrho, scenario.eh.phi * 1e-9,
                                     scenario.eh.phi * (1 - 1e-9)))

        state.eta = ETA0
        ph = phase_opt(state, csi, plan, stats, scenario, scheme,
                       eps=eps, max_outer=phase_max_outer,
                       max_inner=phase_max_inner)
        q = _exact_q(csi, plan, stats, state.rho, state.theta, scenario, scheme)
        dc = float(eh_nonlinear(q.min(), scenario.eh))
        if best is None or dc > best["dc"]:
            best = {"theta": state.theta.copy(), "rho": state.rho,
                    "dc": dc, "q": q, "varrho": state.varrho}
        trace.append({"iteration": it, "varrho": state.varrho,
                      "min_energy": float(q.min()), "min_dc": dc,
                      "eta": state.eta, "rank_gap": ph.gap,
                      "power_iters": step.iterations,
                      "phase_outer": ph.outer_iterations})
        if prev_varrho is not None and \
                abs(state.varrho - prev_varrho) <= eps * max(abs(state.varrho), 1e-300):
            converged = True
            break
        prev_varrho = state.varrho

    return BcdResult(theta=PhaseShift(best["theta"]), rho=best["rho"],
                     varrho=best["varrho"], min_dc=best["dc"], q_rf=best["q"],
                     iterations=len(trace), converged=converged, qos=qos,
                     trace=trace)
