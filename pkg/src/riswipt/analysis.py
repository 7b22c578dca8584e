"""Closed-form spectral efficiency and average harvested energy.

Per-IU effective SINRs come from the channel-hardening lower bound; per-EU
averages of the received RF energy are exact fourth-moment computations for
the zero-forcing + maximum-ratio scheme and a large-array approximation for
the protective variant. Energies are evaluated in watt-domain units (one
unit of time per symbol), so a reported value is joules over the data phase
of one coherence interval.

Two corrections relative to the source derivations are applied after
re-deriving the moments (both verified against brute-force sampling):
the scatter-gain factor multiplying the cross steering kernel in the shared
fourth moment belongs to the partner user, and the desired-signal factor in
the projected cross term is required for dimensional consistency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import StatCsi, EhModel
from .channel import as_theta, ris_gain, xi_matrix
from .estimation import PilotPlan, EstimationStats
from . import precoding


@dataclass
class PowerAllocation:
    """Noise-normalized transmit powers (rho = p / sigma2)."""
    rho_I: np.ndarray
    rho_E: np.ndarray

    def __post_init__(self):
        self.rho_I = np.asarray(self.rho_I, dtype=float)
        self.rho_E = np.asarray(self.rho_E, dtype=float)
        if np.any(self.rho_I < 0) or np.any(self.rho_E < 0):
            raise ValueError("powers must be non-negative")

    @property
    def total(self) -> float:
        return float(self.rho_I.sum() + self.rho_E.sum())

    def watts(self, sigma2: float):
        return self.rho_I * sigma2, self.rho_E * sigma2


@dataclass
class ClosedFormReport:
    sinr: np.ndarray   # (K_I,) linear
    se: np.ndarray     # (K_I,) bit/s/Hz
    q_rf: np.ndarray   # (K_E,) average received RF energy (J)
    q_dc: np.ndarray   # (K_E,) nonlinear harvested DC energy (J)


def se_from_sinr(sinr, tau: int, tau_c: int):
    """Achievable spectral efficiency with the training prelog factor."""
    return (1.0 - tau / tau_c) * np.log2(1.0 + np.asarray(sinr))


def hardening_sinr(rho: PowerAllocation, ds, second_I, second_E):
    """Generic hardening-bound SINR from first/second moments.

    ds[k] = E{h_k^H w_I,k}; second_I[k, t] = E{|h_k^H w_I,t|^2};
    second_E[k, l] = E{|h_k^H w_E,l|^2}. Noise is the unit after power
    normalization. Shared by the closed forms and the empirical oracle so
    both sides assemble the bound identically.
    """
    ds2 = np.abs(np.asarray(ds)) ** 2
    num = rho.rho_I * ds2
    den = second_I @ rho.rho_I + second_E @ rho.rho_E - num + 1.0
    return num / den


def sinr_pzf(csi: StatCsi, plan: PilotPlan, stats: EstimationStats,
             rho: PowerAllocation):
    """Per-IU effective SINR under zero-forcing to IUs and plain MRT to EUs."""
    M, tau_KI = csi.M, plan.tau_KI
    gam = stats.gamma_h
    sinr = np.empty(plan.K_I)
    for k in range(plan.K_I):
        mates = [t for t in plan.share_I[k] if t != k]
        num = (M - tau_KI) * rho.rho_I[k] * gam[k]
        den = ((M - tau_KI) * gam[k] * rho.rho_I[mates].sum()
               + (csi.beta_BI[k] - gam[k]) * rho.rho_I.sum()
               + csi.beta_BI[k] * rho.rho_E.sum()
               + 1.0)
        sinr[k] = num / den
    return sinr


def sinr_ppzf(csi: StatCsi, plan: PilotPlan, stats: EstimationStats,
              rho: PowerAllocation):
    """Per-IU effective SINR with the energy beams projected away from the IUs.

    Only the estimation-error leakage (beta - gamma) of the energy signals
    remains in the denominator, so this dominates the plain scheme
    elementwise.
    """
    M, tau_KI = csi.M, plan.tau_KI
    gam = stats.gamma_h
    sinr = np.empty(plan.K_I)
    for k in range(plan.K_I):
        mates = [t for t in plan.share_I[k] if t != k]
        num = (M - tau_KI) * rho.rho_I[k] * gam[k]
        den = ((M - tau_KI) * gam[k] * rho.rho_I[mates].sum()
               + (csi.beta_BI[k] - gam[k]) * rho.rho_I.sum()
               + (csi.beta_BI[k] - gam[k]) * rho.rho_E.sum()
               + 1.0)
        sinr[k] = num / den
    return sinr


def shared_pilot_fourth_moment(csi: StatCsi, stats: EstimationStats, theta,
                               delta: float, l: int, t: int,
                               projected: bool = False, tau_KI: int = 0) -> float:
    """E{|g_hat_l^H g_hat_t|^2} for EUs l, t sharing a pilot.

    The zero-mean estimate parts are exactly proportional, which produces the
    quartic Gaussian moment; the remaining terms couple the deterministic
    means through the phase-shift kernels. With `projected` the inner product
    is taken through the IU-complement projector of rank M - tau_KI (the
    result is then a large-array approximation, exact when tau_KI = 0).
    """
    M = csi.M
    r = (M - tau_KI) if projected else M
    Xi = xi_matrix(theta, csi)
    kap = stats.kappa_ratios[t, l]
    gam = stats.gamma_g[l]
    lam_l, lam_t = csi.lam[l], csi.lam[t]
    quart = r * (r + 1)
    cross_scale = r ** 2 if projected else M ** 2

    out = kap ** 2 * quart * gam ** 2
    out += r * gam * lam_t * delta * Xi[t, t].real
    out += kap ** 2 * r * gam * lam_l * delta * Xi[l, l].real
    out += (cross_scale * np.sqrt(lam_l * lam_t) * delta
            * (kap * gam * 2 * Xi[l, t].real
               + np.sqrt(lam_l * lam_t) * delta * (Xi[l, t] * Xi[t, l]).real))
    return float(out)


def q_pzf(csi: StatCsi, plan: PilotPlan, stats: EstimationStats,
          rho: PowerAllocation, theta, tau_c: int, sigma2: float, delta: float):
    """Average received RF energy per EU under zero-forcing + MRT (exact)."""
    M = csi.M
    tau = plan.tau
    p_I, p_E = rho.watts(sigma2)
    Xi = xi_matrix(theta, csi)
    xi_d = np.real(np.diag(Xi))
    a2 = 1.0 / (M * (stats.gamma_g + csi.lam * delta * xi_d))

    q = np.empty(plan.K_E)
    for l in range(plan.K_E):
        mates = set(int(i) for i in plan.share_E[l])
        own = csi.lam[l] * (csi.N + delta * xi_d[l]) * p_I.sum()
        inter = 0.0
        for t in range(plan.K_E):
            if t in mates:
                continue
            psi1 = (a2[t] * M * csi.lam[l] * delta
                    * (stats.gamma_g[t] * xi_d[l]
                       + M * csi.lam[t] * delta * np.abs(Xi[l, t]) ** 2)
                    + csi.N * csi.lam[l])
            inter += p_E[t] * psi1
        shared = 0.0
        for lp in mates:
            psi2 = shared_pilot_fourth_moment(csi, stats, theta, delta, l, lp)
            shared += p_E[lp] * (a2[lp] * psi2
                                 + (csi.N * csi.lam[l] - stats.gamma_g[l]))
        q[l] = (tau_c - tau) * (own + inter + shared + sigma2)
    return q


def q_ppzf(csi: StatCsi, plan: PilotPlan, stats: EstimationStats,
           rho: PowerAllocation, theta, tau_c: int, sigma2: float, delta: float):
    """Average received RF energy per EU under the protective scheme.

    Large-array approximation: the cross-EU term replaces the exact projected
    quadratic form by its trace surrogate, accurate for M well above tau_KI.
    """
    M, tau_KI = csi.M, plan.tau_KI
    r = M - tau_KI
    tau = plan.tau
    p_I, p_E = rho.watts(sigma2)
    Xi = xi_matrix(theta, csi)
    xi_d = np.real(np.diag(Xi))
    a2 = 1.0 / (r * (stats.gamma_g + csi.lam * delta * xi_d))

    q = np.empty(plan.K_E)
    for l in range(plan.K_E):
        mates = set(int(i) for i in plan.share_E[l])
        own = csi.lam[l] * (csi.N + delta * xi_d[l]) * p_I.sum()
        inter = 0.0
        for t in range(plan.K_E):
            if t in mates:
                continue
            psi1 = r * csi.lam[l] * (
                delta * (stats.gamma_g[t] * xi_d[l] + csi.N * csi.lam[t] * xi_d[t])
                + M * csi.lam[t] * delta ** 2 * xi_d[t] * xi_d[l]
                + csi.N * stats.gamma_g[t])
            inter += p_E[t] * a2[t] * psi1
        shared = 0.0
        for lp in mates:
            psi2 = shared_pilot_fourth_moment(csi, stats, theta, delta, l, lp,
                                              projected=True, tau_KI=tau_KI)
            shared += p_E[lp] * (a2[lp] * psi2
                                 + (csi.N * csi.lam[l] - stats.gamma_g[l]))
        q[l] = (tau_c - tau) * (own + inter + shared + sigma2)
    return q


def q_pzf_rayleigh(csi: StatCsi, plan: PilotPlan, rho: PowerAllocation,
                   p: float, tau_c: int, sigma2: float):
    """Scatter-only reduction of the exact energy (no LoS on the BS-RIS link).

    All phase-shift kernels vanish, leaving an expression affine in the RIS
    size with a pilot-sharing beamforming term.
    """
    tau = plan.tau
    p_I, p_E = rho.watts(sigma2)
    lam0 = csi.beta_RE * csi.beta_BR  # cascaded gain at zero Ricean factor
    q = np.empty(plan.K_E)
    for l in range(plan.K_E):
        mates = plan.share_E[l]
        den = tau * p * csi.N * lam0[mates].sum() + sigma2
        xi_ryl = tau * p * csi.N * lam0[l] / den  # sqrt(tau p) * c_g at delta = 0
        q[l] = (tau_c - tau) * (
            csi.N * lam0[l] * (p_I.sum() + p_E.sum() + csi.M * xi_ryl * p_E[mates].sum())
            + sigma2)
    return q


def q_pzf_rayleigh_orthogonal(csi: StatCsi, plan: PilotPlan, rho: PowerAllocation,
                              p: float, tau_c: int, sigma2: float):
    """Scatter-only energy with orthogonal EU pilots (single-user sharing sets)."""
    tau = plan.tau
    p_I, p_E = rho.watts(sigma2)
    lam0 = csi.beta_RE * csi.beta_BR
    xi_ryl = tau * p * csi.N * lam0 / (tau * p * csi.N * lam0 + sigma2)
    return (tau_c - tau) * (
        csi.N * lam0 * (p_I.sum() + p_E.sum() + csi.M * xi_ryl * p_E) + sigma2)


def eh_nonlinear(e_in, model: EhModel):
    """Sigmoidal RF-to-DC conversion with zero response at zero input."""
    e = np.asarray(e_in, dtype=float)
    if np.any(e < 0):
        raise ValueError("harvested input energy must be non-negative")
    lam = model.lambda_const
    omega = model.phi / (1.0 + np.exp(-model.a * (e - model.b)))
    out = (omega - model.phi * lam) / (1.0 - lam)
    return out if out.ndim else float(out)


def eh_logistic(e_in, model: EhModel):
    """Raw logistic response (no zero-input correction), range (0, phi)."""
    e = np.asarray(e_in, dtype=float)
    out = model.phi / (1.0 + np.exp(-model.a * (e - model.b)))
    return out if out.ndim else float(out)


def eh_inverse(omega, model: EhModel):
    """Input energy required for a raw logistic output omega in (0, phi)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0) or np.any(w >= model.phi):
        raise ValueError("logistic output must lie strictly inside (0, phi)")
    out = model.b - np.log((model.phi - w) / w) / model.a
    return out if out.ndim else float(out)


def pilot_gain_ratio(S_size: int, tau: int, p: float, N: int, lam_l: float,
                     sigma2: float) -> float:
    """Beamforming-energy gain of sharing one pilot among S_size EUs with
    equal powers, relative to orthogonal pilots. Strictly above 1 whenever
    more than one EU shares."""
    x = tau * p * N * lam_l
    return S_size * (x + sigma2) / (S_size * x + sigma2)


def closed_form_report(csi: StatCsi, plan: PilotPlan, stats: EstimationStats,
                       rho: PowerAllocation, theta, tau_c: int, sigma2: float,
                       delta: float, eh: EhModel,
                       scheme: str = precoding.PZF_MRT) -> ClosedFormReport:
    if scheme == precoding.PZF_MRT:
        sinr = sinr_pzf(csi, plan, stats, rho)
        q = q_pzf(csi, plan, stats, rho, theta, tau_c, sigma2, delta)
    elif scheme == precoding.PZF_PMRT:
        sinr = sinr_ppzf(csi, plan, stats, rho)
        q = q_ppzf(csi, plan, stats, rho, theta, tau_c, sigma2, delta)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return ClosedFormReport(sinr=sinr, se=se_from_sinr(sinr, plan.tau, tau_c),
                            q_rf=q, q_dc=eh_nonlinear(q, eh))
