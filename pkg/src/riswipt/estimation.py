"""Uplink pilot transmission and linear MMSE channel estimation.

Pilot books are orthonormal columns of the tau x tau identity: the first
tau_KI columns serve the IUs, the rest serve the EUs, so IU and EU pilots
are mutually orthogonal by construction. Users sharing a pilot contaminate
each other's estimates; the estimate-quality scalars returned here feed
every closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import StatCsi
from .channel import ChannelDraw, as_theta, crandn, los_mean


class PilotPlanError(ValueError):
    """Infeasible pilot reuse configuration."""


@dataclass
class PilotPlan:
    tau_KI: int
    tau_KE: int
    iu_pilot: np.ndarray       # (K_I,) pilot index per IU, 0..tau_KI-1
    eu_pilot: np.ndarray       # (K_E,) pilot index per EU, 0..tau_KE-1
    share_I: list = field(default_factory=list)   # share_I[k] = IUs on IU k's pilot
    share_E: list = field(default_factory=list)   # share_E[l] = EUs on EU l's pilot

    @property
    def tau(self) -> int:
        return self.tau_KI + self.tau_KE

    @property
    def K_I(self) -> int:
        return self.iu_pilot.shape[0]

    @property
    def K_E(self) -> int:
        return self.eu_pilot.shape[0]

    def eu_pilot_global(self, l: int) -> int:
        """Column of the joint pilot book used by EU l."""
        return self.tau_KI + int(self.eu_pilot[l])

    def pilot_book(self):
        """(Phi_I, Phi_E): tau x tau_KI and tau x tau_KE orthonormal books."""
        eye = np.eye(self.tau)
        return eye[:, :self.tau_KI], eye[:, self.tau_KI:]


def build_pilot_plan(K_I: int, K_E: int, prf_I: int = 0, prf_E: int = 0) -> PilotPlan:
    """Assign pilots with reuse: the first prf+1 users of each class share
    pilot 0 of that class, the remaining users get fresh pilots."""
    if not (0 <= prf_I <= K_I - 1) or not (0 <= prf_E <= K_E - 1):
        raise PilotPlanError(f"reuse factors ({prf_I}, {prf_E}) out of range "
                             f"for K_I={K_I}, K_E={K_E}")
    iu_pilot = np.concatenate([np.zeros(prf_I + 1, dtype=int),
                               np.arange(1, K_I - prf_I)])
    eu_pilot = np.concatenate([np.zeros(prf_E + 1, dtype=int),
                               np.arange(1, K_E - prf_E)])
    share_I = [np.flatnonzero(iu_pilot == iu_pilot[k]) for k in range(K_I)]
    share_E = [np.flatnonzero(eu_pilot == eu_pilot[l]) for l in range(K_E)]
    return PilotPlan(tau_KI=K_I - prf_I, tau_KE=K_E - prf_E,
                     iu_pilot=iu_pilot, eu_pilot=eu_pilot,
                     share_I=share_I, share_E=share_E)


@dataclass
class EstimationStats:
    """Deterministic estimate-quality scalars implied by (plan, csi, p, sigma2)."""
    c_g: np.ndarray           # (K_E,) MMSE scaling for the cascaded links
    c_h: np.ndarray           # (K_I,) MMSE scaling for the direct links
    gamma_g: np.ndarray       # (K_E,) per-entry variance of the EU estimates
    gamma_h: np.ndarray       # (K_I,) per-entry variance of the IU estimates
    kappa_ratios: np.ndarray  # (K_E, K_E) beta_RE[l] / beta_RE[t]
    h1_col_var: np.ndarray    # (tau_KI,) per-entry variance of Y_p Phi_I columns
    g_col_var: np.ndarray     # (tau_KE,) same for the centered EU projections


def estimation_stats(plan: PilotPlan, csi: StatCsi, p: float, sigma2: float) -> EstimationStats:
    tau = plan.tau
    tp = tau * p
    # pilot-overlap sums; IU and EU books are mutually orthogonal
    eu_sum = np.array([csi.N * csi.lam[plan.share_E[l]].sum() for l in range(plan.K_E)])
    iu_sum = np.array([csi.beta_BI[plan.share_I[k]].sum() for k in range(plan.K_I)])
    c_g = np.sqrt(tp) * csi.N * csi.lam / (tp * eu_sum + sigma2)
    c_h = np.sqrt(tp) * csi.beta_BI / (tp * iu_sum + sigma2)
    gamma_g = np.sqrt(tp) * csi.N * csi.lam * c_g
    gamma_h = np.sqrt(tp) * csi.beta_BI * c_h
    kappa = csi.beta_RE[:, None] / csi.beta_RE[None, :]
    h1_col_var = np.array([tp * csi.beta_BI[plan.iu_pilot == j].sum() + sigma2
                           for j in range(plan.tau_KI)])
    g_col_var = np.array([tp * csi.N * csi.lam[plan.eu_pilot == j].sum() + sigma2
                          for j in range(plan.tau_KE)])
    return EstimationStats(c_g=c_g, c_h=c_h, gamma_g=gamma_g, gamma_h=gamma_h,
                           kappa_ratios=kappa, h1_col_var=h1_col_var,
                           g_col_var=g_col_var)


@dataclass
class EstimationOutput:
    """MMSE estimates of one (batch of) realization(s) plus their statistics."""
    g_hat: np.ndarray          # (..., M, K_E)
    h_hat: np.ndarray          # (..., M, K_I)
    h1_full_rank: np.ndarray   # (..., M, tau_KI) owner-scaled full-rank IU estimates
    stats: EstimationStats

    @property
    def c_g(self):
        return self.stats.c_g

    @property
    def c_h(self):
        return self.stats.c_h

    @property
    def gamma_g(self):
        return self.stats.gamma_g

    @property
    def gamma_h(self):
        return self.stats.gamma_h

    @property
    def kappa_ratios(self):
        return self.stats.kappa_ratios


def receive_pilots(draw: ChannelDraw, plan: PilotPlan, p: float, sigma2: float, rng):
    """Received M x tau uplink pilot block: sqrt(tau*p)-scaled user channels on
    their pilot columns plus i.i.d. complex Gaussian noise of variance sigma2."""
    batch = draw.H1.shape[:-2]
    scale = np.sqrt(plan.tau * p)
    Yp = crandn(rng, *batch, draw.H1.shape[-2], plan.tau) * np.sqrt(sigma2)
    # orthonormal identity pilot book: user k's channel lands on column i_k
    for k in range(plan.K_I):
        Yp[..., :, plan.iu_pilot[k]] += scale * draw.H1[..., :, k]
    for l in range(plan.K_E):
        Yp[..., :, plan.eu_pilot_global(l)] += scale * draw.G[..., :, l]
    return Yp


def mmse_estimate(Yp, plan: PilotPlan, csi: StatCsi, theta, p: float,
                  sigma2: float, delta: float) -> EstimationOutput:
    """Linear MMSE estimates of all user channels from the pilot block.

    EU estimates subtract the known LoS means of every same-pilot user
    before scaling and add back their own mean; IU estimates are plain
    scaled projections. The zero-mean parts of same-pilot EU estimates are
    exactly proportional (ratio beta_RE[l]/beta_RE[t]).
    """
    stats = estimation_stats(plan, csi, p, sigma2)
    tau = plan.tau
    scale = np.sqrt(tau * p)
    mu = los_mean(csi, delta, theta)                       # (M, K_E)

    h_hat = stats.c_h * Yp[..., :, plan.iu_pilot]
    g_hat = np.empty(Yp.shape[:-1] + (plan.K_E,), dtype=complex)
    for l in range(plan.K_E):
        mates = plan.share_E[l]
        centered = Yp[..., :, plan.eu_pilot_global(l)] - scale * mu[:, mates].sum(axis=1)
        g_hat[..., :, l] = stats.c_g[l] * centered + mu[:, l]

    # owner-scaled full-rank matrix: column j is the estimate of the
    # lowest-index IU assigned pilot j (shared users differ by a real scalar)
    owners = np.array([int(np.argmax(plan.iu_pilot == j)) for j in range(plan.tau_KI)])
    h1_full = Yp[..., :, :plan.tau_KI] * stats.c_h[owners]
    return EstimationOutput(g_hat=g_hat, h_hat=h_hat, h1_full_rank=h1_full, stats=stats)


def owner_gamma(plan: PilotPlan, stats: EstimationStats):
    """Per-pilot-column estimate variance of the owner IU (lowest index on pilot)."""
    owners = [int(np.argmax(plan.iu_pilot == j)) for j in range(plan.tau_KI)]
    return stats.gamma_h[owners]
