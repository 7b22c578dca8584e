"""Instantaneous channel sampling and the statistical phase-shift kernels.

All samplers accept an optional leading batch shape so Monte Carlo loops can
draw thousands of realizations per call. Complex Gaussians use i.i.d.
real/imaginary parts of variance 1/2 (unit-variance circular symmetry).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import StatCsi


def crandn(rng, *shape):
    """Standard circularly-symmetric complex Gaussian array."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass
class PhaseShift:
    """Unit-modulus RIS reflection coefficients."""
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=complex)
        if np.max(np.abs(np.abs(self.theta) - 1.0)) > 1e-9:
            raise ValueError("phase-shift entries must have unit modulus")

    @classmethod
    def ones(cls, N: int) -> "PhaseShift":
        return cls(np.ones(N, dtype=complex))

    @classmethod
    def random(cls, N: int, rng) -> "PhaseShift":
        return cls(np.exp(1j * rng.uniform(0.0, 2 * np.pi, N)))

    @property
    def N(self) -> int:
        return self.theta.shape[0]


def as_theta(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, PhaseShift) else np.asarray(theta, dtype=complex)


@dataclass
class ChannelDraw:
    """One instantaneous realization of all links."""
    H1: np.ndarray   # (..., M, K_I) BS-IU, Rayleigh
    H2: np.ndarray   # (..., M, N)  BS-RIS, Ricean
    H3: np.ndarray   # (N, K_E)     RIS-EU, deterministic LoS
    G: np.ndarray    # (..., M, K_E) cascaded BS-RIS-EU for the phase shift in force


def sample_H1(csi: StatCsi, rng, batch=()):
    """BS-IU Rayleigh channels; column k has per-entry variance beta_BI[k]."""
    H = crandn(rng, *batch, csi.M, csi.K_I)
    return H * np.sqrt(csi.beta_BI)


def sample_H2(csi: StatCsi, delta: float, rng, batch=()):
    """BS-RIS Ricean channel: scaled LoS rank-one mean plus i.i.d. scatter."""
    los = np.outer(csi.a_M, csi.a_N.conj())
    scatter = crandn(rng, *batch, csi.M, csi.N)
    return np.sqrt(csi.beta_BR / (delta + 1.0)) * (np.sqrt(delta) * los + scatter)


def h3_matrix(csi: StatCsi):
    """Deterministic RIS-EU LoS matrix; column l is sqrt(beta_RE[l]) * f_bar[:, l]."""
    return csi.f_bar * np.sqrt(csi.beta_RE)


def cascade(H2, theta, csi: StatCsi):
    """Cascaded BS-RIS-EU channel H2 @ diag(theta) @ H3."""
    th = as_theta(theta)
    return (H2 * th) @ h3_matrix(csi)


def los_mean(csi: StatCsi, delta: float, theta):
    """Mean of the cascaded channel: column l = sqrt(lam_l*delta) * e_l * a_M,

    where e_l = a_N^H diag(theta) f_bar_l. Every EU mean is proportional to
    a_M because the LoS BS-RIS component is rank one.
    """
    e = ris_gain(theta, csi)                 # (K_E,)
    scale = np.sqrt(csi.lam * delta) * e     # (K_E,)
    return csi.a_M[:, None] * scale[None, :]


def sample_draw(csi: StatCsi, delta: float, theta, rng, batch=()) -> ChannelDraw:
    """Draw all links jointly; the cascaded matrix shares one BS-RIS realization."""
    H1 = sample_H1(csi, rng, batch)
    H2 = sample_H2(csi, delta, rng, batch)
    H3 = h3_matrix(csi)
    return ChannelDraw(H1=H1, H2=H2, H3=H3, G=cascade(H2, theta, csi))


def sample_g_independent(csi: StatCsi, delta: float, theta, rng, batch=()):
    """Cascaded EU channels with independent per-EU scatter.

    Column l is drawn from CN(los_mean_l, N*lam_l*I), independently across
    EUs. This is the generative model under which all closed-form averages
    are taken; the physically coupled alternative (one shared BS-RIS scatter
    matrix, see `sample_draw`) correlates EU columns through the common
    scatter whenever the RIS-EU steering vectors are not orthogonal.
    """
    mu = los_mean(csi, delta, theta)
    noise = crandn(rng, *batch, csi.M, csi.K_E)
    return mu + noise * np.sqrt(csi.N * csi.lam)


def ris_gain(theta, csi: StatCsi):
    """Per-EU scalar e_l = a_N^H diag(theta) f_bar_l, length K_E."""
    th = as_theta(theta)
    return csi.a_N.conj() @ (th[:, None] * csi.f_bar)


def xi_kernel(theta, csi: StatCsi, l: int, t: int) -> complex:
    """Phase-shift kernel for the ordered EU pair (l, t).

    Equals f_bar_l^H diag(theta)^H a_N a_N^H diag(theta) f_bar_t, i.e.
    conj(e_l) * e_t; the diagonal entries are real in [0, N^2].
    """
    e = ris_gain(theta, csi)
    return complex(np.conj(e[l]) * e[t])


def xi_matrix(theta, csi: StatCsi):
    """All kernels at once: Xi[l, t] = conj(e_l) * e_t, shape (K_E, K_E)."""
    e = ris_gain(theta, csi)
    return np.outer(e.conj(), e)
