"""Downlink precoder construction.

Information users get zero-forcing on the full-rank pilot-column estimate
matrix; energy users get maximum-ratio transmission, optionally projected
onto the orthogonal complement of the IU estimates (protective variant).
Normalizations are statistical: each column has unit average power, not
unit instantaneous power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import StatCsi
from .channel import as_theta, ris_gain
from .estimation import EstimationOutput, PilotPlan, owner_gamma

GRAM_COND_LIMIT = 1e12

PZF_MRT = "pzf+mrt"
PZF_PMRT = "pzf+pmrt"


class SingularGramError(np.linalg.LinAlgError):
    """Estimate matrix is (numerically) rank deficient; no regularization is applied."""


def _gram_solve(h1_full, rhs):
    """Solve (H^H H) x = rhs via Cholesky, failing on ill conditioning."""
    gram = np.swapaxes(h1_full, -1, -2).conj() @ h1_full
    cond = np.linalg.cond(gram)
    if np.max(cond) > GRAM_COND_LIMIT:
        raise SingularGramError(
            f"Gram condition {np.max(cond):.3e} exceeds {GRAM_COND_LIMIT:.0e}")
    try:
        np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as err:
        raise SingularGramError("estimate Gram matrix is not positive definite") from err
    return np.linalg.solve(gram, rhs)


def pzf_precoder(h1_full, col: int, gamma_col: float):
    """Zero-forcing column for one pilot index.

    `h1_full` is the (..., M, tau_KI) full-rank estimate matrix whose column
    `col` has per-entry variance `gamma_col`; the returned column is
    alpha * H (H^H H)^{-1} e_col with alpha = sqrt((M - tau_KI) * gamma_col),
    which has unit average power.
    """
    M, tau_KI = h1_full.shape[-2], h1_full.shape[-1]
    e = np.zeros((tau_KI, 1))
    e[col, 0] = 1.0
    x = _gram_solve(h1_full, e)
    alpha = np.sqrt((M - tau_KI) * gamma_col)
    return alpha * (h1_full @ x)[..., 0], alpha


def projector_B(h1_full):
    """Hermitian idempotent projector onto the complement of the estimate span."""
    M = h1_full.shape[-2]
    x = _gram_solve(h1_full, np.swapaxes(h1_full, -1, -2).conj())
    return np.eye(M) - h1_full @ x


def mrt_alpha_sq(M: int, gamma_g_l: float, lam_l: float, delta: float, xi_ll: float) -> float:
    """Reciprocal average power of an un-normalized MRT column."""
    return 1.0 / (M * (gamma_g_l + lam_l * delta * xi_ll))


def pmrt_alpha_sq(M: int, tau_KI: int, gamma_g_l, lam_l, delta, xi_ll) -> float:
    return 1.0 / ((M - tau_KI) * (gamma_g_l + lam_l * delta * xi_ll))


def mrt_precoder(g_hat_l, gamma_g_l, lam_l, delta, xi_ll):
    """Maximum-ratio column toward one EU, unit average power."""
    M = g_hat_l.shape[-1]
    alpha = np.sqrt(mrt_alpha_sq(M, gamma_g_l, lam_l, delta, xi_ll))
    return alpha * g_hat_l, alpha


def pmrt_precoder(B, g_hat_l, gamma_g_l, lam_l, delta, xi_ll, M: int, tau_KI: int):
    """Protective MRT: maximum ratio inside the IU-orthogonal subspace."""
    alpha = np.sqrt(pmrt_alpha_sq(M, tau_KI, gamma_g_l, lam_l, delta, xi_ll))
    return alpha * (B @ g_hat_l[..., :, None])[..., 0], alpha


@dataclass
class PrecoderSet:
    W_I: np.ndarray       # (..., M, K_I)
    W_E: np.ndarray       # (..., M, K_E)
    scheme: str
    alpha_pzf: np.ndarray  # (K_I,) desired-signal coefficients sqrt((M-tau_KI)*gamma_h)
    alpha_e: np.ndarray    # (K_E,) MRT/PMRT normalizations actually applied
    B: np.ndarray = None   # (..., M, M) projector, protective scheme only


def build_precoders(est: EstimationOutput, csi: StatCsi, plan: PilotPlan,
                    theta, delta: float, scheme: str = PZF_MRT) -> PrecoderSet:
    """Assemble the full precoder matrices for one (batch of) estimate(s).

    IUs sharing a pilot receive the same zero-forcing column. EU columns use
    the statistical normalization built from the estimate variances and the
    current phase-shift kernel.
    """
    h1 = est.h1_full_rank
    M, tau_KI = h1.shape[-2], h1.shape[-1]
    gam_cols = owner_gamma(plan, est.stats)

    gram_rhs = np.eye(tau_KI)
    x = _gram_solve(h1, gram_rhs)                       # (..., tau_KI, tau_KI)
    dirs = h1 @ x                                       # (..., M, tau_KI)
    w_cols = dirs * np.sqrt((M - tau_KI) * gam_cols)
    W_I = w_cols[..., :, plan.iu_pilot]

    xi_ll = np.abs(ris_gain(theta, csi)) ** 2           # (K_E,)
    if scheme == PZF_MRT:
        a2 = 1.0 / (M * (est.gamma_g + csi.lam * delta * xi_ll))
        W_E = est.g_hat * np.sqrt(a2)
        B = None
    elif scheme == PZF_PMRT:
        a2 = 1.0 / ((M - tau_KI) * (est.gamma_g + csi.lam * delta * xi_ll))
        B = np.eye(M) - dirs @ np.swapaxes(h1, -1, -2).conj()
        W_E = (B @ est.g_hat) * np.sqrt(a2)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    return PrecoderSet(W_I=W_I, W_E=W_E, scheme=scheme,
                       alpha_pzf=np.sqrt((M - tau_KI) * est.gamma_h),
                       alpha_e=np.sqrt(a2), B=B)
