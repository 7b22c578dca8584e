"""Dense primal-dual interior-point solver for the phase-lift subproblem.

Solves, over a Hermitian matrix variable Q and a scalar s:

    maximize    w_s * s + <P, Q>
    subject to  diag(Q) = 1
                <W_l, Q> + s <= b_l,   l = 1..m
                Q  PSD (complex Hermitian, side n)

This family has a handful of trace constraints against one small PSD block,
so a specialized solver beats general conic translations by orders of
magnitude: eliminating the Newton system onto the constraint multipliers
leaves a real Schur complement of side n + m + 1 whose diagonal-constraint
block is an elementwise product of the current primal/dual iterates.

The algorithm is a standard infeasible-start predictor-corrector method with
the linearized complementarity direction (scaling-free, unsymmetrized
Q S = mu I linearization with Hermitian symmetrization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SdpSolveError(RuntimeError):
    """Interior-point iteration failed to reach the requested accuracy."""


@dataclass
class SdpSolution:
    Q: np.ndarray
    s: float
    objective: float
    y: np.ndarray           # duals of the unit-diagonal constraints
    lam: np.ndarray         # duals of the energy rows
    gap: float
    iterations: int
    status: str


def _sym(A):
    return (A + A.conj().T) / 2


def _max_psd_step(X, dX, tol=1e-12):
    """Largest alpha in (0, 1] with X + alpha*dX staying positive definite."""
    # generalized eigenvalue bound: alpha < 1 / max eig of -L^-1 dX L^-H
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Linv = np.linalg.inv(L)
    Mi = _sym(-(Linv @ dX @ Linv.conj().T))
    w = np.linalg.eigvalsh(Mi)[-1]
    if w <= tol:
        return 1.0
    return min(1.0, 1.0 / w)


def solve_phase_lift(W, b, P, w_s, tol=1e-9, max_iter=60):
    """Interior-point solve of the lifted phase subproblem.

    W: list of m Hermitian (n, n) arrays; b: (m,) bounds; P: Hermitian
    objective matrix; w_s > 0: weight of the scalar floor variable.
    Returns an `SdpSolution`; raises `SdpSolveError` when the iteration
    stalls before reaching `tol` on residuals and relative gap.
    """
    W = [np.asarray(Wl, dtype=complex) for Wl in W]
    m = len(W)
    n = W[0].shape[0]
    b = np.asarray(b, dtype=float)
    P = _sym(np.asarray(P, dtype=complex))
    if w_s <= 0:
        raise ValueError("floor weight must be positive")

    # strictly feasible-ish start: identity lift, interior slacks, PSD dual
    Q = np.eye(n, dtype=complex)
    trW = np.array([np.trace(Wl).real for Wl in W])
    s = float(np.min(b - trW)) - 1.0
    z = b - trW - s                      # > 0 by construction
    lam = np.full(m, w_s / m)
    R = P - sum(lam[l] * W[l] for l in range(m))
    y = np.full(n, np.linalg.eigvalsh(_sym(R))[-1] + 1.0)
    S = _sym(np.diag(y) - R)

    e_obj = abs(w_s * s) + abs(np.trace(P @ Q).real) + 1.0
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        # residuals; Rd is the violation of the dual slack definition
        rp1 = 1.0 - np.real(np.diag(Q))                       # diag(Q) = 1
        rp2 = b - np.array([np.trace(Wl @ Q).real for Wl in W]) - s - z
        Rd = np.diag(y) + sum(lam[l] * W[l] for l in range(m)) - P - S
        rd_s = w_s - lam.sum()
        mu = (np.trace(Q @ S).real + z @ lam) / (n + m)
        obj = w_s * s + np.trace(P @ Q).real
        dobj = y.sum() + lam @ b
        gap_rel = abs(dobj - obj) / (1.0 + abs(obj) + abs(dobj))
        res = max(np.abs(rp1).max(), np.abs(rp2).max(),
                  np.linalg.norm(Rd), abs(rd_s))
        if res <= tol * e_obj and gap_rel <= tol:
            status = "optimal"
            break

        Sinv = np.linalg.inv(S)
        Sinv = _sym(Sinv)
        T = [Q @ Wl @ Sinv for Wl in W]

        # Schur blocks over (dy, dlam, ds)
        B_yy = np.real(Q * Sinv.T)
        B_ylam = np.column_stack([np.real(np.diag(Tl)) for Tl in T])
        B_lamy = np.stack([np.real(np.einsum("ij,ji->i", Sinv @ Wl, Q))
                           for Wl in W])
        B_lamlam = np.empty((m, m))
        for l in range(m):
            for t in range(m):
                B_lamlam[l, t] = np.trace(W[l] @ T[t]).real
        dim = n + m + 1
        K = np.zeros((dim, dim))
        K[:n, :n] = B_yy
        K[:n, n:n + m] = B_ylam
        K[n:n + m, :n] = B_lamy
        K[n:n + m, n:n + m] = B_lamlam + np.diag(z / lam)
        K[n:n + m, n + m] = -1.0
        K[n + m, n:n + m] = 1.0

        def solve_newton(sigmu, corr_Q=None, corr_z=None):
            # complementarity targets
            Rc = sigmu * Sinv - Q
            if corr_Q is not None:
                Rc = Rc - _sym(corr_Q @ Sinv)
            rc_z = (sigmu - z * lam) / lam
            if corr_z is not None:
                rc_z = rc_z - corr_z / lam
            # eliminate dQ = Rc - sym(Q (Diag(dy) + sum dlam W + Rd) Sinv)
            MRd = _sym(Q @ Rd @ Sinv)
            r1 = np.real(np.diag(Rc - MRd)) - rp1
            r2 = np.array([np.trace(W[l] @ (Rc - MRd)).real for l in range(m)]) \
                - rp2 + rc_z
            r3 = rd_s
            rhs = np.concatenate([r1, r2, [r3]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError as err:
                raise SdpSolveError("singular Newton system") from err
            dy, dlam, ds = sol[:n], sol[n:n + m], sol[n + m]
            dS = np.diag(dy) + sum(dlam[l] * W[l] for l in range(m)) + Rd
            dS = _sym(dS)
            dQ = Rc - _sym(Q @ dS @ Sinv)
            dz = rc_z - (z / lam) * dlam
            return dQ, dz, ds, dy, dlam, dS

        # predictor
        dQa, dza, dsa, dya, dlama, dSa = solve_newton(0.0)
        ap = min(_max_psd_step(Q, dQa), _pos_step(z, dza))
        ad = min(_max_psd_step(S, dSa), _pos_step(lam, dlama))
        mu_aff = (np.trace((Q + ap * dQa) @ (S + ad * dSa)).real
                  + (z + ap * dza) @ (lam + ad * dlama)) / (n + m)
        sigma = min(1.0, max(0.0, (mu_aff / mu)) ** 3)

        # corrector
        dQ, dz, ds, dy, dlam, dS = solve_newton(
            sigma * mu, corr_Q=dQa @ dSa, corr_z=dza * dlama)
        ap = 0.98 * min(_max_psd_step(Q, dQ), _pos_step(z, dz))
        ad = 0.98 * min(_max_psd_step(S, dS), _pos_step(lam, dlam))
        if ap <= 1e-10 or ad <= 1e-10:
            status = "stalled"
            break
        Q = _sym(Q + ap * dQ)
        z = z + ap * dz
        s = s + ap * ds
        y = y + ad * dy
        lam = lam + ad * dlam
        S = _sym(S + ad * dS)

    obj = w_s * s + np.trace(P @ Q).real
    mu = (np.trace(Q @ S).real + z @ lam) / (n + m)
    if status not in ("optimal",):
        # accept near-solutions that are good enough for an SCA loop
        rp1 = 1.0 - np.real(np.diag(Q))
        rp2 = b - np.array([np.trace(Wl @ Q).real for Wl in W]) - s - z
        res = max(np.abs(rp1).max(), np.abs(rp2).max())
        if res <= 1e-6 and mu <= 1e-6 * e_obj:
            status = "inaccurate"
        else:
            raise SdpSolveError(
                f"interior point stalled at iteration {it}: mu={mu:.2e}")
    return SdpSolution(Q=Q, s=float(s), objective=float(obj), y=y, lam=lam,
                       gap=float(mu), iterations=it, status=status)


def _pos_step(x, dx):
    """Largest alpha in (0, 1] keeping x + alpha*dx strictly positive."""
    neg = dx < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-x[neg] / dx[neg])))
