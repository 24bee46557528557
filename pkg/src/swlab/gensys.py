"""Generalized-Schur (QZ) solution of linear rational-expectations models.

Solves ``G0 z_t = G1 z_{t-1} + A + B e_t + C eta_t`` for the stable
transition ``z_t = d + T z_{t-1} + H e_t`` following Sims' gensys, with
existence and uniqueness checks on the expectational-error loadings.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DecompositionError, SingularPencilError

DEFAULT_DIV = 1.01
DEFAULT_RANK_TOL = 1e-6


class EU(str, enum.Enum):
    YES = "yes"
    NO = "no"
    UNDECIDED = "indeterminate-detection-failed"


@dataclass(frozen=True)
class SolvedTransition:
    d: np.ndarray
    T: np.ndarray
    H: np.ndarray
    eu: tuple[EU, EU]
    n_unstable: int = 0

    @property
    def ok(self) -> bool:
        return self.eu == (EU.YES, EU.YES)


def _range_basis(M: np.ndarray, rank_tol: float):
    """Left singular vectors spanning range(M), plus a flag for borderline ranks."""
    if M.size == 0 or not np.any(M):
        return np.zeros((M.shape[0], 0), dtype=M.dtype), np.zeros(0), np.zeros((M.shape[1], 0), dtype=M.dtype), False
    u, s, vh = linalg.svd(M, full_matrices=False)
    cut = rank_tol * s[0]
    keep = s > cut
    borderline = bool(np.any((s > 0.1 * cut) & (s < 10.0 * cut)))
    return u[:, keep], s[keep], vh[keep].conj().T, borderline


def _decide(residual: float, scale: float, rank_tol: float) -> EU:
    cut = rank_tol * max(scale, 1.0)
    if residual < 0.1 * cut:
        return EU.YES
    if residual > 10.0 * cut:
        return EU.NO
    return EU.UNDECIDED


def gensys(model, div: float = DEFAULT_DIV, rank_tol: float = DEFAULT_RANK_TOL) -> SolvedTransition:
    """Solve a linear RE model.

    Parameters
    ----------
    model : LinearREModel-like
        Anything exposing ``G0, G1, A, B, C``.
    div : float
        Generalized eigenvalues with modulus above ``div`` are explosive.
    rank_tol : float
        Relative singular-value cutoff used in all rank decisions.

    Returns
    -------
    SolvedTransition
        ``eu`` flags existence and uniqueness; ``d, T, H`` are meaningful
        only when both are ``EU.YES``.

    Raises
    ------
    SingularPencilError
        If some generalized eigenvalue is 0/0.
    DecompositionError
        If the QZ factorisation or its reordering fails.
    """
    if div <= 1.0:
        raise ValueError("div must exceed 1")
    G0 = np.asarray(model.G0, dtype=float)
    G1 = np.asarray(model.G1, dtype=float)
    n = G0.shape[0]
    if G0.shape != (n, n) or G1.shape != (n, n):
        raise ValueError("G0 and G1 must be square and of equal size")
    A = np.asarray(model.A, dtype=float).reshape(n)
    B = np.asarray(model.B, dtype=float).reshape(n, -1)
    C = np.asarray(model.C, dtype=float).reshape(n, -1)
    n_shock = B.shape[1]

    def stable(alpha, beta):
        return np.abs(beta) <= div * np.abs(alpha)

    try:
        with np.errstate(all="ignore"):
            a, b, _, _, q, z = linalg.ordqz(G0, G1, sort=stable, output="complex")
    except (ValueError, linalg.LinAlgError) as exc:
        raise DecompositionError(f"QZ decomposition failed: {exc}") from exc
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DecompositionError("QZ decomposition returned non-finite factors")

    da, db = np.abs(np.diag(a)), np.abs(np.diag(b))
    scale = max(np.abs(G0).max(initial=0.0), np.abs(G1).max(initial=0.0), 1e-300)
    if np.any((da < 1e-12 * scale) & (db < 1e-12 * scale)):
        raise SingularPencilError("coincident zeros in the generalized eigenvalues")

    is_unstable = db > div * da
    n_unstable = int(is_unstable.sum())
    n_stable = n - n_unstable
    # ordqz must have moved every explosive root to the lower-right block
    if np.any(is_unstable[:n_stable]) or not np.all(is_unstable[n_stable:]):
        raise DecompositionError("eigenvalue reordering failed to separate explosive roots")

    qh = q.conj().T  # qh @ G0 @ z = a
    q1, q2 = qh[:n_stable], qh[n_stable:]

    eta_wt = q2 @ C
    u_eta, d_eta, v_eta, border_eta = _range_basis(eta_wt, rank_tol)

    # existence: explosive rows of the forcing must lie in the span of the eta loadings
    forcing = q2 @ np.column_stack([B, A]) if n_unstable else np.zeros((0, n_shock + 1))
    if n_unstable == 0:
        exist = EU.YES
    else:
        u_f, _, _, border_f = _range_basis(forcing, rank_tol)
        if u_f.shape[1] == 0:
            exist = EU.YES
        else:
            resid = np.linalg.norm(u_f - u_eta @ (u_eta.conj().T @ u_f)) if u_eta.size else np.linalg.norm(u_f)
            exist = _decide(resid, 1.0, rank_tol * n)
            if exist == EU.YES and (border_f or border_eta):
                exist = EU.UNDECIDED

    # uniqueness: stable-block eta loadings must be pinned down by the explosive block
    eta_wt1 = q1 @ C
    u_eta1, d_eta1, v_eta1, border_eta1 = _range_basis(eta_wt1, rank_tol)
    if v_eta1.shape[1] == 0:
        unique = EU.YES
    else:
        loose = v_eta1 - v_eta @ (v_eta.conj().T @ v_eta1) if v_eta.size else v_eta1
        unique = _decide(np.linalg.norm(loose), 1.0, rank_tol * n)
        if unique == EU.YES and border_eta1:
            unique = EU.UNDECIDED

    eu = (exist, unique)
    if eu != (EU.YES, EU.YES):
        zeros = np.zeros
        return SolvedTransition(zeros(n), zeros((n, n)), zeros((n, n_shock)), eu, n_unstable)

    if v_eta.size and v_eta1.size:
        phi = u_eta @ np.diag(1.0 / d_eta) @ v_eta.conj().T @ v_eta1 @ np.diag(d_eta1) @ u_eta1.conj().T
        tmat = np.hstack([np.eye(n_stable), -phi.conj().T])
    else:
        tmat = np.hstack([np.eye(n_stable), np.zeros((n_stable, n_unstable))])

    Gz0 = np.vstack([tmat @ a, np.hstack([np.zeros((n_unstable, n_stable)), np.eye(n_unstable)])])
    Gz1 = np.vstack([tmat @ b, np.zeros((n_unstable, n))])
    try:
        G0I = np.linalg.inv(Gz0)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("singular transformed system") from exc
    T = G0I @ Gz1
    us = slice(n_stable, n)
    if n_unstable:
        try:
            c_unst = np.linalg.solve(a[us, us] - b[us, us], q2 @ A)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError("unit root in the explosive block with nonzero constant") from exc
    else:
        c_unst = np.zeros(0)
    d = G0I @ np.concatenate([tmat @ (qh @ A), c_unst])
    H = G0I @ np.vstack([tmat @ (qh @ B), np.zeros((n_unstable, n_shock))])

    T = np.real(z @ T @ z.conj().T)
    d = np.real(z @ d)
    H = np.real(z @ H)
    return SolvedTransition(d=d, T=T, H=H, eu=eu, n_unstable=n_unstable)


def dump_matrix_csv(M: np.ndarray, row_labels, col_labels) -> str:
    """Labelled CSV dump of one matrix, for solver forensics."""
    buf = io.StringIO()
    buf.write("," + ",".join(col_labels) + "\n")
    for lab, row in zip(row_labels, np.atleast_2d(M)):
        buf.write(lab + "," + ",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()
