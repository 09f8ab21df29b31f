"""Embedded-chain transition operator over registration phases.

A registration at bin i reactivates the detector d bins later (d from the
dead time), and the next registration lands at bin j with a weight that
factors as

    P_ij  proportional to  lambda_j * exp(F(s_i'') - F(s_j) - Lam * [i'' > j])

with i'' = (i + d) mod n_b and F the cumulative flux. Row-normalizing kills
the exp(F(s_i'')) factor, so a matrix-vector product only needs prefix sums
of w_j = lambda_j * exp(-F(s_j)) split at the wrap boundary i''. That is the
implicit representation: O(n_b) storage and O(n_b) matvecs, which is what
makes n_b = 2^14 practical (a dense operator would need >= 2 GiB).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .config import SystemConfig, cumulative_flux, dead_time_shift, discretize_flux
from .errors import ConfigError, ConvergenceError, DomainError

DENSE_THRESHOLD = 2048

_MRSP_MAGIC = b"MRSP"
_MRSP_VERSION = 1


def _suffix_sum(x: np.ndarray) -> np.ndarray:
    """Inclusive suffix sums sum_{j>=m} x_j.

    Computed by a reversed cumulative sum rather than total - prefix: past
    the pulse the suffix can be ~1e-6 of the total, and the subtraction
    would wipe out five digits.
    """
    return np.cumsum(x[::-1])[::-1]


@dataclass
class TransitionOperator:
    """Row-stochastic operator P-tilde, dense or implicit.

    The implicit form stores the factored pieces named below; `matrix` is
    only populated for the dense form. Both forms produce identical products
    up to roundoff.
    """

    n_b: int
    shift_d: int
    kind: str  # "dense" or "implicit"
    lam: np.ndarray              # flux at bin centers
    exp_pos_F: np.ndarray        # e^{+F(s_i)}
    exp_neg_F: np.ndarray        # e^{-F(s_j)}
    exp_neg_lam: float           # e^{-Lambda}
    row_norm: np.ndarray         # z_m, normalizer of base row m
    matrix: Optional[np.ndarray] = None
    _w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._w = self.lam * self.exp_neg_F


def build_exponent_entry(cfg: SystemConfig, i: int, j: int) -> float:
    """One entry of the base exponent matrix, exp(-Lam*[s_i > s_j] - F(s_j) + F(s_i))."""
    if not (0 <= i < cfg.n_b and 0 <= j < cfg.n_b):
        raise DomainError("bin indices out of range")
    s = cfg.bin_centers()
    expo = -cfg.Lam * (1.0 if s[i] > s[j] else 0.0) \
        - cumulative_flux(cfg, s[j]) + cumulative_flux(cfg, s[i])
    return float(np.exp(expo))


def build_transition(cfg: SystemConfig, representation: str = "auto",
                     dense_threshold: int = DENSE_THRESHOLD) -> TransitionOperator:
    """Build P-tilde for a configuration.

    representation: "auto" picks dense when n_b <= dense_threshold, else
    implicit; "dense" / "implicit" force one.
    """
    if representation not in ("auto", "dense", "implicit"):
        raise ConfigError(f"unknown representation {representation!r}")
    n = cfg.n_b
    d = dead_time_shift(cfg)
    lam = np.asarray(discretize_flux(cfg).values, dtype=float)
    F = np.atleast_1d(cumulative_flux(cfg, cfg.bin_centers()))
    exp_neg_lam = float(np.exp(-cfg.Lam))

    w = lam * np.exp(-F)
    if not np.all(np.isfinite(w)):
        raise ConfigError("nonfinite transition weights; check flux parameters")
    prefix = np.concatenate(([0.0], np.cumsum(w)[:-1]))  # sum_{j<m} w_j
    if w.sum() <= 0:
        raise ConfigError("transition rows are identically zero (Lambda = 0?)")
    z = _suffix_sum(w) + exp_neg_lam * prefix
    if np.any(z <= 0):
        raise ConfigError("zero transition row before normalization")

    kind = representation
    if kind == "auto":
        kind = "dense" if n <= dense_threshold else "implicit"

    matrix = None
    if kind == "dense":
        # Exponent assembled before exponentiation so large F never overflows.
        idx = np.arange(n)
        base = np.exp(F[:, None] - F[None, :] - cfg.Lam * (idx[:, None] > idx[None, :]))
        P = lam[None, :] * base[(idx + d) % n, :]
        P /= P.sum(axis=1, keepdims=True)
        matrix = P

    return TransitionOperator(
        n_b=n, shift_d=d, kind=kind, lam=lam,
        exp_pos_F=np.exp(F), exp_neg_F=np.exp(-F),
        exp_neg_lam=exp_neg_lam, row_norm=z, matrix=matrix,
    )


def right_apply(op: TransitionOperator, v: np.ndarray) -> np.ndarray:
    """Column action (P-tilde v), exact up to roundoff in either representation."""
    v = np.asarray(v)
    if v.shape != (op.n_b,):
        raise DomainError(f"vector has shape {v.shape}, expected ({op.n_b},)")
    if op.kind == "dense":
        return op.matrix @ v
    q = op._w * v
    prefix = np.concatenate((np.zeros(1, dtype=q.dtype), np.cumsum(q)[:-1]))
    numer = _suffix_sum(q) + op.exp_neg_lam * prefix  # indexed by base row m
    return np.roll(numer / op.row_norm, -op.shift_d)


def left_apply(op: TransitionOperator, u: np.ndarray) -> np.ndarray:
    """Row action (u P-tilde)."""
    u = np.asarray(u)
    if u.shape != (op.n_b,):
        raise DomainError(f"vector has shape {u.shape}, expected ({op.n_b},)")
    if op.kind == "dense":
        return u @ op.matrix
    g = np.roll(u, op.shift_d) / op.row_norm     # g_m = u_{m-d} / z_m
    cg = np.cumsum(g)                            # sum_{m<=j} g_m
    tail = np.empty_like(cg)                     # sum_{m>j} g_m
    tail[:-1] = _suffix_sum(g)[1:]
    tail[-1] = 0.0
    return op._w * (cg + op.exp_neg_lam * tail)


def to_dense(op: TransitionOperator) -> np.ndarray:
    """Materialize the matrix (debugging and cross-checks)."""
    if op.matrix is not None:
        return op.matrix
    n = op.n_b
    idx = np.arange(n)
    ind = (((idx[:, None] + op.shift_d) % n) > idx[None, :]).astype(float)
    P = op._w[None, :] * np.where(ind > 0, op.exp_neg_lam, 1.0)
    return P / op.row_norm[(idx + op.shift_d) % n][:, None]


@dataclass
class TemporalPdf:
    """Stationary probability over registration-phase bins."""

    pi: np.ndarray


def stationary_pdf(op: TransitionOperator, tol: float = 1e-13,
                   max_iter: int = 100_000) -> TemporalPdf:
    """Leading left eigenvector by normalized power iteration.

    Stops when the successive-iterate L1 gap drops to `tol`; raises a
    diagnostic error carrying the final residual otherwise.
    """
    u = np.full(op.n_b, 1.0 / op.n_b)
    gap = np.inf
    for _ in range(max_iter):
        nxt = left_apply(op, u)
        nxt /= nxt.sum()
        gap = float(np.abs(nxt - u).sum())
        u = nxt
        if gap <= tol:
            return TemporalPdf(pi=u)
    raise ConvergenceError(
        f"stationary distribution did not converge (final L1 gap {gap:.3e})",
        residual=gap,
    )


@dataclass
class EigenData:
    """Leading eigenpairs of P-tilde, biorthogonalized so U^T V = I."""

    p: int
    eigenvalues: np.ndarray   # complex, |lambda| descending, lambda_1 = 1 first
    right_vectors: np.ndarray  # (n_b, p) complex
    left_vectors: np.ndarray   # (n_b, p) complex


def _order_keep_pairs(vals: np.ndarray, p: int) -> np.ndarray:
    """Indices of the top-p by |lambda|, extended by one if the cut would
    split a complex-conjugate pair."""
    order = np.argsort(-np.abs(vals), kind="stable")
    keep = min(p, len(order))
    if keep < len(order):
        last, nxt = vals[order[keep - 1]], vals[order[keep]]
        if abs(last.imag) > 0 and np.isclose(nxt, last.conjugate(), rtol=1e-8, atol=1e-12):
            keep += 1
    return order[:keep]


def leading_eigenpairs(op: TransitionOperator, p: int,
                       pi: Optional[TemporalPdf] = None) -> EigenData:
    """Largest-magnitude eigenpairs with left/right vectors.

    The unit mode is returned exactly: right vector of ones and left vector
    pi (so u_1^T v_1 = 1 by normalization of pi). Dense operators go through
    the LAPACK eigensolver; implicit ones through ARPACK on the O(n) matvec,
    with a fixed start vector so repeated runs are bit-identical.
    """
    n = op.n_b
    if not (1 <= p <= n):
        raise DomainError(f"p must be in [1, {n}]")
    if pi is None:
        pi = stationary_pdf(op)

    if p == 1 or n == 1:
        vals = np.array([1.0 + 0.0j])
        V = np.ones((n, 1), dtype=complex)
        U = pi.pi.astype(complex).reshape(n, 1)
        return EigenData(p=1, eigenvalues=vals, right_vectors=V, left_vectors=U)

    if op.kind == "dense" or n < 16:
        vals, vl, vr = scipy.linalg.eig(to_dense(op), left=True, right=True)
        # scipy's vl satisfies vl[:,k]^H A = w_k vl[:,k]^H; the plain left
        # eigenvector is its conjugate.
        ul = vl.conj()
        sel = _order_keep_pairs(vals, p)
        vals, vr, ul = vals[sel], vr[:, sel], ul[:, sel]
    else:
        k = min(p + 2, n - 2)
        ncv = min(n, max(2 * max(p, k), 12))
        v0 = np.random.default_rng(0).random(n)
        A = scipy.sparse.linalg.LinearOperator((n, n), matvec=lambda x: right_apply(op, x))
        At = scipy.sparse.linalg.LinearOperator((n, n), matvec=lambda x: left_apply(op, x))
        try:
            vals_r, vr = scipy.sparse.linalg.eigs(A, k=k, which="LM", ncv=ncv, v0=v0)
            vals_l, ul = scipy.sparse.linalg.eigs(At, k=k, which="LM", ncv=ncv, v0=v0)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise ConvergenceError(f"eigen iteration stagnated: {exc}") from exc
        # Pair left modes to right modes by eigenvalue proximity.
        sel = _order_keep_pairs(vals_r, p)
        vals, vr = vals_r[sel], vr[:, sel]
        remaining = list(range(len(vals_l)))
        cols = []
        for lam_k in vals:
            best = min(remaining, key=lambda m: abs(vals_l[m] - lam_k))
            if abs(vals_l[best] - lam_k) > 1e-6 * max(1.0, abs(lam_k)):
                raise ConvergenceError(
                    f"left/right eigenvalue mismatch at lambda = {lam_k:.6g}")
            remaining.remove(best)
            cols.append(best)
        ul = ul[:, cols]

    # Put the unit mode first and replace it with its exact form.
    unit = int(np.argmin(np.abs(vals - 1.0)))
    if abs(vals[unit] - 1.0) > 1e-10:
        raise ConvergenceError(
            f"leading eigenvalue {vals[unit]:.12g} is not 1 within 1e-10")
    order = [unit] + [k for k in range(len(vals)) if k != unit]
    vals, vr, ul = vals[order], vr[:, order], ul[:, order]

    vals = vals.astype(complex).copy()
    vals[0] = 1.0
    vr = vr.astype(complex).copy()
    ul = ul.astype(complex).copy()
    vr[:, 0] = 1.0
    ul[:, 0] = pi.pi

    # Biorthogonalize: scale each left vector so u_k^T v_k = 1 (plain
    # transpose; distinct eigenvalues are automatically T-orthogonal).
    for kk in range(1, vr.shape[1]):
        s = ul[:, kk] @ vr[:, kk]
        if abs(s) < 1e-300:
            raise ConvergenceError(
                f"degenerate left/right pairing at lambda = {vals[kk]:.6g}")
        ul[:, kk] = ul[:, kk] / s

    return EigenData(p=vr.shape[1], eigenvalues=vals,
                     right_vectors=vr, left_vectors=ul)


def dump_operator(op: TransitionOperator, path) -> None:
    """Write the dense matrix with a 16-byte header (debugging aid)."""
    P = np.ascontiguousarray(to_dense(op), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", _MRSP_MAGIC, _MRSP_VERSION, op.n_b, 0))
        fh.write(P.tobytes())
