"""Holding-time moment kernels, effective moments, and the Gaussian count law.

Between consecutive registrations the detector sleeps t_d, then waits some
number of full empty periods (geometric with mean K = e^-Lam/(1 - e^-Lam))
plus the awake offset from the reactivation bin to the landing bin. The
conditional holding moments are therefore

    mu_ij     = t_d + K*t_r + ((j - i - d) mod n_b) * delta
    sigma2_ij = K * (1 + K) * t_r^2          (one value for every i, j)

with d the dead-time bin shift. The awake offset is linear in the wrapped
index distance, which lets every kernel product reduce to prefix sums of
w_j * v_j, j * w_j * v_j and j^2 * w_j * v_j, keeping the implicit path at
O(n_b) per product.

The count distribution over exposure t = N_r * t_r is Gaussian with mean
t / mu and variance t * sigma^2 / mu^3, where sigma^2 corrects the
steady-state holding variance with twice the summed lag covariances; the
lag sum is truncated after L lags and closed with a spectral tail over the
leading p eigenmodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SystemConfig, dead_time_shift
from .errors import ConfigError, ConsistencyError, DomainError
from .transition import (EigenData, TemporalPdf, TransitionOperator,
                         _suffix_sum, build_transition, leading_eigenpairs,
                         left_apply, right_apply, stationary_pdf)

DEFAULT_LAGS = 6
DEFAULT_MODES = 5


def wrap_constant(cfg: SystemConfig) -> float:
    """K = e^-Lam / (1 - e^-Lam), the mean number of empty full periods."""
    e = np.exp(-cfg.Lam)
    if e >= 1.0:
        raise ConfigError("Lambda must be positive for the wrap constant")
    return float(e / (1.0 - e))


def holding_sigma2(cfg: SystemConfig) -> float:
    """sigma2_ij = e^-Lam / (1 - e^-Lam)^2 * t_r^2, identical for all i, j."""
    e = np.exp(-cfg.Lam)
    return float(e / (1.0 - e) ** 2 * cfg.t_r * cfg.t_r)


def holding_moment(cfg: SystemConfig, i: int, j: int) -> tuple[float, float]:
    """Conditional holding moments (mu_ij, sigma2_ij) for one transition."""
    if not (0 <= i < cfg.n_b and 0 <= j < cfg.n_b):
        raise DomainError("bin indices out of range")
    d = dead_time_shift(cfg)
    K = wrap_constant(cfg)
    awake = ((j - i - d) % cfg.n_b) * cfg.delta
    return cfg.t_d + awake + K * cfg.t_r, holding_sigma2(cfg)


@dataclass
class HoldingMoments:
    """Holding-moment data; M materialized only alongside a dense operator."""

    K: float
    sigma2_const: float
    base_offset: float            # t_d + K * t_r, the k = 0 moment
    M: Optional[np.ndarray] = None


def build_holding_moments(cfg: SystemConfig, dense: bool) -> HoldingMoments:
    K = wrap_constant(cfg)
    base = cfg.t_d + K * cfg.t_r
    M = None
    if dense:
        idx = np.arange(cfg.n_b)
        d = dead_time_shift(cfg)
        M = base + ((idx[None, :] - idx[:, None] - d) % cfg.n_b) * cfg.delta
    return HoldingMoments(K=K, sigma2_const=holding_sigma2(cfg), base_offset=base, M=M)


@dataclass
class MomentKernels:
    """First- and second-moment kernels Q_mu, Q_mu2, Q_sigma2 tied to one operator."""

    op: TransitionOperator
    moments: HoldingMoments
    delta: float
    Qmu: Optional[np.ndarray] = None
    Qmu2: Optional[np.ndarray] = None
    _ones_qmu: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def sigma2_const(self) -> float:
        return self.moments.sigma2_const

    def qmu_1(self) -> np.ndarray:
        """Cached Q_mu 1 (row-expected holding times)."""
        if self._ones_qmu is None:
            self._ones_qmu = qmu_right(self, np.ones(self.op.n_b))
        return self._ones_qmu


def build_kernels(cfg: SystemConfig, op: TransitionOperator) -> MomentKernels:
    moments = build_holding_moments(cfg, dense=op.kind == "dense")
    Qmu = Qmu2 = None
    if op.kind == "dense":
        Qmu = op.matrix * moments.M
        Qmu2 = op.matrix * moments.M * moments.M
    return MomentKernels(op=op, moments=moments, delta=cfg.delta, Qmu=Qmu, Qmu2=Qmu2)


def _index_sums_right(kern: MomentKernels, v: np.ndarray, power: int):
    """Right products sum_j Ptilde_ij * k_ij^power * v_j for power in {1, 2},
    with k_ij = (j - i'') mod n_b, via split prefix sums."""
    op = kern.op
    n = op.n_b
    q = op._w * v
    j = np.arange(n)
    q1 = j * q
    a0 = np.concatenate((np.zeros(1, dtype=q.dtype), np.cumsum(q)[:-1]))
    a1 = np.concatenate((np.zeros(1, dtype=q.dtype), np.cumsum(q1)[:-1]))
    u0 = _suffix_sum(q)
    u1 = _suffix_sum(q1)
    m = j  # base-row index
    upper1 = u1 - m * u0
    lower1 = a1 + (n - m) * a0
    num1 = upper1 + op.exp_neg_lam * lower1
    out1 = np.roll(num1 / op.row_norm, -op.shift_d)
    if power == 1:
        return out1
    q2 = j * q1
    a2 = np.concatenate((np.zeros(1, dtype=q.dtype), np.cumsum(q2)[:-1]))
    u2 = _suffix_sum(q2)
    upper2 = u2 - 2 * m * u1 + m * m * u0
    lower2 = a2 + 2 * (n - m) * a1 + (n - m) ** 2 * a0
    num2 = upper2 + op.exp_neg_lam * lower2
    out2 = np.roll(num2 / op.row_norm, -op.shift_d)
    return out1, out2


def qmu_right(kern: MomentKernels, v: np.ndarray) -> np.ndarray:
    """Column action Q_mu v."""
    if kern.Qmu is not None:
        return kern.Qmu @ v
    base = kern.moments.base_offset
    k1 = _index_sums_right(kern, v, power=1)
    return base * right_apply(kern.op, v) + kern.delta * k1


def qmu2_right(kern: MomentKernels, v: np.ndarray) -> np.ndarray:
    """Column action Q_mu2 v (kernel of squared holding means)."""
    if kern.Qmu2 is not None:
        return kern.Qmu2 @ v
    base = kern.moments.base_offset
    k1, k2 = _index_sums_right(kern, v, power=2)
    pv = right_apply(kern.op, v)
    return base * base * pv + 2 * base * kern.delta * k1 + kern.delta ** 2 * k2


def qsigma2_right(kern: MomentKernels, v: np.ndarray) -> np.ndarray:
    """Column action Q_sigma2 v = sigma2_const * (Ptilde v)."""
    return kern.sigma2_const * right_apply(kern.op, v)


def qmu_left(kern: MomentKernels, u: np.ndarray) -> np.ndarray:
    """Row action u Q_mu."""
    if kern.Qmu is not None:
        return u @ kern.Qmu
    op = kern.op
    n = op.n_b
    base = kern.moments.base_offset
    g = np.roll(u, op.shift_d) / op.row_norm
    mg = np.arange(n) * g
    cg = np.cumsum(g)
    ch = np.cumsum(mg)
    tail0 = np.zeros_like(cg)          # sum_{m>j} g_m
    tail1 = np.zeros_like(cg)          # sum_{m>j} m g_m
    tail0[:-1] = _suffix_sum(g)[1:]
    tail1[:-1] = _suffix_sum(mg)[1:]
    j = np.arange(n)
    plain = cg + op.exp_neg_lam * tail0
    idx1 = (j * cg - ch) + op.exp_neg_lam * ((j + n) * tail0 - tail1)
    return op._w * (base * plain + kern.delta * idx1)


def effective_mean(pi: TemporalPdf, kern: MomentKernels) -> float:
    """mu = pi Q_mu 1, the effective mean holding time in seconds."""
    return float(pi.pi @ kern.qmu_1())


def steady_state_variance(pi: TemporalPdf, kern: MomentKernels, mu: float) -> float:
    """sigma_ss^2 = pi (Q_mu2 + Q_sigma2) 1 - mu^2."""
    ones = np.ones(kern.op.n_b)
    second = float(pi.pi @ (qmu2_right(kern, ones) + qsigma2_right(kern, ones)))
    out = second - mu * mu
    if out < -1e-12:
        raise ConsistencyError(f"steady-state variance came out negative ({out:.3e})")
    return out


def lag_covariances(pi: TemporalPdf, kern: MomentKernels, op: TransitionOperator,
                    L: int, mu: float) -> np.ndarray:
    """gamma_1 .. gamma_L in one sweep of iterated row products."""
    if L < 1:
        raise DomainError("lag count must be >= 1")
    qmu1 = kern.qmu_1()
    u = qmu_left(kern, pi.pi)
    out = np.empty(L)
    for l in range(L):
        if l > 0:
            u = left_apply(op, u)
        out[l] = float(u @ qmu1) - mu * mu
    return out


def lag_covariance(pi: TemporalPdf, kern: MomentKernels, op: TransitionOperator,
                   l: int, mu: float) -> float:
    """gamma_l = pi Q_mu Ptilde^(l-1) Q_mu 1 - mu^2."""
    return float(lag_covariances(pi, kern, op, l, mu)[-1])


def _truncate_eig(eig: EigenData, p: int) -> EigenData:
    """Keep the top-p modes, extending by one if the cut splits a conjugate pair."""
    if p >= eig.p:
        return eig
    keep = p
    last = eig.eigenvalues[keep - 1]
    if keep < eig.p and abs(last.imag) > 0:
        nxt = eig.eigenvalues[keep]
        if np.isclose(nxt, last.conjugate(), rtol=1e-8, atol=1e-12):
            keep += 1
    return EigenData(p=keep, eigenvalues=eig.eigenvalues[:keep],
                     right_vectors=eig.right_vectors[:, :keep],
                     left_vectors=eig.left_vectors[:, :keep])


def spectral_tail(eig: EigenData, pi: TemporalPdf, kern: MomentKernels,
                  mu: float, L: int) -> float:
    """Closed-form tail sum_(l>L) of the spectral lag-covariance expansion.

    tail = sum_{k>=2} alpha_k beta_k lambda_k^L / (1 - lambda_k), with
    alpha = pi Q_mu V_p and beta = U_p^T Q_mu 1. Summed in complex
    arithmetic; the imaginary part must cancel across conjugate pairs.
    """
    if L < 1:
        raise DomainError("L must be >= 1")
    if eig.p < 2:
        return 0.0
    rho = qmu_left(kern, pi.pi)
    qmu1 = kern.qmu_1()
    alpha = rho @ eig.right_vectors
    beta = qmu1 @ eig.left_vectors
    # The unit mode factorizes to mu^2; a large mismatch means broken pairing.
    unit = (alpha[0] * beta[0]).real
    if abs(unit - mu * mu) > 1e-8 * mu * mu + 1e-30:
        raise ConsistencyError(
            f"unit-mode product {unit:.12e} does not reproduce mu^2 {mu*mu:.12e}")
    lams = eig.eigenvalues[1:]
    tail = np.sum(alpha[1:] * beta[1:] * lams ** L / (1.0 - lams))
    if abs(tail.imag) > 1e-9 * abs(tail.real) + 1e-15:
        raise ConsistencyError(
            f"spectral tail imaginary residual {tail.imag:.3e} exceeds bound "
            f"(real part {tail.real:.3e}); conjugate pairing is broken")
    return float(tail.real)


def effective_variance(cfg: SystemConfig, pi: TemporalPdf, kern: MomentKernels,
                       op: TransitionOperator, eig: EigenData,
                       L: int = DEFAULT_LAGS, p: int = DEFAULT_MODES) -> float:
    """sigma^2 = sigma_ss^2 + 2 * (sum_{l<=L} gamma_l + spectral tail)."""
    mu = effective_mean(pi, kern)
    sigma_ss2 = steady_state_variance(pi, kern, mu)
    gammas = lag_covariances(pi, kern, op, L, mu)
    tail = spectral_tail(_truncate_eig(eig, p), pi, kern, mu, L)
    out = sigma_ss2 + 2.0 * (float(gammas.sum()) + tail)
    if out <= 0:
        raise ConsistencyError(f"effective variance came out nonpositive ({out:.3e})")
    return out


@dataclass
class CountLaw:
    """Gaussian count law for one configuration plus solver diagnostics."""

    cfg: SystemConfig
    mu: float
    sigma2: float
    exposure: float
    count_mean: float
    count_var: float
    pi: TemporalPdf
    diagnostics: dict

    def diagnostics_json(self) -> dict:
        """JSON-safe diagnostics record."""
        d = self.diagnostics
        return {
            "mu": self.mu, "sigma2": self.sigma2,
            "count_mean": self.count_mean, "count_var": self.count_var,
            "sigma_ss2": d["sigma_ss2"], "gamma_ss": d["gamma_ss"],
            "gamma": list(d["gamma"]), "tail": d["tail"],
            "eigenvalues": [[z.real, z.imag] for z in d["eigenvalues"]],
            "lambda2_mag": d["lambda2_mag"],
        }


def count_law(cfg: SystemConfig, L: int = DEFAULT_LAGS, p: int = DEFAULT_MODES,
              representation: str = "auto") -> CountLaw:
    """End-to-end composition: operator -> pi -> kernels -> (mu, sigma^2) -> Gaussian."""
    op = build_transition(cfg, representation=representation)
    pi = stationary_pdf(op)
    kern = build_kernels(cfg, op)
    eig = leading_eigenpairs(op, min(p, cfg.n_b), pi=pi)

    mu = effective_mean(pi, kern)
    sigma_ss2 = steady_state_variance(pi, kern, mu)
    gammas = lag_covariances(pi, kern, op, L, mu)
    tail = spectral_tail(_truncate_eig(eig, p), pi, kern, mu, L)
    sigma2 = sigma_ss2 + 2.0 * (float(gammas.sum()) + tail)
    if sigma2 <= 0:
        raise ConsistencyError(f"effective variance came out nonpositive ({sigma2:.3e})")

    t = cfg.exposure
    lam2 = float(np.abs(eig.eigenvalues[1])) if eig.p >= 2 else 0.0
    return CountLaw(
        cfg=cfg, mu=mu, sigma2=sigma2, exposure=t,
        count_mean=t / mu, count_var=t * sigma2 / mu ** 3, pi=pi,
        diagnostics={
            "sigma_ss2": sigma_ss2,
            "gamma": gammas,
            "tail": tail,
            "gamma_ss": float(gammas.sum()) + tail,
            "eigenvalues": eig.eigenvalues,
            "lambda2_mag": lam2,
        },
    )
