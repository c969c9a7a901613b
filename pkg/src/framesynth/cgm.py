"""Constrained four-component Gaussian mixture head and the Bernoulli V/UV head.

The mixture has exactly four free parameters per channel: mean mu,
standard deviation sigma, skewness alpha and shape beta, with alpha and
beta squashed into (-1, 1). The construction places components on fixed
offsets d = [-1.5, -0.5, 0.5, 1.5] with softmax weights driven by
alpha * d + beta * (1 - |d|), then rescales so the mixture mean and
variance are exactly mu and sigma**2:

    w_k     = softmax(alpha * d_k + beta * (1 - |d_k|))
    sig_c   = sigma / sqrt(0.5625 + Var_w(d))
    means_k = mu + sig_c * (d_k - E_w[d])
    std_c   = 0.75 * sig_c          (component std, all components)

A component std of 0.75 times the unit offset spacing keeps the mixture
unimodal for the whole reachable (alpha, beta) range, so the head can
express skew and tail shape but never multiple modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError

OFFSETS = np.array([-1.5, -0.5, 0.5, 1.5])
SHAPE_BASIS = 1.0 - np.abs(OFFSETS)
OVERLAP = 0.75
OVERLAP_SQ = OVERLAP * OVERLAP  # 0.5625
SIGMA_FLOOR = 1e-4
BERNOULLI_CLAMP = 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
# 8*sigma * INVPHI**n <= 1e-9*sigma  =>  n >= log(8e9)/log(1/INVPHI)
_GOLDEN_ITERS = 48


@dataclass
class CgmParams:
    """Per-channel mixture parameters; all four arrays share one shape."""

    mu: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def shape(self):
        return np.shape(self.mu)

    def validate(self):
        for name in ("mu", "sigma", "alpha", "beta"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite value in {name}")
        if np.any(self.sigma <= 0):
            raise DomainError("sigma must be positive")
        if np.any(np.abs(self.alpha) >= 1) or np.any(np.abs(self.beta) >= 1):
            raise DomainError("alpha and beta must lie in (-1, 1)")


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def squash_raw(raw: np.ndarray) -> CgmParams:
    """Map unbounded net outputs (..., 4) into the valid parameter domain."""
    raw = np.asarray(raw)
    if not np.all(np.isfinite(raw)):
        raise NumericError("non-finite raw mixture outputs")
    return CgmParams(
        mu=raw[..., 0],
        sigma=softplus(raw[..., 1]) + SIGMA_FLOOR,
        alpha=np.tanh(raw[..., 2]),
        beta=np.tanh(raw[..., 3]),
    )


def _mixture(params: CgmParams):
    """Weights, component means and the shared component std."""
    if np.any(params.sigma <= 0):
        raise DomainError("sigma must be positive")
    alpha = np.asarray(params.alpha, dtype=np.float64)
    beta = np.asarray(params.beta, dtype=np.float64)
    mu = np.asarray(params.mu, dtype=np.float64)
    sigma = np.asarray(params.sigma, dtype=np.float64)
    g = alpha[..., None] * OFFSETS + beta[..., None] * SHAPE_BASIS
    g = g - g.max(axis=-1, keepdims=True)
    w = np.exp(g)
    w /= w.sum(axis=-1, keepdims=True)
    m = (w * OFFSETS).sum(axis=-1)
    v2 = (w * OFFSETS**2).sum(axis=-1)
    var_d = v2 - m * m
    sig_c = sigma / np.sqrt(OVERLAP_SQ + var_d)
    means = mu[..., None] + sig_c[..., None] * (OFFSETS - m[..., None])
    return w, means, OVERLAP * sig_c, m, var_d, sig_c


def cgm_pdf(params: CgmParams, x) -> np.ndarray:
    """Mixture density at x; broadcasts over the parameter shape."""
    w, means, s, _, _, _ = _mixture(params)
    z = (np.asarray(x, dtype=np.float64)[..., None] - means) / s[..., None]
    comp = np.exp(-0.5 * z * z) / (s[..., None] * np.sqrt(2.0 * np.pi))
    return (w * comp).sum(axis=-1)


def cgm_nll(params: CgmParams, x):
    """Negative log density and its gradient wrt (mu, sigma, alpha, beta)."""
    w, means, s, m, var_d, sig_c = _mixture(params)
    sigma = np.asarray(params.sigma, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)

    z = (x[..., None] - means) / s[..., None]
    log_comp = np.log(w) - 0.5 * z * z - np.log(s)[..., None] - 0.5 * _LOG_2PI
    top = log_comp.max(axis=-1, keepdims=True)
    gamma = np.exp(log_comp - top)
    total = gamma.sum(axis=-1, keepdims=True)
    gamma /= total
    nll = -(np.log(total[..., 0]) + top[..., 0])

    # Backward pass through the construction, innermost first.
    d_mean_k = -gamma * z / s[..., None]
    d_mu = d_mean_k.sum(axis=-1)
    d_sig_c = (d_mean_k * (OFFSETS - m[..., None])).sum(axis=-1)
    d_s = -(gamma * (z * z - 1.0)).sum(axis=-1) / s
    d_sig_c = d_sig_c + OVERLAP * d_s
    d_m = -sig_c * d_mu  # mean shift -sig_c * m applied to every component
    d_var = -d_sig_c * sig_c / (2.0 * (OVERLAP_SQ + var_d))
    d_v2 = d_var
    d_m = d_m - 2.0 * m * d_var
    d_w = d_m[..., None] * OFFSETS + d_v2[..., None] * OFFSETS**2
    d_g = w * (d_w - (d_w * w).sum(axis=-1, keepdims=True)) + (w - gamma)
    d_alpha = (d_g * OFFSETS).sum(axis=-1)
    d_beta = (d_g * SHAPE_BASIS).sum(axis=-1)
    d_sigma = d_sig_c / np.sqrt(OVERLAP_SQ + var_d)

    grads = {"mu": d_mu, "sigma": d_sigma, "alpha": d_alpha, "beta": d_beta}
    return nll, grads


def cgm_nll_raw(raw: np.ndarray, x):
    """NLL of x under squash_raw(raw) plus the gradient wrt raw (..., 4)."""
    raw = np.asarray(raw)
    params = squash_raw(raw)
    nll, g = cgm_nll(params, x)
    d_raw = np.empty(raw.shape, dtype=np.float64)
    d_raw[..., 0] = g["mu"]
    d_raw[..., 1] = g["sigma"] * sigmoid(np.asarray(raw[..., 1], dtype=np.float64))
    d_raw[..., 2] = g["alpha"] * (1.0 - np.asarray(params.alpha, dtype=np.float64) ** 2)
    d_raw[..., 3] = g["beta"] * (1.0 - np.asarray(params.beta, dtype=np.float64) ** 2)
    return nll, d_raw


def _pdf_shape(x, w, means, s):
    # Unnormalized density: constant per-channel factor dropped for argmax.
    z = (x[..., None] - means) / s[..., None]
    return (w * np.exp(-0.5 * z * z)).sum(axis=-1)


def golden_modes(w, means, s, lo, hi):
    """Vectorized golden-section argmax of the mixture over [lo, hi]."""
    a = np.asarray(lo, dtype=np.float64).copy()
    b = np.asarray(hi, dtype=np.float64).copy()
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = _pdf_shape(c, w, means, s)
    fd = _pdf_shape(d, w, means, s)
    for _ in range(_GOLDEN_ITERS)):
        keep_left = fc > fd
        a = np.where(keep_left, a, c)
        b = np.where(keep_left, d, b)
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        fresh = np.where(keep_left, c, d)
        f_fresh = _pdf_shape(fresh, w, means, s)
        fc, fd = np.where(keep_left, f_fresh, fd), np.where(keep_left, fc, f_fresh)
    return 0.5 * (a + b)


def cgm_mode(params: CgmParams) -> np.ndarray:
    """Mode of the mixture, located by golden-section search within +-4 sigma."""
    params.validate()
    w, means, s, _, _, _ = _mixture(params)
    mu = np.asarray(params.mu, dtype=np.float64)
    sigma = np.asarray(params.sigma, dtype=np.float64)
    return golden_modes(w, means, s, mu - 4.0 * sigma, mu + 4.0 * sigma)


def cgm_sample(params: CgmParams, tau: float, rng) -> np.ndarray:
    """Draw from the mixture, contracted toward the mode by temperature tau.

    tau=1 samples the unmodified distribution; tau=0 returns the mode and
    consumes no randomness.
    """
    if not (0.0 <= tau <= 1.0):
        raise DomainError(f"temperature {tau} outside [0, 1]")
    if tau == 0.0:
        return cgm_mode(params)
    w, means, s, _, _, _ = _mixture(params)
    shape = np.shape(params.mu)
    u = rng.random(shape)
    z = rng.standard_normal(shape)
    k = (u[..., None] > np.cumsum(w, axis=-1)).sum(axis=-1)
    k = np.minimum(k, len(OFFSETS) - 1)
    x0 = np.take_along_axis(means, k[..., None], axis=-1)[..., 0] + s * z
    if tau == 1.0:
        return x0
    mode = golden_modes(w, means, s,
                        np.asarray(params.mu, dtype=np.float64) - 4.0 * params.sigma,
                        np.asarray(params.mu, dtype=np.float64) + 4.0 * params.sigma)
    return mode + tau * (x0 - mode)


# ---------------------------------------------------------------------------
# Bernoulli voiced/unvoiced head
# ---------------------------------------------------------------------------


def vuv_squash(raw) -> np.ndarray:
    p = sigmoid(np.asarray(raw, dtype=np.float64))
    return np.clip(p, BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP)


def vuv_nll(p_voiced, target):
    """Bernoulli NLL and gradient wrt p; targets must be exactly 0 or 1."""
    p = np.asarray(p_voiced, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if not np.all((t == 0.0) | (t == 1.0)):
        raise DomainError("vuv targets must be 0 or 1")
    p = np.clip(p, BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP)
    nll = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    grad = -t / p + (1.0 - t) / (1.0 - p)
    return nll, grad


def vuv_nll_raw(raw, target):
    """Bernoulli NLL of sigmoid(raw) plus the gradient wrt raw."""
    raw = np.asarray(raw, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if not np.all((t == 0.0) | (t == 1.0)):
        raise DomainError("vuv targets must be 0 or 1")
    p = vuv_squash(raw)
    nll = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    return nll, sigmoid(raw) - t


def vuv_sample(p_voiced, tau: float, rng) -> np.ndarray:
    """Sample the V/UV decision with a sharpened probability.

    tau=0 thresholds at 0.5 and consumes no randomness; tau>0 samples
    Bernoulli(p') with logit(p') = logit(p) / tau.
    """
    if not (0.0 <= tau <= 1.0):
        raise DomainError(f"temperature {tau} outside [0, 1]")
    p = np.clip(np.asarray(p_voiced, dtype=np.float64),
                BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP)
    if tau == 0.0:
        return (p >= 0.5).astype(np.float64)
    logit = np.log(p) - np.log1p(-p)
    sharp = sigmoid(logit / max(tau, 1e-6))
    u = rng.random(np.shape(p))
    return (u < sharp).astype(np.float64)
