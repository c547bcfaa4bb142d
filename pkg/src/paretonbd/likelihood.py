"""Individual-level Pareto/NBD quantities in closed form.

A customer is summarized by the triple (x, t_x, T): x repeat purchases over
an observation window of T weeks, the last of them at t_x weeks after the
first-ever purchase.  Behavior is governed by a purchase rate ``lam`` and a
dropout hazard ``mu`` (both per week).  The marginal likelihood of the triple
is

    L(x, t_x, T | lam, mu)
        = lam**x / (lam + mu)
          * (mu * exp(-(lam + mu) * t_x) + lam * exp(-(lam + mu) * T))

Everything here is evaluated in the log domain with the larger exponent
factored out, because exp(-(lam + mu) * T) underflows float64 for plausible
weekly rates over multi-year windows.

All functions broadcast over array inputs and return scalars for scalar
inputs.  Rates must be strictly positive; estimators are expected to clamp
degenerate estimates to ``RATE_FLOOR`` before calling in, rather than the
math silently flooring them here.
"""

import numpy as np

# Smallest rate admitted at API boundaries; estimation layers clamp to this.
RATE_FLOOR = 1e-10

# Below this value of mu*horizon the expected-purchase formula switches to
# its series limit to avoid 0/0.
_SMALL_MU_H = 1e-8


def _as_arrays(*values):
    arrays = [np.asarray(v, dtype=float) for v in values]
    scalar = all(a.ndim == 0 for a in arrays)
    return arrays, scalar


def _check_rates(lam, mu):
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0.0):
        raise ValueError("purchase rate lam must be positive and finite")
    if np.any(~np.isfinite(mu)) or np.any(mu <= 0.0):
        raise ValueError("dropout hazard mu must be positive and finite")


def _check_summary(x, t_x, T):
    if np.any(x < 0):
        raise ValueError("repeat count x must be nonnegative")
    if np.any(t_x < 0) or np.any(t_x > T):
        raise ValueError("recency must satisfy 0 <= t_x <= T")


def log_likelihood(x, t_x, T, lam, mu):
    """Natural log of the Pareto/NBD likelihood of (x, t_x, T).

    Computed as x*log(lam) - log(lam+mu) + logaddexp of the two decay terms,
    which is exact in the log domain for any positive rates.
    """
    (x, t_x, T, lam, mu), scalar = _as_arrays(x, t_x, T, lam, mu)
    _check_rates(lam, mu)
    _check_summary(x, t_x, T)
    theta = lam + mu
    out = (
        x * np.log(lam)
        - np.log(theta)
        + np.logaddexp(np.log(mu) - theta * t_x, np.log(lam) - theta * T)
    )
    return float(out) if scalar else out


def grad_log_likelihood(x, t_x, T, lam, mu):
    """Exact partial derivatives of ``log_likelihood`` w.r.t. (lam, mu).

    Returns a (d/dlam, d/dmu) pair.  The shared mixture term is evaluated
    with exp(-(lam+mu)*t_x) factored out, so only the bounded quantity
    w = exp(-(lam+mu)*(T - t_x)) appears.
    """
    (x, t_x, T, lam, mu), scalar = _as_arrays(x, t_x, T, lam, mu)
    _check_rates(lam, mu)
    _check_summary(x, t_x, T)
    theta = lam + mu
    w = np.exp(-theta * (T - t_x))
    denom = mu + lam * w
    dlam = x / lam - 1.0 / theta + (-t_x * mu + (1.0 - lam * T) * w) / denom
    dmu = -1.0 / theta + ((1.0 - mu * t_x) - lam * T * w) / denom
    if scalar:
        return float(dlam), float(dmu)
    return dlam, dmu


def p_alive(x, t_x, T, lam, mu):
    """Share of the likelihood mixture carried by its survival-decay term.

    Equals lam*exp(-(lam+mu)*T) / (mu*exp(-(lam+mu)*t_x) + lam*exp(-(lam+mu)*T)),
    used as the alive probability when classifying customers at the end of
    the observation window.  Identities: t_x == T gives exactly
    lam / (lam + mu); the value tends to 1 as mu -> 0.
    """
    (x, t_x, T, lam, mu), scalar = _as_arrays(x, t_x, T, lam, mu)
    _check_rates(lam, mu)
    _check_summary(x, t_x, T)
    w = np.exp(-(lam + mu) * (T - t_x))
    out = lam * w / (mu + lam * w)
    return float(out) if scalar else out


def conditional_p_alive(x, t_x, T, lam, mu):
    """Posterior probability that the customer is still active at T.

    This is the exact Bayes share of the survival mass in the generative
    model, (lam+mu)*exp(-(lam+mu)*T) / (mu*exp(-(lam+mu)*t_x)
    + lam*exp(-(lam+mu)*T)); it equals 1 when t_x == T (no window left in
    which to die).  The Gibbs sampler's alive indicator must be drawn from
    this probability; ``p_alive`` above is the classification score.
    """
    (x, t_x, T, lam, mu), scalar = _as_arrays(x, t_x, T, lam, mu)
    _check_rates(lam, mu)
    _check_summary(x, t_x, T)
    theta = lam + mu
    w = np.exp(-theta * (T - t_x))
    out = theta * w / (mu + lam * w)
    return float(out) if scalar else out


def expected_holdout_purchases(x, t_x, T, lam, mu, horizon):
    """Expected number of purchases over ``horizon`` further weeks.

    p_alive * (lam/mu) * (1 - exp(-mu*horizon)): the alive share times the
    Poisson count expected over an Exp(mu)-censored horizon.  For
    mu*horizon < 1e-8 the series limit p_alive * lam * horizon is used.
    """
    (x, t_x, T, lam, mu, horizon), scalar = _as_arrays(x, t_x, T, lam, mu, horizon)
    if np.any(horizon < 0):
        raise ValueError("horizon must be nonnegative")
    pa = p_alive(x, t_x, T, lam, mu)
    small = mu * horizon < _SMALL_MU_H
    mu_safe = np.where(small, 1.0, mu)
    out = np.where(
        small,
        pa * lam * horizon,
        pa * (lam / mu_safe) * (-np.expm1(-mu_safe * horizon)),
    )
    return float(out) if scalar else out
