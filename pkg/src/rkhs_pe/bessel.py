"""
Modified Bessel function of the second kind, K_nu(x), for real order and
positive argument.

The order is reduced to mu = nu - round(nu) in [-1/2, 1/2].  K_mu and
K_{mu+1} are then obtained from Temme's series for x < 2 and from Steed's
continued fraction (Thompson & Barnett) for x >= 2, and forward recurrence
lifts them to order nu.  Everything is vectorised over ``x`` with numpy.

References: Temme, J. Comput. Phys. 19 (1975); Thompson & Barnett,
J. Comput. Phys. 64 (1986); Numerical Recipes, section 6.7.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["kv", "kve", "recip_gamma_series"]

_EPS = 1e-16
_MAXIT = 100_000
_XSWITCH = 2.0

# Taylor coefficients of 1/Gamma(1+z) about z = 0 (Abramowitz & Stegun 6.1.34,
# shifted by one index).
_RGAMMA = (
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
)


def recip_gamma_series(mu: float) -> tuple[float, float, float, float]:
    """
    Return ``(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))`` for |mu| <= 1/2.

    gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu) and
    gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2, both evaluated from the
    power series so gam1 carries no cancellation as mu -> 0.
    """
    if abs(mu) > 0.5 + 1e-12:
        raise ValueError(f"|mu| must be <= 1/2, got {mu}")
    mu2 = mu * mu
    # odd coefficients feed gam1, even ones gam2; Horner in mu^2 from the top
    gam1 = 0.0
    for c in reversed(_RGAMMA[1::2]):
        gam1 = gam1 * mu2 + c
    gam1 = -gam1
    gam2 = 0.0
    for c in reversed(_RGAMMA[0::2]):
        gam2 = gam2 * mu2 + c
    gampl = gam2 - mu * gam1
    gammi = gam2 + mu * gam1
    return gam1, gam2, gampl, gammi


def _temme(mu: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # K_mu(x), K_{mu+1}(x) for 0 < x < 2.
    gam1, gam2, gampl, gammi = recip_gamma_series(mu)
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -np.log(x2)
    e = mu * d
    with np.errstate(invalid="ignore", divide="ignore"):
        fact2 = np.where(np.abs(e) < _EPS, 1.0, np.sinh(e) / e)
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    total = ff.copy()
    e = np.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = np.ones_like(x)
    dd = x2 * x2
    total1 = p.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _MAXIT):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c = c * dd / i
        p = p / (i - mu)
        q = q / (i + mu)
        step = c * ff
        total = np.where(active, total + step, total)
        step1 = c * (p - i * ff)
        total1 = np.where(active, total1 + step1, total1)
        active &= np.abs(step) >= np.abs(total) * _EPS
        if not active.any():
            break
    else:
        raise ArithmeticError("Temme series for K_nu did not converge")
    return total, total1 * (2.0 / x)


def _steed_scaled(mu: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # exp(x) K_mu(x), exp(x) K_{mu+1}(x) for x >= 2.
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25 - mu * mu
    q = np.full_like(x, a1)
    c = np.full_like(x, a1)
    a = -a1
    s = 1.0 + q * delh
    active = np.ones(x.shape, dtype=bool)
    for i in range(2, _MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = np.where(active, h + delh, h)
        dels = q * delh
        s = np.where(active, s + dels, s)
        active &= np.abs(dels / s) >= _EPS
        if not active.any():
            break
    else:
        raise ArithmeticError("Steed continued fraction for K_nu did not converge")
    h = a1 * h
    kmu = np.sqrt(math.pi / (2.0 * x)) / s
    kmu1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, kmu1


def kve(nu: float, x) -> np.ndarray:
    """
    Exponentially scaled modified Bessel function ``exp(x) * K_nu(x)``.

    Parameters
    ----------
    nu : float
        Real order; K is even in the order so negative values are folded.
    x : array_like
        Strictly positive, finite arguments.

    Returns
    -------
    ndarray of the same shape as ``x`` (0-d for scalar input).
    """
    nu = abs(float(nu))
    if not math.isfinite(nu):
        raise ValueError("order must be finite")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        raise ValueError("K_nu requires finite x > 0")
    nl = int(nu + 0.5)
    mu = nu - nl
    flat = x.ravel()
    kmu = np.empty_like(flat)
    kmu1 = np.empty_like(flat)
    small = flat < _XSWITCH
    if small.any():
        xs = flat[small]
        k0, k1 = _temme(mu, xs)
        scale = np.exp(xs)
        kmu[small] = k0 * scale
        kmu1[small] = k1 * scale
    if (~small).any():
        k0, k1 = _steed_scaled(mu, flat[~small])
        kmu[~small] = k0
        kmu1[~small] = k1
    for i in range(1, nl + 1):
        kmu, kmu1 = kmu1, (mu + i) * (2.0 / flat) * kmu1 + kmu
    return kmu.reshape(x.shape)


def kv(nu: float, x) -> np.ndarray:
    """Modified Bessel function of the second kind, ``K_nu(x)`` for x > 0."""
    x = np.asarray(x, dtype=float)
    return kve(nu, x) * np.exp(-x)
