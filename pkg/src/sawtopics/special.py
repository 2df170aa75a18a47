"""Log-gamma and polygamma functions on numpy arrays.

Accuracy target: absolute error below 1e-10 (relative, once |lgamma| > 1)
for arguments in [1e-3, 1e6].
"""
import numpy as np

EULER_GAMMA = 0.57721566490153286061

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.91893853320467274178


def _lanczos(x):
    # valid for x >= 0.5
    z = x - 1.0
    a = np.full_like(z, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        a = a + c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(a)


def lgamma(x):
    x = np.asarray(x, dtype=np.float64)
    small = x < 0.5
    # lgamma(x) = lgamma(x + 1) - ln x keeps the Lanczos sum in its good range
    shifted = np.where(small, x + 1.0, x)
    out = _lanczos(shifted)
    return np.where(small, out - np.log(np.where(small, x, 1.0)), out)


def digamma(x):
    x = np.array(x, dtype=np.float64, copy=True)
    acc = np.zeros_like(x)
    low = x < 10.0
    while np.any(low):
        acc = acc - np.where(low, 1.0 / x, 0.0)
        x = np.where(low, x + 1.0, x)
        low = x < 10.0
    inv2 = 1.0 / (x * x)
    series = inv2 * (
        1.0 / 12
        - inv2 * (1.0 / 120
        - inv2 * (1.0 / 252
        - inv2 * (1.0 / 240
        - inv2 * (1.0 / 132
        - inv2 * (691.0 / 32760
        - inv2 * (1.0 / 12)))))))
    return acc + np.log(x) - 0.5 / x - series


def trigamma(x):
    x = np.array(x, dtype=np.float64, copy=True)
    acc = np.zeros_like(x)
    low = x < 10.0
    while np.any(low):
        acc = acc + np.where(low, 1.0 / (x * x), 0.0)
        x = np.where(low, x + 1.0, x)
        low = x < 10.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv + 0.5 * inv2 + inv * inv2 * (
        1.0 / 6
        - inv2 * (1.0 / 30
        - inv2 * (1.0 / 42
        - inv2 * (1.0 / 30
        - inv2 * (5.0 / 66
        - inv2 * (691.0 / 2730
        - inv2 * (7.0 / 6)))))))
    return acc + series
