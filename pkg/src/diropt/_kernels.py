"""Elementwise thresholding kernels.

Every kernel exists twice: a vectorized numpy version and a numba ``@njit``
loop. The module-level names point at the numba versions unless numba is
missing or ``DIROPT_DISABLE_NUMBA`` is set to a truthy value before import.
"""

import math
import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("DIROPT_DISABLE_NUMBA", "").lower() not in (
    "1",
    "true",
    "yes",
    "on",
)

_CBRT54_4 = 54.0 ** (1.0 / 3.0) / 4.0


# ---------------------------------------------------------------- numpy path


def soft_threshold_np(z, tau):
    return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)


def hard_threshold_np(z, tau):
    # tie |z| == sqrt(2 tau) goes to zero
    return np.where(np.abs(z) > math.sqrt(2.0 * tau), z, 0.0)


def half_threshold_np(z, tau):
    lam = 2.0 * tau
    az = np.abs(z)
    keep = az > _CBRT54_4 * lam ** (2.0 / 3.0)
    out = np.zeros_like(z, dtype=np.float64)
    if np.any(keep):
        zk = z[keep]
        phi = np.arccos((lam / 8.0) * (np.abs(zk) / 3.0) ** -1.5)
        out[keep] = (2.0 / 3.0) * zk * (1.0 + np.cos(2.0 * np.pi / 3.0 - (2.0 / 3.0) * phi))
    return out


def two_thirds_threshold_np(z, tau):
    lam = 2.0 * tau
    az = np.abs(z)
    keep = az > (2.0 / 3.0) * (3.0 * lam**3) ** 0.25
    out = np.zeros_like(z, dtype=np.float64)
    if np.any(keep):
        zk = z[keep]
        azk = np.abs(zk)
        phi = np.arccosh(27.0 * zk**2 / (16.0 * lam**1.5))
        a = (2.0 / math.sqrt(3.0)) * lam**0.25 * np.sqrt(np.cosh(phi / 3.0))
        out[keep] = np.sign(zk) * ((a + np.sqrt(2.0 * azk / a - a**2)) / 2.0) ** 3
    return out


# ---------------------------------------------------------------- numba path

if _HAVE_NUMBA:
    _njit = numba.njit(cache=True, nogil=True)

    @_njit
    def soft_threshold_nb(z, tau):
        out = np.empty_like(z)
        for k in range(z.size):
            v = z[k]
            if v > tau:
                out[k] = v - tau
            elif v < -tau:
                out[k] = v + tau
            else:
                out[k] = 0.0
        return out

    @_njit
    def hard_threshold_nb(z, tau):
        out = np.empty_like(z)
        thr = math.sqrt(2.0 * tau)
        for k in range(z.size):
            v = z[k]
            out[k] = v if abs(v) > thr else 0.0
        return out

    @_njit
    def half_threshold_nb(z, tau):
        out = np.empty_like(z)
        lam = 2.0 * tau
        thr = _CBRT54_4 * lam ** (2.0 / 3.0)
        for k in range(z.size):
            v = z[k]
            av = abs(v)
            if av > thr:
                s = 3.0 / av
                phi = math.acos((lam / 8.0) * s * math.sqrt(s))
                out[k] = (2.0 / 3.0) * v * (1.0 + math.cos(2.0 * math.pi / 3.0 - (2.0 / 3.0) * phi))
            else:
                out[k] = 0.0
        return out

    @_njit
    def two_thirds_threshold_nb(z, tau):
        out = np.empty_like(z)
        lam = 2.0 * tau
        thr = (2.0 / 3.0) * (3.0 * lam**3) ** 0.25
        inv = 27.0 / (16.0 * lam**1.5)
        pre = (2.0 / math.sqrt(3.0)) * lam**0.25
        for k in range(z.size):
            v = z[k]
            av = abs(v)
            if av > thr:
                phi = math.acosh(v * v * inv)
                a = pre * math.sqrt(math.cosh(phi / 3.0))
                mag = ((a + math.sqrt(2.0 * av / a - a * a)) / 2.0) ** 3
                out[k] = mag if v > 0 else -mag
            else:
                out[k] = 0.0
        return out


def _pick(name):
    if USE_NUMBA:
        jitted = globals()[name + "_nb"]

        def call(z, tau):
            arr = np.asarray(z, dtype=np.float64)
            flat = np.ascontiguousarray(arr.reshape(-1))
            return jitted(flat, float(tau)).reshape(arr.shape)

        call.__name__ = name
        return call
    fallback = globals()[name + "_np"]

    def call(z, tau):
        return fallback(np.asarray(z, dtype=np.float64), float(tau))

    call.__name__ = name
    return call


soft_threshold = _pick("soft_threshold")
hard_threshold = _pick("hard_threshold")
half_threshold = _pick("half_threshold")
two_thirds_threshold = _pick("two_thirds_threshold")

__all__ = [
    "USE_NUMBA",
    "soft_threshold",
    "hard_threshold",
    "half_threshold",
    "two_thirds_threshold",
]
