"""Learnable sinusoidal encoding of relative interaction times."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def default_frequencies(d_time: int) -> np.ndarray:
    """Geometric decade spread ``1 / 10**((i-1) * 4 / d_time)``, i = 1..d_time."""
    i = np.arange(d_time)
    return 1.0 / 10.0 ** (i * 4.0 / d_time)


class TimeEncoder(ad.Module):
    """phi(dt) = sqrt(1/d) [cos(w1 dt), sin(w1 dt), ..., cos(wd dt), sin(wd dt)].

    Output width is ``2 * d_time``.
    """

    def __init__(self, d_time: int, omegas=None):
        if d_time < 1:
            raise ValueError("d_time must be >= 1")
        self.d_time = d_time
        w = default_frequencies(d_time) if omegas is None else np.asarray(omegas, float)
        if w.shape != (d_time,):
            raise ValueError("expected %d frequencies, got shape %s" % (d_time, w.shape))
        self.omegas = ad.Tensor(w[None, :], requires_grad=True, name="omegas")
        # (d, 2d) 0/1 matrices scattering cosines to even and sines to odd columns
        eye = np.eye(d_time)
        self._to_even = np.zeros((d_time, 2 * d_time))
        self._to_odd = np.zeros((d_time, 2 * d_time))
        self._to_even[:, 0::2] = eye
        self._to_odd[:, 1::2] = eye
        self._scale = np.sqrt(1.0 / d_time)

    @property
    def out_dim(self) -> int:
        return 2 * self.d_time

    def __call__(self, dt) -> ad.Tensor:
        return self.encode(dt)

    def encode(self, dt) -> ad.Tensor:
        """Encode a scalar or 1-D array of non-negative gaps into ``(m, 2*d_time)``."""
        dt = np.atleast_1d(np.asarray(dt, dtype=float))
        if dt.ndim != 1:
            raise ValueError("dt must be a scalar or 1-D array")
        if np.any(dt < 0):
            raise ValueError("negative relative time %g" % dt.min())
        angles = ad.matmul(dt[:, None], self.omegas)
        mixed = ad.matmul(ad.cos(angles), self._to_even) + ad.matmul(ad.sin(angles), self._to_odd)
        return ad.scale(mixed, self._scale)


def encode(dt, params: TimeEncoder) -> np.ndarray:
    """Forward-only convenience returning a plain array for a scalar gap."""
    out = params.encode(dt).data
    return out[0] if np.ndim(dt) == 0 else out
