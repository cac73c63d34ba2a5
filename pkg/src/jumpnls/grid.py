"""Periodic grid on the torus [0, L)^d with its spectral metadata."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    d: int = 1
    N: int = 256
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("only d = 1 or 2 is simulated")
        if self.N < 2 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two")
        if not self.L > 0:
            raise ValueError("box length must be positive")

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.d

    @property
    def volume(self) -> float:
        return self.L ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(self.N) * self.dx

    @cached_property
    def coords(self) -> tuple:
        """Node coordinates, one array of shape ``self.shape`` per axis."""
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers in FFT order, 2 pi / L * (0 .. N/2-1, -N/2 .. -1)."""
        return 2 * np.pi * np.fft.fftfreq(self.N, d=self.dx)

    @cached_property
    def k_squared(self) -> np.ndarray:
        ks = np.meshgrid(*([self.wavenumbers] * self.d), indexing="ij")
        return sum(k ** 2 for k in ks)

    def wrap(self, y):
        """Map displacements into the fundamental cell [-L/2, L/2)."""
        return (np.asarray(y) + self.L / 2) % self.L - self.L / 2

    def distance_from(self, center) -> np.ndarray:
        """Torus distance of every node from ``center`` (length-d)."""
        center = np.broadcast_to(np.asarray(center, dtype=float), (self.d,))
        sq = sum(self.wrap(x - c) ** 2 for x, c in zip(self.coords, center))
        return np.sqrt(sq)

    def spectral_amplitudes(self, u: np.ndarray) -> np.ndarray:
        """Fourier coefficients normalised so that sum |u_hat|^2 equals the L2 mass."""
        return np.fft.fftn(u) * (self.L ** (self.d / 2) / self.N ** self.d)
