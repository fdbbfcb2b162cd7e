"""Landau kernel phi(w) = (I - w w^T / |w|^2) |w|^(gamma + 2) on a velocity lattice.

Convolutions against the kernel are evaluated with zero-padded FFTs, which
reproduce the direct lattice sum h^3 sum_{u != v} phi(v - u) f(u) to roundoff.
The coincident node u = v is omitted.  A numba kernel computing the same sum
directly serves as a reference for small grids.
"""
import functools
import logging

import numba
import numpy as np
from scipy import fft

logger = logging.getLogger(__name__)

# Upper-triangular component order of the symmetric 3x3 kernel.
PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def _pair_index(i: int, j: int) -> int:
    return PAIRS.index((min(i, j), max(i, j)))


def kernel_components(n: int, h: float, gamma: float) -> np.ndarray:
    """The six distinct components of phi on the (2n-1)^3 difference lattice."""
    w = (np.arange(2 * n - 1) - (n - 1)) * h
    W = np.meshgrid(w, w, w, indexing="ij")
    r2 = W[0] ** 2 + W[1] ** 2 + W[2] ** 2
    origin = r2 == 0
    r2_safe = np.where(origin, 1.0, r2)
    power = np.where(origin, 0.0, r2_safe ** ((gamma + 2.0) / 2.0))
    phi = np.empty((6,) + r2.shape)
    for k, (i, j) in enumerate(PAIRS):
        phi[k] = ((1.0 if i == j else 0.0) - W[i] * W[j] / r2_safe) * power
    phi[:, origin] = 0.0
    return phi


class LandauKernel:
    """Cached FFT representation of phi for one (n, h, gamma)."""

    def __init__(self, n: int, h: float, gamma: float):
        self.n = n
        self.h = h
        self.gamma = gamma
        self.shape = tuple(fft.next_fast_len(3 * n - 2, real=True) for _ in range(3))
        phi = kernel_components(n, h, gamma)
        self._phi_hat = [fft.rfftn(c, s=self.shape) for c in phi]
        self._weight = h**3
        logger.debug(f"Landau kernel n={n} h={h:.4f} gamma={gamma} fft shape {self.shape}")

    def _forward(self, f: np.ndarray) -> np.ndarray:
        return fft.rfftn(f, s=self.shape)

    def _backward(self, F: np.ndarray) -> np.ndarray:
        n = self.n
        out = fft.irfftn(F, s=self.shape)
        return self._weight * out[n - 1 : 2 * n - 1, n - 1 : 2 * n - 1, n - 1 : 2 * n - 1]

    def matrix(self, f: np.ndarray) -> np.ndarray:
        """(phi * f)_ij as an array of shape (3, 3, n, n, n)."""
        F = self._forward(f)
        out = np.empty((3, 3) + f.shape)
        for k, (i, j) in enumerate(PAIRS):
            out[i, j] = self._backward(self._phi_hat[k] * F)
            if i != j:
                out[j, i] = out[i, j]
        return out

    def vector(self, g: np.ndarray) -> np.ndarray:
        """sum_j (phi_ij * g_j) for a vector field g of shape (3, n, n, n)."""
        G = [self._forward(g[j]) for j in range(3)]
        out = np.empty_like(g)
        for i in range(3):
            acc = sum(self._phi_hat[_pair_index(i, j)] * G[j] for j in range(3))
            out[i] = self._backward(acc)
        return out


@functools.lru_cache(maxsize=16)
def cached_kernel(n: int, h: float, gamma: float) -> LandauKernel:
    return LandauKernel(n, h, gamma)


@numba.njit(parallel=True, cache=True)
def _direct_matrix(nodes, f, gamma, weight):
    count = nodes.shape[0]
    out = np.zeros((count, 3, 3))
    for a in numba.prange(count):
        for b in range(count):
            if a == b:
                continue
            w0 = nodes[a, 0] - nodes[b, 0]
            w1 = nodes[a, 1] - nodes[b, 1]
            w2 = nodes[a, 2] - nodes[b, 2]
            r2 = w0 * w0 + w1 * w1 + w2 * w2
            power = r2 ** ((gamma + 2.0) / 2.0) * f[b] * weight
            w = (w0, w1, w2)
            for i in range(3):
                for j in range(3):
                    delta = 1.0 if i == j else 0.0
                    out[a, i, j] += (delta - w[i] * w[j] / r2) * power
    return out


def direct_matrix(n: int, h: float, gamma: float, f: np.ndarray) -> np.ndarray:
    """Reference lattice sum for (phi * f)_ij, shape (3, 3, n, n, n)."""
    axis = (np.arange(n) - (n - 1) / 2) * h
    V = np.meshgrid(axis, axis, axis, indexing="ij")
    nodes = np.stack([c.ravel() for c in V], axis=1)
    out = _direct_matrix(nodes, np.ascontiguousarray(f.ravel()), float(gamma), h**3)
    return np.moveaxis(out, 0, -1).reshape((3, 3) + f.shape)
