"""The unit circle bundle SM of a conformally flat torus as a periodic 3-D grid.

A point (x, y, phi) stands for the unit vector v = exp(-u)(cos phi, sin phi)
over (x, y), where g = exp(2u)(dx^2 + dy^2). In these coordinates

    X = exp(-u) (cos phi d_x + sin phi d_y + (-u_x sin phi + u_y cos phi) d_phi)
    H = exp(-u) (-sin phi d_x + cos phi d_y - (u_x cos phi + u_y sin phi) d_phi)
    V = d_phi

and the volume form omega_1 ^ omega_2 ^ psi pulls back to exp(2u) dx dy dphi.
These formulas are fixed by [V, X] = H, [V, H] = -X, [X, H] = K V, which the
test-suite checks on random band-limited fields.

Fields on SM are numpy arrays of shape ``(nx, ny, nphi)``; a base field of
shape ``(nx, ny)`` is lifted by broadcasting (``grid.lift``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .surface import BaseMetric, TorusChart, band_mask, gauss_curvature, spectral_wavenumbers


@dataclass(frozen=True)
class FrameField:
    """Vector field cx d_x + cy d_y + cphi d_phi with broadcastable coefficients."""

    cx: np.ndarray | float
    cy: np.ndarray | float
    cphi: np.ndarray | float

    def __add__(self, other: "FrameField") -> "FrameField":
        return FrameField(self.cx + other.cx, self.cy + other.cy, self.cphi + other.cphi)

    def scale(self, s) -> "FrameField":
        return FrameField(s * self.cx, s * self.cy, s * self.cphi)


@dataclass(frozen=True, eq=False)
class BundleGrid:
    metric: BaseMetric
    nphi: int = 32

    def __post_init__(self):
        if self.nphi < 16 or self.nphi % 2:
            raise ValueError(f"nphi must be even and >= 16, got {self.nphi}")

    @classmethod
    def cube(cls, n: int, conf=None, L: float = 2 * np.pi) -> "BundleGrid":
        """n^3 grid; ``conf`` is a callable (x, y) -> u_g or None for flat."""
        chart = TorusChart(n, n, L, L)
        metric = BaseMetric.flat(chart) if conf is None else BaseMetric.from_function(chart, conf)
        return cls(metric, n)

    @property
    def chart(self) -> TorusChart:
        return self.metric.chart

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.chart.nx, self.chart.ny, self.nphi)

    @cached_property
    def phi(self) -> np.ndarray:
        return (2 * np.pi * np.arange(self.nphi) / self.nphi)[None, None, :]

    @cached_property
    def _k(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ch = self.chart
        return (spectral_wavenumbers(ch.nx, ch.Lx)[:, None, None],
                spectral_wavenumbers(ch.ny, ch.Ly)[None, :, None],
                spectral_wavenumbers(self.nphi, 2 * np.pi)[None, None, :])

    @cached_property
    def weight(self) -> np.ndarray:
        """Volume density exp(2u) of Theta relative to dx dy dphi, shape (nx, ny, 1)."""
        return self.metric.area_density[:, :, None]

    @property
    def cell_volume(self) -> float:
        return self.chart.cell_area * 2 * np.pi / self.nphi

    @cached_property
    def curvature(self) -> np.ndarray:
        return gauss_curvature(self.metric)[:, :, None]

    def lift(self, h: np.ndarray) -> np.ndarray:
        """Pull a base field back to SM (constant along fibres)."""
        return np.broadcast_to(h[:, :, None], self.shape).copy()

    # -- frame ------------------------------------------------------------

    @cached_property
    def frame_X(self) -> FrameField:
        eu = np.exp(-self.metric.conf)[:, :, None]
        ux, uy = (d[:, :, None] for d in self.metric.grad_conf)
        c, s = np.cos(self.phi), np.sin(self.phi)
        return FrameField(eu * c, eu * s, eu * (-ux * s + uy * c))

    @cached_property
    def frame_H(self) -> FrameField:
        eu = np.exp(-self.metric.conf)[:, :, None]
        ux, uy = (d[:, :, None] for d in self.metric.grad_conf)
        c, s = np.cos(self.phi), np.sin(self.phi)
        return FrameField(-eu * s, eu * c, -eu * (ux * c + uy * s))

    frame_V = FrameField(0.0, 0.0, 1.0)

    def deriv(self, f: np.ndarray, axis: int) -> np.ndarray:
        k = self._k[axis]
        out = np.fft.ifft(1j * k * np.fft.fft(f, axis=axis), axis=axis)
        return out.real if np.isrealobj(f) else out

    def apply(self, W: FrameField, f: np.ndarray) -> np.ndarray:
        out = 0.0
        for coeff, axis in ((W.cx, 0), (W.cy, 1), (W.cphi, 2)):
            if np.isscalar(coeff) and coeff == 0:
                continue
            out = out + coeff * self.deriv(f, axis)
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(out), f.shape))

    def apply_transpose(self, W: FrameField, f: np.ndarray) -> np.ndarray:
        """Euclidean transpose of ``apply(W, .)`` on the grid: -sum_i D_i(c_i f)."""
        out = 0.0
        for coeff, axis in ((W.cx, 0), (W.cy, 1), (W.cphi, 2)):
            if np.isscalar(coeff) and coeff == 0:
                continue
            out = out - self.deriv(np.broadcast_to(coeff * f, f.shape), axis)
        return out

    def X(self, f: np.ndarray) -> np.ndarray:
        return self.apply(self.frame_X, f)

    def H(self, f: np.ndarray) -> np.ndarray:
        return self.apply(self.frame_H, f)

    def V(self, f: np.ndarray) -> np.ndarray:
        return self.deriv(f, 2)

    def eta_plus(self, f: np.ndarray) -> np.ndarray:
        return 0.5 * (self.X(f) - 1j * self.H(f))

    def eta_minus(self, f: np.ndarray) -> np.ndarray:
        return 0.5 * (self.X(f) + 1j * self.H(f))

    # -- L^2 ---------------------------------------------------------------

    def _check(self, *fs) -> None:
        for f in fs:
            if np.shape(f) != self.shape:
                raise ValueError(f"field of shape {np.shape(f)} does not live on grid {self.shape}")

    def inner(self, f: np.ndarray, g: np.ndarray):
        self._check(f, g)
        val = np.sum(f * np.conj(g) * self.weight) * self.cell_volume
        return float(val.real) if np.isrealobj(f) and np.isrealobj(g) else complex(val)

    def norm(self, f: np.ndarray) -> float:
        self._check(f)
        return float(np.sqrt(np.sum(np.abs(f) ** 2 * self.weight) * self.cell_volume))

    def integrate(self, f: np.ndarray):
        return self.inner(f, np.ones(self.shape))

    # -- random data --------------------------------------------------------

    def default_band(self) -> int:
        return min(self.chart.nx, self.chart.ny, self.nphi) // 8

    def random_field(self, rng: np.random.Generator, band: int | None = None,
                     modes: list[int] | None = None, amplitude: float = 1.0) -> np.ndarray:
        """Real random field with |k| <= band per axis.

        ``modes`` restricts the vertical Fourier support to the given |m| values.
        """
        band = self.default_band() if band is None else band
        ch = self.chart
        if band > min(ch.nx, ch.ny, self.nphi) // 4:
            raise ValueError(f"band {band} exceeds N/4 for grid {self.shape}")
        mask = (band_mask(ch.nx, band)[:, None, None] & band_mask(ch.ny, band)[None, :, None])
        mphi = np.abs(np.fft.fftfreq(self.nphi, 1.0 / self.nphi))
        if modes is None:
            mask = mask & (mphi <= band)[None, None, :]
        else:
            mask = mask & np.isin(mphi, np.abs(modes))[None, None, :]
        coeff = (rng.standard_normal(self.shape) + 1j * rng.standard_normal(self.shape)) * mask
        f = np.fft.ifftn(coeff).real
        return amplitude * f / np.sqrt(np.mean(f ** 2))


@dataclass
class FieldSM:
    """A sampled function on SM together with the grid it lives on (used for I/O)."""

    grid: BundleGrid
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != self.grid.shape:
            raise ValueError(f"data shape {self.data.shape} does not match grid {self.grid.shape}")


@dataclass
class VerticalSpectrum:
    """Coefficient fields of f = sum_m coeff_m(x, y) exp(i m phi)."""

    modes: dict[int, np.ndarray] = field(default_factory=dict)
    nphi: int = 0

    def energy(self, grid: BundleGrid) -> dict[int, float]:
        w = grid.metric.area_density
        return {m: float(np.sum(np.abs(c) ** 2 * w) * grid.chart.cell_area * 2 * np.pi)
                for m, c in self.modes.items()}

    def restrict(self, keep) -> "VerticalSpectrum":
        return VerticalSpectrum({m: c for m, c in self.modes.items() if m in keep}, self.nphi)


def vertical_fft(f: np.ndarray) -> VerticalSpectrum:
    nphi = f.shape[2]
    c = np.fft.fft(f, axis=2) / nphi
    ms = np.fft.fftfreq(nphi, 1.0 / nphi).astype(int)
    return VerticalSpectrum({int(m): c[:, :, i] for i, m in enumerate(ms)}, nphi)


def vertical_ifft(spec: VerticalSpectrum, real: bool = False) -> np.ndarray:
    first = next(iter(spec.modes.values()))
    c = np.zeros(first.shape + (spec.nphi,), dtype=complex)
    for m, coeff in spec.modes.items():
        c[:, :, m % spec.nphi] += coeff
    f = np.fft.ifft(c, axis=2) * spec.nphi
    return f.real if real else f


def mode_projection(f: np.ndarray, keep) -> np.ndarray:
    """Component of f in the direct sum of H_m for m in ``keep``."""
    spec = vertical_fft(f)
    out = vertical_ifft(spec.restrict(set(keep)))
    return out.real if np.isrealobj(f) else out


def leakage(grid: BundleGrid, f: np.ndarray, allowed) -> float:
    """Relative L^2 norm of f outside the modes in ``allowed``."""
    rest = f - mode_projection(f, allowed)
    den = grid.norm(f)
    return grid.norm(rest) / den if den > 0 else grid.norm(rest)


def divergence_theta(grid: BundleGrid, wX, wH, wV, density: np.ndarray | None = None) -> np.ndarray:
    """Divergence of wX X + wH H + wV V with respect to Theta (or density * Theta)."""
    wX, wH, wV = (np.broadcast_to(w, grid.shape) for w in (wX, wH, wV))
    div = grid.X(wX) + grid.H(wH) + grid.V(wV)
    if density is not None:
        logs = np.log(np.broadcast_to(density, grid.shape))
        div = div + wX * grid.X(logs) + wH * grid.H(logs) + wV * grid.V(logs)
    return div


def commutator_residuals(grid: BundleGrid, fields: list[np.ndarray] | None = None,
                         rng: np.random.Generator | None = None, count: int = 10) -> dict[str, float]:
    """Worst relative residual of the three structure relations over a field battery.

    Each residual is normalised by the H^1-type size sqrt(|f|^2 + |Xf|^2 + |Hf|^2 + |Vf|^2).
    """
    if fields is None:
        rng = np.random.default_rng(0) if rng is None else rng
        fields = [grid.random_field(rng) for _ in range(count)]
    X, H, V = grid.X, grid.H, grid.V
    worst = {"[V,X]-H": 0.0, "[V,H]+X": 0.0, "[X,H]-KV": 0.0}
    for f in fields:
        Xf, Hf, Vf = X(f), H(f), V(f)
        scale = np.sqrt(grid.norm(f) ** 2 + grid.norm(Xf) ** 2 + grid.norm(Hf) ** 2 + grid.norm(Vf) ** 2)
        res = {
            "[V,X]-H": V(Xf) - X(Vf) - Hf,
            "[V,H]+X": V(Hf) - H(Vf) + Xf,
            "[X,H]-KV": X(Hf) - H(Xf) - grid.curvature * Vf,
        }
        for k, r in res.items():
            worst[k] = max(worst[k], grid.norm(r) / scale)
    return worst


__all__ = [
    "FrameField", "BundleGrid", "FieldSM", "VerticalSpectrum", "vertical_fft", "vertical_ifft",
    "mode_projection", "leakage", "divergence_theta", "commutator_residuals",
]
