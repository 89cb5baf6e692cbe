"""Fields on the periodic model surface T^2 = R^2 / (Lx Z x Ly Z).

Base metrics are conformal to the flat one, g = exp(2u)(dx^2 + dy^2), and every
derivative is taken spectrally. Scalar fields are plain numpy arrays of shape
``(nx, ny)``; the dataclasses below only bundle them with the chart they live on.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GeometryError(ValueError):
    """Input violates a pointwise geometric constraint (SPD, |mu| < 1, ...)."""


def _worst_point(mask_values: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(np.argmin(mask_values), mask_values.shape))


def spectral_wavenumbers(n: int, period: float) -> np.ndarray:
    """Angular wavenumbers for an n-point periodic grid, Nyquist entry zeroed.

    Zeroing the Nyquist mode keeps the first-derivative matrix real and
    skew-symmetric, which the least-squares solver relies on.
    """
    k = np.fft.fftfreq(n, d=1.0 / n) * (2 * np.pi / period)
    k[n // 2] = 0.0
    return k


def band_mask(n: int, band: int) -> np.ndarray:
    k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    return k <= band


@dataclass(frozen=True)
class TorusChart:
    nx: int = 32
    ny: int = 32
    Lx: float = 2 * np.pi
    Ly: float = 2 * np.pi

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if n < 8 or n % 2:
                raise ValueError(f"grid sizes must be even and >= 8, got {n}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("periods must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.Lx * np.arange(self.nx) / self.nx
        y = self.Ly * np.arange(self.ny) / self.ny
        return np.meshgrid(x, y, indexing="ij")

    @cached_property
    def kx(self) -> np.ndarray:
        return spectral_wavenumbers(self.nx, self.Lx)[:, None]

    @cached_property
    def ky(self) -> np.ndarray:
        return spectral_wavenumbers(self.ny, self.Ly)[None, :]

    @property
    def cell_area(self) -> float:
        return self.Lx * self.Ly / (self.nx * self.ny)

    def dx(self, f: np.ndarray) -> np.ndarray:
        return _deriv(f, self.kx, axes=(0, 1))

    def dy(self, f: np.ndarray) -> np.ndarray:
        return _deriv(f, self.ky, axes=(0, 1))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.dx(self.dx(f)) + self.dy(self.dy(f))

    def integrate(self, f: np.ndarray) -> complex | float:
        return f.sum() * self.cell_area

    def default_band(self) -> int:
        return min(self.nx, self.ny) // 8

    def random_field(self, rng: np.random.Generator, band: int | None = None,
                     amplitude: float = 1.0) -> np.ndarray:
        """Real random field whose Fourier support is |k| <= band on each axis."""
        band = self.default_band() if band is None else band
        if band > min(self.nx, self.ny) // 4:
            raise ValueError(f"band {band} exceeds N/4 for grid {self.shape}")
        mask = band_mask(self.nx, band)[:, None] & band_mask(self.ny, band)[None, :]
        coeff = (rng.standard_normal(self.shape) + 1j * rng.standard_normal(self.shape)) * mask
        f = np.fft.ifft2(coeff).real
        return amplitude * f / np.sqrt(np.mean(f ** 2))


def _deriv(f: np.ndarray, k: np.ndarray, axes) -> np.ndarray:
    out = np.fft.ifft2(1j * k * np.fft.fft2(f, axes=axes), axes=axes)
    return out.real if np.isrealobj(f) else out


@dataclass(frozen=True, eq=False)
class BaseMetric:
    """g = exp(2 conf) (dx^2 + dy^2)."""

    chart: TorusChart
    conf: np.ndarray

    def __post_init__(self):
        if self.conf.shape != self.chart.shape:
            raise ValueError(f"conf has shape {self.conf.shape}, chart is {self.chart.shape}")
        if not np.all(np.isfinite(self.conf)):
            raise GeometryError("conformal factor must be finite")

    @classmethod
    def flat(cls, chart: TorusChart) -> "BaseMetric":
        return cls(chart, np.zeros(chart.shape))

    @classmethod
    def from_function(cls, chart: TorusChart, fn) -> "BaseMetric":
        x, y = chart.coords
        return cls(chart, np.broadcast_to(np.asarray(fn(x, y), dtype=float), chart.shape).copy())

    @cached_property
    def area_density(self) -> np.ndarray:
        return np.exp(2 * self.conf)

    @cached_property
    def grad_conf(self) -> tuple[np.ndarray, np.ndarray]:
        return self.chart.dx(self.conf), self.chart.dy(self.conf)

    def shifted(self, c: float) -> "BaseMetric":
        return BaseMetric(self.chart, self.conf + c)


@dataclass(frozen=True, eq=False)
class HatMetric:
    """General SPD metric field g11 dx^2 + 2 g12 dx dy + g22 dy^2."""

    chart: TorusChart
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray

    def __post_init__(self):
        det = self.g11 * self.g22 - self.g12 ** 2
        bad = np.minimum(self.g11, det)
        if np.any(bad <= 0):
            i, j = _worst_point(bad)
            raise GeometryError(
                f"hat metric is not positive definite at grid point ({i}, {j}): "
                f"g11={self.g11[i, j]:.3g}, det={det[i, j]:.3g}")

    @classmethod
    def constant(cls, chart: TorusChart, g11: float, g12: float, g22: float) -> "HatMetric":
        ones = np.ones(chart.shape)
        return cls(chart, g11 * ones, g12 * ones, g22 * ones)

    @classmethod
    def conformal(cls, g: BaseMetric, weight: np.ndarray | float = 1.0) -> "HatMetric":
        """weight * g as a hat metric."""
        s = np.broadcast_to(weight * g.area_density, g.chart.shape)
        return cls(g.chart, s.copy(), np.zeros(g.chart.shape), s.copy())

    def scaled(self, factor: np.ndarray | float) -> "HatMetric":
        return HatMetric(self.chart, factor * self.g11, factor * self.g12, factor * self.g22)


@dataclass(frozen=True, eq=False)
class OneForm:
    """theta = cx dx + cy dy."""

    chart: TorusChart
    cx: np.ndarray
    cy: np.ndarray

    @classmethod
    def zero(cls, chart: TorusChart) -> "OneForm":
        return cls(chart, np.zeros(chart.shape), np.zeros(chart.shape))

    @classmethod
    def exact(cls, chart: TorusChart, h: np.ndarray) -> "OneForm":
        return cls(chart, chart.dx(h), chart.dy(h))

    @classmethod
    def random(cls, chart: TorusChart, rng: np.random.Generator, band: int | None = None,
               amplitude: float = 1.0) -> "OneForm":
        return cls(chart, chart.random_field(rng, band, amplitude),
                   chart.random_field(rng, band, amplitude))

    def __add__(self, other: "OneForm") -> "OneForm":
        return OneForm(self.chart, self.cx + other.cx, self.cy + other.cy)

    def __sub__(self, other: "OneForm") -> "OneForm":
        return OneForm(self.chart, self.cx - other.cx, self.cy - other.cy)

    def __mul__(self, s: float) -> "OneForm":
        return OneForm(self.chart, s * self.cx, s * self.cy)

    __rmul__ = __mul__

    @property
    def complex_coeff(self) -> np.ndarray:
        """cx + i cy, so that theta - i*star(theta) = (cx + i cy) dzbar."""
        return self.cx + 1j * self.cy


@dataclass(frozen=True, eq=False)
class DifferentialM:
    """A = f(z) dz^m in the chart coordinate z = x + iy."""

    chart: TorusChart
    coeff: np.ndarray
    degree: int = 3

    def __post_init__(self):
        if self.degree < 3:
            raise ValueError(f"degree must be >= 3, got {self.degree}")
        if not np.all(np.isfinite(self.coeff)):
            raise GeometryError("differential coefficient must be finite")

    @classmethod
    def constant(cls, chart: TorusChart, value: complex, degree: int = 3) -> "DifferentialM":
        return cls(chart, np.full(chart.shape, value, dtype=complex), degree)

    @classmethod
    def zero(cls, chart: TorusChart, degree: int = 3) -> "DifferentialM":
        return cls.constant(chart, 0.0, degree)

    def norm_sq(self, g: BaseMetric) -> np.ndarray:
        """|A|^2_g = |f|^2 exp(-2 m u_g)."""
        return np.abs(self.coeff) ** 2 * np.exp(-2 * self.degree * g.conf)


def gauss_curvature(g: BaseMetric) -> np.ndarray:
    return -np.exp(-2 * g.conf) * g.chart.laplacian(g.conf)


def codifferential(g: BaseMetric, theta: OneForm) -> np.ndarray:
    ch = g.chart
    return -np.exp(-2 * g.conf) * (ch.dx(theta.cx) + ch.dy(theta.cy))


def hodge_star(g: BaseMetric, theta: OneForm) -> OneForm:
    # conformally invariant on 1-forms, so g only fixes the chart
    return OneForm(theta.chart, -theta.cy, theta.cx)


def hodge_project_divfree(g: BaseMetric, beta: OneForm) -> tuple[OneForm, np.ndarray]:
    """Return (beta + dh, h) with delta_g(beta + dh) = 0 and h of mean zero.

    delta_g d h = -delta_g beta reduces to the flat Poisson problem
    Lap h = -div beta because both sides carry the same factor exp(-2u).
    """
    ch = g.chart
    div_hat = np.fft.fft2(ch.dx(beta.cx) + ch.dy(beta.cy))
    k2 = (np.fft.fftfreq(ch.nx, 1.0 / ch.nx)[:, None] * 2 * np.pi / ch.Lx) ** 2 \
        + (np.fft.fftfreq(ch.ny, 1.0 / ch.ny)[None, :] * 2 * np.pi / ch.Ly) ** 2
    k2[0, 0] = 1.0
    h_hat = div_hat / k2
    h_hat[0, 0] = 0.0
    h = np.fft.ifft2(h_hat).real
    return beta + OneForm.exact(ch, h), h


def dzbar(chart: TorusChart, f: np.ndarray) -> np.ndarray:
    return 0.5 * (chart.dx(f) + 1j * chart.dy(f))


def dbar_twisted_residual(g: BaseMetric, A: DifferentialM, theta: OneForm) -> np.ndarray:
    """Chart coefficient of dbar A - ((m-1)/2)(theta - i star theta) (x) A.

    Both terms are multiples of dzbar (x) dz^m; the returned field is the
    coefficient, which vanishes iff the twisted holomorphicity holds.
    """
    m = A.degree
    return dzbar(A.chart, A.coeff) - 0.5 * (m - 1) * theta.complex_coeff * A.coeff


def wang_residual(g: BaseMetric, A: DifferentialM) -> np.ndarray:
    """K_g + 1 - 2|A|^2_g for a cubic differential."""
    if A.degree != 3:
        raise ValueError(f"Wang's equation needs a cubic differential, got degree {A.degree}")
    return gauss_curvature(g) + 1.0 - 2.0 * A.norm_sq(g)


def inner_product_forms(g: BaseMetric, a: OneForm, b: OneForm) -> float:
    """L^2(M, g) inner product of one-forms; conformally invariant in 2-D."""
    return float(g.chart.integrate(a.cx * b.cx + a.cy * b.cy))


def inner_product_functions(g: BaseMetric, f: np.ndarray, h: np.ndarray) -> float:
    return float(g.chart.integrate(f * h * g.area_density))


__all__ = [
    "GeometryError", "TorusChart", "BaseMetric", "HatMetric", "OneForm", "DifferentialM",
    "gauss_curvature", "codifferential", "hodge_star", "hodge_project_divfree",
    "dbar_twisted_residual", "wang_residual", "dzbar", "band_mask",
    "inner_product_forms", "inner_product_functions",
]
