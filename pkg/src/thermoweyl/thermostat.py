"""Thermostat data F = X + lambda V built from a triple (g, A, theta)."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .circle_bundle import BundleGrid, FrameField, leakage, vertical_fft
from .surface import (BaseMetric, DifferentialM, OneForm, codifferential, dbar_twisted_residual,
                      gauss_curvature)


def lift_one_form(grid: BundleGrid, theta: OneForm) -> np.ndarray:
    """theta(x, v) for the unit vector v = exp(-u)(cos phi, sin phi)."""
    eu = np.exp(-grid.metric.conf)[:, :, None]
    return eu * (theta.cx[:, :, None] * np.cos(grid.phi) + theta.cy[:, :, None] * np.sin(grid.phi))


def lift_differential_complex(grid: BundleGrid, A: DifferentialM) -> np.ndarray:
    """a_m = V(a)/m + i a = A(v, ..., v) = f exp(-m u) exp(i m phi)."""
    m = A.degree
    eu = np.exp(-m * grid.metric.conf)[:, :, None]
    return A.coeff[:, :, None] * eu * np.exp(1j * m * grid.phi)


def lift_differential(grid: BundleGrid, A: DifferentialM) -> np.ndarray:
    """The real function a on SM with pi^*A = (V(a)/m + i a) omega^m.

    For m = 3 this is a(v) = Re A(Jv, Jv, Jv).
    """
    return lift_differential_complex(grid, A).imag


@dataclass(frozen=True, eq=False)
class ThermostatTriple:
    """(g, A, theta) on a bundle grid; lambda = a - V theta."""

    grid: BundleGrid
    A: DifferentialM
    theta: OneForm

    @classmethod
    def geodesic(cls, grid: BundleGrid, degree: int = 3) -> "ThermostatTriple":
        ch = grid.chart
        return cls(grid, DifferentialM.zero(ch, degree), OneForm.zero(ch))

    @property
    def g(self) -> BaseMetric:
        return self.grid.metric

    @property
    def m(self) -> int:
        return self.A.degree

    @cached_property
    def a(self) -> np.ndarray:
        return lift_differential(self.grid, self.A)

    @cached_property
    def Va(self) -> np.ndarray:
        return self.grid.V(self.a)

    @cached_property
    def theta_sm(self) -> np.ndarray:
        return lift_one_form(self.grid, self.theta)

    @cached_property
    def Vtheta(self) -> np.ndarray:
        return self.grid.V(self.theta_sm)

    @cached_property
    def lam(self) -> np.ndarray:
        return self.a - self.Vtheta

    @cached_property
    def norm_A_sq(self) -> np.ndarray:
        """|A|^2_g lifted to SM, from (Va)^2/m^2 + a^2."""
        return self.Va ** 2 / self.m ** 2 + self.a ** 2

    def F(self, f: np.ndarray) -> np.ndarray:
        return build_F(self.grid, self.lam)(f)

    def with_lambda(self, lam: np.ndarray) -> "Thermostat":
        return Thermostat(self.grid, lam)


@dataclass(frozen=True, eq=False)
class Thermostat:
    """A bare thermostat F = X + lam V (lam need not come from a triple)."""

    grid: BundleGrid
    lam: np.ndarray

    @cached_property
    def field(self) -> FrameField:
        return thermostat_field(self.grid, self.lam)

    def F(self, f: np.ndarray) -> np.ndarray:
        return self.grid.apply(self.field, f)


def thermostat_field(grid: BundleGrid, lam: np.ndarray) -> FrameField:
    X = grid.frame_X
    return FrameField(X.cx, X.cy, X.cphi + lam)


def build_F(grid: BundleGrid, lam: np.ndarray):
    """Return the operator f -> Xf + lam Vf."""
    W = thermostat_field(grid, lam)
    return lambda f: grid.apply(W, f)


@dataclass
class ProjectivityReport:
    defect: float
    relative_defect: float
    multipliers: dict[int, float]
    mode_energy: dict[int, float]

    @property
    def projective(self) -> bool:
        return self.relative_defect < 1e-10


def projectivity_multiplier(m: int) -> float:
    """Eigenvalue of (3/2) + (5/3) V^2 + (1/6) V^4 on H_m."""
    return (m - 3) * (m - 1) * (m + 1) * (m + 3) / 6.0


def projectivity_operator(grid: BundleGrid, lam: np.ndarray) -> np.ndarray:
    """(3/2) lam + (5/3) VV lam + (1/6) VVVV lam.

    Applied as its symbol 3/2 - (5/3) k^2 + (1/6) k^4 in one vertical FFT,
    using the same wavenumbers as V, so round-off does not grow like k^4.
    """
    k = grid._k[2]
    out = np.fft.ifft((1.5 - (5.0 / 3.0) * k ** 2 + k ** 4 / 6.0) * np.fft.fft(lam, axis=2), axis=2)
    return out.real if np.isrealobj(lam) else out


def projectivity_defect(grid: BundleGrid, lam: np.ndarray) -> ProjectivityReport:
    if np.iscomplexobj(lam) and np.abs(lam.imag).max() > 0:
        raise ValueError("lambda must be real")
    lam = np.real(lam)
    out = projectivity_operator(grid, lam)
    energy = vertical_fft(lam).energy(grid)
    total = sum(energy.values())
    energy = {m: e for m, e in energy.items() if e > 1e-24 * total}
    mults = {m: projectivity_multiplier(m) for m in energy}
    d = grid.norm(out)
    n = grid.norm(lam)
    return ProjectivityReport(d, d / n if n > 0 else d, mults, energy)


def vanishing_hypothesis(t: ThermostatTriple) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise K_g - delta_g theta + (2 - m)|A|^2_g and the twisted dbar residual."""
    g = t.g
    field = gauss_curvature(g) - codifferential(g, t.theta) + (2 - t.m) * t.A.norm_sq(g)
    return field, dbar_twisted_residual(g, t.A, t.theta)


def a_spectral_leakage(t: ThermostatTriple) -> float:
    return leakage(t.grid, t.a, {-t.m, t.m})


__all__ = [
    "lift_one_form", "lift_differential", "lift_differential_complex", "ThermostatTriple",
    "Thermostat", "thermostat_field", "build_F", "ProjectivityReport", "projectivity_multiplier",
    "projectivity_operator", "projectivity_defect", "vanishing_hypothesis", "a_spectral_leakage",
]
