"""L^2 energy identities for thermostats and the integration-by-parts chain behind
the vanishing argument for F u = V a + beta.

Every identity is evaluated as an (lhs, rhs) pair of quadratures; the gap of a
pair is |lhs - rhs| / (|lhs| + |rhs| + 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circle_bundle import BundleGrid
from .surface import OneForm, codifferential, dbar_twisted_residual, gauss_curvature, hodge_project_divfree
from .thermostat import Thermostat, ThermostatTriple, lift_one_form


def gap(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1.0)


@dataclass
class PestovReport:
    lhs: float
    rhs: float
    terms: dict[str, float] = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return gap(self.lhs, self.rhs)


def pestov_identity_gap(t: ThermostatTriple | Thermostat, u: np.ndarray, c: np.ndarray | float = 0.0
                        ) -> PestovReport:
    """Both sides of

        2<H_c u, V F u> = |F u|^2 + |H_c u|^2 - <F c + c^2 + K - H_c lam + lam^2, (V u)^2>

    with H_c = H + c V, for real u, c and the thermostat's lam.
    """
    grid: BundleGrid = t.grid
    lam = t.lam
    c = np.broadcast_to(c, grid.shape)
    F = Thermostat(grid, lam).F
    Vu = grid.V(u)
    Fu = F(u)
    Hcu = grid.H(u) + c * Vu
    curv = F(c) + c ** 2 + grid.curvature - (grid.H(lam) + c * grid.V(lam)) + lam ** 2
    lhs = 2 * grid.inner(Hcu, grid.V(Fu))
    terms = {
        "|Fu|^2": grid.norm(Fu) ** 2,
        "|H_c u|^2": grid.norm(Hcu) ** 2,
        "curvature": grid.inner(curv, Vu ** 2),
    }
    rhs = terms["|Fu|^2"] + terms["|H_c u|^2"] - terms["curvature"]
    return PestovReport(lhs, rhs, terms)


def special_c(t: ThermostatTriple) -> np.ndarray:
    """c = theta + V(a)/m."""
    return t.theta_sm + t.Va / t.m


def curvature_term_simplification(t: ThermostatTriple) -> tuple[np.ndarray, np.ndarray, float]:
    """Compare F c + c^2 + K - H_c lam + lam^2 with K - delta theta + (1 - m)|A|^2 at c = theta + Va/m.

    The difference of the two sides is exactly (1/m)(X V a - m H a - (m-1)(theta V a - m a V theta)),
    so the simplification holds precisely when the twisted dbar equation does.
    Returns (lhs, rhs, sup-norm gap).
    """
    grid = t.grid
    c = special_c(t)
    lam = t.lam
    F = Thermostat(grid, lam).F
    lhs = F(c) + c ** 2 + grid.curvature - (grid.H(lam) + c * grid.V(lam)) + lam ** 2
    base = gauss_curvature(t.g) - codifferential(t.g, t.theta)
    rhs = grid.lift(base) + (1 - t.m) * t.norm_A_sq
    return lhs, rhs, float(np.max(np.abs(lhs - rhs)))


def twisted_holo_field(t: ThermostatTriple) -> np.ndarray:
    """X V a - m H a - (m - 1)(theta V a - m a V theta)."""
    grid, m = t.grid, t.m
    return grid.X(t.Va) - m * grid.H(t.a) - (m - 1) * (t.theta_sm * t.Va - m * t.a * t.Vtheta)


def twisted_holo_residual(t: ThermostatTriple) -> tuple[float, float]:
    """(|SM-side residual|_{L^2(SM)}, |chart dbar residual|_{L^2(M, dx dy)})."""
    sm = t.grid.norm(twisted_holo_field(t))
    chart = dbar_twisted_residual(t.g, t.A, t.theta)
    ch = t.g.chart
    return sm, float(np.sqrt(ch.integrate(np.abs(chart) ** 2)))


@dataclass
class ChainReport:
    pairs: dict[str, tuple[float, float]]
    transport_residual: float

    @property
    def gaps(self) -> dict[str, float]:
        return {k: gap(*v) for k, v in self.pairs.items()}

    @property
    def max_gap(self) -> float:
        return max(self.gaps.values())


def energy_chain_check(t: ThermostatTriple, u: np.ndarray, beta: OneForm,
                        project: bool = True) -> ChainReport:
    """Evaluate each step of the energy argument for F u = V a + beta.

    If ``project`` is set, beta is first replaced by its divergence-free part
    beta + dh and u by u + h, which keeps F u - V a - beta unchanged.
    Every gap is O(transport_residual) when the hypotheses of the twisted dbar
    equation hold; transport_residual is |Fu - Va - beta| / (|Va + beta| + |1|).
    """
    grid, m = t.grid, t.m
    if project:
        beta, h = hodge_project_divfree(t.g, beta)
        u = u + grid.lift(h)
    F = t.F
    a, Va, th, Vth, lam = t.a, t.Va, t.theta_sm, t.Vtheta, t.lam
    b = lift_one_form(grid, beta)
    Vb = grid.V(b)
    c = special_c(t)
    Vu = grid.V(u)
    Hu = grid.H(u)
    Xu = grid.X(u)
    Fu = F(u)
    Hcu = Hu + c * Vu
    ip, nrm2 = grid.inner, (lambda f: grid.norm(f) ** 2)

    pairs: dict[str, tuple[float, float]] = {}
    pairs["VFu = -m^2 a + V beta"] = (grid.norm(grid.V(Fu) - (-m * m * a + Vb)), 0.0)
    pairs["<H_c u,-m^2 a> split"] = (2 * ip(Hcu, -m * m * a),
                                     -2 * m * m * ip(Hu, a) - 2 * m * m * ip(c * Vu, a))
    pairs["H skew"] = (-2 * m * m * ip(Hu, a), 2 * m * m * ip(u, grid.H(a)))
    pairs["twisted dbar step"] = (2 * m * m * ip(u, grid.H(a)),
                                  -2 * m * m * ip(Xu, Va / m)
                                  - 2 * m * (m - 1) * ip(u, th * Va - m * a * Vth))
    pairs["a energy"] = (2 * ip(Hcu, -m * m * a), -2 * m ** 3 * nrm2(a))
    pairs["<H_c u,V beta> split"] = (2 * ip(Hcu, Vb), -2 * ip(u, grid.H(Vb)) + 2 * ip(c * Vu, Vb))
    pairs["divergence-free step"] = (-2 * ip(u, grid.H(Vb)), -2 * ip(Xu, b))
    step = -2 * nrm2(b) + 2 * ip(lam * Vu, b) + 2 * ip(c * Vu, Vb)
    pairs["transport step"] = (2 * ip(Hcu, Vb), step)
    pairs["theta cancellation"] = (step, -2 * nrm2(b) + 2 * ip(a * Vu, b) + 2 * ip(Va * Vu / m, Vb))

    field_ = grid.lift(gauss_curvature(t.g) - codifferential(t.g, t.theta)) + (2 - m) * t.norm_A_sq
    rhs = nrm2(Fu) + nrm2(Hcu) - ip(field_, Vu ** 2)
    pairs["simplified identity"] = (2 * ip(Hcu, grid.V(Fu)) - nrm2(np.sqrt(t.norm_A_sq) * Vu), rhs)
    pairs["final display"] = (-2 * m ** 3 * nrm2(a) - nrm2(b - a * Vu) - nrm2(Vb - Va * Vu / m), rhs)

    pairs["|beta|^2 = |V beta|^2"] = (nrm2(b), nrm2(Vb))
    pairs["<beta, Va> = 0"] = (ip(b, Va), 0.0)
    pairs["V(theta V beta - V theta beta) = 0"] = (grid.norm(grid.V(th * Vb - Vth * b)), 0.0)
    pairs["X beta + H V beta = 0"] = (grid.norm(grid.X(b) + grid.H(Vb)), 0.0)

    rhs_t = Va + b
    tau = grid.norm(Fu - rhs_t) / (grid.norm(rhs_t) + grid.norm(np.ones(grid.shape)))
    return ChainReport(pairs, tau)


def beta_isometry_gap(grid: BundleGrid, beta: OneForm) -> float:
    b = lift_one_form(grid, beta)
    return gap(grid.norm(b) ** 2, grid.norm(grid.V(b)) ** 2)


__all__ = [
    "gap", "PestovReport", "pestov_identity_gap", "special_c", "curvature_term_simplification",
    "twisted_holo_field", "twisted_holo_residual", "ChainReport", "energy_chain_check", "beta_isometry_gap",
]
