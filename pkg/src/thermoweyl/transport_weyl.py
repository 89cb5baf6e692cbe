"""Beltrami coefficients, the transport quantity u and the Weyl-pair residuals.

A second metric ``ghat`` is seen from SM of the base metric g through

    p = ghat(v, v),  r = ghat(v, Jv),  q = ghat(Jv, Jv),

and everything here is expressed in p, q, r and the frame X, H, V of g.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .circle_bundle import BundleGrid, FrameField, leakage, mode_projection
from .surface import DifferentialM, GeometryError, HatMetric, OneForm
from .thermostat import Thermostat, ThermostatTriple, lift_differential_complex, lift_one_form, \
    thermostat_field

SPD_EPS = 1e-12
MU_MARGIN = 1e-9


def _where(values: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(np.argmin(values), values.shape))


@dataclass(frozen=True, eq=False)
class PQRFields:
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        D = self.det
        bad = np.minimum(np.minimum(self.p, self.q), D)
        if np.any(bad < SPD_EPS):
            idx = _where(bad)
            raise GeometryError(f"pq - r^2 = {D[idx]:.3g} (p = {self.p[idx]:.3g}) at grid point {idx}; "
                                f"need p, q, pq - r^2 >= {SPD_EPS}")

    @cached_property
    def det(self) -> np.ndarray:
        return self.p * self.q - self.r ** 2

    @property
    def volume_factor(self) -> np.ndarray:
        """(pq - r^2)/p: the density of the hat volume form pulled back to SM."""
        return self.det / self.p

    @property
    def integral(self) -> np.ndarray:
        """h = p / (pq - r^2)^(2/3)."""
        return self.p / self.det ** (2.0 / 3.0)


def pqr(grid: BundleGrid, ghat: HatMetric) -> PQRFields:
    """Evaluate ghat on the unit frame (v, Jv) of the base metric."""
    e2 = np.exp(-2 * grid.metric.conf)[:, :, None]
    c, s = np.cos(grid.phi), np.sin(grid.phi)
    g11, g12, g22 = (x[:, :, None] for x in (ghat.g11, ghat.g12, ghat.g22))
    p = e2 * (g11 * c * c + 2 * g12 * c * s + g22 * s * s)
    q = e2 * (g11 * s * s - 2 * g12 * c * s + g22 * c * c)
    r = e2 * ((g22 - g11) * s * c + g12 * (c * c - s * s))
    return PQRFields(p, q, r)


def beltrami_mu(f: PQRFields) -> np.ndarray:
    """mu = ((p - q) + 2ir) / (p + q + 2 sqrt(pq - r^2)); a function of vertical degree -2."""
    return ((f.p - f.q) + 2j * f.r) / (f.p + f.q + 2 * np.sqrt(f.det))


def pq_from_beltrami(mu: np.ndarray, p_plus_q: np.ndarray) -> PQRFields:
    """Invert beltrami_mu given the trace p + q."""
    w = 2 * p_plus_q * mu / (1 + np.abs(mu) ** 2)   # (p - q) + 2ir
    return PQRFields(0.5 * (p_plus_q + w.real), 0.5 * (p_plus_q - w.real), 0.5 * w.imag)


def check_beltrami(mu: np.ndarray) -> None:
    amax = np.abs(mu)
    if np.any(amax >= 1 - MU_MARGIN):
        idx = tuple(int(i) for i in np.unravel_index(np.argmax(amax), amax.shape))
        raise GeometryError(f"|mu| = {amax[idx]:.12f} >= 1 - {MU_MARGIN} at grid point {idx}")


def beltrami_from_base(grid: BundleGrid, mu_base: np.ndarray) -> np.ndarray:
    """mu_{-2} on SM for a base representative: mu_base(x, y) exp(-2i phi)."""
    mu = np.broadcast_to(np.asarray(mu_base, dtype=complex), grid.chart.shape)[:, :, None] \
        * np.exp(-2j * grid.phi)
    check_beltrami(mu)
    return mu


def normalized_pqr(mu: np.ndarray) -> PQRFields:
    """p, q, r of the metric in [ghat] fixed by (p + q)/2 = (1 + |mu|^2)/(1 - |mu|^2)^4.

    With this choice p/(pq - r^2)^(2/3) = |1 + mu|^2.
    """
    check_beltrami(mu)
    s = 1.0 / (1 - np.abs(mu) ** 2) ** 4
    half_diff = (mu + np.conj(mu)).real * s
    r = (1j * (np.conj(mu) - mu)).real * s
    half_sum = (1 + np.abs(mu) ** 2) * s
    return PQRFields(half_sum + half_diff, half_sum - half_diff, r)


def hat_metric_from_beltrami(grid: BundleGrid, mu_base: np.ndarray) -> HatMetric:
    """Chart components of the normalised metric whose Beltrami coefficient is mu_base e^{-2i phi}."""
    mu = np.broadcast_to(np.asarray(mu_base, dtype=complex), grid.chart.shape)
    check_beltrami(mu)
    s = np.exp(2 * grid.metric.conf) / (1 - np.abs(mu) ** 2) ** 4
    tr = 1 + np.abs(mu) ** 2
    return HatMetric(grid.chart, s * (tr + 2 * mu.real), 2 * s * mu.imag, s * (tr - 2 * mu.real))


def transport_u(f: PQRFields) -> np.ndarray:
    """u = (3/2) log(p / (pq - r^2)^(2/3))."""
    return 1.5 * np.log(f.integral)


def integral_residual(grid: BundleGrid, ghat: HatMetric) -> float:
    """|X h| / |h| for h = p/(pq - r^2)^(2/3); zero when g and ghat share geodesics."""
    h = pqr(grid, ghat).integral
    return grid.norm(grid.X(h)) / grid.norm(h)


def pullback_Vhat(grid: BundleGrid, f: PQRFields, field_on_sm: np.ndarray) -> np.ndarray:
    """(Vhat F) o l computed from F o l via l^* Vhat = (p / sqrt(pq - r^2)) V."""
    return f.p / np.sqrt(f.det) * grid.V(field_on_sm)


def weyl_hat_lambda(grid: BundleGrid, f: PQRFields, alpha: OneForm) -> np.ndarray:
    """lambda_hat o l for the Weyl thermostat lambda_hat = -Vhat alpha of (ghat, alpha)."""
    alpha_hat = lift_one_form(grid, alpha) / np.sqrt(f.p)    # alpha evaluated on v / |v|_hat
    return -pullback_Vhat(grid, f, alpha_hat)


def thermostat_match_residual(t: ThermostatTriple | Thermostat, f: PQRFields,
                              hat_lambda: np.ndarray | None = None,
                              alpha: OneForm | None = None, route: str = "closed") -> np.ndarray:
    """sqrt(p) (Vhat lambda_hat o l) - F log((pq - r^2)/p^(3/2)) - V lambda.

    The hat thermostat is given either as ``hat_lambda`` (lambda_hat o l on SM)
    or as the one-form ``alpha`` of a Weyl connection, lambda_hat = -Vhat alpha.
    In the Weyl case Vhat lambda_hat = alpha_hat, so sqrt(p) Vhat lambda_hat o l is
    just alpha(v); ``route="pullback"`` instead differentiates through
    l^* Vhat = (p / sqrt(pq - r^2)) V, which is only spectrally convergent in nphi.
    """
    grid = t.grid
    if hat_lambda is None and alpha is None:
        raise ValueError("need hat_lambda or alpha")
    if route not in ("closed", "pullback"):
        raise ValueError(f"unknown route {route!r}")
    if hat_lambda is None and route == "closed":
        lhs = lift_one_form(grid, alpha)
    else:
        if hat_lambda is None:
            hat_lambda = weyl_hat_lambda(grid, f, alpha)
        lhs = np.sqrt(f.p) * pullback_Vhat(grid, f, hat_lambda)
    F = Thermostat(grid, t.lam).F
    return lhs - F(np.log(f.det / f.p ** 1.5)) - grid.V(t.lam)


def weyl_transport_residual(t: ThermostatTriple, ghat: HatMetric, alpha: OneForm) -> np.ndarray:
    """F u - V a - beta with u = transport_u(ghat) and beta = theta - alpha."""
    f = pqr(t.grid, ghat)
    u = transport_u(f)
    beta = lift_one_form(t.grid, t.theta - alpha)
    return t.F(u) - t.Va - beta


def theta_components(t: ThermostatTriple) -> tuple[np.ndarray, np.ndarray]:
    """(theta_1, a_3-type) helpers: theta_1 = (theta - i V theta)/2."""
    return 0.5 * (t.theta_sm - 1j * t.Vtheta), lift_differential_complex(t.grid, t.A)


def beltrami_pde_residual(t: ThermostatTriple, mu: np.ndarray) -> np.ndarray:
    """Left minus right side of

        eta_- mu - mu eta_+ mu = a3 mu^3 - 2 mu^2 theta_1 - 2 mu conj(theta_1) + conj(a3)

    for mu = mu_{-2} on SM, with a3 = V(a)/3 + i a.
    """
    if t.m != 3:
        raise ValueError(f"the Beltrami equation is stated for cubic differentials, got m = {t.m}")
    grid = t.grid
    theta1, a3 = theta_components(t)
    lhs = grid.eta_minus(mu) - mu * grid.eta_plus(mu)
    rhs = a3 * mu ** 3 - 2 * mu ** 2 * theta1 - 2 * mu * np.conj(theta1) + np.conj(a3)
    return lhs - rhs


def dbar_mu(t: ThermostatTriple, nu: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Twisted del-bar operator nu -> D''nu - mu D'nu on functions of vertical degree -2.

    From d nu = D'nu omega + D''nu omegabar + (conj(kappa) - kappa) nu with
    kappa = i psi - 2 theta_1 omega, one gets D'nu = eta_+ nu - 2 theta_1 nu and
    D''nu = eta_- nu + 2 theta_{-1} nu.
    """
    grid = t.grid
    theta1, _ = theta_components(t)
    d1 = grid.eta_plus(nu) - 2 * theta1 * nu
    d2 = grid.eta_minus(nu) + 2 * np.conj(theta1) * nu
    return d2 - mu * d1


def beltrami_pde_residual_covariant(t: ThermostatTriple, mu: np.ndarray) -> np.ndarray:
    """The same residual grouped as D''mu - mu D'mu - (a3 mu^3 + conj(a3))."""
    _, a3 = theta_components(t)
    return dbar_mu(t, mu, mu) - a3 * mu ** 3 - np.conj(a3)


def beltrami_u(mu: np.ndarray) -> np.ndarray:
    """u = (3/2) log h with h = (mu_{-2} + 1)(mu_2 + 1)."""
    return 1.5 * np.log(((mu + 1) * (np.conj(mu) + 1)).real)


def beltrami_rhs(t: ThermostatTriple, mu: np.ndarray) -> np.ndarray:
    """3 Re(a3 mu^2 - mu_2 a_{-3} - 2 mu_2 theta_{-1} + eta_+ mu)."""
    theta1, a3 = theta_components(t)
    mu2 = np.conj(mu)
    return 3 * (a3 * mu ** 2 - mu2 * np.conj(a3) - 2 * mu2 * np.conj(theta1)
                + t.grid.eta_plus(mu)).real


@dataclass
class BeltramiChainReport:
    h_identity_gap: float
    pde_residual: float
    leakage: float
    closed_form_gap: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def band_leakage(grid: BundleGrid, w: np.ndarray, allowed=(-1, 1)) -> float:
    """|w outside H_allowed| / (|w| + |1|).

    The |1| = sqrt(vol SM) floor keeps the ratio meaningful when w itself is at
    round-off level, as it is for the constant-coefficient solutions.
    """
    out = grid.norm(w - mode_projection(w, set(allowed)))
    return out / (grid.norm(w) + grid.norm(np.ones(grid.shape)))


def beltrami_chain_check(t: ThermostatTriple, mu: np.ndarray) -> BeltramiChainReport:
    """Fu - Va for u = (3/2) log |1 + mu|^2 should lie in H_{-1} + H_1.

    ``closed_form_gap`` compares Fu - Va with 3 Re(...); both it and the
    leakage vanish only when mu solves the Beltrami equation.
    """
    grid = t.grid
    f = normalized_pqr(mu)
    h_gap = float(np.max(np.abs(f.integral - ((mu + 1) * (np.conj(mu) + 1)).real)))
    u = beltrami_u(mu)
    w = t.F(u) - t.Va
    pde = grid.norm(beltrami_pde_residual(t, mu))
    closed = grid.norm(w - beltrami_rhs(t, mu))
    return BeltramiChainReport(h_gap, pde, band_leakage(grid, w), closed)


def weyl_compatible_theta(grid: BundleGrid, mu_base: np.ndarray, A: DifferentialM) -> OneForm:
    """The one-form theta for which mu_base e^{-2i phi} solves the Beltrami equation for (g, A, theta).

    Every term of the equation has vertical degree -3. Writing theta = Re(conj(c) exp(-u) e^{i phi})
    with c = cx + i cy, the theta-terms equal -exp(-u)(mu c + mu^2 conj(c)) e^{-3i phi}, which is
    solved pointwise for c; this needs 0 < |mu_base| < 1 everywhere.
    """
    if A.degree != 3:
        raise ValueError("needs a cubic differential")
    ch = grid.chart
    zero = ThermostatTriple(grid, A, OneForm.zero(ch))
    mu = beltrami_from_base(grid, mu_base)
    R = beltrami_pde_residual(zero, mu) * np.exp(3j * grid.phi)
    R = R.mean(axis=2) * np.exp(grid.metric.conf)          # = -(mu c + mu^2 conj(c))
    m = np.broadcast_to(np.asarray(mu_base, dtype=complex), ch.shape)
    det = np.abs(m) ** 2 * (1 - np.abs(m) ** 2)
    if np.any(det < 1e-12):
        raise GeometryError("mu_base must satisfy 0 < |mu| < 1 to determine theta")
    c = (-R * np.conj(m) + m ** 2 * np.conj(R)) / det
    return OneForm(ch, c.real, c.imag)


def leakage_energy(grid: BundleGrid, w: np.ndarray) -> float:
    return grid.norm(w - mode_projection(w, {-1, 1}))


# -- least squares -------------------------------------------------------------


@dataclass
class LeastSquaresResult:
    u: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


class ConvergenceError(RuntimeError):
    def __init__(self, result: LeastSquaresResult):
        super().__init__(f"CG did not converge after {result.iterations} iterations; "
                         f"last residuals {result.history[-5:]}")
        self.result = result


def _band_projector(grid: BundleGrid, band: int):
    ch = grid.chart
    m = (np.abs(np.fft.fftfreq(ch.nx, 1.0 / ch.nx)) <= band)[:, None, None] \
        & (np.abs(np.fft.fftfreq(ch.ny, 1.0 / ch.ny)) <= band)[None, :, None] \
        & (np.abs(np.fft.fftfreq(grid.nphi, 1.0 / grid.nphi)) <= band)[None, None, :]
    m = m.copy()
    m[0, 0, 0] = False  # constants lie in ker F

    def project(u):
        return np.fft.ifftn(np.fft.fftn(u) * m).real
    return project


def least_squares_transport(t: ThermostatTriple | Thermostat, rhs: np.ndarray,
                           band: int | None = None, rtol: float = 1e-10, maxiter: int = 5000,
                           raise_on_failure: bool = False) -> LeastSquaresResult:
    """Minimise |F u - rhs| (L^2 with respect to Theta) over band-limited, mean-zero real u.

    CG runs on the normal equations P F^T W F P u = P F^T W rhs, where W is the
    quadrature weight and F^T the exact grid transpose of F, so the discrete
    problem is solved consistently. ``band`` defaults to N/4 on every axis.
    """
    grid = t.grid
    band = min(grid.shape) // 4 if band is None else band
    P = _band_projector(grid, band)
    W: FrameField = thermostat_field(grid, t.lam)
    w = np.broadcast_to(grid.weight, grid.shape)
    shape = grid.shape
    n = int(np.prod(shape))

    def F(u):
        return grid.apply(W, u)

    def normal(x):
        u = P(x.reshape(shape))
        return P(grid.apply_transpose(W, w * F(u))).ravel()

    b = P(grid.apply_transpose(W, w * rhs)).ravel()
    op = LinearOperator((n, n), matvec=normal, dtype=float)
    rnorm = grid.norm(rhs)
    history: list[float] = []

    def callback(xk):
        history.append(grid.norm(F(P(xk.reshape(shape))) - rhs) / rnorm)

    sol, info = cg(op, b, rtol=rtol, atol=0.0, maxiter=maxiter, callback=callback)
    u = P(sol.reshape(shape))
    res = grid.norm(F(u) - rhs) / rnorm if rnorm > 0 else grid.norm(F(u))
    out = LeastSquaresResult(u, res, len(history), info == 0, history)
    if info != 0 and raise_on_failure:
        raise ConvergenceError(out)
    return out


__all__ = [
    "PQRFields", "pqr", "beltrami_mu", "pq_from_beltrami", "beltrami_from_base", "normalized_pqr",
    "hat_metric_from_beltrami", "transport_u", "integral_residual", "pullback_Vhat",
    "weyl_hat_lambda", "thermostat_match_residual", "weyl_transport_residual",
    "beltrami_pde_residual", "beltrami_pde_residual_covariant", "dbar_mu", "beltrami_u", "beltrami_rhs", "BeltramiChainReport",
    "beltrami_chain_check", "band_leakage", "weyl_compatible_theta", "LeastSquaresResult", "ConvergenceError", "least_squares_transport",
    "check_beltrami",
]
