"""Registry of verification ops that scenarios can call.

An op receives a :class:`Context` (grid, members, rng) and its parameters and
returns a list of :class:`Outcome` values; the runner turns each outcome into a
record and compares it with the op's tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import pestov as ps
from . import transport_weyl as tw
from .circle_bundle import BundleGrid, commutator_residuals, mode_projection
from .surface import (DifferentialM, HatMetric, OneForm, codifferential, gauss_curvature,
                      hodge_project_divfree, wang_residual)
from .thermostat import (ThermostatTriple, lift_one_form, projectivity_defect, projectivity_multiplier,
                         projectivity_operator, vanishing_hypothesis)


@dataclass
class Outcome:
    label: str
    value: float
    details: dict = field(default_factory=dict)


@dataclass
class Context:
    grid: BundleGrid
    triple: ThermostatTriple
    members: dict
    rng: np.random.Generator

    def need(self, name: str):
        if self.members.get(name) is None:
            raise KeyError(f"op needs member {name!r}, which the scenario does not define")
        return self.members[name]

    def rms(self, f: np.ndarray) -> float:
        return self.grid.norm(f) / self.grid.norm(np.ones(self.grid.shape))


OpFn = Callable[[Context, dict], list[Outcome]]
REGISTRY: dict[str, OpFn] = {}


def op(name: str):
    def deco(fn: OpFn) -> OpFn:
        REGISTRY[name] = fn
        return fn
    return deco


@op("commutators")
def _commutators(ctx: Context, p: dict) -> list[Outcome]:
    res = commutator_residuals(ctx.grid, rng=ctx.rng, count=int(p.get("count", 10)))
    return [Outcome(k, float(v)) for k, v in res.items()]


@op("skew_adjoint")
def _skew(ctx: Context, p: dict) -> list[Outcome]:
    g = ctx.grid
    out = []
    for name in ("X", "H", "V"):
        W = getattr(g, name)
        worst = 0.0
        for _ in range(int(p.get("count", 3))):
            f, h = g.random_field(ctx.rng), g.random_field(ctx.rng)
            a, b = g.inner(W(f), h), g.inner(f, W(h))
            worst = max(worst, abs(a + b) / (abs(a) + abs(b) + 1e-300))
        out.append(Outcome(name, worst))
    return out


@op("projectivity")
def _projectivity(ctx: Context, p: dict) -> list[Outcome]:
    g = ctx.grid
    if "mode" in p:
        m = int(p["mode"])
        f = np.cos(m * g.phi) * np.ones(g.shape)
        Lf = projectivity_operator(g, f)
        expect = float(p.get("expect", projectivity_multiplier(m)))
        return [Outcome(f"mode {m}", float(np.max(np.abs(Lf - expect * f))), {"multiplier": expect})]
    lam = ctx.triple.lam
    if p.get("contaminate"):
        lam = lam + float(p["contaminate"]) * np.cos(2 * g.phi) * np.ones(g.shape)
    rep = projectivity_defect(g, lam)
    return [Outcome("relative defect", rep.relative_defect,
                    {"modes": sorted(rep.mode_energy)})]


def _lam_choice(ctx: Context, kind: str) -> np.ndarray:
    g, t = ctx.grid, ctx.triple
    if kind == "zero":
        return np.zeros(g.shape)
    if kind == "triple":
        return t.lam
    if kind == "random":
        return g.random_field(ctx.rng, modes=[1, 3])
    raise ValueError(f"unknown lambda choice {kind!r}")


def _c_choice(ctx: Context, kind: str) -> np.ndarray | float:
    if kind == "zero":
        return 0.0
    if kind == "special":
        return ps.special_c(ctx.triple)
    if kind == "random":
        return ctx.grid.random_field(ctx.rng)
    raise ValueError(f"unknown c choice {kind!r}")


@op("pestov")
def _pestov(ctx: Context, p: dict) -> list[Outcome]:
    """One outcome per draw: the worst gap over all (lambda, c) choices."""
    lams = p.get("lam", ["zero", "triple", "random"])
    cs = p.get("c", ["zero", "special", "random"])
    out = []
    for d in range(int(p.get("draws", 20))):
        u = ctx.grid.random_field(ctx.rng)
        worst, where = 0.0, None
        for lk in lams:
            lam = _lam_choice(ctx, lk)
            t = ctx.triple.with_lambda(lam)
            for ck in cs:
                gap = ps.pestov_identity_gap(t, u, _c_choice(ctx, ck)).gap
                if gap >= worst:
                    worst, where = gap, f"{lk}/{ck}"
        out.append(Outcome(f"draw {d}", worst, {"worst": where}))
    return out


@op("curvature_simplification")
def _curv(ctx: Context, p: dict) -> list[Outcome]:
    _, _, gap = ps.curvature_term_simplification(ctx.triple)
    return [Outcome("sup gap", gap)]


@op("twisted_holo")
def _twisted_holo(ctx: Context, p: dict) -> list[Outcome]:
    sm, chart = ps.twisted_holo_residual(ctx.triple)
    return [Outcome("SM residual", sm), Outcome("chart residual", chart)]


def twisted_holo_sweep(t: ThermostatTriple, eps: np.ndarray, direction: OneForm | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Both twisted-holomorphy residuals along theta + eps * direction (default: direction = theta)."""
    d = t.theta if direction is None else direction
    sm, ch = [], []
    for e in eps:
        s, c = ps.twisted_holo_residual(ThermostatTriple(t.grid, t.A, t.theta + e * d))
        sm.append(s)
        ch.append(c)
    return np.array(sm), np.array(ch)


def loglog_slope(eps: np.ndarray, res: np.ndarray) -> float:
    keep = (np.abs(eps) > 0) & (res > 0)
    return float(np.polyfit(np.log(np.abs(eps[keep])), np.log(res[keep]), 1)[0])


@op("twisted_holo_sweep")
def _twisted_holo_sweep(ctx: Context, p: dict) -> list[Outcome]:
    amp = float(p.get("amplitude", 0.1))
    eps = np.linspace(-amp, amp, int(p.get("points", 21)))
    sm, ch = twisted_holo_sweep(ctx.triple, eps)
    zero_gap = abs(float(eps[np.argmin(sm)] - eps[np.argmin(ch)]))
    s1, s2 = loglog_slope(eps, sm), loglog_slope(eps, ch)
    return [Outcome("zero location gap", zero_gap),
            Outcome("slope mismatch", abs(s1 - s2) / max(abs(s1), abs(s2)), {"slopes": [s1, s2]})]


@op("gauss_bonnet")
def _gb(ctx: Context, p: dict) -> list[Outcome]:
    g = ctx.grid.metric
    total = g.chart.integrate(gauss_curvature(g) * g.area_density)
    return [Outcome("integral of K", abs(float(total)))]


@op("wang")
def _wang(ctx: Context, p: dict) -> list[Outcome]:
    return [Outcome("sup residual", float(np.max(np.abs(wang_residual(ctx.grid.metric, ctx.triple.A)))))]


@op("vanishing_hypothesis")
def _vanishing(ctx: Context, p: dict) -> list[Outcome]:
    fld, dbar = vanishing_hypothesis(ctx.triple)
    return [Outcome("max curvature field", float(np.max(fld))),
            Outcome("dbar residual", float(np.max(np.abs(dbar))))]


@op("codifferential_lift")
def _codiff(ctx: Context, p: dict) -> list[Outcome]:
    g, t = ctx.grid, ctx.triple
    th = lift_one_form(g, t.theta)
    sm = mode_projection(-(g.X(th) + g.H(g.V(th))), {0})
    base = g.lift(codifferential(g.metric, t.theta))
    return [Outcome("relative gap", g.norm(sm - base) / max(g.norm(base), 1e-300))]


@op("hodge_projection")
def _hodge(ctx: Context, p: dict) -> list[Outcome]:
    g = ctx.grid.metric
    worst = 0.0
    for _ in range(int(p.get("draws", 5))):
        beta = OneForm.random(g.chart, ctx.rng)
        proj, _ = hodge_project_divfree(g, beta)
        worst = max(worst, float(np.max(np.abs(codifferential(g, proj)))))
    return [Outcome("sup |delta(beta + dh)|", worst)]


@op("beta_isometry")
def _iso(ctx: Context, p: dict) -> list[Outcome]:
    worst = max(ps.beta_isometry_gap(ctx.grid, OneForm.random(ctx.grid.chart, ctx.rng))
                for _ in range(int(p.get("draws", 5))))
    return [Outcome("gap", worst)]


@op("integral_residual")
def _integral(ctx: Context, p: dict) -> list[Outcome]:
    ghat: HatMetric = ctx.need("ghat")
    if p.get("scale"):
        ghat = ghat.scaled(float(p["scale"]) ** 2)
    return [Outcome("relative", tw.integral_residual(ctx.grid, ghat))]


@op("weyl_transport")
def _weyl(ctx: Context, p: dict) -> list[Outcome]:
    alpha = ctx.members.get("alpha") or OneForm.zero(ctx.grid.chart)
    r = tw.weyl_transport_residual(ctx.triple, ctx.need("ghat"), alpha)
    return [Outcome("rms residual", ctx.rms(r))]


@op("thermostat_match")
def _match(ctx: Context, p: dict) -> list[Outcome]:
    f = tw.pqr(ctx.grid, ctx.need("ghat"))
    alpha = ctx.members.get("alpha") or OneForm.zero(ctx.grid.chart)
    r = tw.thermostat_match_residual(ctx.triple, f, alpha=alpha, route=p.get("route", "closed"))
    return [Outcome("rms residual", ctx.rms(r))]


def _mu(ctx: Context) -> np.ndarray:
    return tw.beltrami_from_base(ctx.grid, ctx.need("mu"))


@op("beltrami_pde")
def _beltrami(ctx: Context, p: dict) -> list[Outcome]:
    mu = _mu(ctx)
    r1 = tw.beltrami_pde_residual(ctx.triple, mu)
    r2 = tw.beltrami_pde_residual_covariant(ctx.triple, mu)
    return [Outcome("rms residual", ctx.rms(r1)), Outcome("grouping gap", ctx.rms(r1 - r2))]


@op("beltrami_chain")
def _beltrami_chain(ctx: Context, p: dict) -> list[Outcome]:
    rep = tw.beltrami_chain_check(ctx.triple, _mu(ctx))
    scale = ctx.grid.norm(np.ones(ctx.grid.shape))
    return [Outcome("h identity", rep.h_identity_gap), Outcome("pde residual", rep.pde_residual / scale),
            Outcome("leakage", rep.leakage, {"closed_form_gap": rep.closed_form_gap / scale})]


@op("least_squares")
def _lsq(ctx: Context, p: dict) -> list[Outcome]:
    g, t = ctx.grid, ctx.triple
    kind = p.get("rhs", "Va")
    if kind == "Va":
        rhs = t.Va
    elif kind == "F_random":
        rhs = t.F(g.random_field(ctx.rng))
    elif kind == "harmonic":
        rhs = lift_one_form(g, OneForm(g.chart, np.ones(g.chart.shape), np.zeros(g.chart.shape)))
    else:
        raise ValueError(f"unknown rhs {kind!r}")
    res = tw.least_squares_transport(t, rhs, band=p.get("band"), rtol=float(p.get("rtol", 1e-10)),
                                     maxiter=int(p.get("maxiter", 5000)))
    return [Outcome("relative residual", res.residual,
                    {"iterations": res.iterations, "converged": res.converged})]


@op("energy_chain")
def _chain(ctx: Context, p: dict) -> list[Outcome]:
    g, t = ctx.grid, ctx.triple
    h = ctx.members.get("h")
    if h is None:
        h = np.zeros(g.chart.shape)
    rep = ps.energy_chain_check(t, g.lift(h), OneForm.exact(g.chart, h))
    return [Outcome("max gap", rep.max_gap, {"transport residual": rep.transport_residual})]


__all__ = ["REGISTRY", "Outcome", "Context", "op", "twisted_holo_sweep", "loglog_slope"]
