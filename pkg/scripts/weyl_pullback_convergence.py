"""Closed-form versus pullback evaluation of the hat-thermostat term for a Weyl pair."""
import argparse

import numpy as np

from thermoweyl.circle_bundle import BundleGrid
from thermoweyl.surface import BaseMetric, HatMetric, OneForm, TorusChart
from thermoweyl.thermostat import ThermostatTriple
from thermoweyl import transport_weyl as tw


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--nphi", default="16,32,64,128")
    ap.add_argument("--amp", type=float, default=0.4, help="amplitude of the conformal factor of ghat")
    args = ap.parse_args()

    ch = TorusChart(args.n, args.n)
    x, y = ch.coords
    w = 0.5 * args.amp * np.sin(x + y)
    g = BaseMetric.from_function(ch, lambda x, y: 0.1 * np.cos(x))
    theta = OneForm.exact(ch, g.conf)
    ghat = HatMetric(ch, 2 * np.exp(2 * w), 0.3 * np.exp(2 * w), np.exp(2 * w))
    alpha = OneForm.exact(ch, w)

    print(f"{'nphi':>5} {'closed':>10} {'pullback':>10}")
    for nphi in map(int, args.nphi.split(",")):
        grid = BundleGrid(g, nphi)
        t = ThermostatTriple.geodesic(grid)
        t = ThermostatTriple(grid, t.A, theta)
        f = tw.pqr(grid, ghat)
        s = grid.norm(np.ones(grid.shape))
        row = [grid.norm(tw.thermostat_match_residual(t, f, alpha=alpha, route=r)) / s
               for r in ("closed", "pullback")]
        print(f"{nphi:>5} {row[0]:>10.2e} {row[1]:>10.2e}")


if __name__ == "__main__":
    main()
