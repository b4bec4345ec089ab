"""Central finite-difference verification of hand-derived gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gvf.numerics.layers import LayerParams


@dataclass
class GradCheckReport:
    per_param: dict  # name -> max relative error
    tol: float

    @property
    def max_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def flagged(self) -> list:
        return sorted(n for n, e in self.per_param.items() if e > self.tol)

    @property
    def passed(self) -> bool:
        return not self.flagged

    def __str__(self) -> str:
        lines = [f"grad check (tol {self.tol:g}):"]
        for name in sorted(self.per_param):
            err = self.per_param[name]
            mark = "ok " if err <= self.tol else "BAD"
            lines.append(f"  [{mark}] {name:30s} max rel err {err:.3e}")
        return "\n".join(lines)


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-6)


def grad_check(fn, params: list[LayerParams], h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``fn()`` must be deterministic, return a scalar loss, and (re)compute the
    analytic gradients into each param's accumulators as a side effect,
    starting from zeroed accumulators.
    """
    for p in params:
        p.zero_grad()
    loss = float(fn())
    if not np.isfinite(loss):
        raise ValueError(f"grad_check: non-finite loss {loss}")
    analytic = {p.name: (p.gw.copy(), p.gb.copy()) for p in params}

    per_param = {}
    for p in params:
        worst = 0.0
        for arr, ga in ((p.w, analytic[p.name][0]), (p.b, analytic[p.name][1])):
            flat = arr.reshape(-1)
            gflat = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                for q in params:
                    q.zero_grad()
                lp = float(fn())
                flat[i] = orig - h
                for q in params:
                    q.zero_grad()
                lm = float(fn())
                flat[i] = orig
                if not (np.isfinite(lp) and np.isfinite(lm)):
                    raise ValueError(f"grad_check: non-finite loss while perturbing {p.name}")
                num = (lp - lm) / (2 * h)
                worst = max(worst, _rel_err(gflat[i], num))
        per_param[p.name] = worst

    # restore analytic gradients so callers can inspect them
    for p in params:
        gw, gb = analytic[p.name]
        p.gw[...] = gw
        p.gb[...] = gb
    return GradCheckReport(per_param, tol)
