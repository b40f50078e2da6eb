"""Independent re-verification of solver invariants from a trace and its run metadata.

Nothing here trusts the solver's own flags: every check recomputes its expectation from the
recorded numbers (values, epsilons, gradient norms, line-search counts) and the run parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .objective import LipschitzModel
from .regularizer import LipschitzParts
from .solver import TRACE_FIELDS, U_ACCEPTED, V_FALLBACK, SolverParams

SURROGATE_SLACK = 1e-9


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + (f": {self.detail}" if self.detail else "")


def lipschitz_from_dict(d) -> LipschitzModel:
    parts = [LipschitzParts(int(d[k]["positions"]), float(d[k]["jac_norm"]), float(d[k]["jac_lipschitz"]))
             for k in ("R", "Q")]
    return LipschitzModel(float(d["fidelity"]), *parts)


def line_search_bound(L: float, params: SolverParams) -> int:
    """Largest backtracking count needed before the safeguard step is <= 1/(delta + L/2)."""
    ratio = 1.0 / ((params.delta + L / 2.0) * max(params.bar_alpha, params.bar_beta))
    if ratio >= 1.0:
        return 0
    return max(0, math.ceil(math.log(ratio) / math.log(params.rho) - 1e-12))


def descent_sum_constant(L: float, params: SolverParams) -> float:
    """C3 = max(2/eta^3, C1 L^2) with the safeguard constant made explicit.

    The worst accepted safeguard step is s = min(bar) / ((delta + L/2) max(bar)).  Choosing mu
    with mu/(1-mu) * bar_second^2 L^2 = 1/2 makes both block coefficients at least
    delta s^2 min(mu, 1/2), which gives C1 L^2 = 1 / (delta s^2 min(mu, 1/2)).
    """
    lo, hi = min(params.bar_alpha, params.bar_beta), max(params.bar_alpha, params.bar_beta)
    s = min(lo, lo / ((params.delta + L / 2.0) * hi))
    mu = 1.0 / (1.0 + 2.0 * params.bar_beta ** 2 * L ** 2)
    return max(2.0 / params.eta ** 3, 1.0 / (params.delta * s * s * min(mu, 0.5)))


def _fail_list(rows, limit=5):
    head = ", ".join(str(r) for r in rows[:limit])
    return f"{len(rows)} violations (first: {head})"


def check_branches(trace) -> Check:
    bad = [r.k for r in trace if r.branch not in (U_ACCEPTED, V_FALLBACK)]
    return Check("branch-exhaustive", not bad, _fail_list(bad) if bad else f"{len(trace)} rows")


def check_indices(trace) -> Check:
    bad = [i for i, r in enumerate(trace) if r.k != i]
    return Check("iteration-indices", not bad, _fail_list(bad) if bad else "")


def check_surrogate(trace, meta, slack=SURROGATE_SLACK) -> Check:
    """Phi_eps_k(x_{k+1}) + m eps_k/2 must not increase; row k records the value at x_{k+1} under eps_k."""
    m = meta["m"]
    prev = meta["phi_eps0"] + m * meta["params"]["eps0"] / 2.0
    bad, worst = [], -math.inf
    for r in trace:
        cur = r.phi_eps + m * r.eps / 2.0
        worst = max(worst, cur - prev)
        if cur > prev + slack:
            bad.append(r.k)
        prev = cur
    detail = _fail_list(bad) if bad else f"max increase {worst:.3e}"
    return Check("surrogate-monotone", not bad, detail)


def check_sandwich_trace(trace, meta) -> Check:
    """0 <= Phi - Phi_eps <= m eps / 2 on every recorded iterate."""
    m = meta["m"]
    bad = [r.k for r in trace
           if not (-1e-9 <= r.phi - r.phi_eps <= m * r.eps / 2.0 + 1e-9 * max(1.0, abs(r.phi)))]
    return Check("smoothing-sandwich", not bad, _fail_list(bad) if bad else "")


def check_reduction_law(trace, meta) -> Check:
    p = SolverParams.from_dict(meta["params"])
    eps, count = p.eps0, 0
    bad = []
    for r in trace:
        if r.eps != eps or not math.isclose(r.eps, p.eps0 * p.gamma ** count, rel_tol=1e-12):
            bad.append(f"k={r.k} eps {r.eps!r} expected {eps!r}")
        threshold = p.sigma * p.gamma * r.eps
        if (r.grad_norm < threshold) != r.reduced:
            bad.append(f"k={r.k} grad {r.grad_norm:.3e} threshold {threshold:.3e} reduced={r.reduced}")
        if r.reduced:
            eps, count = p.gamma * eps, count + 1
    detail = _fail_list(bad) if bad else f"{count} reductions"
    return Check("reduction-law", not bad, detail)


def check_line_search(trace, meta) -> Check:
    """Per-step and per-segment backtracking counts against the Lipschitz-based bound."""
    p = SolverParams.from_dict(meta["params"])
    lip = lipschitz_from_dict(meta["lipschitz"])
    bad, seg, worst_ratio = [], 0, 0.0
    for r in trace:
        bound = line_search_bound(lip.constant(r.eps), p)
        seg += r.linesearch_count
        if r.branch == U_ACCEPTED and r.linesearch_count != 0:
            bad.append(f"k={r.k} u-step with line search {r.linesearch_count}")
        if r.linesearch_count > bound or seg > bound:
            bad.append(f"k={r.k} ell={r.linesearch_count} segment={seg} bound={bound}")
        if bound:
            worst_ratio = max(worst_ratio, seg / bound)
        if r.reduced:
            seg = 0
    detail = _fail_list(bad) if bad else f"max segment usage {worst_ratio:.2f} of bound"
    return Check("line-search-bound", not bad, detail)


def descent_sums(trace, meta):
    """(sum of squared gradient norms at x_0..x_{K-1}, C3 * (Phi_eps(x_0) - Phi_eps(x_K))) for a fixed-eps trace."""
    p = SolverParams.from_dict(meta["params"])
    lip = lipschitz_from_dict(meta["lipschitz"])
    c3 = descent_sum_constant(lip.constant(p.eps0), p)
    lhs = meta["grad_norm0"] ** 2 + sum(r.grad_norm ** 2 for r in trace[:-1])
    rhs = c3 * (meta["phi_eps0"] - min(r.phi_eps for r in trace))
    return lhs, rhs, c3


def check_descent_sum(trace, meta) -> Check:
    if any(r.reduced for r in trace) or not trace:
        return Check("fixed-eps-descent-sum", True, "skipped: epsilon changed during the run")
    lhs, rhs, c3 = descent_sums(trace, meta)
    return Check("fixed-eps-descent-sum", lhs <= rhs, f"sum {lhs:.4e} <= C3 * drop {rhs:.4e} (C3 = {c3:.3e})")


def check_certificate(trace, meta) -> Check:
    if not meta.get("certified"):
        return Check("certificate", True, "not certified (iteration budget reached)")
    p = SolverParams.from_dict(meta["params"])
    last = trace[-1]
    ok = last.reduced and last.eps <= p.eps_tol and last.grad_norm < p.sigma * p.gamma * last.eps
    return Check("certificate", bool(ok), f"eps_final={last.eps:.3e} grad_norm={last.grad_norm:.3e}")


def check_all(trace, meta) -> list[Check]:
    if not trace:
        return [Check("non-empty-trace", False, "trace has no rows")]
    return [
        check_indices(trace),
        check_branches(trace),
        check_surrogate(trace, meta),
        check_sandwich_trace(trace, meta),
        check_reduction_law(trace, meta),
        check_line_search(trace, meta),
        check_descent_sum(trace, meta),
        check_certificate(trace, meta),
    ]


def summarize(trace) -> dict:
    counts = {U_ACCEPTED: 0, V_FALLBACK: 0}
    for r in trace:
        counts[r.branch] = counts.get(r.branch, 0) + 1
    return {
        "iterations": len(trace),
        "branches": counts,
        "reductions": sum(r.reduced for r in trace),
        "final": {f: getattr(trace[-1], f) for f in TRACE_FIELDS} if trace else None,
        "min_grad_norm": min((r.grad_norm for r in trace), default=None),
        "max_linesearch": max((r.linesearch_count for r in trace), default=0),
    }
