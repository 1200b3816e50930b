"""The thirteen acceptance checks as plain functions.

Each check returns a :class:`CheckResult`; ``run_all`` shares the expensive
solves (continuity traces, conical paths) between checks through a cache
dict.  Used by ``krsolve verify`` and by ``tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .geometry import build_grid, fs_potential, make_divisor, divisor_weight, meridian_metrics
from .problem import Setting, fs_setting
from .twist import smooth_twist

# Roundoff floor for scalars that a discretization reproduces exactly (the
# round metric is an exact discrete solution): their grid-to-grid changes
# are rounding noise, not truncation error.
ROUNDOFF_FLOOR = 1e-10


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    metrics: Dict[str, object] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        bits = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items() if not isinstance(v, (list, dict)))
        out = f"[{tag}] {self.number:2d} {self.name}: {bits} ({self.seconds:.1f}s)"
        if self.failures:
            out += " | " + "; ".join(self.failures)
        return out

    def to_json(self):
        return dict(number=self.number, name=self.name, passed=self.passed, metrics=_jsonable(self.metrics),
                    failures=list(self.failures), seconds=self.seconds)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def _timed(number, name, fn: Callable[[], tuple]) -> CheckResult:
    t0 = time.perf_counter()
    metrics, failures = fn()
    return CheckResult(number, name, not failures, metrics, failures, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# shared solves

def ke_recovery(n: int = 2048, s_max: float = 12.0):
    from .solver import newton_solve
    g = build_grid(n, s_max)
    st = fs_setting(g, 1.0)
    t0 = time.perf_counter()
    res = newton_solve(0.3 / np.cosh(g.nodes), st)
    dt = time.perf_counter() - t0
    u = st.base.plus(res.phi)
    err = float(np.max(np.abs(u.d2u - (u.du - 0.5 * u.du ** 2))))
    return dict(iterations=res.iterations, residual_sup=res.residual_sup, moment_error=err, seconds=dt)


def teardrop(n: int = 1024, s_max: float = 12.0, nu: float = 0.5, smallest: float = 1e-4):
    from .conical import solve_conical, RegularizationSchedule, default_epsilons
    from .oracle import soliton_coefficient
    g = build_grid(n, s_max)
    u0 = fs_potential(g)
    D = divisor_weight(make_divisor(["0"]), u0, nu)
    c, orc, _ = soliton_coefficient(nu)
    t0 = time.perf_counter()
    sched = RegularizationSchedule.build(nu, D, u0, default_epsilons(17, smallest))
    sol = solve_conical(u0, nu, D, c=c, schedule=sched)
    dt = time.perf_counter() - t0
    tau = sol.u.du
    m = (tau >= 0.05) & (tau <= 1.95)
    err = float(np.max(np.abs(sol.u.d2u[m] - orc.v(tau[m], 2.0 - tau[m]))))
    return sol, dict(profile_error=err, cone_slope=sol.cone_slope, c=sol.c, c_oracle=c,
                     alpha_inf=sol.alpha_inf, diameter=sol.trace[-1].diameter, seconds=dt,
                     status=sol.status)


def twisted_scenarios(n: int = 1024):
    """Six (beta, c) scenarios: four with eta = (1 - beta) omega0 and X != 0,
    two at c = 0 with a nonconstant f_eta (so that phi is not trivial)."""
    g = build_grid(n, 12.0)
    u0 = fs_potential(g)
    f = 0.3 * (2.0 * u0.d2u - 1.0)
    f = f - f.max()
    out = []
    for beta, c in ((0.5, 0.3), (0.6, 0.5), (0.4, 1.0), (0.75, 0.25)):
        out.append((f"beta={beta},c={c}", fs_setting(g, beta, c)))
    for beta in (0.5, 0.9):
        out.append((f"beta={beta},c=0,f_eta", Setting(u0, beta, 0.0, smooth_twist(beta, f).check(g))))
    return out


def _traces(cache):
    if "traces" not in cache:
        from .solver import continuity_path
        settings = cache.get("settings")
        cache["traces"] = [(name, st, continuity_path(st, settings=settings))
                           for name, st in twisted_scenarios()]
    return cache["traces"]


def _teardrop(cache):
    if "teardrop" not in cache:
        cache["teardrop"] = teardrop()
    return cache["teardrop"]


# ---------------------------------------------------------------------------
# the checks

def check_1(cache=None):
    def run():
        r = ke_recovery()
        fail = []
        if not r["residual_sup"] < 1e-10:
            fail.append(f"residual {r['residual_sup']:.3e} >= 1e-10")
        if r["iterations"] > 10:
            fail.append(f"{r['iterations']} iterations > 10")
        if not r["moment_error"] <= 1e-6:
            fail.append(f"moment profile error {r['moment_error']:.3e} > 1e-6")
        if not r["seconds"] < 5.0:
            fail.append(f"runtime {r['seconds']:.2f}s >= 5s")
        return r, fail
    return _timed(1, "KE recovery", run)


def check_2(cache=None):
    cache = {} if cache is None else cache

    def run():
        sol, r = _teardrop(cache)
        fail = []
        if not sol.completed:
            fail.append(f"eps-path status {sol.status}")
        if not r["profile_error"] <= 1e-3:
            fail.append(f"profile error {r['profile_error']:.3e} > 1e-3")
        if not abs(r["cone_slope"] - 0.5) <= 1e-2:
            fail.append(f"cone slope {r['cone_slope']:.5f} vs 0.5")
        if not r["seconds"] < 120.0:
            fail.append(f"runtime {r['seconds']:.1f}s >= 120s")
        return r, fail
    return _timed(2, "teardrop conical soliton", run)


def check_3(cache=None):
    cache = {} if cache is None else cache

    def run():
        from .oracle import solve_football, soliton_coefficient
        from .conical import solve_conical
        worst = 0.0
        for c in np.linspace(-3.0, 3.0, 13):
            for a0 in (0.1, 0.25, 0.5, 0.75, 1.0):
                s = solve_football(float(c), a0)
                worst = max(worst, abs(s.alpha0 + s.alpha_inf - 2.0 * s.beta))
        for nu in np.linspace(0.05, 0.95, 19):
            _, s, _ = soliton_coefficient(float(nu))
            worst = max(worst, abs(s.alpha0 + s.alpha_inf - 2.0 * s.beta))
        sol, _ = _teardrop(cache)
        num = [abs(sol.cone_slope + sol.alpha_inf - 2.0 * sol.gamma)]
        if "football" not in cache:
            g = build_grid(1024, 12.0)
            u0 = fs_potential(g)
            cache["football"] = solve_conical(u0, 0.5, divisor_weight(make_divisor(["0", "inf"]), u0, 0.5))
        fb = cache["football"]
        num.append(abs(fb.cone_slope + fb.alpha_inf - 2.0 * fb.gamma))
        fail = []
        if worst > 1e-14:
            fail.append(f"oracle Gauss-Bonnet defect {worst:.3e} > 1e-14")
        if max(num) > 1e-3:
            fail.append(f"numerical Gauss-Bonnet defect {max(num):.3e} > 1e-3")
        return dict(oracle_defect=worst, teardrop_defect=num[0], football_defect=num[1]), fail
    return _timed(3, "Gauss-Bonnet", run)


def check_4(cache=None):
    cache = {} if cache is None else cache

    def run():
        fail = []
        mono, ident = 0.0, 0.0
        for name, st, tr in _traces(cache):
            if not tr.completed:
                fail.append(f"{name}: {tr.status}")
                continue
            m = tr.monotonicity_defect()
            d = float(np.max(np.abs(tr.identity_defects())))
            mono, ident = max(mono, m), max(ident, d)
            if m > 1e-6:
                fail.append(f"{name}: monotonicity defect {m:.3e}")
            if d > 1e-5:
                fail.append(f"{name}: identity defect {d:.3e}")
        return dict(scenarios=len(_traces(cache)), monotonicity_defect=mono, identity_defect=ident), fail
    return _timed(4, "monotonicity and path identity", run)


def check_5(cache=None, n_members: int = 100, seed: int = 5):
    def run():
        from .functionals import aubin_yau, functional_checks
        from .invariants import potential_family
        g = build_grid(512, 12.0)
        u0 = fs_potential(g)
        fam = potential_family(u0, n_members, seed=seed, concentrating=0.0)
        worst = 0.0
        for phi in fam:
            I, J, _, _ = aubin_yau(phi, u0)
            worst = max(worst, abs(I - 2.0 * J))
        chk = functional_checks(fam, u0)
        fail = list(chk["failures"])
        if worst > 1e-8:
            fail.append(f"|I - 2J| = {worst:.3e} > 1e-8")
        for key in ("C1", "C2"):
            if abs(chk[key] - 0.5) > 1e-6:
                fail.append(f"fitted {key} = {chk[key]:.9f} vs 0.5")
        return dict(I_2J_defect=worst, C1=chk["C1"], C2=chk["C2"]), fail
    return _timed(5, "I = 2J and positivity chain", run)


def check_6(cache=None):
    cache = {} if cache is None else cache

    def run():
        from .invariants import lambda1
        g = build_grid(1024, 12.0)
        lam = lambda1(fs_potential(g)).lambda1
        fail = []
        if abs(lam - 1.0) > 1e-4:
            fail.append(f"lambda1(FS) = {lam:.8f}")
        worst = math.inf
        for name, st, tr in _traces(cache):
            if not (tr.completed and st.strictly_positive_twist):
                continue
            last = tr.steps[-1]
            gap = last.lambda1 - st.beta
            worst = min(worst, gap)
            if gap < -1e-6:
                fail.append(f"{name}: lambda1 {last.lambda1:.6f} < beta")
        return dict(lambda1_fs=lam, min_lambda1_minus_beta=worst), fail
    return _timed(6, "spectral", run)


def check_7(cache=None):
    def run():
        from .invariants import mt_fit, potential_family
        g = build_grid(512, 12.0)
        st = fs_setting(g, 0.5)
        fit = mt_fit(potential_family(st.base, 200, seed=7), st)
        fail = []
        if not fit.C1 > 0 or fit.violations:
            fail.append(f"F_tilde fit C1={fit.C1:.4g}, violations={fit.violations}")
        if not fit.C1_mu > 0 or fit.violations_mu:
            fail.append(f"mu_tilde fit C1={fit.C1_mu:.4g}, violations={fit.violations_mu}")
        return dict(C1=fit.C1, C2=fit.C2, C1_mu=fit.C1_mu, violations=fit.violations + fit.violations_mu), fail
    return _timed(7, "Moser-Trudinger fit", run)


def perturbed_fs_settings(grid, target: float = 0.1):
    """Five perturbed round metrics u0 + a f with sup|h0 - theta| = target."""
    u0 = fs_potential(grid)
    s = grid.nodes
    shapes = {
        "sech": 1.0 / np.cosh(s),
        "sech2": 1.0 / np.cosh(s) ** 2,
        "odd": np.tanh(s) / np.cosh(s),
        "bump": np.exp(-(s - 2.0) ** 2),
        "two_bumps": np.exp(-0.5 * (s + 3.0) ** 2) - 0.5 * np.exp(-(s - 1.0) ** 2),
    }
    out = {}
    for name, f in shapes.items():
        def size(a):
            st = Setting(u0.plus(a * f), 1.0)
            return float(np.max(np.abs(st.h0 - st.theta0())))
        a = 0.01 * target / size(0.01)
        for _ in range(8):
            a *= target / size(a)
        out[name] = Setting(u0.plus(a * f), 1.0)
    return out


def check_8(cache=None):
    def run():
        from .solver import flow_smooth
        g = build_grid(512, 12.0)
        fail = []
        m = {}
        for name, st in perturbed_fs_settings(g).items():
            _, rep = flow_smooth(st)
            m[name] = rep.u1_sup
            bound = math.e * 0.1
            if abs(rep.h_theta_sup - 0.1) > 1e-6:
                fail.append(f"{name}: sup|h0 - theta| = {rep.h_theta_sup:.6g}")
            if not rep.u1_sup <= bound:
                fail.append(f"{name}: sup|u1| = {rep.u1_sup:.4g} > {bound:.4g}")
        m["max_u1_sup"] = max(m.values())
        return m, fail
    return _timed(8, "smoothing bound", run)


def check_9(cache=None, n_members: int = 50):
    def run():
        from .functionals import (properness_gap_constant, regularized_setting, k_energy_twisted,
                                  log_functionals)
        from .invariants import potential_family
        from .oracle import soliton_coefficient
        g = build_grid(512, 12.0)
        u0 = fs_potential(g)
        nu = 0.5
        c = soliton_coefficient(nu)[0]
        fail = []
        m = {}
        for label, pts, cc in (("D={0}", ["0"], c), ("D={0,inf}", ["0", "inf"], 0.0)):
            D = divisor_weight(make_divisor(pts), u0, nu)
            C = properness_gap_constant(u0, nu, D, cc)
            worst = math.inf
            for phi in potential_family(u0, n_members, seed=9):
                ml = log_functionals(phi, u0, nu, D, cc)[0]
                for eps in (1.0, 0.1, 0.01, 0.001):
                    mr = k_energy_twisted(phi, regularized_setting(u0, nu, D, eps, cc))
                    worst = min(worst, mr - ml + C)
            m[f"C {label}"] = C
            m[f"margin {label}"] = worst
            if worst < 0:
                fail.append(f"{label}: bound violated by {-worst:.3e}")
        return m, fail
    return _timed(9, "uniform properness gap", run)


def check_10(cache=None):
    def run():
        from .solver import r_sweep, r_invariant_exact
        t0 = time.perf_counter()
        sweep = r_sweep([0.0, 0.25, 0.5, 1.0])
        R0 = sweep["rows"][0]["R"]
        dt = time.perf_counter() - t0
        fail = []
        if not 0.99 <= R0 <= 1.0:
            fail.append(f"R(0) = {R0:.4f}")
        for row in sweep["rows"]:
            lo, hi = row["lo"], row["hi"]
            if hi - lo > 0.01 + 1e-12:
                fail.append(f"bracket width {hi - lo:.4f} at c={row['c']}")
            if not 0.0 < row["R"] <= 1.0:
                fail.append(f"R out of (0, 1] at c={row['c']}")
        if dt >= 600.0:
            fail.append(f"runtime {dt:.0f}s >= 600s")
        m = dict(R0=R0, monotone=sweep["monotone"], seconds=dt)
        for row in sweep["rows"]:
            m[f"R({row['c']})"] = row["R"]
            m[f"R_closed({row['c']})"] = r_invariant_exact(row["c"])
        return m, fail
    return _timed(10, "R-invariant", run)


def check_11(cache=None):
    def run():
        from .invariants import cone_window
        w = cone_window(0.5, 0.4, 0.5, 1.0)
        fail = []
        if w.empty or abs(w.beta_min - 5.0 / 6.0) > 1e-10 or abs(w.beta_max - 1.0) > 1e-10:
            fail.append(f"window ({w.beta_min}, {w.beta_max})")
        bad = cone_window(0.4, 0.5, 0.5, 1.0, R_equals_one=True)
        if not (bad.r_one.empty and any("C_tilde < lambda" in r for r in bad.r_one.reasons)):
            fail.append("C_tilde >= lambda not reported")
        bad2 = cone_window(0.5, 0.4, 0.1, 1.0, R_equals_one=True)
        if not (bad2.r_one.empty and bad2.r_one.reasons):
            fail.append("alpha condition failure not reported")
        return dict(beta_min=w.beta_min, beta_max=w.beta_max,
                    reasons=len(bad.r_one.reasons) + len(bad2.r_one.reasons)), fail
    return _timed(11, "cone window", run)


def check_12(cache=None):
    cache = {} if cache is None else cache

    def run():
        from .conical import current_limit_check
        from .invariants import convergence_diagnostics, diameter_sweep
        sol, _ = _teardrop(cache)
        diag = convergence_diagnostics(sol, 1.0 - 0.5 * 0.5)
        sw = diameter_sweep()
        cur = current_limit_check(sol)
        fail = list(diag["failures"])
        vals = [r["diam_sqrt_beta"] for r in sw["rows"]]
        # one constant: the spread is a small fraction of the common value
        if max(vals) > 1.01 * min(vals):
            fail.append(f"diam*sqrt(beta) ranges over [{min(vals):.5f}, {max(vals):.5f}]")
        fail += cur["failures"]
        delta = [it for it in cur["items"] if "delta_mass" in it]
        derr = max(abs(it["delta_mass"] - 2 * math.pi * sol.nu) for it in delta) if delta else math.inf
        if not derr <= 1e-2:
            fail.append(f"delta mass error {derr:.3e}")
        return dict(last_cauchy_gap=diag["cauchy_gaps"][-1], diam_sqrt_beta_C=sw["C"],
                    diam_sqrt_beta_spread=sw["spread"], delta_mass_error=derr), fail
    return _timed(12, "convergence diagnostics", run)


def check_13(cache=None, sizes=(512, 1024, 2048)):
    def run():
        fail = []
        scal = {}
        for n in sizes:
            r1 = ke_recovery(n)
            _, r2 = teardrop(n)
            scal[n] = dict(iterations=r1["iterations"], residual_sup=r1["residual_sup"],
                           moment_error=r1["moment_error"], profile_error=r2["profile_error"],
                           cone_slope=r2["cone_slope"], c=r2["c"], alpha_inf=r2["alpha_inf"],
                           diameter=r2["diameter"])
        a, b, c = sizes
        m = {}
        for key in scal[a]:
            d1 = abs(scal[b][key] - scal[a][key])
            d2 = abs(scal[c][key] - scal[b][key])
            m[f"{key}: d1"] = d1
            m[f"{key}: d2"] = d2
            if max(d1, d2) <= ROUNDOFF_FLOOR:
                continue
            if not d2 < d1:
                fail.append(f"{key}: change {d2:.3e} not below {d1:.3e}")
        return m, fail
    return _timed(13, "grid refinement", run)


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9,
          check_10, check_11, check_12, check_13]


def run_all(only: Optional[List[int]] = None, cache=None, echo: Optional[Callable[[str], None]] = None):
    cache = {} if cache is None else cache
    out = []
    for k, fn in enumerate(CHECKS, start=1):
        if only and k not in only:
            continue
        try:
            r = fn(cache)
        except Exception as exc:    # a crash is a failed check, reported as such
            r = CheckResult(k, fn.__name__, False, {}, [f"{type(exc).__name__}: {exc}"])
        if echo:
            echo(r.line())
        out.append(r)
    return out
