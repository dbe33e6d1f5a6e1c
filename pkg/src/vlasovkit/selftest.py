"""Identity and limit checks run by ``vlasovkit selftest`` and the acceptance suite."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .config import (
    Box,
    ConfigFunction,
    DiscreteSpace,
    FiniteConfiguration,
    k_inverse,
    k_transform,
    lp_exponent,
    lp_integral,
    verify_minlos,
)

LIMIT_EPS = (1e-1, 1e-2, 1e-3)
MIN_SLOPE = 0.8
UNIT_ROUNDOFF = 2.0 ** -53


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f} s)"


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, passed, detail, time.perf_counter() - t0)


def _random_table(gamma: FiniteConfiguration, rng) -> dict:
    return {eta: float(rng.normal()) for eta in gamma.subsets()}


def transform_identity_error(trials: int = 100, seed: int = 0) -> float:
    """Max error of K^-1 K = id and K K^-1 = id on random tables, <= 5 points of 10 sites."""
    rng = np.random.default_rng(seed)
    sites = DiscreteSpace.grid(Box(1, 10.0), 10).sites
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(0, 6))
        gamma = FiniteConfiguration(sites[i] for i in rng.choice(10, size=k, replace=False))
        G = ConfigFunction.tabulated(_random_table(gamma, rng))
        F = ConfigFunction.tabulated(_random_table(gamma, rng))
        KG = ConfigFunction(lambda eta: k_transform(G, eta))
        KinvF = ConfigFunction(lambda eta: k_inverse(F, eta))
        for eta in gamma.subsets():
            worst = max(worst, abs(k_inverse(KG, eta) - G(eta)), abs(k_transform(KinvF, eta) - F(eta)))
    return worst


def minlos_error(trials: int = 50, seed: int = 1, sites: int = 10) -> float:
    """Max |lhs - rhs| of the Minlos identity for random tabulated H (support |zeta| <= 3)."""
    rng = np.random.default_rng(seed)
    space = DiscreteSpace.grid(Box(1, 0.5 * sites), sites)
    worst = 0.0
    for _ in range(trials):
        table: dict = {}

        def H(xi, eta, zeta):
            if len(zeta) > 3:
                return 0.0
            key = (xi, eta, zeta)
            if key not in table:
                table[key] = float(rng.normal())
            return table[key]

        lhs, rhs = verify_minlos(H, space)
        worst = max(worst, abs(lhs - rhs))
    return worst


def lp_exponent_error(seed: int = 2) -> float:
    rng = np.random.default_rng(seed)
    space = DiscreteSpace.grid(Box(1, 4.0), 12)
    vals = {s: float(v) for s, v in zip(space.sites, rng.uniform(-0.9, 2.0, len(space.sites)))}
    f = vals.__getitem__
    got = lp_integral(lambda eta: lp_exponent(f, eta), space)
    want = math.prod(1.0 + vals[s] * space.cell_volume for s in space.sites)
    return abs(got - want) / abs(want)


# -- limit coefficients ------------------------------------------------------------------

@dataclass
class LimitCheck:
    model: str
    part: str
    size: int
    value: float
    errors: list
    floors: list
    slope: float | None     # None: exact up to rounding at every eps

    @property
    def passed(self) -> bool:
        return self.slope is None or self.slope >= MIN_SLOPE


def rounding_floor(spec, part, x, xi, y, eps) -> float:
    """Size of the rounding error of eps^-|xi| K^-1[rate](xi) in double precision."""
    from .dsl import evaluate_rate, scale

    scaled = scale(spec, eps)
    factor = eps if part == "birth" else 1.0
    biggest = max(abs(factor * evaluate_rate(scaled, part, x, sub, y)) for sub in xi.subsets())
    return 8.0 * UNIT_ROUNDOFF * 2 ** len(xi) * max(biggest, 1e-300) * eps ** (-len(xi))


def limit_slope(errors, floors, eps=LIMIT_EPS):
    """Log-log slope of the errors that lie above the rounding floor.

    Returns None when every error is within rounding (the coefficient is
    exact); errors under the floor are left out of the fit when at least
    two remain.
    """
    above = [i for i, (e, f) in enumerate(zip(errors, floors)) if e > f]
    if not above:
        return None
    use = above if len(above) >= 2 else list(range(len(errors)))
    le = np.log([max(errors[i], 1e-300) for i in use])
    return float(np.polyfit(np.log([eps[i] for i in use]), le, 1)[0])


def check_limit(spec, model, part, x, xi, y=None, eps=LIMIT_EPS) -> LimitCheck:
    from .dsl import k_coefficient, vlasov_coefficient

    v = vlasov_coefficient(spec, part, x, y)(xi)
    k = len(xi)
    errors = [abs(e ** (-k) * k_coefficient(spec, part, x, xi, e, y) - v) for e in eps]
    floors = [rounding_floor(spec, part, x, xi, y, e) for e in eps]
    return LimitCheck(model, part, k, v, errors, floors, limit_slope(errors, floors, eps))


def limit_checks(seed: int = 3, base_points: int = 2, spread: float = 0.4) -> list:
    """Every preset, every part, |xi| = 0..3, xi drawn near the base point."""
    from .catalog import PRESETS, load_preset

    rng = np.random.default_rng(seed)
    out = []
    for name in PRESETS:
        spec = load_preset(name)
        L = spec.box.L
        d = spec.box.d
        for part in ("death", "birth", "hop"):
            if part not in spec.parts:
                continue
            for _ in range(base_points):
                x = rng.uniform(0, L, d)
                y = (x + rng.normal(0, 0.5, d)) % L if part == "hop" else None
                for k in range(4):
                    xi = FiniteConfiguration.from_array((x + rng.normal(0, spread, (k, d))) % L)
                    out.append(check_limit(spec, name, part, x, xi, y))
    return out


def run_all(include_limits: bool = True) -> list:
    results = [
        _timed("K^-1 K and K K^-1 identities", lambda: _tol(transform_identity_error(), 1e-12)),
        _timed("Minlos identity", lambda: _tol(minlos_error(), 1e-12)),
        _timed("Lebesgue-Poisson exponent integral", lambda: _tol(lp_exponent_error(), 1e-12)),
    ]
    if include_limits:
        results.append(_timed("limit coefficients decay linearly in eps", _limit_block))
    return results


def _tol(err: float, tol: float):
    return err <= tol, f"max error {err:.3g} (tolerance {tol:g})"


def _limit_block():
    checks = limit_checks()
    slopes = [c.slope for c in checks if c.slope is not None]
    bad = [c for c in checks if not c.passed]
    detail = (f"{len(checks)} coefficients, {len(checks) - len(slopes)} exact, "
              f"min slope {min(slopes):.3f}" if slopes else f"{len(checks)} coefficients, all exact")
    if bad:
        detail += "; failing: " + ", ".join(f"{c.model}/{c.part}/|xi|={c.size}" for c in bad[:5])
    return not bad, detail
