"""Executable checks of the trace geometry and complexity results, with margins."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .complexity import (
    ValueRange,
    entropy_trace_bounds,
    entropy_window,
    grid_size,
    lipschitz_for_window,
    tmaze_constants,
    tmaze_min_distance,
)
from .geometry import (
    GOLDEN_LAMBDA,
    MARGIN_TOL,
    SQRT2,
    find_collisions,
    minkowski_dimension,
    rational_no_collision,
)
from .trace_core import DEFAULT_CAP, CapExceeded, ObservationSpace, enumerate_histories, traces_of_histories

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3

MARGIN_LAMBDAS = (0.1, 0.25, 0.45)
INJECTIVE_LAMBDAS = (Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(3, 4))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    margin: float = math.nan
    seconds: float = 0.0


@dataclass
class Report:
    checks: list[CheckResult] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def partial(self) -> bool:
        return bool(self.skipped) or not self.checks

    @property
    def exit_code(self) -> int:
        if not self.passed:
            return EXIT_FAIL
        return EXIT_PARTIAL if self.partial else EXIT_OK

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            margin = "" if math.isnan(c.margin) else f" margin={c.margin:.3e}"
            out.append(f"[{tag}] {c.name}: {c.detail}{margin} ({c.seconds:.2f}s)")
        for s in self.skipped:
            out.append(f"[SKIP] {s}: over budget")
        if not self.checks and not self.skipped:
            out.append("[SKIP] no checks run: zero budget")
        return out


# ---------------------------------------------------------------------------
# margin checks
# ---------------------------------------------------------------------------


def first_difference_matrix(H: np.ndarray) -> np.ndarray:
    """For rows ``i < j`` of equal-length histories: index of the first differing symbol."""
    n, m = H.shape
    diff = H[:, None, :] != H[None, :, :]
    k = np.where(diff.any(axis=2), diff.argmax(axis=2), m)
    return k


def margin_violations(H: np.ndarray, lam: float, space: ObservationSpace) -> tuple[int, float, int]:
    """Check both inequalities on every pair of equal-length histories at the tight ``m``.

    For a pair whose first difference is at ``k``, the windows agree for
    ``m <= k`` (concentration is tightest at ``m = k``) and differ for
    ``m > k`` (separation is tightest at ``m = k + 1``).  Returns
    ``(violations, smallest slack, pairs checked)``.
    """
    z = traces_of_histories(H, lam, space)
    i, j = np.triu_indices(len(H), k=1)
    d = np.linalg.norm(z[i] - z[j], axis=1)
    k = first_difference_matrix(H)[i, j]
    conc = SQRT2 * lam**k.astype(float) - d
    viol = int(np.sum(conc < -MARGIN_TOL))
    slack = float(conc.min()) if len(conc) else math.inf
    if lam <= 0.5:
        sep = d - SQRT2 * (1.0 - 2.0 * lam) * lam**k.astype(float)
        viol += int(np.sum(sep < -MARGIN_TOL))
        slack = min(slack, float(sep.min()) if len(sep) else math.inf)
    return viol, slack, len(d)


def random_margin_pairs(ysize: int, length: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` random pairs sharing a random-length common suffix of recent observations."""
    a = rng.integers(0, ysize, size=(n, length))
    b = rng.integers(0, ysize, size=(n, length))
    share = rng.integers(0, length + 1, size=n)
    mask = np.arange(length)[None, :] < share[:, None]
    b = np.where(mask, a, b)
    return np.stack([a, b], axis=1)


def check_margins_exhaustive(max_len: int, lambdas=MARGIN_LAMBDAS, cap: int = DEFAULT_CAP) -> CheckResult:
    t0 = time.perf_counter()
    space = ObservationSpace(2)
    total, viol, slack = 0, 0, math.inf
    for lam in lambdas:
        for n in range(1, max_len + 1):
            H = enumerate_histories(n, 2, cap)
            v, s, c = margin_violations(H, lam, space)
            viol, slack, total = viol + v, min(slack, s), total + c
    return CheckResult(
        f"margins exhaustive |Y|=2 len<={max_len}",
        viol == 0,
        f"{total} pairs x2 inequalities, {viol} violations",
        slack,
        time.perf_counter() - t0,
    )


def check_margins_random(ysizes=(3, 5), n: int = 10_000, length: int = 12, seed: int = 0, lambdas=MARGIN_LAMBDAS) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    viol, slack, total = 0, math.inf, 0
    for ysize in ysizes:
        space = ObservationSpace(ysize)
        pairs = random_margin_pairs(ysize, length, n, rng)
        for lam in lambdas:
            za = traces_of_histories(pairs[:, 0], lam, space)
            zb = traces_of_histories(pairs[:, 1], lam, space)
            d = np.linalg.norm(za - zb, axis=1)
            diff = pairs[:, 0] != pairs[:, 1]
            k = np.where(diff.any(axis=1), diff.argmax(axis=1), length).astype(float)
            conc = SQRT2 * lam**k - d
            # identical pairs have no separating window
            sep = np.where(k < length, d - SQRT2 * (1.0 - 2.0 * lam) * lam**k, np.inf)
            viol += int(np.sum(conc < -MARGIN_TOL) + np.sum(sep < -MARGIN_TOL))
            slack = min(slack, float(conc.min()), float(sep.min()))
            total += n
    return CheckResult(
        f"margins random |Y| in {tuple(ysizes)}",
        viol == 0,
        f"{total} pairs x2 inequalities, {viol} violations",
        slack,
        time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# injectivity and witnesses
# ---------------------------------------------------------------------------


def parse_lambda(text: str) -> float | Fraction:
    """``"1/3"`` becomes an exact fraction, ``"golden"`` the conjugate golden ratio."""
    text = text.strip()
    if text.lower() in ("golden", "phi-1"):
        return GOLDEN_LAMBDA
    if "/" in text:
        return Fraction(text)
    return float(text)


def check_injectivity(lam, ysize: int, max_len: int, cap: int = DEFAULT_CAP) -> CheckResult:
    t0 = time.perf_counter()
    space = ObservationSpace(ysize)
    found = find_collisions(space, max_len, lam, cap=cap)
    exact = isinstance(lam, Fraction)
    if exact and not found:
        ok = rational_no_collision(space, max_len, lam, cap)
        detail = "no collision (rational check agrees)" if ok else "rational check disagrees"
        return CheckResult(f"injective lam={lam} |Y|={ysize} len<={max_len}", ok, detail, seconds=time.perf_counter() - t0)
    if found:
        w = found[0]
        detail = f"collision {w.h.obs} ~ {w.hbar.obs} (distance {w.distance:.2e})"
        return CheckResult(f"injective lam={lam} |Y|={ysize} len<={max_len}", False, detail, w.distance, time.perf_counter() - t0)
    return CheckResult(f"injective lam={lam} |Y|={ysize} len<={max_len}", True, "no collision (float check)", seconds=time.perf_counter() - t0)


def check_golden_witness() -> CheckResult:
    t0 = time.perf_counter()
    found = find_collisions(ObservationSpace(2), 3, GOLDEN_LAMBDA)
    target = {((0, 1, 1), (1, 0, 0)), ((1, 0, 0), (0, 1, 1))}
    hit = [w for w in found if (w.h.obs, w.hbar.obs) in target]
    detail = f"found {hit[0].h.obs} ~ {hit[0].hbar.obs}" if hit else "witness missing"
    return CheckResult("golden-ratio collision witness", bool(hit), detail, hit[0].distance if hit else math.nan, time.perf_counter() - t0)


def check_scalar_witness() -> CheckResult:
    t0 = time.perf_counter()
    space = ObservationSpace.from_vectors([[0.0], [1.0], [2.0]])
    found = find_collisions(space, 2, Fraction(1, 2), exact_length=True)
    hit = [w for w in found if {w.h.obs, w.hbar.obs} == {(1, 0), (0, 2)}]
    detail = f"found {hit[0].h.obs} ~ {hit[0].hbar.obs}, exact={hit[0].exact}" if hit else "witness missing"
    return CheckResult("scalar {0,1,2} lam=1/2 collision witness", bool(hit), detail, seconds=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# calculators and T-maze
# ---------------------------------------------------------------------------


def window_trace_constant(lam: float, ysize: int, vrange: ValueRange, eps: float) -> float:
    """``c = ln ceil(delta/eps) * (sqrt2 delta / ((1 - 2 lam) eps))**d_lam``."""
    d, _ = minkowski_dimension(lam, ysize)
    dv = vrange.delta
    return math.log(math.ceil(dv / eps - 1e-12)) * (SQRT2 * dv / ((1.0 - 2.0 * lam) * eps)) ** d


def check_calculators(max_m: int = 10, max_y: int = 5, rel_tol: float = 1e-9) -> CheckResult:
    t0 = time.perf_counter()
    vr = ValueRange(-1.0, 1.0)
    worst = 0.0
    bad = 0
    for ysize in range(2, max_y + 1):
        for m in range(1, max_m + 1):
            for eps in (0.3, 0.1, 0.01):
                q = entropy_window(m, ysize, vr, eps)
                exact = ysize**m * math.log(grid_size(vr.delta, eps))
                bad += q.value != exact
                for lam in (0.1, 0.25, 0.45):
                    L = lipschitz_for_window(m, lam, vr)
                    a = entropy_trace_bounds(lam, L, ysize, vr, eps).bounds[0]
                    c = window_trace_constant(lam, ysize, vr, eps) * ysize**m
                    rel = abs(a - c) / c
                    worst = max(worst, rel)
                    bad += rel > rel_tol
    return CheckResult(
        f"entropy calculators m<={max_m} |Y|<={max_y}",
        bad == 0,
        f"window form exact, window-to-trace max rel err {worst:.2e}",
        rel_tol - worst,
        time.perf_counter() - t0,
    )


def check_dimension() -> CheckResult:
    t0 = time.perf_counter()
    slack = math.inf
    for ysize in range(2, 9):
        for lam in np.linspace(0.01, 0.49, 49):
            d, _ = minkowski_dimension(float(lam), ysize)
            slack = min(slack, (ysize - 1) - d)
    return CheckResult("dimension below |Y|-1 for lam<1/2", slack > 0, "|Y| in 2..8", slack, time.perf_counter() - t0)


def check_tmaze(ks=range(2, 13)) -> CheckResult:
    from .offline_eval import IncompatibleAnchors, tmaze_mcshane

    t0 = time.perf_counter()
    slack = math.inf
    ok = True
    for k in ks:
        d = tmaze_min_distance(k)
        slack = min(slack, d - SQRT2 / (math.e * k))
        try:
            tmaze_mcshane(k)
        except IncompatibleAnchors:
            ok = False
        c = tmaze_constants(k)
        ok &= abs(d - SQRT2 * (1 - c.lam) * c.lam ** (k - 1)) < 1e-12
    return CheckResult(f"T-maze distances k in {ks.start}..{ks.stop - 1}", ok and slack > 0, "anchors compatible", slack, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def verify_all(budget: int = DEFAULT_CAP, inject_lambda=None) -> Report:
    """Run every check whose enumeration fits in ``budget`` histories.

    ``inject_lambda`` replaces the injectivity forgetting factors, which is
    how a known non-injective value is shown to be caught.
    """
    report = Report()
    if budget <= 0:
        return report
    lambdas = INJECTIVE_LAMBDAS if inject_lambda is None else (inject_lambda,)
    plan = [
        ("margins exhaustive", 2 * 2**8, lambda: check_margins_exhaustive(8, cap=budget)),
        ("margins random", 2 * 10_000, check_margins_random),
        *[
            (f"injective lam={lam} |Y|={y}", sum(y**n for n in range(7)), (lambda lam=lam, y=y: check_injectivity(lam, y, 6, budget)))
            for lam in lambdas
            for y in (2, 3)
        ],
        ("golden witness", 15, check_golden_witness),
        ("scalar witness", 9, check_scalar_witness),
        ("entropy calculators", 1, check_calculators),
        ("dimension", 1, check_dimension),
        ("T-maze distances", 50, check_tmaze),
    ]
    for name, cost, fn in plan:
        if cost > budget:
            report.skipped.append(name)
            continue
        try:
            report.checks.append(fn())
        except CapExceeded:
            report.skipped.append(name)
    return report
