"""Level curves ``lambda_1(alpha, beta) = c`` and eigenvalue branches along them."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .eigensolve import ExtrapolatedSpectrum, SolverSettings
from .fem import DEGENERACY_MARGIN
from .geometry import DomainError, Triangle
from .shape_derivative import hadamard_extrapolated, multiplet_extrapolated

__all__ = [
    "ContinuationError",
    "CurveSample",
    "LevelCurve",
    "SplitSlopes",
    "level_alpha_c",
    "solve_beta",
    "solve_diagonal",
    "sample_curve",
    "trace_curve",
    "split_slope",
    "write_curve_csv",
    "read_curve_csv",
    "CSV_HEADER",
    "ENDPOINT_MARGIN",
]

log = logging.getLogger(__name__)

ENDPOINT_MARGIN = 0.05
CSV_HEADER = ["alpha", "beta", "lambda1", "lambda2", "lambda3", "err1", "err2", "err3"]


class ContinuationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CurveSample:
    alpha: float
    beta: float
    eigenvalues: tuple[float, ...]  # lambda_1, lambda_2, lambda_3
    errors: tuple[float, ...]

    @property
    def t(self) -> float:
        return self.alpha - 0.5 * math.pi

    def row(self) -> list[float]:
        lam = list(self.eigenvalues[:3]) + [math.nan] * (3 - len(self.eigenvalues[:3]))
        err = list(self.errors[:3]) + [math.nan] * (3 - len(self.errors[:3]))
        return [self.alpha, self.beta] + lam + err


@dataclass
class LevelCurve:
    c: float
    alpha_c: float
    samples: list[CurveSample] = field(default_factory=list)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.samples])

    @property
    def betas(self) -> np.ndarray:
        return np.array([s.beta for s in self.samples])

    def column(self, j: int) -> np.ndarray:
        """Eigenvalue ``lambda_{j+1}`` across samples."""
        return np.array([s.eigenvalues[j] for s in self.samples])

    def extrapolate_beta(self, alpha: float, npts: int = 5, degree: int = 3) -> float:
        """Polynomial extrapolation of ``B_c`` from the samples nearest ``alpha``."""
        a = self.alphas
        nearest = np.argsort(np.abs(a - alpha))[:npts]
        coef = np.polyfit(a[nearest] - alpha, self.betas[nearest], degree)
        return float(coef[-1])

    def extrapolate_column(self, j: int, alpha: float, npts: int = 5, degree: int = 3) -> float:
        a = self.alphas
        nearest = np.argsort(np.abs(a - alpha))[:npts]
        coef = np.polyfit(a[nearest] - alpha, self.column(j)[nearest], degree)
        return float(coef[-1])


def level_alpha_c(c: float) -> float:
    """Opening of the lune whose first eigenvalue is ``c``."""
    if not c > 2.0:
        raise DomainError(f"level c={c!r} out of range: must exceed 2 (hemisphere)")
    nu = 0.5 * (-1.0 + math.sqrt(1.0 + 4.0 * c))
    return math.pi / nu


def _lambda1(settings: SolverSettings, alpha: float, beta: float, k: int | None = None) -> ExtrapolatedSpectrum:
    return settings.spectrum(Triangle(alpha, beta), k=k)


def _corrector_tol(settings: SolverSettings) -> float:
    # the contract is |lambda_1 - c| <= 10 tol; stop well inside it
    return 2.0 * settings.tol


def _newton(f_and_df, x0: float, lo: float, hi: float, ftol: float, decreasing: bool, maxiter: int = 30):
    """Safeguarded Newton for a monotone scalar function.

    ``f_and_df(x)`` returns ``(f, df, payload)``.  The bracket ``[lo, hi]``
    tightens with every evaluation; steps leaving it fall back to bisection.
    """
    x = min(max(x0, lo), hi)
    best = None
    for _ in range(maxiter):
        f, df, payload = f_and_df(x)
        if best is None or abs(f) < abs(best[1]):
            best = (x, f, payload)
        if abs(f) <= ftol:
            return x, f, payload
        # f decreasing: f > 0 means the root lies to the right
        if (f > 0) == decreasing:
            lo = x
        else:
            hi = x
        step = -f / df if df != 0 else math.nan
        x_new = x + step
        if not (lo < x_new < hi) or not math.isfinite(x_new):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) < 1e-15 * max(1.0, abs(x)):
            break
        x = x_new
    raise ContinuationError(f"corrector failed at x={best[0]!r}: residual {best[1]:.3e}")


def solve_beta(c: float, alpha: float, beta_hint: float, settings: SolverSettings | None = None):
    """The angle ``beta`` with ``lambda_1(alpha, beta) = c``.

    Returns ``(beta, spectrum)``; the spectrum is the one computed at the root.
    """
    settings = settings or SolverSettings()
    alpha_c = level_alpha_c(c)
    if not (alpha_c < alpha < math.pi):
        raise DomainError(f"alpha={alpha!r} outside ({alpha_c!r}, pi) for level {c}")

    def f(beta):
        s = _lambda1(settings, alpha, beta)
        d = hadamard_extrapolated(s, 0)
        return s.eigenvalues[0] - c, d.d_beta, s

    lo, hi = DEGENERACY_MARGIN, math.pi - DEGENERACY_MARGIN
    try:
        beta, _, spec = _newton(f, beta_hint, lo, hi, _corrector_tol(settings), decreasing=True)
    except ContinuationError as exc:
        raise ContinuationError(f"corrector failed at alpha={alpha!r}: {exc}") from exc
    return beta, spec


def solve_diagonal(c: float, hint: float | None = None, settings: SolverSettings | None = None):
    """The symmetric point ``alpha = beta`` of the level curve."""
    settings = settings or SolverSettings()
    alpha_c = level_alpha_c(c)
    if hint is None:
        hint = 0.5 * math.pi if c == 12 else 0.5 * (alpha_c + math.pi)

    def f(a):
        s = _lambda1(settings, a, a)
        d = hadamard_extrapolated(s, 0)
        return s.eigenvalues[0] - c, d.d_alpha + d.d_beta, s

    lo, hi = max(alpha_c, DEGENERACY_MARGIN), math.pi - DEGENERACY_MARGIN
    a, _, spec = _newton(f, hint, lo, hi, _corrector_tol(settings), decreasing=True)
    return a, spec


def _sample(alpha: float, beta: float, spec: ExtrapolatedSpectrum) -> CurveSample:
    return CurveSample(
        alpha=float(alpha),
        beta=float(beta),
        eigenvalues=tuple(float(x) for x in spec.eigenvalues[:3]),
        errors=tuple(float(x) for x in spec.errors[:3]),
    )


def sample_curve(c: float, alpha: float, beta_hint: float, settings: SolverSettings | None = None) -> CurveSample:
    """One corrected point of the level curve at ``alpha``."""
    beta, spec = solve_beta(c, alpha, beta_hint, settings)
    return _sample(alpha, beta, spec)


def _sweep(c, alphas, start_alpha, start_beta, start_spec, settings):
    """Predictor-corrector over ``alphas`` (ordered away from the start point)."""
    out = []
    a_prev, b_prev, s_prev = start_alpha, start_beta, start_spec
    for a in alphas:
        d = hadamard_extrapolated(s_prev, 0)
        slope = -d.d_alpha / d.d_beta
        hint = b_prev + slope * (a - a_prev)
        hint = min(max(hint, DEGENERACY_MARGIN), math.pi - DEGENERACY_MARGIN)
        b, spec = solve_beta(c, a, hint, settings)
        log.debug("level %g: alpha=%.6f beta=%.12f lambda=%s", c, a, b, spec.eigenvalues[:3])
        out.append(_sample(a, b, spec))
        a_prev, b_prev, s_prev = a, b, spec
    return out


def trace_curve(
    c: float,
    n_samples: int = 33,
    settings: SolverSettings | None = None,
    margin: float = ENDPOINT_MARGIN,
) -> LevelCurve:
    """Sample the level curve ``beta = B_c(alpha)``.

    The sweep starts at the symmetric point ``alpha = beta`` and proceeds
    outward; samples are uniform in ``alpha`` on each side of that point, so
    an odd ``n_samples`` puts it in the middle row.
    """
    if n_samples < 3:
        raise ValueError("n_samples must be >= 3")
    settings = settings or SolverSettings()
    alpha_c = level_alpha_c(c)
    a_mid, spec_mid = solve_diagonal(c, settings=settings)
    n_left = (n_samples - 1) // 2
    n_right = n_samples - 1 - n_left
    left = np.linspace(a_mid, alpha_c + margin, n_left + 1)[1:]
    right = np.linspace(a_mid, math.pi - margin, n_right + 1)[1:]
    mid = _sample(a_mid, a_mid, spec_mid)
    rs = _sweep(c, right, a_mid, a_mid, spec_mid, settings)
    ls = _sweep(c, left, a_mid, a_mid, spec_mid, settings)
    return LevelCurve(c=c, alpha_c=alpha_c, samples=ls[::-1] + [mid] + rs)


@dataclass(frozen=True)
class SplitSlopes:
    """One-sided slopes of ``lambda_2`` and ``lambda_3`` at the symmetric point.

    Slopes are derivatives with respect to ``|t|`` on each side, ``t = alpha - alpha*``.
    """

    lambda2: dict  # side ('+' or '-') -> slope
    lambda3: dict
    errors2: dict
    errors3: dict
    predicted: tuple[float, float]
    predicted_errors: tuple[float, float]
    lambda1_defect: float
    samples: list[CurveSample]


def _one_sided(steps, values, center):
    """Richardson-improved slope from quotients at steps h, 2h, 4h."""
    steps = np.asarray(steps, dtype=float)
    q = (np.asarray(values) - center) / steps
    s1 = 2 * q[0] - q[1]
    s2 = 2 * q[1] - q[2]
    return (4 * s1 - s2) / 3, abs(s1 - s2)


def split_slope(
    c: float = 12.0,
    steps=(1e-3, 2e-3, 4e-3),
    settings: SolverSettings | None = None,
) -> SplitSlopes:
    """Measure how the multiplet ``lambda_2 = lambda_3`` at the symmetric point splits."""
    settings = settings or SolverSettings()
    a0, spec0 = solve_diagonal(c, settings=settings)
    group = next((g for g in spec0.multiplets if 1 in g), None)
    if group is None or len(group) < 2 or 2 not in group:
        raise ContinuationError(f"multiplet at the symmetric point is not resolved: {spec0.eigenvalues}")
    center = 0.5 * (spec0.eigenvalues[1] + spec0.eigenvalues[2])
    pred = multiplet_extrapolated(spec0, [1, 2], (1.0, -1.0))

    samples = [_sample(a0, a0, spec0)]
    lam2, lam3, err2, err3 = {}, {}, {}, {}
    for side, sign in (("+", 1.0), ("-", -1.0)):
        vals2, vals3 = [], []
        for h in steps:
            a = a0 + sign * h
            b, spec = solve_beta(c, a, a0 - sign * h, settings)
            samples.append(_sample(a, b, spec))
            vals2.append(spec.eigenvalues[1])
            vals3.append(spec.eigenvalues[2])
        lam2[side], err2[side] = _one_sided(steps, vals2, center)
        lam3[side], err3[side] = _one_sided(steps, vals3, center)
    defect = max(abs(s.eigenvalues[0] - c) for s in samples)
    return SplitSlopes(
        lambda2=lam2,
        lambda3=lam3,
        errors2=err2,
        errors3=err3,
        predicted=tuple(float(x) for x in pred.eigenvalues),
        predicted_errors=tuple(float(x) for x in pred.errors),
        lambda1_defect=float(defect),
        samples=samples,
    )


def write_curve_csv(curve: LevelCurve, path_or_file) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in curve.samples:
            w.writerow([f"{x:.17g}" for x in s.row()])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def read_curve_csv(path_or_file, c: float | None = None) -> LevelCurve:
    """Parse a curve CSV; raises ``ValueError`` on a malformed file."""

    def _read(fh):
        rows = list(csv.reader(fh))
        if not rows or [h.strip() for h in rows[0]] != CSV_HEADER:
            raise ValueError(f"malformed curve CSV: expected header {','.join(CSV_HEADER)}")
        samples = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"malformed curve CSV: line {lineno} has {len(row)} fields")
            try:
                vals = [float(x) for x in row]
            except ValueError as exc:
                raise ValueError(f"malformed curve CSV: line {lineno}: {exc}") from None
            samples.append(CurveSample(vals[0], vals[1], tuple(vals[2:5]), tuple(vals[5:8])))
        return samples

    if hasattr(path_or_file, "read"):
        samples = _read(path_or_file)
    else:
        with open(path_or_file, newline="") as fh:
            samples = _read(fh)
    if c is None:
        c = samples[0].eigenvalues[0] if samples else math.nan
    alpha_c = level_alpha_c(c) if c > 2 else math.nan
    return LevelCurve(c=c, alpha_c=alpha_c, samples=samples)
