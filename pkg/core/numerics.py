"""Natural cubic spline fitting and evaluation.

Piece i covers [x_i, x_{i+1}] and evaluates
a_i + b_i·dx + c_i·dx² + d_i·dx³ with dx = x - x_i. Outside the knot
range the spline is clamped to the boundary values.
"""

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Tuple, Union

import numpy as np

from core.exceptions import ValidationError

ArrayLike = Union[float, Sequence[float], np.ndarray]


class SamplePoint(NamedTuple):
    """A knot of the interpolant."""
    x: float
    y: float


@dataclass(frozen=True)
class CubicSpline:
    """Piecewise cubic with per-interval coefficients."""
    knots: Tuple[float, ...]
    a: Tuple[float, ...]
    b: Tuple[float, ...]
    c: Tuple[float, ...]
    d: Tuple[float, ...]
    y_end: float

    @property
    def pieces(self) -> int:
        return len(self.knots) - 1

    def piece(self, index: int, x: float, derivative: int = 0) -> float:
        """Evaluate piece ``index`` (or one of its derivatives) at ``x``.

        No clamping: used to inspect continuity at interior knots.
        """
        dx = x - self.knots[index]
        a, b, c, d = self.a[index], self.b[index], self.c[index], self.d[index]
        if derivative == 0:
            return a + dx * (b + dx * (c + dx * d))
        if derivative == 1:
            return b + dx * (2.0 * c + 3.0 * d * dx)
        if derivative == 2:
            return 2.0 * c + 6.0 * d * dx
        raise ValidationError("Derivative order must be 0, 1 or 2", field="derivative", value=derivative)

    def __call__(self, x: ArrayLike) -> Union[float, np.ndarray]:
        return eval_spline(self, x)


def _solve_tridiagonal(
    lower: np.ndarray,
    diag: np.ndarray,
    upper: np.ndarray,
    rhs: np.ndarray
) -> np.ndarray:
    """Thomas algorithm; the natural-spline system is diagonally dominant."""
    n = len(diag)
    diag = diag.astype(float).copy()
    rhs = rhs.astype(float).copy()
    for i in range(1, n):
        m = lower[i] / diag[i - 1]
        diag[i] -= m * upper[i - 1]
        rhs[i] -= m * rhs[i - 1]
    solution = np.zeros(n)
    solution[-1] = rhs[-1] / diag[-1]
    for i in range(n - 2, -1, -1):
        solution[i] = (rhs[i] - upper[i] * solution[i + 1]) / diag[i]
    return solution


def fit_natural_spline(points: Iterable[Tuple[float, float]]) -> CubicSpline:
    """Fit a natural cubic spline (zero second derivative at both ends).

    Args:
        points: (x, y) pairs in any order; x values must be distinct

    Returns:
        CubicSpline interpolating every point

    Raises:
        ValidationError: fewer than two points or duplicate x values
    """
    ordered = sorted((float(x), float(y)) for x, y in points)
    if len(ordered) < 2:
        raise ValidationError(
            "A spline needs at least two points",
            field="points",
            value=len(ordered),
        )
    xs = np.array([p[0] for p in ordered])
    ys = np.array([p[1] for p in ordered])
    h = np.diff(xs)
    if np.any(h <= 0.0):
        duplicate = float(xs[1:][h <= 0.0][0])
        raise ValidationError("Duplicate x value in spline points", field="points", value=duplicate)

    n = len(xs) - 1
    second = np.zeros(n + 1)
    if n > 1:
        slopes = np.diff(ys) / h
        rhs = 6.0 * np.diff(slopes)
        diag = 2.0 * (h[:-1] + h[1:])
        lower = np.concatenate(([0.0], h[1:-1]))
        upper = np.concatenate((h[1:-1], [0.0]))
        second[1:n] = _solve_tridiagonal(lower, diag, upper, rhs)

    a = ys[:-1]
    b = (ys[1:] - ys[:-1]) / h - h * (2.0 * second[:-1] + second[1:]) / 6.0
    c = second[:-1] / 2.0
    d = (second[1:] - second[:-1]) / (6.0 * h)
    return CubicSpline(
        knots=tuple(float(x) for x in xs),
        a=tuple(float(v) for v in a),
        b=tuple(float(v) for v in b),
        c=tuple(float(v) for v in c),
        d=tuple(float(v) for v in d),
        y_end=float(ys[-1]),
    )


def eval_spline(spline: CubicSpline, x: ArrayLike) -> Union[float, np.ndarray]:
    """Evaluate the spline, clamping to the boundary values outside the knots.

    Scalars return a float, sequences an ndarray.
    """
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    knots = np.asarray(spline.knots)
    index = np.clip(np.searchsorted(knots, xs, side="right") - 1, 0, spline.pieces - 1)
    dx = xs - knots[index]
    a = np.asarray(spline.a)[index]
    b = np.asarray(spline.b)[index]
    c = np.asarray(spline.c)[index]
    d = np.asarray(spline.d)[index]
    values = a + dx * (b + dx * (c + dx * d))

    first_y = spline.a[0]
    last_y = spline.y_end
    values = np.where(xs < knots[0], first_y, values)
    values = np.where(xs >= knots[-1], last_y, values)
    if scalar:
        return float(values[0])
    return values

