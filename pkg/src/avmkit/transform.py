"""Identities between lattice shift sums and generating-function derivatives.

For Q(x, y) = sum A[k,l] x^k y^l the four shift patterns appearing in the
grid ODE correspond to first-order differential expressions:

  sum [(l+1) A[k-1,l+1] - l A[k,l]] x^k y^l = (x - y) Q_y
  sum [(k+1) A[k+1,l-1] - k A[k,l]] x^k y^l = (y - x) Q_x
  sum [(l+1) A[k,l+1]   - l A[k,l]] x^k y^l = (1 - y) Q_y
  sum [A[k-1,l]         -   A[k,l]] x^k y^l = (x - 1) Q

These hold exactly for grids supported strictly inside the truncation
window. Both sides are computed here by independent paths: the left as an
explicit lattice sum, the right via polynomial coefficient calculus.
"""

import numpy as np
from numpy.polynomial import polynomial as P

PATTERN_NAMES = ("adopt_in", "adopt_out", "rewire_shed", "rewire_attach")


def poly_eval(values, x, y):
    """Evaluate Q(x, y) = sum values[k,l] x^k y^l."""
    return float(P.polyval2d(x, y, np.asarray(values, dtype=float)))


def poly_dx(values):
    """Coefficient array of dQ/dx."""
    values = np.asarray(values, dtype=float)
    k = np.arange(1, values.shape[0])
    return values[1:, :] * k[:, None]


def poly_dy(values):
    """Coefficient array of dQ/dy."""
    values = np.asarray(values, dtype=float)
    l = np.arange(1, values.shape[1])
    return values[:, 1:] * l[None, :]


def _shift_x(coeffs):
    out = np.zeros((coeffs.shape[0] + 1, coeffs.shape[1]))
    out[1:, :] = coeffs
    return out


def _shift_y(coeffs):
    out = np.zeros((coeffs.shape[0], coeffs.shape[1] + 1))
    out[:, 1:] = coeffs
    return out


def _pad_to(coeffs, shape):
    out = np.zeros(shape)
    out[:coeffs.shape[0], :coeffs.shape[1]] = coeffs
    return out


def lattice_pattern(values, name):
    """Shift-pattern lattice array, computed by direct index arithmetic."""
    values = np.asarray(values, dtype=float)
    km = values.shape[0] - 1
    l = np.arange(km + 1, dtype=float)
    k = l
    out = np.zeros_like(values)
    if name == "adopt_in":
        out[1:, :-1] += values[:-1, 1:] * l[None, 1:]
        out -= values * l[None, :]
    elif name == "adopt_out":
        out[:-1, 1:] += values[1:, :-1] * k[1:, None]
        out -= values * k[:, None]
    elif name == "rewire_shed":
        out[:, :-1] += values[:, 1:] * l[None, 1:]
        out -= values * l[None, :]
    elif name == "rewire_attach":
        out[1:, :] += values[:-1, :]
        out -= values
    else:
        raise ValueError(f"unknown pattern {name!r}")
    return out


def differential_pattern(values, name):
    """Same pattern via polynomial coefficient calculus, padded one order."""
    values = np.asarray(values, dtype=float)
    shape = (values.shape[0] + 1, values.shape[1] + 1)
    qy = poly_dy(values)
    qx = poly_dx(values)
    if name == "adopt_in":                      # (x - y) Q_y
        coeffs = _pad_to(_shift_x(qy), shape) - _pad_to(_shift_y(qy), shape)
    elif name == "adopt_out":                   # (y - x) Q_x
        coeffs = _pad_to(_shift_y(qx), shape) - _pad_to(_shift_x(qx), shape)
    elif name == "rewire_shed":                 # (1 - y) Q_y
        coeffs = _pad_to(qy, shape) - _pad_to(_shift_y(qy), shape)
    elif name == "rewire_attach":               # (x - 1) Q
        coeffs = _pad_to(_shift_x(values), shape) - _pad_to(values, shape)
    else:
        raise ValueError(f"unknown pattern {name!r}")
    return coeffs


def shift_identity_residual(values, x, y):
    """Max |lattice sum - differential expression| over the four patterns.

    The lattice side is evaluated as an explicit double sum; the derivative
    side from Q's polynomial coefficients. Requires interior support.
    """
    values = np.asarray(values, dtype=float)
    q = poly_eval(values, x, y)
    qx = float(P.polyval2d(x, y, _pad_to(poly_dx(values), values.shape)))
    qy = float(P.polyval2d(x, y, _pad_to(poly_dy(values), values.shape)))
    diff_side = {
        "adopt_in": (x - y) * qy,
        "adopt_out": (y - x) * qx,
        "rewire_shed": (1.0 - y) * qy,
        "rewire_attach": (x - 1.0) * q,
    }
    worst = 0.0
    for name in PATTERN_NAMES:
        lattice = _lattice_sum(values, name, x, y)
        worst = max(worst, abs(lattice - diff_side[name]))
    return worst


def coefficient_residual(values):
    """Max coefficientwise gap between lattice and polynomial-calculus paths."""
    values = np.asarray(values, dtype=float)
    shape = (values.shape[0] + 1, values.shape[1] + 1)
    worst = 0.0
    for name in PATTERN_NAMES:
        lattice = _pad_to(lattice_pattern(values, name), shape)
        worst = max(worst, float(np.abs(lattice - differential_pattern(values, name)).max()))
    return worst


def _lattice_sum(values, name, x, y):
    km = values.shape[0] - 1
    total = 0.0
    for k in range(km + 1):
        for l in range(km + 1):
            if name == "adopt_in":
                gain = (l + 1) * values[k - 1, l + 1] if k >= 1 and l + 1 <= km else 0.0
                loss = l * values[k, l]
            elif name == "adopt_out":
                gain = (k + 1) * values[k + 1, l - 1] if l >= 1 and k + 1 <= km else 0.0
                loss = k * values[k, l]
            elif name == "rewire_shed":
                gain = (l + 1) * values[k, l + 1] if l + 1 <= km else 0.0
                loss = l * values[k, l]
            else:
                gain = values[k - 1, l] if k >= 1 else 0.0
                loss = values[k, l]
            total += (gain - loss) * x ** k * y ** l
    return total
