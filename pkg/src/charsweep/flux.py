"""Polynomial flux models G(u) with exact derivatives and inversion of G'.

Every supported flux is a polynomial, so derivatives of any order are exact
and the chord slope (G(b) - G(a)) / (b - a) can be evaluated without
cancellation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

MAX_ORDER = 8
INV_TOL = 1e-12


class FluxError(ValueError):
    pass


class UnsupportedOrder(FluxError):
    pass


class OutOfRange(FluxError):
    pass


class InvalidBracket(FluxError):
    pass


class FluxKind(str, Enum):
    BURGERS = "burgers"
    QUARTIC = "quartic"
    POLY = "poly"


def _poly_deriv(c: Sequence[float]) -> tuple[float, ...]:
    return tuple(i * c[i] for i in range(1, len(c))) or (0.0,)


def _horner(c: Sequence[float], u: float) -> float:
    acc = 0.0
    for a in reversed(c):
        acc = acc * u + a
    return acc


@dataclass(frozen=True)
class FluxModel:
    """Flux G(u) = sum(coeffs[i] * u**i).

    Use :meth:`burgers`, :meth:`quartic` or :meth:`poly` to build one.
    """

    kind: FluxKind
    coeffs: tuple[float, ...]
    _derivs: tuple[tuple[float, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = tuple(float(a) for a in self.coeffs)
        if not c:
            raise FluxError("flux needs at least one coefficient")
        if not all(math.isfinite(a) for a in c):
            raise FluxError("flux coefficients must be finite")
        while len(c) > 1 and c[-1] == 0.0:
            c = c[:-1]
        object.__setattr__(self, "coeffs", c)
        derivs = [c]
        for _ in range(MAX_ORDER + 1):
            derivs.append(_poly_deriv(derivs[-1]))
        object.__setattr__(self, "_derivs", tuple(derivs))

    @classmethod
    def burgers(cls) -> "FluxModel":
        return cls(FluxKind.BURGERS, (0.0, 0.0, 0.5))

    @classmethod
    def quartic(cls) -> "FluxModel":
        return cls(FluxKind.QUARTIC, (0.0, 0.0, 0.0, 0.0, 1.0 / 12.0))

    @classmethod
    def poly(cls, coeffs: Sequence[float]) -> "FluxModel":
        return cls(FluxKind.POLY, tuple(coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def derivative_coeffs(self, order: int) -> tuple[float, ...]:
        if order < 0 or order > MAX_ORDER + 1:
            raise UnsupportedOrder(f"derivative order {order} exceeds MAX_ORDER={MAX_ORDER}")
        return self._derivs[order]

    # fast scalar paths used by the integrators
    def G(self, u: float) -> float:
        return _horner(self.coeffs, u)

    def dG(self, u: float) -> float:
        return _horner(self._derivs[1], u)

    def d2G(self, u: float) -> float:
        return _horner(self._derivs[2], u)

    def chord(self, a: float, b: float) -> float:
        """(G(b) - G(a)) / (b - a), evaluated without subtracting G values.

        Equals G'(a) when a == b.
        """
        total = 0.0
        for i in range(1, len(self.coeffs)):
            ci = self.coeffs[i]
            if ci == 0.0:
                continue
            # sum_{j<i} a^j b^(i-1-j)
            s = 0.0
            aj = 1.0
            for j in range(i):
                s += aj * b ** (i - 1 - j)
                aj *= a
            total += ci * s
        return total

    def chord_minus_speed(self, a: float, b: float) -> float:
        """chord(a, b) - G'(a), expanded in powers of (b - a)."""
        d = b - a
        total = 0.0
        dpow = d
        fact = 2.0
        for m in range(2, len(self.coeffs)):
            total += _horner(self._derivs[m], a) * dpow / fact
            dpow *= d
            fact *= m + 1
        return total


def eval_flux(model: FluxModel, u: float) -> float:
    return model.G(u)


def flux_derivative(model: FluxModel, u: float, order: int) -> float:
    """G^(order)(u) by exact polynomial differentiation."""
    if order < 1 or order > MAX_ORDER:
        raise UnsupportedOrder(f"order must be in [1, {MAX_ORDER}], got {order}")
    return _horner(model._derivs[order], u)


def speed_is_monotone(model: FluxModel, lo: float, hi: float, samples: int = 65) -> bool:
    """True when G'' keeps one sign on [lo, hi] (zeros allowed)."""
    if hi < lo:
        lo, hi = hi, lo
    pos = neg = False
    for i in range(samples):
        v = model.d2G(lo + (hi - lo) * i / (samples - 1))
        pos |= v > 0.0
        neg |= v < 0.0
    return not (pos and neg)


def invert_speed(model: FluxModel, c: float, bracket: tuple[float, float]) -> float:
    """Solve G'(u) = c for u inside ``bracket``.

    Bisection keeps the iterate bracketed; Newton steps are taken whenever
    they land inside the current bracket.

    Raises
    ------
    OutOfRange
        ``c`` is not in G'(bracket).
    InvalidBracket
        G'' changes sign on the bracket, so G' is not monotone there.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if hi < lo:
        lo, hi = hi, lo
    if not speed_is_monotone(model, lo, hi):
        raise InvalidBracket(f"G' is not monotone on [{lo}, {hi}]")
    flo = model.dG(lo) - c
    fhi = model.dG(hi) - c
    scale = max(1.0, abs(c))
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        # tolerate rounding right at a bracket end
        if min(abs(flo), abs(fhi)) <= 1e-12 * scale:
            return lo if abs(flo) < abs(fhi) else hi
        raise OutOfRange(f"speed {c} outside G'([{lo}, {hi}]) = [{model.dG(lo)}, {model.dG(hi)}]")
    increasing = fhi > 0.0
    # secant guess is exact for Burgers
    u = lo - flo * (hi - lo) / (fhi - flo)
    for _ in range(200):
        r = model.dG(u) - c
        if r == 0.0:
            return u
        if (r > 0.0) == increasing:
            hi = u
        else:
            lo = u
        d = model.d2G(u)
        nxt = u - r / d if d != 0.0 else None
        if nxt is None or not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        # stop on the step, not the residual: G' may be flat here
        if abs(nxt - u) <= INV_TOL * max(1e-3, abs(u)) or hi - lo <= 4e-16 * max(1.0, abs(u)):
            return nxt
        u = nxt
    return u


def flux_from_spec(name: str, coeffs: Sequence[float] | None = None) -> FluxModel:
    name = name.strip().lower()
    if name == "burgers":
        return FluxModel.burgers()
    if name == "quartic":
        return FluxModel.quartic()
    if name == "poly":
        if not coeffs:
            raise FluxError("flux = \"poly\" requires coeffs = [c0, c1, ...]")
        return FluxModel.poly(coeffs)
    raise FluxError(f"unknown flux {name!r}; expected burgers, quartic or poly")
