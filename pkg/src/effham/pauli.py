"""Exact Pauli-string algebra on an open chain of integer sites.

Coefficients are kept exact. The default coefficient type is :class:`Qi`, a
Gaussian rational (two :class:`fractions.Fraction` parts). Sympy expressions
are also accepted, which allows fully symbolic couplings; in that case every
coefficient is passed through ``expand`` before zero tests.

A :class:`PauliTerm` is a trimmed letter sequence over ``IXYZ`` anchored at
``offset`` (the site of its first letter). The empty sequence is the identity.
"""
from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Any, Iterable, Iterator, Mapping

__all__ = [
    "Qi",
    "PauliTerm",
    "PauliSum",
    "multiply",
    "commutator",
    "symmetric_bch_order2",
    "translation_sum",
    "bulk_coefficients",
]


class Qi:
    """Exact complex rational ``re + i*im``."""

    __slots__ = ("re", "im")

    def __init__(self, re: Any = 0, im: Any = 0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @classmethod
    def coerce(cls, value: Any) -> "Qi":
        if isinstance(value, Qi):
            return value
        if isinstance(value, (int, Rational)):
            return cls(value, 0)
        if isinstance(value, complex):
            return cls(Fraction(value.real), Fraction(value.imag))
        if isinstance(value, float):
            return cls(Fraction(value), 0)
        raise TypeError(f"cannot represent {value!r} as an exact complex rational")

    def __add__(self, other):
        if _is_symbolic(other):
            return self.to_sympy() + other
        o = Qi.coerce(other)
        return Qi(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return Qi(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if _is_symbolic(other):
            return self.to_sympy() * other
        o = Qi.coerce(other)
        return Qi(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Qi.coerce(other)
        den = o.re * o.re + o.im * o.im
        return self * Qi(o.re / den, -o.im / den)

    def __eq__(self, other):
        try:
            o = Qi.coerce(other)
        except TypeError:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def conjugate(self) -> "Qi":
        return Qi(self.re, -self.im)

    def is_real(self) -> bool:
        return self.im == 0

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def to_sympy(self):
        import sympy

        return sympy.Rational(self.re.numerator, self.re.denominator) + sympy.I * sympy.Rational(
            self.im.numerator, self.im.denominator
        )

    def __repr__(self):
        if self.im == 0:
            return f"Qi({self.re})"
        return f"Qi({self.re}, {self.im})"


def _is_symbolic(value: Any) -> bool:
    return hasattr(value, "free_symbols")


def _clean(c: Any) -> Any:
    if _is_symbolic(c):
        return c.expand()
    return c if isinstance(c, Qi) else Qi.coerce(c)


def _rotate(c: Any, k: int) -> Any:
    """Multiply ``c`` by ``i**k``."""
    k %= 4
    if k == 0:
        return c
    if _is_symbolic(c):
        import sympy

        return (c * sympy.I**k).expand()
    c = Qi.coerce(c)
    if k == 1:
        return Qi(-c.im, c.re)
    if k == 2:
        return Qi(-c.re, -c.im)
    return Qi(c.im, -c.re)


def _is_zero(c: Any) -> bool:
    if _is_symbolic(c):
        return c == 0
    return not c


def _is_real(c: Any) -> bool:
    if _is_symbolic(c):
        import sympy

        return sympy.simplify(sympy.im(c)) == 0
    return Qi.coerce(c).is_real()


# single-site products: P*Q = i**k * R
_SITE_PRODUCT: dict[tuple[str, str], tuple[int, str]] = {}
for _p in "IXYZ":
    _SITE_PRODUCT[("I", _p)] = (0, _p)
    _SITE_PRODUCT[(_p, "I")] = (0, _p)
    _SITE_PRODUCT[(_p, _p)] = (0, "I")
for _a, _b, _c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
    _SITE_PRODUCT[(_a, _b)] = (1, _c)
    _SITE_PRODUCT[(_b, _a)] = (3, _c)


def _trim(letters: str, offset: int) -> tuple[str, int]:
    stripped = letters.lstrip("I")
    offset += len(letters) - len(stripped)
    stripped = stripped.rstrip("I")
    if not stripped:
        return "", 0
    return stripped, offset


class PauliTerm:
    """A coefficient times a Pauli string anchored at ``offset``."""

    __slots__ = ("coeff", "letters", "offset")

    def __init__(self, coeff: Any, letters: str, offset: int = 0):
        letters = letters.upper()
        if set(letters) - set("IXYZ"):
            raise ValueError(f"invalid Pauli letters {letters!r}")
        self.letters, self.offset = _trim(letters, offset)
        self.coeff = _clean(coeff)

    @property
    def key(self) -> tuple[str, int]:
        return self.letters, self.offset

    @property
    def support(self) -> int:
        return len(self.letters)

    def sites(self) -> dict[int, str]:
        return {self.offset + k: p for k, p in enumerate(self.letters) if p != "I"}

    def __eq__(self, other):
        if not isinstance(other, PauliTerm):
            return NotImplemented
        return self.key == other.key and self.coeff == other.coeff

    def __repr__(self):
        return f"PauliTerm({self.coeff!r}, {self.letters or 'I'!r}, {self.offset})"


def multiply(a: PauliTerm, b: PauliTerm) -> PauliTerm:
    """Exact product ``a*b`` with the phase picked up on overlapping sites."""
    if not a.letters:
        return PauliTerm(_clean(a.coeff * b.coeff), b.letters, b.offset)
    if not b.letters:
        return PauliTerm(_clean(a.coeff * b.coeff), a.letters, a.offset)
    lo = min(a.offset, b.offset)
    hi = max(a.offset + a.support, b.offset + b.support)
    phase = 0
    out = []
    for site in range(lo, hi):
        pa = a.letters[site - a.offset] if 0 <= site - a.offset < a.support else "I"
        pb = b.letters[site - b.offset] if 0 <= site - b.offset < b.support else "I"
        k, r = _SITE_PRODUCT[(pa, pb)]
        phase += k
        out.append(r)
    return PauliTerm(_rotate(_clean(a.coeff * b.coeff), phase), "".join(out), lo)


class PauliSum:
    """Simplified linear combination of Pauli strings, keyed by ``(letters, offset)``."""

    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[PauliTerm] | Mapping[tuple[str, int], Any] = ()):
        self.terms: dict[tuple[str, int], Any] = {}
        items = terms.items() if isinstance(terms, Mapping) else ((t.key, t.coeff) for t in terms)
        for (letters, offset), c in items:
            self._accumulate(PauliTerm(c, letters, offset).key, c)

    def _accumulate(self, key, c):
        if key in self.terms:
            s = _clean(self.terms[key] + c)
        else:
            s = _clean(c)
        if _is_zero(s):
            self.terms.pop(key, None)
        else:
            self.terms[key] = s

    @classmethod
    def from_term(cls, coeff: Any, letters: str, offset: int = 0) -> "PauliSum":
        return cls([PauliTerm(coeff, letters, offset)])

    def __iter__(self) -> Iterator[PauliTerm]:
        for (letters, offset), c in sorted(self.terms.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            yield PauliTerm(c, letters, offset)

    def __len__(self):
        return len(self.terms)

    def __bool__(self):
        return bool(self.terms)

    def __add__(self, other: "PauliSum") -> "PauliSum":
        out = self.copy()
        for key, c in other.terms.items():
            out._accumulate(key, c)
        return out

    def __neg__(self):
        return self * -1

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            out = PauliSum()
            for ta in self:
                for tb in other:
                    p = multiply(ta, tb)
                    out._accumulate(p.key, p.coeff)
            return out
        out = PauliSum()
        for key, c in self.terms.items():
            out._accumulate(key, c * other)
        return out

    def __rmul__(self, scalar):
        return self * scalar

    def __eq__(self, other):
        if not isinstance(other, PauliSum):
            return NotImplemented
        if self.terms.keys() != other.terms.keys():
            return False
        return all(_is_zero(_clean(self.terms[k] - other.terms[k])) for k in self.terms)

    def copy(self) -> "PauliSum":
        out = PauliSum()
        out.terms = dict(self.terms)
        return out

    def coefficient(self, letters: str, offset: int = 0) -> Any:
        key = PauliTerm(1, letters, offset).key
        return self.terms.get(key, Qi(0))

    def is_hermitian(self) -> bool:
        """Exact test: every Pauli string is Hermitian, so the sum is iff all coefficients are real."""
        return all(_is_real(c) for c in self.terms.values())

    def __repr__(self):
        body = " + ".join(f"({t.coeff})*{t.letters or 'I'}@{t.offset}" for t in self)
        return f"PauliSum[{body or '0'}]"


def commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    """``ab - ba``, simplified exactly."""
    out = PauliSum()
    for ta in a:
        for tb in b:
            ab = multiply(ta, tb)
            ba = multiply(tb, ta)
            # Pauli strings either commute (ab == ba) or anticommute.
            if ab.coeff == ba.coeff:
                continue
            out._accumulate(ab.key, _clean(ab.coeff * 2))
    return out


def symmetric_bch_order2(hx: PauliSum, hz: PauliSum, tau: Any) -> PauliSum:
    """Effective generator of ``exp(-i tau hx/2) exp(-i tau hz) exp(-i tau hx/2)`` through order tau**2.

    Returns ``hx + hz + tau**2/24 [[hz,hx],hx] + tau**2/12 [[hz,hx],hz]``.
    """
    if not _is_symbolic(tau) and tau < 0:
        raise ValueError("tau must be non-negative")
    tau2 = tau * tau
    inner = commutator(hz, hx)
    if _is_symbolic(tau2):
        import sympy

        c1, c2 = tau2 / 24, tau2 / 12
        c1, c2 = sympy.expand(c1), sympy.expand(c2)
    else:
        c1, c2 = Qi.coerce(Fraction(tau2) / 24), Qi.coerce(Fraction(tau2) / 12)
    out = hx + hz
    if not _is_zero(c1):
        out = out + commutator(inner, hx) * c1 + commutator(inner, hz) * c2
    return out


def translation_sum(letters: str, coeff: Any, n_sites: int) -> PauliSum:
    """``coeff * sum_j T_j(letters)`` over all anchors of an open segment of ``n_sites`` sites."""
    letters, _ = _trim(letters.upper(), 0)
    return PauliSum([PauliTerm(coeff, letters, j) for j in range(n_sites - len(letters) + 1)])


def bulk_coefficients(psum: PauliSum, anchor: int) -> dict[str, Any]:
    """Coefficients of the terms whose first non-identity site is ``anchor``.

    For a sum built from translation sums on a long open segment, terms anchored
    far from both edges carry the exact translation-invariant (bulk) couplings.
    """
    return {letters: c for (letters, offset), c in psum.terms.items() if offset == anchor}
