"""Potentials on the sphere and the polynomial input grammar.

Grammar (whitespace is ignored)::

    expr     := sign? monomial (("+" | "-") monomial)*
    monomial := factor ("*" factor)*
    factor   := NUMBER | VAR ("^" INTEGER)?
    VAR      := "x1" | "x2" | "x3"

``NUMBER`` accepts the usual decimal and exponent forms (``2``, ``0.5``,
``1e-3``).
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from math import ceil, sqrt
from typing import Callable, Optional

import numpy as np

from .harmonics import Poly, coeffs_to_poly, sh_degrees, sh_dim, sh_index, sh_matrix
from .sphere import gauss_sphere_rule


class PotentialSyntaxError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.column = col


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>x[123])|(?P<op>[-+*^]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise PotentialSyntaxError(f"unexpected character {text[bad]!r}", text, bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def parse_polynomial(text: str) -> Poly:
    """Parse the polynomial grammar into a :class:`Poly`."""
    tokens = _tokenize(text)
    i = 0

    def peek():
        return tokens[i]

    def take():
        nonlocal i
        tok = tokens[i]
        i += 1
        return tok

    def factor():
        kind, val, pos = take()
        if kind == "num":
            return Poly.const(float(val))
        if kind == "var":
            var = Poly.var(int(val[1]) - 1)
            if peek()[1] == "^":
                take()
                k2, v2, p2 = take()
                if k2 != "num" or not re.fullmatch(r"\d+", v2):
                    raise PotentialSyntaxError("exponent must be a non-negative integer", text, p2)
                return var ** int(v2)
            return var
        raise PotentialSyntaxError(f"expected number or variable, got {val or 'end of input'!r}", text, pos)

    def monomial():
        out = factor()
        while peek()[1] == "*":
            take()
            out = out * factor()
        return out

    sign = 1.0
    if peek()[1] in "+-" and peek()[0] == "op":
        sign = -1.0 if take()[1] == "-" else 1.0
    total = monomial() * sign
    while peek()[0] != "end":
        kind, val, pos = take()
        if val not in "+-" or kind != "op":
            raise PotentialSyntaxError(f"expected '+' or '-', got {val!r}", text, pos)
        term = monomial()
        total = total + term if val == "+" else total - term
    return total


def _project(fn: Callable, degree: int) -> np.ndarray:
    rule = gauss_sphere_rule(max(degree, 1))
    basis = sh_matrix(degree, rule.nodes)
    return basis.T @ (rule.weights * fn(rule.nodes))


@dataclass(frozen=True)
class PotentialSpec:
    """Real potential ``V`` as a finite real-harmonic expansion.

    ``coeffs`` is the flat coefficient vector up to degree ``degree``;
    ``closed_form`` (optional) evaluates ``V`` at ambient points.
    """

    coeffs: np.ndarray
    closed_form: Optional[Callable] = field(default=None, compare=False, repr=False)
    label: str = ""

    @property
    def degree(self) -> int:
        return int(round(sqrt(len(self.coeffs)))) - 1

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self.closed_form is not None:
            return np.asarray(self.closed_form(pts), dtype=float)
        vals = sh_matrix(self.degree, pts.reshape(-1, 3)) @ self.coeffs
        return vals.reshape(pts.shape[:-1])

    def synthesize(self, pts) -> np.ndarray:
        return sh_matrix(self.degree, np.atleast_2d(pts)) @ self.coeffs

    def poly(self) -> Poly:
        return coeffs_to_poly(self.coeffs)

    def sup_norm_bound(self) -> float:
        """Cheap upper bound on ``max |V|`` (sum of ``|c| sqrt((2l+1)/4pi)``)."""
        l = sh_degrees(self.degree)
        return float(np.sum(np.abs(self.coeffs) * np.sqrt((2 * l + 1) / (4 * np.pi))))

    def digest(self) -> str:
        data = np.round(self.coeffs, 14).astype("<f8").tobytes()
        return hashlib.sha256(data).hexdigest()[:16]

    def rotated(self, R) -> "PotentialSpec":
        """``x -> V(R^T x)``, projected exactly onto the same degree."""
        R = np.asarray(R, dtype=float)
        fn = lambda pts: self(np.asarray(pts) @ R)
        return PotentialSpec(_project(fn, self.degree), fn, self.label)

    @classmethod
    def from_polynomial(cls, text_or_poly, label: str = "") -> "PotentialSpec":
        poly = parse_polynomial(text_or_poly) if isinstance(text_or_poly, str) else text_or_poly
        degree = poly.degree
        coeffs = _project(poly, degree)
        coeffs[np.abs(coeffs) < 1e-15] = 0.0
        return cls(coeffs, poly, label or (text_or_poly if isinstance(text_or_poly, str) else ""))

    @classmethod
    def from_harmonics(cls, triples, label: str = "") -> "PotentialSpec":
        triples = [(int(l), int(m), float(c)) for l, m, c in triples]
        for l, m, _ in triples:
            if l < 0 or abs(m) > l:
                raise ValueError(f"invalid harmonic index (l={l}, m={m})")
        D = max((l for l, _, _ in triples), default=0)
        coeffs = np.zeros(sh_dim(D))
        for l, m, c in triples:
            coeffs[sh_index(l, m)] += c
        return cls(coeffs, None, label)

    @classmethod
    def from_function(cls, fn: Callable, degree: int, label: str = "") -> "PotentialSpec":
        """Project a function known to be band-limited to ``degree``."""
        return cls(_project(fn, degree), fn, label)

    @classmethod
    def constant(cls, c: float) -> "PotentialSpec":
        return cls.from_polynomial(Poly.const(c), label=f"{c}")

    @classmethod
    def random(cls, rng: np.random.Generator, degree: int, scale: float = 1.0) -> "PotentialSpec":
        coeffs = scale * rng.standard_normal(sh_dim(degree))
        return cls(coeffs, None, f"random(D={degree})")


PRESETS = {
    "quadratic": "x1^2 + 2*x2^2 + 3*x3^2",
    "zonal": "x3^2",
    "odd": "x3",
    "constant": "1",
}


def preset(name: str) -> PotentialSpec:
    try:
        return PotentialSpec.from_polynomial(PRESETS[name], label=name)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def spectral_degree_for(potential: PotentialSpec, L_max: int) -> int:
    """Gauss rule parameter making ``<Y_a, V Y_b>`` exact up to ``L_max``."""
    return L_max + ceil(potential.degree / 2)
