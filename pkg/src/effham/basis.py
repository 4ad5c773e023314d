"""Translation- and reflection-symmetrized operator bases on a periodic chain.

Site ``j`` is bit ``j`` of a computational basis index; a down spin is bit 0
and ``Z`` has eigenvalue ``+1`` on up, ``-1`` on down.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SymmetrizedOperator",
    "OperatorBasis",
    "RealizedOperator",
    "build_basis",
    "realize",
    "pauli_string_matrix",
    "project_onto_basis",
    "write_basis",
    "read_basis",
]

HERMITICITY_TOL = 1e-10


@dataclass(frozen=True, order=True)
class SymmetrizedOperator:
    """Sum over all translates of a Pauli string, plus those of its mirror image when distinct."""

    representative: str
    mirror_partner_distinct: bool = field(compare=False, default=False)

    @classmethod
    def from_string(cls, letters: str) -> "SymmetrizedOperator":
        letters = letters.upper()
        if not letters or letters[0] == "I" or letters[-1] == "I":
            raise ValueError(f"representative {letters!r} must have non-identity endpoints")
        if set(letters) - set("IXYZ"):
            raise ValueError(f"invalid Pauli letters {letters!r}")
        rev = letters[::-1]
        return cls(min(letters, rev), letters != rev)

    @classmethod
    def from_label(cls, label: str) -> "SymmetrizedOperator":
        return cls.from_string(label.split("+")[0].strip())

    @property
    def reversed(self) -> str:
        return self.representative[::-1]

    @property
    def support(self) -> int:
        return len(self.representative)

    @property
    def label(self) -> str:
        if self.mirror_partner_distinct:
            return f"{self.representative}+{self.reversed}"
        return self.representative

    @property
    def strings(self) -> tuple[str, ...]:
        if self.mirror_partner_distinct:
            return self.representative, self.reversed
        return (self.representative,)

    @property
    def y_count(self) -> int:
        return self.representative.count("Y")

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class OperatorBasis:
    max_support: int
    elements: tuple[SymmetrizedOperator, ...]
    parity_filter: bool = True
    interior_identity: bool = True

    @property
    def N(self) -> int:
        return len(self.elements)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    @property
    def labels(self) -> list[str]:
        return [op.label for op in self.elements]

    def index(self, name: str) -> int:
        """Position of the element named by a label or by either orientation of its string."""
        target = SymmetrizedOperator.from_label(name)
        for i, op in enumerate(self.elements):
            if op.representative == target.representative:
                return i
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        try:
            self.index(name)
        except (KeyError, ValueError):
            return False
        return True

    def subset(self, names: Iterable[str]) -> "OperatorBasis":
        """Sub-basis keeping this basis' ordering."""
        keep = {self.index(n) for n in names}
        return OperatorBasis(
            self.max_support,
            tuple(op for i, op in enumerate(self.elements) if i in keep),
            self.parity_filter,
            self.interior_identity,
        )

    def check_ring(self, L: int) -> None:
        """Raise if two distinct elements realize overlapping Pauli strings on a ring of ``L`` sites."""
        if self.max_support > L:
            raise ValueError(f"max support {self.max_support} exceeds chain length {L}")
        owner: dict[tuple[int, int, int], str] = {}
        for op in self.elements:
            for key in _ring_strings(op, L):
                prev = owner.setdefault(key, op.label)
                if prev != op.label:
                    raise ValueError(f"{prev} and {op.label} alias on a ring of {L} sites")


def _ordered(ops: Iterable[SymmetrizedOperator]) -> tuple[SymmetrizedOperator, ...]:
    return tuple(sorted(set(ops), key=lambda o: (o.support, o.representative)))


def build_basis(
    R: int,
    parity_filter: bool = True,
    interior_identity: bool = True,
    L: int | None = None,
) -> OperatorBasis:
    """Enumerate every symmetrized class of Pauli strings with support ``1..R``.

    ``parity_filter`` keeps only strings with an even number of ``Y`` letters.
    ``interior_identity=False`` forbids identities anywhere in the string; with
    ``parity_filter=False`` that rule gives 207 classes at ``R=5``.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    if L is not None and R > L:
        raise ValueError(f"R={R} exceeds chain length L={L}")
    ops = set()
    edge = "XYZ"
    inner = "IXYZ" if interior_identity else "XYZ"
    for r in range(1, R + 1):
        if r == 1:
            candidates = ((p,) for p in edge)
        else:
            candidates = itertools.product(edge, *([inner] * (r - 2)), edge)
        for letters in candidates:
            s = "".join(letters)
            if parity_filter and s.count("Y") % 2:
                continue
            ops.add(SymmetrizedOperator.from_string(s))
    basis = OperatorBasis(R, _ordered(ops), parity_filter, interior_identity)
    if L is not None:
        basis.check_ring(L)
    return basis


def _string_masks(letters: str, anchor: int, L: int) -> tuple[int, int, int]:
    """(flip mask, sign mask, Y count) of a Pauli string placed at ``anchor`` on a ring."""
    flip = sign = 0
    ny = 0
    for k, p in enumerate(letters):
        if p == "I":
            continue
        bit = 1 << ((anchor + k) % L)
        if p in "XY":
            flip |= bit
        if p in "YZ":
            sign |= bit
        if p == "Y":
            ny += 1
    return flip, sign, ny


def _ring_strings(op: SymmetrizedOperator, L: int) -> set[tuple[int, int, int]]:
    return {_string_masks(s, j, L) for s in op.strings for j in range(L)}


def _masks_to_coo(flip: int, sign: int, ny: int, L: int):
    idx = np.arange(1 << L, dtype=np.int64)
    # sign bits act as 2b-1 per site: -1 for every sign-site holding a 0 bit
    zeros = np.bitwise_and(np.bitwise_not(idx), sign)
    parity = np.zeros_like(idx)
    while np.any(zeros):
        parity ^= zeros & 1
        zeros >>= 1
    data = (1j**ny) * (1 - 2 * parity)
    return idx ^ flip, idx, data


def pauli_string_matrix(letters: str, anchor: int, L: int) -> sp.csr_matrix:
    """Sparse matrix of a single Pauli string on a ring of ``L`` sites."""
    rows, cols, data = _masks_to_coo(*_string_masks(letters, anchor, L), L)
    return sp.csr_matrix((data, (rows, cols)), shape=(1 << L, 1 << L))


class RealizedOperator:
    """A symmetrized operator on a concrete periodic chain, held as a sparse matrix."""

    def __init__(self, matrix: sp.spmatrix, L: int, label: str = ""):
        self.matrix = sp.csr_matrix(matrix)
        self.L = L
        self.label = label

    @property
    def dim(self) -> int:
        return 1 << self.L

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi

    __matmul__ = apply

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def hs_norm2(self) -> float:
        """``Tr(O^2)`` for a Hermitian ``O``."""
        return float(np.sum(np.abs(self.matrix.data) ** 2))

    def trace_with(self, H) -> complex:
        """``Tr(O H)`` for a dense or sparse ``H``."""
        M = self.matrix.tocoo()
        if sp.issparse(H):
            Ht = sp.csr_matrix(H).T.tocsr()
            return complex(M.multiply(Ht).sum())
        H = np.asarray(H)
        return complex(np.sum(M.data * H[M.col, M.row]))


@functools.lru_cache(maxsize=4096)
def _realize_cached(op: SymmetrizedOperator, L: int) -> sp.csr_matrix:
    rows, cols, data = [], [], []
    for s in op.strings:
        for j in range(L):
            r, c, d = _masks_to_coo(*_string_masks(s, j, L), L)
            rows.append(r)
            cols.append(c)
            data.append(d)
    dim = 1 << L
    M = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    M.sum_duplicates()
    M.eliminate_zeros()
    return M


def realize(op: SymmetrizedOperator | str, L: int) -> RealizedOperator:
    """Realize a symmetrized operator on a periodic chain of ``L`` sites."""
    if isinstance(op, str):
        op = SymmetrizedOperator.from_label(op)
    if op.support > L:
        raise ValueError(f"support {op.support} exceeds chain length {L}")
    return RealizedOperator(_realize_cached(op, L), L, op.label)


def project_onto_basis(H, basis: OperatorBasis | Sequence[SymmetrizedOperator], L: int) -> np.ndarray:
    """Coefficients ``Tr(O_a H) / Tr(O_a^2)`` of a Hermitian ``H`` on each basis element."""
    if sp.issparse(H):
        herm_err = abs(H - H.getH()).max() if H.nnz else 0.0
    else:
        H = np.asarray(H)
        herm_err = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
    if herm_err > HERMITICITY_TOL:
        raise ValueError(f"matrix is not Hermitian (max deviation {herm_err:.3e})")
    out = np.empty(len(basis))
    for a, op in enumerate(basis):
        O = realize(op, L)
        out[a] = O.trace_with(H).real / O.hs_norm2()
    return out


def write_basis(basis: OperatorBasis, path) -> None:
    """One line per element: ``label,support,mirror_partner_distinct``."""
    lines = [
        f"{op.label},{op.support},{str(op.mirror_partner_distinct).lower()}\n" for op in basis
    ]
    Path(path).write_text("".join(lines), encoding="utf-8", newline="\n")


def read_basis(path, max_support: int | None = None) -> OperatorBasis:
    ops = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        label, support, mirrored = line.split(",")
        op = SymmetrizedOperator.from_label(label)
        if op.support != int(support) or op.mirror_partner_distinct != (mirrored.strip() == "true"):
            raise ValueError(f"inconsistent basis line {line!r}")
        ops.append(op)
    R = max_support if max_support is not None else max(o.support for o in ops)
    parity = all(o.y_count % 2 == 0 for o in ops)
    interior = any("I" in o.representative for o in ops)
    return OperatorBasis(R, tuple(ops), parity, interior)
