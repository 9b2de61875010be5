"""Modal coupling tensor for the geometric string nonlinearity, and lumped forms.

The string force f_m(q) = int_0^1 Phi_m d/dx(xi^3) dx, xi = d/dx sum_i Phi_i q_i,
reduces to f_m = -sum A^m_{i1 i2 i3} q_i1 q_i2 q_i3. After integrating by parts,
every entry is a product of four cosines integrated over [0, 1]:

    A^m_{abc} = (pi^4 / 2) * m * a * b * c * #{signs : a +- b +- c +- m = 0}

which is symmetric in all four indices. Only the canonical lower-index
ordering a <= b <= c is stored.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid

PREFACTOR = 0.5 * np.pi**4

COUNT_CONVENTIONS = ("canonical", "ordered", "cyclic-generator")


def _sign_pattern_count(m, a, b, c):
    n = np.zeros(np.broadcast(m, a, b, c).shape, dtype=np.int64)
    for s1 in (1, -1):
        for s2 in (1, -1):
            for s3 in (1, -1):
                n += (a + s1 * b + s2 * c + s3 * m) == 0
    return n


def _permutation_count(a, b, c):
    """Distinct orderings of a sorted triple: 1, 3 or 6."""
    eq = (a == b).astype(np.int64) + (b == c)
    return np.where(eq == 2, 1, np.where(eq == 1, 3, 6))


@dataclass(frozen=True)
class CouplingTensor:
    modes: int
    m: np.ndarray  # 1-based output mode
    i1: np.ndarray  # 1-based, i1 <= i2 <= i3
    i2: np.ndarray
    i3: np.ndarray
    value: np.ndarray

    def __len__(self):
        return self.value.size

    @cached_property
    def multiplicity(self) -> np.ndarray:
        return _permutation_count(self.i1, self.i2, self.i3)

    @cached_property
    def _operator(self):
        # monomials q_a q_b q_c over distinct sorted triples, then a sparse map to outputs
        keys = (self.i1 * (self.modes + 1) + self.i2) * (self.modes + 1) + self.i3
        uniq, col = np.unique(keys, return_inverse=True)
        c = uniq % (self.modes + 1)
        b = (uniq // (self.modes + 1)) % (self.modes + 1)
        a = uniq // (self.modes + 1) ** 2
        mat = sp.csr_matrix(
            (self.multiplicity * self.value, (self.m - 1, col)),
            shape=(self.modes, uniq.size),
        )
        return mat, a - 1, b - 1, c - 1

    def __call__(self, q: np.ndarray) -> np.ndarray:
        return eval_tensor(self, q)

    def entry(self, m: int, i1: int, i2: int, i3: int) -> float:
        """Value of any (unsorted) index tuple, 1-based."""
        a, b, c = sorted((i1, i2, i3))
        return self._lookup.get((m, a, b, c), 0.0)

    @cached_property
    def _lookup(self) -> dict:
        return {
            (int(m), int(a), int(b), int(c)): float(v)
            for m, a, b, c, v in zip(self.m, self.i1, self.i2, self.i3, self.value)
        }

    def dense(self) -> np.ndarray:
        """Full M^4 array, index order [m, i1, i2, i3] (0-based). Small M only."""
        M = self.modes
        out = np.zeros((M, M, M, M))
        for m, a, b, c, v in zip(self.m - 1, self.i1 - 1, self.i2 - 1, self.i3 - 1, self.value):
            for perm in {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}:
                out[(m,) + perm] = v
        return out

    def nonzero_count(self, convention: str = "canonical") -> int:
        """Number of stored non-zeros under a counting convention.

        canonical         one entry per (m, i1 <= i2 <= i3)
        ordered           every non-zero (m, i1, i2, i3) over all orderings
        cyclic-generator  support of the single delta term whose sum over
                          the three cyclic shifts of (i1, i2, i3) gives A.
                          It equals ``ordered`` except that an entry with
                          lower indices {m, j, j}, j != m, appears only in
                          the arrangement (m; j, j, m); the other two
                          arrangements cancel inside that term.
        """
        if convention == "canonical":
            return len(self)
        ordered = int(self.multiplicity.sum())
        if convention == "ordered":
            return ordered
        if convention == "cyclic-generator":
            return ordered - 2 * int(self._paired_mask.sum())
        raise ValueError(f"unknown convention {convention!r}; choose from {COUNT_CONVENTIONS}")

    @cached_property
    def _paired_mask(self) -> np.ndarray:
        # lower multiset {m, j, j} with j != m
        m, a, b, c = self.m, self.i1, self.i2, self.i3
        return ((a == m) & (b == c) & (b != m)) | ((c == m) & (a == b) & (a != m))

    def ordered_entries(self, merge_pairs: bool = False):
        """Expand to explicit ordered entries (m, i1, i2, i3, value), 1-based.

        With merge_pairs, each entry with lower indices {m, j, j}, j != m,
        keeps only the arrangement (m; j, j, m) carrying three times the
        value. The contraction is unchanged and the index set is the
        ``cyclic-generator`` support.
        """
        rows = []
        for perm in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]:
            idx = np.stack([self.i1, self.i2, self.i3])[list(perm)]
            rows.append(np.stack([self.m, *idx]))
        allrows = np.concatenate(rows, axis=1)
        vals = np.tile(self.value, 6)
        allrows, first = np.unique(allrows, axis=1, return_index=True)
        vals = vals[first]
        if merge_pairs:
            m, a, b, c = allrows
            paired = ((a == m) & (b == c) & (b != m)) | ((b == m) & (a == c) & (a != m)) | (
                (c == m) & (a == b) & (a != m)
            )
            keep = ~paired | ((c == m) & (a == b))
            vals = np.where(paired, 3.0 * vals, vals)[keep]
            allrows = allrows[:, keep]
        return allrows[0], allrows[1], allrows[2], allrows[3], vals


def build_tensor(modes: int) -> CouplingTensor:
    """Enumerate the non-zero canonical entries in O(M^3)."""
    if modes < 1:
        raise ValueError(f"mode count must be >= 1, got {modes}")
    M = modes
    rng = np.arange(1, M + 1)
    m, a, b = np.meshgrid(rng, rng, rng, indexing="ij")
    keep = a <= b
    m, a, b = m[keep], a[keep], b[keep]
    # the cosine-product integral is non-zero iff c = |a +- b +- m| for some signs
    cands = np.stack([a + b + m, np.abs(a + b - m), np.abs(a - b + m), np.abs(a - b - m)])
    cands = np.sort(cands, axis=0)
    dup = np.zeros_like(cands, dtype=bool)
    dup[1:] = cands[1:] == cands[:-1]
    valid = (cands >= b) & (cands <= M) & ~dup
    k, j = np.nonzero(valid)
    m, a, b, c = m[j], a[j], b[j], cands[k, j]
    order = np.lexsort((c, b, a, m))
    m, a, b, c = m[order], a[order], b[order], c[order]
    n = _sign_pattern_count(m, a, b, c)
    value = PREFACTOR * (m * a * b * c).astype(np.float64) * n
    return CouplingTensor(M, m, a, b, c, value)


def eval_tensor(tensor: CouplingTensor, q: np.ndarray) -> np.ndarray:
    """f(q) = -sum A q q q; q may be (M,) or (batch, M)."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != tensor.modes:
        raise ValueError(f"expected {tensor.modes} modes, got {q.shape[-1]}")
    mat, a, b, c = tensor._operator
    mono = q[..., a] * q[..., b] * q[..., c]
    if q.ndim == 1:
        return -(mat @ mono)
    return -(mat @ mono.reshape(-1, mono.shape[-1]).T).T.reshape(q.shape)


def tensor_potential(tensor: CouplingTensor, q: np.ndarray) -> np.ndarray:
    """V(q) = 1/4 sum_m A^m q_m q q q, so that f = -grad V."""
    q = np.asarray(q, dtype=np.float64)
    return -0.25 * np.sum(q * eval_tensor(tensor, q), axis=-1)


def quadrature_oracle(modes: int, q: np.ndarray, n_points: int = 8192) -> np.ndarray:
    """Independent f(q) by synthesising xi on a grid and projecting.

    Uses f_m = -int xi^3 dPhi_m/dx dx (boundary terms vanish) with the
    composite trapezoid rule.
    """
    if n_points < 1024:
        raise ValueError("n_points must be >= 1024")
    q = np.asarray(q, dtype=np.float64)
    x = np.linspace(0.0, 1.0, n_points)
    idx = np.arange(1, modes + 1)
    cosines = np.cos(np.pi * np.outer(idx, x))  # (M, n)
    xi = np.sqrt(2.0) * np.pi * ((idx * q) @ cosines)
    dphi = np.sqrt(2.0) * np.pi * idx[:, None] * cosines
    return -trapezoid(xi**3 * dphi, x, axis=-1)


class LumpedNonlinearity:
    """Scalar closed forms for the single-oscillator case."""

    KINDS = ("cubic", "sinh")

    def __init__(self, kind: str):
        if kind == "hyperbolic-sine":
            kind = "sinh"
        if kind not in self.KINDS:
            raise ValueError(f"unknown lumped nonlinearity {kind!r}")
        self.kind = kind

    def __call__(self, q):
        return eval_lumped(self, q)

    def __repr__(self):
        return f"LumpedNonlinearity({self.kind!r})"


def eval_lumped(nl: LumpedNonlinearity, q):
    if nl.kind == "cubic":
        return -np.asarray(q, dtype=np.float64) ** 3
    return -np.sinh(np.asarray(q, dtype=np.float64))


# --- on-disk dump ------------------------------------------------------------

TENSOR_MAGIC = b"MNTENSR1"
_RECORD = np.dtype([("m", "<u4"), ("i1", "<u4"), ("i2", "<u4"), ("i3", "<u4"), ("value", "<f8")])


def save_tensor(tensor: CouplingTensor, path) -> None:
    header = json.dumps(
        {"M": tensor.modes, "entry_count": len(tensor), "convention": "canonical"}
    ).encode()
    body = np.empty(len(tensor), dtype=_RECORD)
    body["m"], body["i1"], body["i2"], body["i3"] = tensor.m, tensor.i1, tensor.i2, tensor.i3
    body["value"] = tensor.value
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC + struct.pack("<I", len(header)) + header)
        fh.write(body.tobytes())


def load_tensor(path) -> CouplingTensor:
    raw = Path(path).read_bytes()
    if raw[:8] != TENSOR_MAGIC:
        raise ValueError(f"{path}: not a tensor file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen])
    if header.get("convention") != "canonical":
        raise ValueError(f"unsupported convention {header.get('convention')!r}")
    body = raw[12 + hlen :]
    if len(body) != header["entry_count"] * _RECORD.itemsize:
        raise ValueError(f"{path}: body length does not match entry_count")
    rec = np.frombuffer(body, dtype=_RECORD)
    as_int = lambda name: rec[name].astype(np.int64)
    return CouplingTensor(
        header["M"], as_int("m"), as_int("i1"), as_int("i2"), as_int("i3"), rec["value"].copy()
    )
