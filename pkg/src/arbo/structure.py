"""Structure-matrix validation and exact integer linear algebra.

A 0/1 matrix with L rows and L-1 columns is a *structure matrix* when it
is the leaf-mask matrix of some full binary tree: column j carries a 0 at
exactly the rows whose leaves sit in the left subtree of internal node j,
and rows are ordered left-to-right over the leaves.

Validation is operational: we attempt to rebuild the tree shape and map
any contradiction back to one of four structural rules for diagnostics:

  R1  a subtree must have exactly one identifiable root column
      (its zero block starts at the subtree's leftmost leaf and is the
      widest such block);
  R2  every column must remove at least one leaf and keep at least one
      (zero count between 1 and L-1);
  R3  the zeros of a column must form one contiguous block of rows;
  R4  every column must fall entirely inside one side of its subtree's
      split, and leaves consume no columns.

Rank and determinant checks run in exact integer arithmetic
(fraction-free elimination); floating point is never used here, so the
full-rank and invertibility facts are bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

_INT64_GUARD = 1 << 62


def as_binary_matrix(B) -> np.ndarray:
    """Coerce to a 2-D 0/1 integer array; raise InputError otherwise."""
    M = np.asarray(B)
    if M.ndim != 2 or M.size == 0:
        raise InputError("matrix must be two-dimensional and non-empty")
    if not np.isin(M, (0, 1)).all():
        raise InputError("matrix entries must be 0 or 1")
    return M.astype(np.int64)


def check_structure_shape(B) -> np.ndarray:
    """Binary + the L x (L-1) shape contract, L >= 2."""
    M = as_binary_matrix(B)
    rows, cols = M.shape
    if rows < 2 or cols != rows - 1:
        raise InputError(
            f"structure matrix must be L x (L-1) with L >= 2, got {rows} x {cols}"
        )
    return M


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    rule: str
    columns: tuple[int, ...]
    message: str


@dataclass
class Reconstruction:
    """Outcome of rebuilding a tree shape from a candidate structure matrix.

    When ``ok``, the shape is stored as parallel per-node lists; node ids
    are allocated in preorder, leaves carry the leaf position in
    ``node_span`` and internals carry their column in ``node_col``.
    """

    ok: bool
    violations: list[Violation] = field(default_factory=list)
    children: list = field(default_factory=list)  # (left, right) or None per node
    node_col: list = field(default_factory=list)  # column index or None per node
    node_span: list = field(default_factory=list)  # (first leaf, last leaf) per node
    root: int = 0


class _Contradiction(Exception):
    def __init__(self, violation: Violation):
        self.violation = violation


def reconstruct(B) -> Reconstruction:
    """Rebuild the tree shape encoded by ``B``; collect violations on failure."""
    M = check_structure_shape(B)
    rows, cols = M.shape

    violations: list[Violation] = []
    spans = []
    for j in range(cols):
        zeros = np.flatnonzero(M[:, j] == 0)
        if len(zeros) == 0 or len(zeros) == rows:
            violations.append(
                Violation("R2", (j,), f"column {j} removes {len(zeros)} of {rows} leaves")
            )
            spans.append(None)
        elif zeros[-1] - zeros[0] + 1 != len(zeros):
            violations.append(
                Violation("R3", (j,), f"column {j} has non-contiguous zeros {zeros.tolist()}")
            )
            spans.append(None)
        else:
            spans.append((int(zeros[0]), int(zeros[-1])))
    if violations:
        return Reconstruction(ok=False, violations=violations)

    recon = Reconstruction(ok=True)

    def new_node(span):
        nid = len(recon.children)
        recon.children.append(None)
        recon.node_col.append(None)
        recon.node_span.append(span)
        return nid

    def build(lo: int, hi: int, cols_here: list[int]) -> int:
        nid = new_node((lo, hi))
        if lo == hi:
            if cols_here:
                raise _Contradiction(
                    Violation(
                        "R4",
                        tuple(cols_here),
                        f"columns {cols_here} left over inside the single leaf {lo}",
                    )
                )
            return nid
        cands = [j for j in cols_here if spans[j][0] == lo and spans[j][1] < hi]
        if not cands:
            raise _Contradiction(
                Violation(
                    "R1",
                    tuple(cols_here),
                    f"no column starts the zero block of subtree leaves {lo}..{hi}",
                )
            )
        ends = [spans[j][1] for j in cands]
        if len(set(ends)) != len(ends):
            raise _Contradiction(
                Violation("R1", tuple(cands), "duplicate columns compete for one subtree root")
            )
        root_col = cands[int(np.argmax(ends))]
        mid = spans[root_col][1]
        left_cols, right_cols = [], []
        for j in cols_here:
            if j == root_col:
                continue
            a, b = spans[j]
            if lo <= a and b <= mid:
                left_cols.append(j)
            elif mid + 1 <= a and b <= hi:
                right_cols.append(j)
            else:
                raise _Contradiction(
                    Violation(
                        "R4",
                        (j,),
                        f"column {j} (zeros {a}..{b}) crosses the split {lo}..{mid}|{mid + 1}..{hi}",
                    )
                )
        recon.node_col[nid] = root_col
        left = build(lo, mid, left_cols)
        right = build(mid + 1, hi, right_cols)
        recon.children[nid] = (left, right)
        return nid

    try:
        recon.root = build(0, rows - 1, list(range(cols)))
    except _Contradiction as c:
        return Reconstruction(ok=False, violations=[c.violation])
    return recon


# ---------------------------------------------------------------------------
# Rule report
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    valid: bool
    violations: list[Violation]
    rank: int
    augmented_det_nonzero: bool

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [
                {"rule": v.rule, "columns": list(v.columns), "message": v.message}
                for v in self.violations
            ],
            "rank": self.rank,
            "augmented_det_nonzero": self.augmented_det_nonzero,
        }


def validate_structure(B) -> ValidationReport:
    """Full report: rule violations plus exact rank / augmented determinant."""
    M = check_structure_shape(B)
    recon = reconstruct(M)
    return ValidationReport(
        valid=recon.ok,
        violations=list(recon.violations),
        rank=rank_exact(M),
        augmented_det_nonzero=augmented_invertible(M),
    )


def check_complement_pairs(B) -> bool:
    """True iff no two columns sum to the all-ones vector."""
    M = as_binary_matrix(B)
    seen = set()
    for j in range(M.shape[1]):
        col = M[:, j].tobytes()
        if col in seen:
            continue  # duplicates are not complements
        comp = (1 - M[:, j]).astype(np.int64).tobytes()
        if comp in seen:
            return False
        seen.add(col)
    return True


# ---------------------------------------------------------------------------
# Exact integer elimination (fraction-free)
# ---------------------------------------------------------------------------


def _needs_bigint(M: np.ndarray) -> bool:
    m = int(np.abs(M).max(initial=0))
    return 2 * m * m >= _INT64_GUARD


def _to_object(M: np.ndarray) -> np.ndarray:
    out = np.empty(M.shape, dtype=object)
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            out[i, j] = int(M[i, j])
    return out


def rank_exact(B) -> int:
    """Exact rank over the rationals of an integer matrix.

    Fraction-free elimination keeps every intermediate entry an integer
    (each update divides exactly by the previous pivot).  Runs on int64
    and escalates to Python integers before any overflow could occur.
    """
    M = np.array(B, dtype=np.int64, copy=True)
    if M.ndim != 2:
        raise InputError("rank_exact expects a matrix")
    rows, cols = M.shape
    r = 0
    prev = 1
    for c in range(cols):
        if r == rows:
            break
        pivots = np.flatnonzero(M[r:, c] != 0)
        if len(pivots) == 0:
            continue
        p = r + int(pivots[0])
        if p != r:
            M[[r, p], :] = M[[p, r], :]
        if M.dtype == np.int64 and _needs_bigint(M):
            M = _to_object(M)
        piv = M[r, c]
        if r + 1 < rows:
            block = M[r + 1 :, c + 1 :]
            M[r + 1 :, c + 1 :] = (block * piv - np.outer(M[r + 1 :, c], M[r, c + 1 :])) // prev
            M[r + 1 :, c] = 0
        prev = piv
        r += 1
    return r


def det_exact(A) -> int:
    """Exact determinant of a square integer matrix (fraction-free elimination)."""
    M = np.array(A, dtype=np.int64, copy=True)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError("det_exact expects a square matrix")
    n = M.shape[0]
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        pivots = np.flatnonzero(M[k:, k] != 0)
        if len(pivots) == 0:
            return 0
        p = k + int(pivots[0])
        if p != k:
            M[[k, p], :] = M[[p, k], :]
            sign = -sign
        if M.dtype == np.int64 and _needs_bigint(M):
            M = _to_object(M)
        piv = M[k, k]
        block = M[k + 1 :, k + 1 :]
        M[k + 1 :, k + 1 :] = (block * piv - np.outer(M[k + 1 :, k], M[k, k + 1 :])) // prev
        M[k + 1 :, k] = 0
        prev = piv
    return sign * int(M[n - 1, n - 1])


def augmented_invertible(B) -> bool:
    """True iff appending an all-ones column makes the matrix invertible (exact)."""
    M = check_structure_shape(B)
    aug = np.hstack([M, np.ones((M.shape[0], 1), dtype=np.int64)])
    return det_exact(aug) != 0
