"""Evaluation backends over compiled trees, plus activations and soft selectors.

All hard backends follow the same three steps: compute per-node signed
margins, map them through an activation that keeps failed tests strictly
positive and passed tests at zero, combine the failed nodes' leaf masks,
and take the first index of the maximum.  The backends are exactly
equivalent: they select the same leaf as classic traversal for every
input (verified property, see the test suite and `arbo selfcheck`).

The tie policy everywhere is first-index: the smallest index attaining
the maximum wins.  This is the single source of determinism.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .compiler import CompiledTree, SumProductForm, TernaryForm
from .errors import ConfigError, InputError, UnsupportedFormError
from .trees import ConstantLeaf, LinearLeaf, leaf_value, margin_of


class Prediction(NamedTuple):
    leaf_index: Optional[int]
    value: object


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Activation:
    """A vectorized map that is strictly positive on positive inputs and zero
    elsewhere.  Any such map selects the same leaf, so the choice only
    matters numerically."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(x)


_PROBE = np.array([-1e12, -100.0, -1.0, -1e-9, 0.0, 1e-9, 0.5, 1.0, 100.0, 1e12])


def _check_positivity(name: str, fn) -> None:
    out = np.asarray(fn(_PROBE), dtype=np.float64)
    if out.shape != _PROBE.shape:
        raise ConfigError(f"activation {name!r} must be elementwise")
    if not (out[_PROBE > 0] > 0).all() or not (out[_PROBE <= 0] == 0).all():
        raise ConfigError(
            f"activation {name!r} must be positive on positives and zero elsewhere"
        )


def _binarized_relu(x):
    return (np.asarray(x, dtype=np.float64) > 0).astype(np.float64)


def _relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


_FACTORIES: dict[str, Callable[..., Activation]] = {}


def register_activation(name: str, factory: Callable[..., Callable]) -> None:
    """Register a named activation factory.  The produced function is probed
    for the positivity contract on first construction."""
    _FACTORIES[name] = factory


register_activation("binarized-relu", lambda: _binarized_relu)
register_activation("relu", lambda: _relu)
register_activation("scaled-relu", lambda alpha=2.0: (
    lambda x, a=float(alpha): a * _relu(x)))
register_activation("rectified-quadratic", lambda: (
    lambda x: np.where(np.asarray(x, dtype=np.float64) > 0, np.square(x, dtype=np.float64), 0.0)))


def get_activation(spec: Union[str, Activation], **params) -> Activation:
    """Resolve an activation by name, e.g. ``"relu"`` or ``"scaled-relu:3.5"``."""
    if isinstance(spec, Activation):
        return spec
    name = spec
    if ":" in spec:
        name, arg = spec.split(":", 1)
        if name == "scaled-relu":
            params.setdefault("alpha", float(arg))
        else:
            raise ConfigError(f"activation {name!r} takes no parameter")
    if name not in _FACTORIES:
        raise ConfigError(f"unknown activation {name!r}")
    if name == "scaled-relu" and params.get("alpha", 1.0) <= 0:
        raise ConfigError("scaled-relu needs alpha > 0")
    fn = _FACTORIES[name](**params)
    _check_positivity(name, fn)
    label = name if not params else f"{name}:{params.get('alpha')}"
    return Activation(label, fn)


def sign_with_negative_zero(x: np.ndarray) -> np.ndarray:
    """Sign map used by the ternary backend: -1 for x <= 0, +1 for x > 0."""
    return np.where(np.asarray(x, dtype=np.float64) > 0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# The three phases
# ---------------------------------------------------------------------------


def margins(ct: CompiledTree, x) -> np.ndarray:
    """Per-node signed margins; entry j is positive iff node j fails on x."""
    x = ct.schema.check_vector(x)
    m = ct.selection @ x - ct.thresholds
    for j in ct.override_positions:
        m[j] = margin_of(ct.tests[j], x)
    return m


def test_phase(ct: CompiledTree, x, activation: Union[str, Activation] = "binarized-relu") -> np.ndarray:
    """Activation of the margins: strictly positive at failed nodes, zero at
    passed nodes."""
    act = get_activation(activation)
    return act(margins(ct, x))


def traversal_phase(masks, h) -> np.ndarray:
    """Score vector over leaves: the mask matrix applied to the activated
    margins (the weighted sum of failed nodes' mask columns)."""
    M = np.asarray(masks, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if M.ndim != 2 or h.shape != (M.shape[1],):
        raise InputError(f"shape mismatch: masks {M.shape} vs h {h.shape}")
    return M @ h


def first_argmax(scores) -> int:
    """Smallest index attaining the maximum."""
    arr = np.asarray(scores)
    if arr.size == 0:
        raise InputError("first_argmax of an empty vector")
    return int(np.argmax(arr))


def leaf_predictions(ct: CompiledTree, x) -> np.ndarray:
    """Per-leaf numeric predictions p(x); labels are not blendable."""
    x = ct.schema.check_vector(x)
    out = np.empty(ct.n_leaves, dtype=np.float64)
    for i, leaf in enumerate(ct.leaves):
        v = leaf_value(leaf, x)
        if isinstance(v, str):
            raise UnsupportedFormError("soft prediction needs numeric leaves")
        out[i] = v
    return out


# ---------------------------------------------------------------------------
# Hard backends
# ---------------------------------------------------------------------------


def predict_matrix(
    ct: CompiledTree,
    x,
    activation: Union[str, Activation] = "binarized-relu",
    mask_matrix=None,
) -> Prediction:
    """Dense pipeline: margins -> activation -> mask combination -> first argmax."""
    x = ct.schema.check_vector(x)
    h = test_phase(ct, x, activation)
    entries = ct.masks if mask_matrix is None else _mask_entries(mask_matrix)
    scores = traversal_phase(entries, h)
    i = first_argmax(scores)
    return Prediction(i, leaf_value(ct.leaves[i], x))


def predict_bitwise(ct: CompiledTree, x) -> Prediction:
    """Mask-combination pipeline: AND the failed nodes' packed columns and
    take the lowest set bit.  Exactly Theorem-style equivalent to the
    dense pipeline."""
    x = ct.schema.check_vector(x)
    m = margins(ct, x)
    mask = ct.all_leaves_mask
    packed = ct.packed_columns
    for j in np.flatnonzero(m > 0):
        mask &= packed[j]
    i = (mask & -mask).bit_length() - 1
    return Prediction(i, leaf_value(ct.leaves[i], x))


def ternary_scores(tf: TernaryForm, x) -> np.ndarray:
    """Normalized pattern-match scores; the realized path scores exactly 1."""
    m = margins(tf.base, x)
    signs = np.where(m > 0, 1, -1).astype(np.int64)
    raw = tf.pattern.astype(np.int64) @ signs
    return raw / tf.norms


def predict_ternary(tf: TernaryForm, x) -> Prediction:
    x = tf.base.schema.check_vector(x)
    i = first_argmax(ternary_scores(tf, x))
    return Prediction(i, leaf_value(tf.base.leaves[i], x))


def predict_sum_product(spf: SumProductForm, x) -> Prediction:
    """Indicator-sum pipeline.  At a threshold boundary both step senses
    vanish, so boundary inputs return 0 with no active leaf; everywhere
    else exactly one term is active."""
    x = spf.schema.check_vector(x)
    total = 0.0
    active = None
    for idx, term in enumerate(spf.terms):
        prod = 1.0
        for sense, feature, threshold in term.factors:
            prod *= 1.0 if sense * (x[feature] - threshold) > 0 else 0.0
            if prod == 0.0:
                break
        if prod != 0.0:
            active = idx if active is None else active
            total += term.coefficient * prod
    return Prediction(active, total)


# ---------------------------------------------------------------------------
# Soft selectors
# ---------------------------------------------------------------------------


def softmax_select(scores, temperature: float = 1.0) -> np.ndarray:
    """Temperature softmax, stabilized by max subtraction."""
    if temperature <= 0:
        raise ConfigError("softmax temperature must be > 0")
    z = np.asarray(scores, dtype=np.float64) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def default_index_weights(n: int) -> np.ndarray:
    """The decreasing weight profile 1, 1/2, 1/3, ... favouring small indices."""
    return 1.0 / np.arange(1, n + 1, dtype=np.float64)


def weighted_sparsemax(z, w, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Weighted Euclidean projection of z onto the probability simplex.

    Minimizes sum_i w_i (p_i - z_i)^2 over the simplex (the L1 penalty in
    the defining objective is constant there).  Solved by monotone
    bisection on the dual variable until the simplex sum is within
    ``tol`` of one; the optimum is p_i = max(0, z_i - lambda / (2 w_i)).
    """
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if z.shape != w.shape or z.ndim != 1 or z.size == 0:
        raise InputError("z and w must be equal-length vectors")
    if not (w > 0).all():
        raise ConfigError("sparsemax weights must be strictly positive")
    if z.size > 1 and not (np.diff(w) < 0).all():
        raise ConfigError("sparsemax weights must be strictly decreasing")

    def p_of(lam: float) -> np.ndarray:
        return np.maximum(0.0, z - lam / (2.0 * w))

    lo = float(np.min(2.0 * w * (z - 1.0)))
    hi = float(np.max(2.0 * w * z))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = float(p_of(mid).sum())
        if abs(s - 1.0) <= tol:
            return p_of(mid)
        if s > 1.0:
            lo = mid
        else:
            hi = mid
    p = p_of(0.5 * (lo + hi))
    if abs(float(p.sum()) - 1.0) > tol:
        raise ArithmeticError("sparsemax bisection failed to reach the simplex")
    return p


@dataclass(frozen=True)
class SoftmaxSelector:
    temperature: float = 1.0

    def __call__(self, scores: np.ndarray) -> np.ndarray:
        return softmax_select(scores, self.temperature)


@dataclass(frozen=True)
class SparsemaxSelector:
    """Index-weighted sparsemax; defaults to the 1/i profile so that ties
    lean toward smaller indices."""

    weights: Optional[tuple[float, ...]] = None

    def __call__(self, scores: np.ndarray) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        w = (
            default_index_weights(scores.size)
            if self.weights is None
            else np.asarray(self.weights, dtype=np.float64)
        )
        return weighted_sparsemax(scores, w)


SoftSelector = Union[SoftmaxSelector, SparsemaxSelector]


def predict_soft(
    ct: CompiledTree,
    x,
    selector: SoftSelector = SoftmaxSelector(),
    activation: Union[str, Activation] = "binarized-relu",
) -> float:
    """Inner product of the selector's simplex vector with the per-leaf
    predictions.  Tied hard scores intentionally blend their leaves."""
    x = ct.schema.check_vector(x)
    scores = traversal_phase(ct.masks, test_phase(ct, x, activation))
    return float(np.dot(selector(scores), leaf_predictions(ct, x)))


# ---------------------------------------------------------------------------
# Generalized mask matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneralizedMasks:
    """Real-valued replacement for the 0/1 mask matrix.

    provenance: "bitvector" (unchanged), "positive-scaled" (columns are
    positive multiples of the 0/1 matrix), "zero-negated" (ones replaced
    by one positive constant per column, zeros by arbitrary negatives),
    or "free".  The first three provably keep the selected leaf.
    """

    entries: np.ndarray
    provenance: str


def _mask_entries(masks) -> np.ndarray:
    if isinstance(masks, GeneralizedMasks):
        return masks.entries
    return np.asarray(masks)


def scale_mask_columns(ct: CompiledTree, alpha) -> GeneralizedMasks:
    """Scale each mask column by a strictly positive factor."""
    a = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (ct.n_internal,))
    if not (a > 0).all():
        raise ConfigError("column scales must be strictly positive")
    return GeneralizedMasks(ct.masks.astype(np.float64) * a[None, :], "positive-scaled")


def negate_mask_zeros(ct: CompiledTree, substitute) -> GeneralizedMasks:
    """Replace every zero with a strictly negative constant, keep the ones."""
    entries = ct.masks.astype(np.float64)
    sub = np.broadcast_to(np.asarray(substitute, dtype=np.float64), entries.shape)
    if not (sub < 0).all():
        raise ConfigError("zero substitutes must be strictly negative")
    return GeneralizedMasks(np.where(entries == 0, sub, entries), "zero-negated")


def classify_generalized(entries, base_masks) -> GeneralizedMasks:
    """Wrap an arbitrary real matrix, inferring its provenance relative to a
    0/1 mask matrix of the same shape."""
    E = np.asarray(entries, dtype=np.float64)
    B = np.asarray(base_masks)
    if E.shape != B.shape:
        raise InputError("entries and base masks must share a shape")
    ones = B == 1
    zeros = ~ones
    if np.array_equal(E, B.astype(np.float64)):
        return GeneralizedMasks(E, "bitvector")
    col_pos = all(
        (E[ones[:, j], j] > 0).all() and len(set(E[ones[:, j], j].tolist())) <= 1
        for j in range(E.shape[1])
    )
    if col_pos and (E[zeros] == 0).all():
        return GeneralizedMasks(E, "positive-scaled")
    if col_pos and (E[zeros] < 0).all():
        return GeneralizedMasks(E, "zero-negated")
    return GeneralizedMasks(E, "free")
