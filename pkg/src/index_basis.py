import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from cubature_errors import CubatureConfigError

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]


# =====================================================
# HYPERBOLIC-CROSS INDEX SETS
# =====================================================
@dataclass(frozen=True)
class IndexSet:
    """
    Multi-index set W_{d,q} = { m : prod_i max(1, m_i) <= q }

    Members are sorted by (total degree, components) so the least-squares
    columns always come in the same order.
    """
    d: int
    q: int
    members: Tuple[MultiIndex, ...]
    _array: np.ndarray = field(repr=False, compare=False)

    @property
    def cardinality(self) -> int:
        return len(self.members)

    @property
    def L(self) -> int:
        return len(self.members)

    def as_array(self) -> np.ndarray:
        """(L, d) integer array of the members, read-only"""
        return self._array

    def position(self, m: Sequence[int]) -> int:
        return self.members.index(tuple(int(v) for v in m))

    def __contains__(self, m) -> bool:
        return is_member(m, self.q)

    def __len__(self) -> int:
        return len(self.members)


def is_member(m: Sequence[int], q: int) -> bool:
    """Membership predicate prod_i max(1, m_i) <= q"""
    product = 1
    for value in m:
        if value < 0:
            return False
        product *= max(1, int(value))
        if product > q:
            return False
    return True


def _enumerate(d: int, budget: int) -> List[MultiIndex]:
    # budget bounds the product of max(1, m_i) over the remaining coordinates
    if d == 0:
        return [()]
    out = []
    for head in range(0, budget + 1):
        rest_budget = budget // max(1, head)
        for tail in _enumerate(d - 1, rest_budget):
            out.append((head,) + tail)
    return out


@lru_cache(maxsize=None)
def build_index_set(d: int, q: int) -> IndexSet:
    """
    Build the reduced Tchebychef index set W_{d,q}

    Args:
        d: Ambient dimension (>= 1)
        q: Approximation level (>= 1)

    Returns:
        IndexSet with deterministic member ordering
    """
    if int(d) != d or d <= 0:
        raise CubatureConfigError(f"Dimension must be a positive integer, got {d}")
    if int(q) != q or q <= 0:
        raise CubatureConfigError(f"Level q must be a positive integer, got {q}")
    d, q = int(d), int(q)

    members = sorted(_enumerate(d, q), key=lambda m: (sum(m), m))
    array = np.array(members, dtype=np.int64).reshape(len(members), d)
    array.setflags(write=False)

    logger.debug(f"Index set W_({d},{q}) built with L={len(members)}")
    return IndexSet(d=d, q=q, members=tuple(members), _array=array)


def leading_indices(d: int) -> List[MultiIndex]:
    """The d+1 indices of A_d: the zero index then the unit indices e_1..e_d"""
    out = [tuple([0] * d)]
    for axis in range(d):
        unit = [0] * d
        unit[axis] = 1
        out.append(tuple(unit))
    return out


# =====================================================
# TCHEBYCHEF POLYNOMIALS
# =====================================================
def tcheb_eval(m: int, x):
    """
    Evaluate T_m(x) with the three-term recurrence

    Args:
        m: Degree (>= 0)
        x: Scalar or array of points, normally in [-1, 1]

    Returns:
        T_m(x) with the shape of x
    """
    if m < 0:
        raise CubatureConfigError(f"Tchebychef degree must be >= 0, got {m}")
    x = np.asarray(x, dtype=float)
    if logger.isEnabledFor(logging.DEBUG) and np.any(np.abs(x) > 1.0):
        logger.debug(f"tcheb_eval called outside [-1, 1]: max |x| = {np.max(np.abs(x))}")

    previous = np.ones_like(x)
    if m == 0:
        return previous if previous.ndim else float(previous)
    current = x.copy()
    for _ in range(1, m):
        previous, current = current, 2.0 * x * current - previous
    return current if current.ndim else float(current)


def tcheb_table(x: np.ndarray, max_degree: int) -> np.ndarray:
    """All T_0..T_max_degree at x; result has shape x.shape + (max_degree + 1,)"""
    x = np.asarray(x, dtype=float)
    table = np.empty(x.shape + (max_degree + 1,))
    table[..., 0] = 1.0
    if max_degree >= 1:
        table[..., 1] = x
    for k in range(2, max_degree + 1):
        table[..., k] = 2.0 * x * table[..., k - 1] - table[..., k - 2]
    return table


def tensor_basis_matrix(index_set: IndexSet, points: np.ndarray) -> np.ndarray:
    """
    Design matrix A[i, j] = prod_k T_{m_jk}(x_ik)

    Args:
        index_set: Basis index set (columns)
        points: (M, d) points in [-1, 1]^d (rows)

    Returns:
        (M, L) matrix
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    members = index_set.as_array()
    table = tcheb_table(points, int(members.max()) if members.size else 0)

    matrix = np.ones((points.shape[0], members.shape[0]))
    for axis in range(index_set.d):
        matrix *= table[:, axis, members[:, axis]]
    return matrix


# =====================================================
# EXACT INTEGRALS OF THE BASIS
# =====================================================
def tcheb_integral_1d(m: int) -> float:
    """Integral of T_m over [-1, 1]: 2/(1-m^2) for even m, 0 for odd m"""
    if m % 2 == 1:
        return 0.0
    return 2.0 / (1.0 - m * m)


def basis_integral(m: Sequence[int]) -> float:
    """
    Integral of prod_i T_{m_i}(x_i) over [-1, 1]^d

    Args:
        m: Multi-index

    Returns:
        Exact integral value
    """
    value = 1.0
    for component in m:
        if component < 0:
            raise CubatureConfigError(f"Invalid multi-index component {component}")
        factor = tcheb_integral_1d(int(component))
        if factor == 0.0:
            return 0.0
        value *= factor
    return value


def basis_integrals(index_set: IndexSet) -> np.ndarray:
    return np.array([basis_integral(m) for m in index_set.members])
