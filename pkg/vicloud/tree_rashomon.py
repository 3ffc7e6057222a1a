"""Rashomon sets of decision tables over binary features.

A decision tree splitting on m binary features is equivalent to a table
assigning a label to each of the 2^m feature patterns. The best table follows
the majority outcome in every cell, and flipping a cell costs exactly its gap,
so the Rashomon set is the family of flip sets whose gaps sum to at most the
allowed excess.
"""
import heapq
import itertools
import logging

import numpy as np

from vicloud.exceptions import DataError, ZeroLossError
from vicloud.models import (DatasetKind, MRVector, ReliancePoint, Variant,
                            VICCloud)
from vicloud.reliance import TablePredictor, mr_binary_exact, pattern_codes
from vicloud.settings import MAX_FEATURES, MAX_SUBSET_SIZE

log = logging.getLogger(__name__)

LOSS_TOL = 1e-9


def pattern_of(code, m):
    """Return the 0/1 pattern of a code, first feature most significant."""
    return tuple((int(code) >> (m - 1 - k)) & 1 for k in range(m))


def code_of(pattern):
    """Return the integer code of a 0/1 pattern."""
    code = 0
    for bit in pattern:
        code = code * 2 + int(bit)
    return code


class Cell:
    """Outcome counts of one feature pattern."""

    def __init__(self, pattern, count_pos=0, count_neg=0):
        """Create an instance of Cell."""
        self.pattern = tuple(int(bit) for bit in pattern)
        self.count_pos = int(count_pos)
        self.count_neg = int(count_neg)

    @property
    def code(self):
        """Integer code of the pattern."""
        return code_of(self.pattern)

    @property
    def gap(self):
        """Extra loss of predicting the minority label."""
        return abs(self.count_pos - self.count_neg)

    @property
    def majority(self):
        """Majority label, ties going to +1."""
        return 1 if self.count_pos >= self.count_neg else -1

    @property
    def loss(self):
        """0-1 loss of the majority label."""
        return min(self.count_pos, self.count_neg)

    @property
    def count(self):
        """Rows falling into the cell."""
        return self.count_pos + self.count_neg

    def as_dict(self):
        """Return this cell as a dictionary."""
        return {'pattern': ''.join(map(str, self.pattern)),
                'count_pos': self.count_pos, 'count_neg': self.count_neg,
                'gap': self.gap, 'majority': self.majority}


class CellTable:
    """Per-pattern outcome counts over a feature subset.

    Every one of the 2^m patterns has a cell; unseen patterns count (0, 0).
    """

    def __init__(self, feature_subset, cells, names=None):
        """Create an instance of CellTable.

        Args:
            feature_subset: dataset column indices, in pattern bit order
            cells: list of Cell indexed by pattern code
            names: optional feature names of the subset
        """
        self.feature_subset = tuple(int(j) for j in feature_subset)
        self.cells = {cell.pattern: cell for cell in cells}
        if len(self.cells) != 2 ** self.m:
            raise DataError(f'A table over {self.m} features needs '
                            f'{2 ** self.m} cells')
        self.names = tuple(names) if names else tuple(
            f'x{j + 1}' for j in self.feature_subset)

    @property
    def m(self):
        """Number of features in the subset."""
        return len(self.feature_subset)

    @property
    def n(self):
        """Total number of rows."""
        return sum(cell.count for cell in self.cells.values())

    @property
    def total_best_loss(self):
        """L*: the summed minority counts."""
        return float(sum(cell.loss for cell in self.cells.values()))

    def cell(self, pattern):
        """Return the cell of a pattern given as tuple, string or code."""
        if isinstance(pattern, (int, np.integer)):
            pattern = pattern_of(pattern, self.m)
        key = tuple(int(bit) for bit in pattern)
        try:
            return self.cells[key]
        except KeyError:
            raise DataError(f'Pattern {pattern} is not a cell of this table')

    def position(self, j):
        """Return the bit position of dataset feature j in the patterns."""
        try:
            return self.feature_subset.index(int(j))
        except ValueError:
            raise DataError(f'Feature {j} is not in the subset '
                            f'{list(self.feature_subset)}')

    def sibling(self, pattern, j):
        """Return the cell differing from pattern only in feature j."""
        bits = list(self.cell(pattern).pattern)
        position = self.position(j)
        bits[position] = 1 - bits[position]
        return self.cells[tuple(bits)]

    def frequency(self, j, value):
        """Return the empirical frequency of x_j == value."""
        position = self.position(j)
        matching = sum(cell.count for cell in self.cells.values()
                       if cell.pattern[position] == value)
        return matching / self.n

    def labels(self, flipped=()):
        """Return the labels indexed by code, with some cells flipped."""
        labels = np.empty(2 ** self.m)
        for cell in self.cells.values():
            labels[cell.code] = cell.majority
        for pattern in flipped:
            code = code_of(pattern)
            labels[code] = -labels[code]
        return labels

    def as_dict(self):
        """Return this table as a dictionary."""
        return {'feature_subset': list(self.feature_subset),
                'total_best_loss': self.total_best_loss,
                'cells': [self.cells[pattern_of(code, self.m)].as_dict()
                          for code in range(2 ** self.m)]}


class FlipTree:
    """The best table of a CellTable with some cells' labels flipped."""

    def __init__(self, base, flipped_cells=(), loss=None):
        """Create an instance of FlipTree."""
        self.base = base
        self.flipped_cells = frozenset(tuple(pattern)
                                       for pattern in flipped_cells)
        gaps = sum(base.cell(pattern).gap for pattern in self.flipped_cells)
        self.loss = float(base.total_best_loss + gaps if loss is None
                          else loss)

    @property
    def codes(self):
        """Sorted codes of the flipped cells."""
        return tuple(sorted(code_of(pattern)
                            for pattern in self.flipped_cells))

    @property
    def bitmask(self):
        """Flipped cells as a bitmask over pattern codes."""
        return sum(1 << code for code in self.codes)

    @property
    def labels(self):
        """Labels indexed by pattern code."""
        return self.base.labels(self.flipped_cells)

    def predictor(self):
        """Return a TablePredictor evaluating this tree."""
        return TablePredictor(self.base.feature_subset, self.labels)

    def as_dict(self):
        """Return this tree as a dictionary."""
        return {'feature_subset': list(self.base.feature_subset),
                'flipped': [''.join(map(str, pattern_of(code, self.base.m)))
                            for code in self.codes],
                'bitmask': self.bitmask, 'loss': self.loss}


def tabulate_cells(dataset, feature_subset):
    """Count positive and negative outcomes of every pattern of the subset."""
    if dataset.kind != DatasetKind.BINARY_PM1:
        raise DataError('Decision tables need a binary dataset')
    feature_subset = [int(j) for j in feature_subset]
    if len(feature_subset) > MAX_SUBSET_SIZE:
        raise DataError(f'Subset of {len(feature_subset)} features exceeds '
                        f'the limit of {MAX_SUBSET_SIZE}')
    if len(set(feature_subset)) != len(feature_subset):
        raise DataError('Subset features must be distinct')
    for j in feature_subset:
        dataset.check_feature(j)
    m = len(feature_subset)
    codes = pattern_codes(dataset.features, feature_subset)
    positive = np.bincount(codes[dataset.outcome > 0], minlength=2 ** m)
    negative = np.bincount(codes[dataset.outcome < 0], minlength=2 ** m)
    cells = [Cell(pattern_of(code, m), positive[code], negative[code])
             for code in range(2 ** m)]
    return CellTable(feature_subset, cells,
                     [dataset.names[j] for j in feature_subset])


def best_tree(table):
    """Return the majority-rule table."""
    return FlipTree(table, (), table.total_best_loss)


def enumerate_trees(table, epsilon, include_empty=False, benchmark_loss=None):
    """Return every flip set whose total gap fits within the Rashomon budget.

    The budget is (1 + epsilon) * benchmark - L*, the benchmark defaulting to
    the table's own L*. Candidates are sorted by gap and every flip set is
    reached once, by extending it only with higher-ranked candidates. Empty
    cells are left out unless include_empty is set.

    Returns:
        list of FlipTree in non-decreasing loss, ties by flipped codes
    """
    if epsilon < 0:
        raise DataError('Rashomon factor epsilon must be non-negative')
    benchmark = table.total_best_loss if benchmark_loss is None \
        else float(benchmark_loss)
    budget = (1 + epsilon) * benchmark - table.total_best_loss
    tolerance = LOSS_TOL * max(1.0, benchmark)
    if budget < -tolerance:
        return []
    candidates = sorted((cell for cell in table.cells.values()
                         if include_empty or cell.count),
                        key=lambda cell: (cell.gap, cell.code))
    gaps = [cell.gap for cell in candidates]

    trees = []
    queue = [(0, (), -1)]
    while queue:
        increment, chosen, last = heapq.heappop(queue)
        trees.append(FlipTree(table, [candidates[k].pattern for k in chosen],
                              table.total_best_loss + increment))
        for k in range(last + 1, len(candidates)):
            extended = increment + gaps[k]
            if extended > budget + tolerance:
                break
            heapq.heappush(queue, (extended, chosen + (k,), k))
    trees.sort(key=lambda tree: (tree.loss, tree.codes))
    log.debug(f'Subset {list(table.feature_subset)}: {len(trees)} trees '
              f'within budget {budget:g}')
    return trees


def mr_shift_single_flip(table, cell, j, mr_star_j):
    """Bound the ratio-reliance shift caused by flipping one cell.

    With e the cell's gap, e' its sibling's gap along feature j and p the
    frequency of the cell's value of x_j, the shift is
    ((p - mr*) e +/- p e') / (L* + e), the sign depending on whether the
    sibling's majority agrees with the cell's.

    Returns:
        (lower, upper)
    """
    target = table.cell(cell)
    position = table.position(j)
    sibling = table.sibling(target.pattern, j)
    p = table.frequency(j, target.pattern[position])
    denominator = table.total_best_loss + target.gap
    if denominator == 0:
        raise ZeroLossError('Ratio reliance is undefined for a tree with '
                            'zero loss')
    centre = (p - mr_star_j) * target.gap
    spread = p * sibling.gap
    return (centre - spread) / denominator, (centre + spread) / denominator


def _canonical(feature_subset, labels):
    """Drop subset features the labels do not depend on."""
    subset = list(feature_subset)
    labels = np.asarray(labels)
    position = 0
    while position < len(subset):
        m = len(subset)
        table = labels.reshape((2,) * m) if m else labels
        if np.array_equal(np.take(table, 0, axis=position),
                          np.take(table, 1, axis=position)):
            labels = np.take(table, 0, axis=position).ravel()
            del subset[position]
        else:
            position += 1
    return tuple(subset), tuple(labels.tolist())


def feature_subsets(p, max_features):
    """Yield every subset of at most max_features of p features, by size."""
    for size in range(min(int(max_features), p) + 1):
        yield from itertools.combinations(range(p), size)


def tree_cloud(dataset, epsilon, max_features=MAX_FEATURES,
               include_empty=False):
    """Enumerate the decision-table Rashomon set over all small subsets.

    Each subset's threshold uses the best loss across all subsets, so the
    union is the Rashomon set of the whole class. Tables computing the same
    function on a smaller subset are kept once. Reliance is the exact ratio
    variant; features outside a table's subset have reliance 1.
    """
    if max_features < 0:
        raise DataError('max_features must be non-negative')
    tables = [tabulate_cells(dataset, subset)
              for subset in feature_subsets(dataset.p, max_features)]
    benchmark = min(table.total_best_loss for table in tables)
    if benchmark == 0:
        raise ZeroLossError('The best tree has zero loss: ratio reliance is '
                            'undefined')
    seen = set()
    points = []
    for subset_id, table in enumerate(tables):
        for tree in enumerate_trees(table, epsilon, include_empty,
                                    benchmark):
            key = _canonical(table.feature_subset, tree.labels)
            if key in seen:
                continue
            seen.add(key)
            predictor = tree.predictor()
            values = np.ones(dataset.p)
            for j in table.feature_subset:
                values[j] = mr_binary_exact(predictor, dataset, j,
                                            Variant.RATIO)
            tag = {'subset_id': subset_id,
                   'subset': '+'.join(table.names) or 'constant',
                   'flipped': tree.bitmask}
            points.append(ReliancePoint(
                [], MRVector(values, Variant.RATIO, tree.loss), tree.loss,
                tag))
    log.info(f'Enumerated {len(points)} distinct trees over {len(tables)} '
             f'subsets (L*={benchmark:g}, eps={epsilon})')
    provenance = {'model_class': 'tree', 'epsilon': float(epsilon),
                  'max_features': int(max_features),
                  'benchmark_loss': benchmark,
                  'include_empty': bool(include_empty),
                  'variant': int(Variant.RATIO)}
    return VICCloud(points, dataset.names, provenance, [])
