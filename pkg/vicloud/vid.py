"""Variable Importance Diagrams: projections, bounds, clusters and export.

Panel (i, j) of a diagram plots the reliance on the column feature j along
the horizontal axis against the reliance on the row feature i vertically.
"""
import logging
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.cluster import KMeans

from vicloud.exceptions import DataError
from vicloud.settings import (AXIS_PADDING, OVERLAY_COLOR, PALETTE,
                              PANEL_MARGIN, PANEL_SIZE)

log = logging.getLogger(__name__)

CSV_COLUMNS = ['row_feature', 'col_feature', 'x', 'y', 'cluster']
SVG_NS = 'http://www.w3.org/2000/svg'


class VIDGrid:
    """Pairwise projections of a VIC."""

    def __init__(self, cloud, feature_order, panels, cluster_labels=None):
        """Create an instance of VIDGrid.

        Args:
            cloud(VICCloud): the projected cloud
            feature_order: feature indices, in display order
            panels: dict (row feature, column feature) -> k x 2 array
            cluster_labels: optional per-point integers
        """
        self.cloud = cloud
        self.feature_order = tuple(int(j) for j in feature_order)
        self.panels = dict(panels)
        self.cluster_labels = None if cluster_labels is None else \
            np.asarray(cluster_labels, dtype=int)
        if self.cluster_labels is not None and \
                self.cluster_labels.shape != (len(cloud),):
            raise DataError('One cluster label per point is required')

    @property
    def names(self):
        """Names of the displayed features."""
        return [self.cloud.names[j] for j in self.feature_order]

    def with_clusters(self, labels):
        """Return the same grid colored by cluster labels."""
        return VIDGrid(self.cloud, self.feature_order, self.panels, labels)

    def to_frame(self):
        """Return the long-format table, one row per panel point."""
        frames = []
        for (i, j), points in self.panels.items():
            frames.append(pd.DataFrame({
                'row_feature': self.cloud.names[i],
                'col_feature': self.cloud.names[j],
                'x': points[:, 0], 'y': points[:, 1],
                'cluster': pd.array(self.cluster_labels, dtype='Int64')
                if self.cluster_labels is not None else
                pd.array([None] * len(points), dtype='Int64')}))
        if not frames:
            return pd.DataFrame(columns=CSV_COLUMNS)
        return pd.concat(frames, ignore_index=True)[CSV_COLUMNS]


class BoundsTable:
    """Smallest and largest reliance of every feature over a cloud."""

    def __init__(self, rows):
        """Create an instance of BoundsTable from {name, upper, lower} rows."""
        self.rows = sorted(rows, key=lambda row: (-row['upper'], row['name']))

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, name):
        for row in self.rows:
            if row['name'] == name:
                return row
        raise KeyError(name)

    def to_frame(self):
        """Return the table with columns feature, upper, lower."""
        return pd.DataFrame([{'feature': row['name'], 'upper': row['upper'],
                              'lower': row['lower']} for row in self.rows],
                            columns=['feature', 'upper', 'lower'])

    def save(self, path):
        """Write the table as CSV."""
        self.to_frame().to_csv(path, index=False, float_format='%.17g')
        return str(path)


def _check_features(cloud, features):
    if features is None:
        return list(range(len(cloud.names)))
    features = [int(j) for j in features]
    for j in features:
        if not 0 <= j < len(cloud.names):
            raise DataError(f'Feature index {j} out of range for '
                            f'{len(cloud.names)} features')
    if len(set(features)) != len(features):
        raise DataError('Diagram features must be distinct')
    return features


def project_pairs(cloud, features=None):
    """Project a cloud onto every ordered pair of distinct features."""
    if not len(cloud):
        raise DataError('Cannot project an empty cloud')
    features = _check_features(cloud, features)
    mr = cloud.mr_matrix
    panels = {(i, j): np.column_stack([mr[:, j], mr[:, i]])
              for i in features for j in features if i != j}
    return VIDGrid(cloud, features, panels)


def bounds_table(cloud):
    """Return per-feature reliance bounds, largest upper bound first."""
    if not len(cloud):
        raise DataError('Cannot bound an empty cloud')
    mr = cloud.mr_matrix
    return BoundsTable([{'name': name, 'upper': float(mr[:, k].max()),
                         'lower': float(mr[:, k].min())}
                        for k, name in enumerate(cloud.names)])


def tradeoff_table(cloud, j, reference=None):
    """Compare the model relying least on feature j with a reference model.

    The reference defaults to the lowest-loss model; ties go to the earlier
    point.

    Returns:
        DataFrame with columns quantity, name, reference, least
    """
    if not len(cloud):
        raise DataError('Cannot compare models of an empty cloud')
    if not 0 <= j < len(cloud.names):
        raise DataError(f'Feature index {j} out of range')
    mr = cloud.mr_matrix
    losses = cloud.losses
    least = int(np.lexsort((np.arange(len(cloud)), losses, mr[:, j]))[0])
    if reference is None:
        reference = int(np.lexsort((np.arange(len(cloud)), losses))[0])
    elif not 0 <= reference < len(cloud):
        raise DataError(f'Reference model {reference} out of range')
    betas = cloud.beta_matrix
    beta_names = cloud.beta_names or [f'beta{k + 1}'
                                      for k in range(betas.shape[1])]
    rows = [{'quantity': 'beta', 'name': name,
             'reference': betas[reference, k], 'least': betas[least, k]}
            for k, name in enumerate(beta_names)]
    rows += [{'quantity': 'mr', 'name': name,
              'reference': mr[reference, k], 'least': mr[least, k]}
             for k, name in enumerate(cloud.names)]
    rows.append({'quantity': 'loss', 'name': 'loss',
                 'reference': losses[reference], 'least': losses[least]})
    return pd.DataFrame(rows, columns=['quantity', 'name', 'reference',
                                       'least'])


def _first_seen(labels):
    mapping = {}
    for label in labels:
        mapping.setdefault(int(label), len(mapping))
    return np.array([mapping[int(label)] for label in labels])


def cluster_kmeans(cloud, k, seed, max_iter=300):
    """Cluster the reliance vectors with Lloyd's k-means.

    Labels are renumbered in order of first appearance, so they depend only
    on the partition.
    """
    if k < 1:
        raise DataError('At least one cluster is required')
    if k > len(cloud):
        raise DataError(f'{k} clusters requested for {len(cloud)} points')
    model = KMeans(n_clusters=int(k), init='k-means++', n_init=1,
                   random_state=int(seed) % 2 ** 32, algorithm='lloyd',
                   tol=0.0, max_iter=int(max_iter))
    labels = model.fit_predict(cloud.mr_matrix)
    log.debug(f'k-means with k={k}: inertia {model.inertia_:.6g} after '
              f'{model.n_iter_} iterations')
    return _first_seen(labels)


def within_cluster_ss(cloud, labels):
    """Return the within-cluster sum of squares of a labelling."""
    mr = cloud.mr_matrix
    labels = np.asarray(labels)
    return float(sum(np.sum((mr[labels == label] -
                             mr[labels == label].mean(axis=0)) ** 2)
                     for label in np.unique(labels)))


def _ranges(grid, overlays):
    mr = grid.cloud.mr_matrix
    ranges = {}
    for j in grid.feature_order:
        values = [mr[:, j]] + [np.atleast_2d(points)[:, j]
                               for points in overlays.values()]
        values = np.concatenate(values)
        low, high = float(values.min()), float(values.max())
        pad = AXIS_PADDING * (high - low) if high > low else \
            AXIS_PADDING * max(1.0, abs(low))
        ranges[j] = (low - pad, high + pad)
    return ranges


def _fmt(value):
    return f'{value:.3f}'


def _scale(value, bounds, offset, flip=False):
    low, high = bounds
    fraction = (value - low) / (high - low)
    if flip:
        fraction = 1 - fraction
    return offset + fraction * PANEL_SIZE


def _svg(grid, overlays):
    order = grid.feature_order
    step = PANEL_SIZE + PANEL_MARGIN / 2
    side = 2 * PANEL_MARGIN + len(order) * step
    root = ET.Element('svg', {'xmlns': SVG_NS, 'version': '1.1',
                              'width': _fmt(side), 'height': _fmt(side),
                              'font-family': 'sans-serif',
                              'font-size': '10'})
    ranges = _ranges(grid, overlays)
    labels = grid.cluster_labels
    for row, i in enumerate(order):
        for col, j in enumerate(order):
            left = PANEL_MARGIN + col * step
            top = PANEL_MARGIN + row * step
            if i == j:
                label = ET.SubElement(root, 'text', {
                    'x': _fmt(left + PANEL_SIZE / 2),
                    'y': _fmt(top + PANEL_SIZE / 2),
                    'text-anchor': 'middle'})
                label.text = grid.cloud.names[i]
                continue
            group = ET.SubElement(root, 'g', {
                'class': 'panel',
                'data-row': grid.cloud.names[i],
                'data-col': grid.cloud.names[j]})
            ET.SubElement(group, 'rect', {
                'x': _fmt(left), 'y': _fmt(top), 'width': _fmt(PANEL_SIZE),
                'height': _fmt(PANEL_SIZE), 'fill': 'none',
                'stroke': '#999999'})
            for k, (x, y) in enumerate(grid.panels[(i, j)]):
                color = PALETTE[labels[k] % len(PALETTE)] \
                    if labels is not None else PALETTE[0]
                ET.SubElement(group, 'circle', {
                    'cx': _fmt(_scale(x, ranges[j], left)),
                    'cy': _fmt(_scale(y, ranges[i], top, flip=True)),
                    'r': '1.5', 'fill': color})
            for name, points in overlays.items():
                series = ET.SubElement(group, 'g', {'class': 'overlay',
                                                    'data-name': name})
                for point in np.atleast_2d(points):
                    ET.SubElement(series, 'circle', {
                        'cx': _fmt(_scale(point[j], ranges[j], left)),
                        'cy': _fmt(_scale(point[i], ranges[i], top,
                                          flip=True)),
                        'r': '0.6', 'fill': OVERLAY_COLOR})
            if row == len(order) - 1:
                axis = ET.SubElement(group, 'text', {
                    'x': _fmt(left + PANEL_SIZE / 2),
                    'y': _fmt(top + PANEL_SIZE + 14),
                    'text-anchor': 'middle'})
                axis.text = grid.cloud.names[j]
            if col == 0:
                axis = ET.SubElement(group, 'text', {
                    'x': _fmt(left - 6), 'y': _fmt(top + PANEL_SIZE / 2),
                    'text-anchor': 'end'})
                axis.text = grid.cloud.names[i]
    return ET.tostring(root, encoding='unicode')


def render_vid(grid, out_path, fmt=None, overlays=None):
    """Write a diagram as long-format CSV or as an SVG panel grid.

    Args:
        grid(VIDGrid): the diagram
        out_path: destination file
        fmt: 'csv' or 'svg', defaulting to the file suffix
        overlays: optional dict name -> points in reliance space, drawn on
            every panel (e.g. an approximated VIC boundary)
    """
    out_path = Path(out_path)
    fmt = (fmt or out_path.suffix.lstrip('.')).lower()
    if fmt not in ('csv', 'svg'):
        raise DataError(f'Unknown diagram format {fmt!r}')
    overlays = {name: np.asarray(points, dtype=float)
                for name, points in (overlays or {}).items()}
    try:
        if fmt == 'csv':
            grid.to_frame().to_csv(out_path, index=False,
                                   float_format='%.17g')
        else:
            with open(out_path, 'w', encoding='utf-8', newline='\n') as out:
                out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
                out.write(_svg(grid, overlays))
                out.write('\n')
    except OSError as error:
        raise DataError(f'Cannot write {out_path}: {error}')
    log.info(f'Wrote {fmt} diagram with {len(grid.panels)} panels to '
             f'{out_path}')
    return str(out_path)
