"""Tests for the vid module."""
import tempfile
import xml.etree.ElementTree as ET
from pathlib import Path
from unittest import TestCase

import numpy as np
import pandas as pd

from vicloud.exceptions import DataError
from vicloud.models import MRVector, ReliancePoint, VICCloud, Variant
from vicloud.vid import (SVG_NS, bounds_table, cluster_kmeans, project_pairs,
                         render_vid, tradeoff_table, within_cluster_ss)


def make_cloud(mr, losses=None, betas=None, names=None):
    """Build a ratio-variant cloud from a reliance matrix."""
    mr = np.asarray(mr, dtype=float)
    losses = np.ones(len(mr)) if losses is None else losses
    betas = np.zeros((len(mr), mr.shape[1])) if betas is None else betas
    names = names or [f'x{k + 1}' for k in range(mr.shape[1])]
    points = [ReliancePoint(beta, MRVector(values, Variant.RATIO, loss), loss)
              for beta, values, loss in zip(betas, mr, losses)]
    return VICCloud(points, names, {},
                    [f'beta_{name}' for name in names])


def blobs(seed=0):
    """Return 30 points in three tight, well separated groups."""
    rng = np.random.default_rng(seed)
    centers = np.array([[1.0, 1.0], [5.0, 1.0], [3.0, 6.0]])
    return np.repeat(centers, 10, axis=0) + \
        rng.normal(scale=0.05, size=(30, 2))


class TestProjection(TestCase):
    """Test project_pairs."""

    def test_panel_counts(self):
        """Test p (p - 1) panels."""
        for p, expected in ((2, 2), (4, 12)):
            grid = project_pairs(make_cloud(np.ones((5, p))))
            self.assertEqual(len(grid.panels), expected)

    def test_axes(self):
        """Test that panel (i, j) puts feature j horizontally."""
        grid = project_pairs(make_cloud([[1.0, 2.0, 3.0]]))
        np.testing.assert_array_equal(grid.panels[(0, 2)], [[3.0, 1.0]])

    def test_feature_subset(self):
        """Test restricting and validating the displayed features."""
        cloud = make_cloud(np.ones((3, 3)))
        self.assertEqual(len(project_pairs(cloud, [2, 0]).panels), 2)
        with self.assertRaises(DataError):
            project_pairs(cloud, [0, 3])
        with self.assertRaises(DataError):
            project_pairs(cloud, [1, 1])

    def test_empty_cloud(self):
        """Test that an empty cloud cannot be projected."""
        with self.assertRaises(DataError):
            project_pairs(VICCloud([], ['x1', 'x2'], {}))


class TestBounds(TestCase):
    """Test bounds_table and tradeoff_table."""

    def test_sorted_by_upper(self):
        """Test the order and the extremes."""
        cloud = make_cloud([[1.0, 1.5, 1.1], [1.2, 1.3, 2.0]])
        table = bounds_table(cloud)
        self.assertEqual(list(table.to_frame()['feature']),
                         ['x3', 'x2', 'x1'])
        self.assertEqual(table['x2'], {'name': 'x2', 'upper': 1.5,
                                       'lower': 1.3})
        with self.assertRaises(KeyError):
            table['x9']

    def test_tradeoff(self):
        """Test comparing the least reliant model with the best one."""
        cloud = make_cloud([[1.4, 1.2], [1.1, 1.3], [1.1, 1.6]],
                           losses=[10.0, 10.4, 10.2],
                           betas=[[0.4, 0.5], [0.2, 0.7], [0.1, 0.8]])
        frame = tradeoff_table(cloud, 0)
        loss = frame[frame['quantity'] == 'loss'].iloc[0]
        # ties on mr go to the lower loss
        self.assertEqual((loss['reference'], loss['least']), (10.0, 10.2))
        betas = frame[frame['quantity'] == 'beta']
        self.assertEqual(list(betas['name']), ['beta_x1', 'beta_x2'])
        self.assertEqual(list(betas['least']), [0.1, 0.8])

    def test_tradeoff_reference(self):
        """Test an explicit reference and its range check."""
        cloud = make_cloud([[1.4, 1.2], [1.1, 1.3]])
        frame = tradeoff_table(cloud, 1, reference=1)
        mr = frame[frame['quantity'] == 'mr']
        self.assertEqual(list(mr['reference']), [1.1, 1.3])
        with self.assertRaises(DataError):
            tradeoff_table(cloud, 1, reference=2)


class TestClusters(TestCase):
    """Test cluster_kmeans."""

    def test_blobs(self):
        """Test that three separated groups are recovered."""
        cloud = make_cloud(blobs())
        labels = cluster_kmeans(cloud, 3, seed=0)
        np.testing.assert_array_equal(labels, np.repeat([0, 1, 2], 10))
        self.assertLess(within_cluster_ss(cloud, labels), 1.0)

    def test_deterministic(self):
        """Test that the seed fixes the labels."""
        cloud = make_cloud(np.random.default_rng(1).normal(size=(40, 3)))
        np.testing.assert_array_equal(cluster_kmeans(cloud, 4, 7),
                                      cluster_kmeans(cloud, 4, 7))

    def test_extreme_k(self):
        """Test k = 1 and k = n."""
        cloud = make_cloud(blobs()[:6])
        np.testing.assert_array_equal(cluster_kmeans(cloud, 1, 0),
                                      np.zeros(6))
        labels = cluster_kmeans(cloud, 6, 0)
        np.testing.assert_array_equal(labels, np.arange(6))
        self.assertAlmostEqual(within_cluster_ss(cloud, labels), 0.0)

    def test_invalid_k(self):
        """Test k = 0 and k > n."""
        cloud = make_cloud(blobs()[:4])
        with self.assertRaises(DataError):
            cluster_kmeans(cloud, 0, 0)
        with self.assertRaises(DataError):
            cluster_kmeans(cloud, 5, 0)


class TestRender(TestCase):
    """Test render_vid."""

    def setUp(self):
        """Initialize before tests are executed."""
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)
        cloud = make_cloud(blobs())
        self.grid = project_pairs(cloud).with_clusters(
            cluster_kmeans(cloud, 3, 0))

    def tearDown(self):
        """Clean up after tests are executed."""
        self.tmp.cleanup()

    def test_svg_structure(self):
        """Test that the SVG parses with one group per panel."""
        path = render_vid(self.grid, self.out / 'vid.svg',
                          overlays={'ring': [[1.0, 1.0], [2.0, 2.0]]})
        root = ET.parse(path).getroot()
        self.assertEqual(root.tag, f'{{{SVG_NS}}}svg')
        panels = [g for g in root.iter(f'{{{SVG_NS}}}g')
                  if g.get('class') == 'panel']
        self.assertEqual(len(panels), 2)
        overlays = [g for g in root.iter(f'{{{SVG_NS}}}g')
                    if g.get('class') == 'overlay']
        self.assertEqual({g.get('data-name') for g in overlays}, {'ring'})

    def test_svg_reproducible(self):
        """Test that identical inputs render identical bytes."""
        first = Path(render_vid(self.grid, self.out / 'a.svg')).read_bytes()
        second = Path(render_vid(self.grid, self.out / 'b.svg')).read_bytes()
        self.assertEqual(first, second)

    def test_csv(self):
        """Test the long-format table."""
        path = render_vid(self.grid, self.out / 'vid.csv')
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns),
                         ['row_feature', 'col_feature', 'x', 'y', 'cluster'])
        self.assertEqual(len(frame), 2 * 30)
        self.assertEqual(sorted(frame['cluster'].unique()), [0, 1, 2])

    def test_csv_without_clusters(self):
        """Test that an unclustered diagram leaves the column empty."""
        grid = project_pairs(make_cloud(blobs()))
        frame = pd.read_csv(render_vid(grid, self.out / 'plain.csv'))
        self.assertTrue(frame['cluster'].isna().all())

    def test_format_override(self):
        """Test an explicit format and an unknown one."""
        path = render_vid(self.grid, self.out / 'diagram.out', fmt='csv')
        self.assertEqual(len(pd.read_csv(path)), 60)
        with self.assertRaises(DataError):
            render_vid(self.grid, self.out / 'vid.png')
