"""
Unit tests for field dumps and the diagnostics CSV.
"""
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from errors import ArgumentError
from fielddump import (CSV_COLUMNS, HEADER, MAGIC, read_diagnostics_csv, read_field,
                       write_diagnostics_csv, write_field)
from torusflow import Diagnostics, DiagnosticsRow


class TestFieldDump(unittest.TestCase):
    """Test cases for the binary field format."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_header_layout(self):
        """Test the magic, header fields and payload size."""
        path = write_field(self.dir / 'phi.bin', np.arange(6.0).reshape(2, 3), n=3, p=2, K=8, t=0.5)
        data = path.read_bytes()
        self.assertEqual(data[:8], MAGIC)
        self.assertEqual(HEADER.size, 32)
        self.assertEqual(struct.unpack_from('<IIIId', data, 8), (3, 2, 8, 6, 0.5))
        self.assertEqual(len(data), 32 + 6 * 8)

    def test_x1_fastest_order(self):
        """Test that the first grid axis varies fastest in the payload."""
        values = np.arange(6.0).reshape(2, 3)
        path = write_field(self.dir / 'phi.bin', values, n=3, p=2, K=8, t=0.0)
        flat = np.frombuffer(path.read_bytes(), dtype='<f8', offset=HEADER.size)
        np.testing.assert_array_equal(flat, [0.0, 3.0, 1.0, 4.0, 2.0, 5.0])

    def test_read_back(self):
        """Test that reading restores header and values."""
        values = np.random.default_rng(1).normal(size=(8, 1, 1, 8))
        path = write_field(self.dir / 'phi.bin', values, n=2, p=2, K=8, t=1.25)
        dump = read_field(path, shape=values.shape)
        self.assertEqual((dump.n, dump.p, dump.K, dump.t), (2, 2, 8, 1.25))
        np.testing.assert_array_equal(dump.values, values)
        self.assertEqual(read_field(path).values.shape, (64,))

    def test_bad_magic(self):
        """Test that foreign files are rejected."""
        path = self.dir / 'other.bin'
        path.write_bytes(b'NOTAFILE' + bytes(40))
        with self.assertRaises(ArgumentError):
            read_field(path)

    def test_truncated(self):
        """Test that a short payload is rejected."""
        path = write_field(self.dir / 'phi.bin', np.ones(4), n=3, p=2, K=8, t=0.0)
        path.write_bytes(path.read_bytes()[:-8])
        with self.assertRaises(ArgumentError):
            read_field(path)

    def test_wrong_shape(self):
        """Test that a mismatching target shape is rejected."""
        path = write_field(self.dir / 'phi.bin', np.ones(4), n=3, p=2, K=8, t=0.0)
        with self.assertRaises(ArgumentError):
            read_field(path, shape=(3, 2))


class TestDiagnosticsCsv(unittest.TestCase):
    """Test cases for the diagnostics table."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'diagnostics.csv'
        self.diagnostics = Diagnostics(rows=[
            DiagnosticsRow(0.0, 0.1, 0.2, 1 / 3, 2.0, 0.3, 0.0),
            DiagnosticsRow(0.0625, 1e-7, 2e-7, -1e-17, 1.999, 0.1, 1.5e-4),
        ])

    def tearDown(self):
        self.tmp.cleanup()

    def test_header(self):
        """Test the column header line."""
        write_diagnostics_csv(self.path, self.diagnostics)
        first = self.path.read_text().splitlines()[0]
        self.assertEqual(first, ','.join(CSV_COLUMNS))

    def test_values_are_exact(self):
        """Test that floats survive the text format unchanged."""
        write_diagnostics_csv(self.path, self.diagnostics)
        rows = read_diagnostics_csv(self.path)
        self.assertEqual(len(rows), 2)
        self.assertEqual(rows[0]['mean_phi_t'], 1 / 3)
        self.assertEqual(rows[1]['dt'], 1.5e-4)

    def test_foreign_header(self):
        """Test that a different header is rejected."""
        self.path.write_text('a,b\n1,2\n')
        with self.assertRaises(ArgumentError):
            read_diagnostics_csv(self.path)


if __name__ == '__main__':
    unittest.main()
