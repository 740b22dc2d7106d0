"""Harness plumbing: ordering, CSV output, dataset building."""

import csv

import numpy as np
import pytest

from objpursuit import harness
from objpursuit.config import make_config


class TestPursuitOrder:
    def test_is_permutation(self):
        ids = [f"o{i}" for i in range(10)]
        order = harness.pursuit_order(ids, 3)
        assert sorted(order) == sorted(ids)

    def test_deterministic(self):
        ids = [f"o{i}" for i in range(10)]
        assert harness.pursuit_order(ids, 3) == harness.pursuit_order(ids, 3)

    def test_seed_changes_order(self):
        ids = [f"o{i}" for i in range(10)]
        assert harness.pursuit_order(ids, 1) != harness.pursuit_order(ids, 2)


class TestCsv:
    def test_comment_header_and_rows(self, tmp_path):
        path = tmp_path / "x.csv"
        harness.write_csv(path, [{"a": 1, "b": 2}], ["a", "b"], comment="cols a b")
        lines = path.read_text().splitlines()
        assert lines[0] == "# cols a b"
        assert lines[1] == "a,b"
        assert lines[2] == "1,2"

    def test_summary_row_has_all_fields(self):
        from objpursuit.evaluation import DynamicsReport
        cfg = make_config()
        rep = DynamicsReport(0.1, 0.2, 0.1, 0.0, 0.9, 10)
        row = harness.summary_row(cfg, rep, 0.05)
        assert set(harness.SUMMARY_FIELDS) == set(row)


class TestDatasets:
    def test_parallel_matches_serial(self, monkeypatch):
        from objpursuit import scenesim as sim
        pre, pur, uns = sim.make_object_library(2, 2, 1, 1, 0)
        lib = pre + pur + uns
        serial = harness.build_datasets(pre, lib, 6, 4)
        monkeypatch.setenv("OBJP_THREADS", "4")
        parallel = harness.build_datasets(pre, lib, 6, 4)
        assert serial.keys() == parallel.keys()
        for k in serial:
            for a, b in zip(serial[k].train + serial[k].holdout,
                            parallel[k].train + parallel[k].holdout):
                np.testing.assert_array_equal(a.image, b.image)

    def test_run_meta_written(self, tmp_path):
        cfg = make_config({"out.dir": str(tmp_path)})
        harness.write_run_meta(tmp_path, cfg)
        assert (tmp_path / "run-meta.json").exists()
