"""Bundled example data."""

import csv
import json
from importlib import resources

import numpy as np


def load_dental(drop_outlier=True):
    """Classic growth-curve data: 27 children measured at ages 8-14.

    Returns (Y, X, t, meta): Y is n x 4 distances, X is the n x 1 group
    indicator (girl 0, boy 1), t the measurement ages, meta the fixture
    metadata.  By default the outlying subject recorded in the metadata
    is removed, matching the reference analyses.
    """
    pkg = resources.files("envcore") / "data"
    meta = json.loads((pkg / "dental.json").read_text())
    rows = list(csv.DictReader((pkg / "dental.csv").read_text().splitlines()))
    if drop_outlier:
        rows = [row for row in rows if row["subject"] != meta["outlier"]]
    Y = np.array([[float(row[f"y{a}"]) for a in meta["ages"]]
                  for row in rows])
    X = np.array([[float(meta["group_coding"][row["group"]])]
                  for row in rows])
    return Y, X, np.asarray(meta["ages"], dtype=float), meta
