"""CSV reading and writing for instances, revenue, allocations and training data.

Floats are written with ``repr`` so a write/read round trip is exact, and
rows always follow instance order so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .domain import AllocationInstance, AllocationResult, RevenueMatrix
from .errors import DataFormatError

CUSTOMERS_CSV = "customers.csv"
FUNDS_CSV = "funds.csv"
REVENUE_CSV = "revenue.csv"
ALLOCATION_CSV = "allocation.csv"
TRAIN_CSV = "train.csv"
TRUTH_CSV = "truth.csv"


def _fmt(x):
    return repr(float(x))


def _open_write(path):
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataFormatError("IO_ERROR", str(exc), path=path) from exc


def _write_rows(path, header, rows):
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


class _Table:
    """Header-checked CSV rows with typed, position-aware field access."""

    def __init__(self, path, required):
        self.path = Path(path)
        try:
            with open(self.path, encoding="utf-8", newline="") as fh:
                rows = list(csv.reader(fh))
        except (OSError, UnicodeDecodeError) as exc:
            raise DataFormatError("IO_ERROR", str(exc), path=self.path) from exc
        except csv.Error as exc:
            raise DataFormatError("PARSE_ERROR", str(exc), path=self.path) from exc
        if not rows:
            raise DataFormatError("SCHEMA_ERROR", "missing header row", path=self.path, line=1)
        self.header = [h.strip() for h in rows[0]]
        for name in required:
            if name not in self.header:
                raise DataFormatError("SCHEMA_ERROR", f"missing column {name!r}", path=self.path, line=1)
        self.index = {h: i for i, h in enumerate(self.header)}
        self.rows = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != len(self.header):
                raise DataFormatError(
                    "PARSE_ERROR", f"expected {len(self.header)} fields, got {len(row)}",
                    path=self.path, line=lineno,
                )
            self.rows.append((lineno, row))

    def prefixed(self, prefix):
        cols = [h for h in self.header if h.startswith(prefix)]
        try:
            order = sorted(cols, key=lambda h: int(h[len(prefix):]))
        except ValueError as exc:
            raise DataFormatError("SCHEMA_ERROR", f"bad feature column in {cols}", path=self.path, line=1) from exc
        if [h[len(prefix):] for h in order] != [str(i) for i in range(len(order))]:
            raise DataFormatError("SCHEMA_ERROR", f"feature columns {prefix}* are not 0..n-1",
                                  path=self.path, line=1)
        return order

    def _cell(self, lineno, row, name):
        return self.index[name] + 1, row[self.index[name]].strip()

    def integer(self, lineno, row, name):
        col, raw = self._cell(lineno, row, name)
        try:
            return int(raw)
        except ValueError:
            pass
        try:
            value = float(raw)
        except ValueError:
            value = None
        if value is None or not value.is_integer():
            raise DataFormatError("PARSE_ERROR", f"{name}: expected an integer, got {raw!r}",
                                  path=self.path, line=lineno, column=col)
        return int(value)

    def number(self, lineno, row, name):
        col, raw = self._cell(lineno, row, name)
        try:
            return float(raw)
        except ValueError:
            raise DataFormatError("PARSE_ERROR", f"{name}: expected a number, got {raw!r}",
                                  path=self.path, line=lineno, column=col) from None

    def fail(self, lineno, name, message):
        raise DataFormatError("PARSE_ERROR", message, path=self.path, line=lineno,
                              column=self.index[name] + 1)


# entity tables -------------------------------------------------------------

def write_customers(instance: AllocationInstance, path):
    dim = instance.customer_features.shape[1]
    header = ["id", "risk_tolerance"] + [f"feat_{i}" for i in range(dim)]
    rows = ([int(i), int(t)] + [_fmt(v) for v in feats]
            for i, t, feats in zip(instance.customer_ids, instance.risk_tolerance,
                                   instance.customer_features))
    _write_rows(path, header, rows)


def write_funds(instance: AllocationInstance, path):
    dim = instance.fund_features.shape[1]
    header = ["id", "risk_level", "demand"] + [f"feat_{i}" for i in range(dim)]
    rows = ([int(i), int(r), int(d)] + [_fmt(v) for v in feats]
            for i, r, d, feats in zip(instance.fund_ids, instance.risk_level, instance.demand,
                                      instance.fund_features))
    _write_rows(path, header, rows)


def _check_unique(table, ids, name="id"):
    seen = set()
    for (lineno, _), i in zip(table.rows, ids):
        if i in seen:
            table.fail(lineno, name, f"duplicate id {i}")
        seen.add(i)


def read_customers(path):
    """Returns (ids, risk_tolerance, features)."""
    t = _Table(path, ["id", "risk_tolerance"])
    feats = t.prefixed("feat_")
    ids = [t.integer(ln, r, "id") for ln, r in t.rows]
    _check_unique(t, ids)
    tol = [t.integer(ln, r, "risk_tolerance") for ln, r in t.rows]
    x = np.array([[t.number(ln, r, c) for c in feats] for ln, r in t.rows],
                 dtype=np.float64).reshape(len(ids), len(feats))
    return np.array(ids, dtype=np.int64), np.array(tol, dtype=np.int64), x


def read_funds(path):
    """Returns (ids, risk_level, demand, features)."""
    t = _Table(path, ["id", "risk_level", "demand"])
    feats = t.prefixed("feat_")
    ids = [t.integer(ln, r, "id") for ln, r in t.rows]
    _check_unique(t, ids)
    lvl = [t.integer(ln, r, "risk_level") for ln, r in t.rows]
    dem = [t.integer(ln, r, "demand") for ln, r in t.rows]
    x = np.array([[t.number(ln, r, c) for c in feats] for ln, r in t.rows],
                 dtype=np.float64).reshape(len(ids), len(feats))
    return (np.array(ids, dtype=np.int64), np.array(lvl, dtype=np.int64),
            np.array(dem, dtype=np.int64), x)


# revenue -----------------------------------------------------------------

def write_revenue(revenue: RevenueMatrix, customer_ids, fund_ids, path):
    """One row per eligible pair; absent pairs are ineligible."""
    u, f = np.nonzero(revenue.eligible)
    cid = np.asarray(customer_ids)
    fid = np.asarray(fund_ids)
    vals = revenue.values[u, f]
    rows = ([int(cid[a]), int(fid[b]), _fmt(v)] for a, b, v in zip(u, f, vals))
    _write_rows(path, ["customer_id", "fund_id", "value"], rows)


def read_revenue(path, customer_ids, fund_ids) -> RevenueMatrix:
    t = _Table(path, ["customer_id", "fund_id", "value"])
    cpos = {int(c): i for i, c in enumerate(customer_ids)}
    fpos = {int(f): j for j, f in enumerate(fund_ids)}
    values = np.zeros((len(cpos), len(fpos)))
    elig = np.zeros((len(cpos), len(fpos)), dtype=bool)
    for ln, r in t.rows:
        c = t.integer(ln, r, "customer_id")
        f = t.integer(ln, r, "fund_id")
        if c not in cpos:
            t.fail(ln, "customer_id", f"unknown customer id {c}")
        if f not in fpos:
            t.fail(ln, "fund_id", f"unknown fund id {f}")
        i, j = cpos[c], fpos[f]
        if elig[i, j]:
            t.fail(ln, "fund_id", f"duplicate pair ({c}, {f})")
        v = t.number(ln, r, "value")
        if not np.isfinite(v) or v < 0:
            t.fail(ln, "value", f"revenue must be finite and non-negative, got {v!r}")
        values[i, j] = v
        elig[i, j] = True
    return RevenueMatrix(values, elig)


# instances -----------------------------------------------------------------

def write_instance(instance: AllocationInstance, directory, with_revenue=True):
    d = Path(directory)
    write_customers(instance, d / CUSTOMERS_CSV)
    write_funds(instance, d / FUNDS_CSV)
    if with_revenue:
        write_revenue(instance.revenue, instance.customer_ids, instance.fund_ids, d / REVENUE_CSV)


def read_instance(customers, funds, revenue=None, k=1, n_levels=5) -> AllocationInstance:
    """Assemble an instance from the three CSV files (``revenue`` may be a RevenueMatrix).

    Without revenue every pair gets value 0, which is enough for validation
    and for feeding :func:`~fundalloc.predictor.predict_matrix`.
    """
    cid, tol, cx = read_customers(customers)
    fid, lvl, dem, fx = read_funds(funds)
    if revenue is None:
        matrix = RevenueMatrix.dense(np.zeros((len(cid), len(fid))))
    elif isinstance(revenue, RevenueMatrix):
        matrix = revenue
    else:
        matrix = read_revenue(revenue, cid, fid)
    return AllocationInstance(tol, lvl, dem, matrix, k, cid, fid, cx, fx, n_levels)


# allocations ---------------------------------------------------------------

def write_result(result: AllocationResult, instance: AllocationInstance, path):
    rows = ([int(instance.customer_ids[u]), int(instance.fund_ids[f])] for u, f in result.pairs())
    _write_rows(path, ["customer_id", "fund_id"], rows)


def read_allocation(path, instance: AllocationInstance):
    """Boolean assignment matrix aligned with ``instance``."""
    t = _Table(path, ["customer_id", "fund_id"])
    cpos = {int(c): i for i, c in enumerate(instance.customer_ids)}
    fpos = {int(f): j for j, f in enumerate(instance.fund_ids)}
    x = np.zeros((instance.n_customers, instance.n_funds), dtype=bool)
    for ln, r in t.rows:
        c = t.integer(ln, r, "customer_id")
        f = t.integer(ln, r, "fund_id")
        if c not in cpos:
            t.fail(ln, "customer_id", f"unknown customer id {c}")
        if f not in fpos:
            t.fail(ln, "fund_id", f"unknown fund id {f}")
        x[cpos[c], fpos[f]] = True
    return x


# training data -------------------------------------------------------------

def write_training_data(data, path):
    """Columns ``u_feat_*``, ``f_feat_*``, ``y``, ``R``."""
    du = data.customer_features.shape[1]
    df = data.fund_features.shape[1]
    header = [f"u_feat_{i}" for i in range(du)] + [f"f_feat_{j}" for j in range(df)] + ["y", "R"]
    rows = ([_fmt(v) for v in cu] + [_fmt(v) for v in fu] + [int(y), _fmt(r)]
            for cu, fu, y, r in zip(data.customer_features, data.fund_features, data.y, data.revenue))
    _write_rows(path, header, rows)


def read_training_data(path):
    from .synth import TrainingData

    t = _Table(path, ["y", "R"])
    ucols = t.prefixed("u_feat_")
    fcols = t.prefixed("f_feat_")
    n = len(t.rows)
    xu = np.empty((n, len(ucols)))
    xf = np.empty((n, len(fcols)))
    y = np.empty(n, dtype=np.int64)
    rev = np.empty(n)
    for i, (ln, r) in enumerate(t.rows):
        xu[i] = [t.number(ln, r, c) for c in ucols]
        xf[i] = [t.number(ln, r, c) for c in fcols]
        y[i] = t.integer(ln, r, "y")
        rev[i] = t.number(ln, r, "R")
        if y[i] not in (0, 1):
            t.fail(ln, "y", f"y must be 0 or 1, got {y[i]}")
        if not np.isfinite(rev[i]) or rev[i] < 0:
            t.fail(ln, "R", f"R must be finite and non-negative, got {rev[i]!r}")
        if (y[i] == 1) != (rev[i] > 0):
            t.fail(ln, "R", "y = 1 must coincide with R > 0")
    return TrainingData(xu, xf, y, rev)


def write_truth(instance: AllocationInstance, truth, path):
    """Ground truth per (customer, fund) pair in row-major instance order."""
    n, m = instance.n_customers, instance.n_funds
    cid = np.repeat(instance.customer_ids, m)
    fid = np.tile(instance.fund_ids, n)
    rows = ([int(c), int(f), _fmt(p), _fmt(mu), _fmt(s)]
            for c, f, p, mu, s in zip(cid, fid, truth.p_star, truth.mu_star, truth.sigma_star))
    _write_rows(path, ["customer_id", "fund_id", "p_star", "mu_star", "sigma_star"], rows)


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise DataFormatError("IO_ERROR", str(exc), path=path) from exc
