"""CSV and JSON artifacts.

Floats are written with ``repr`` (shortest round-tripping form), so a
written file read back and rewritten is byte-identical.

Column layouts::

    dataset.csv     k,z1..zn,mu1..mun
    *_run.csv       k,t,s_true,v_true,s_nom,v_nom,u,mu_s,mu_v,stage_cost
    prediction.csv  k,mu1_true..mun_true,mu1_pred..mun_pred
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .experiment import Dataset, PredictionTable, RunLog

RUNLOG_COLUMNS = ("k", "t", "s_true", "v_true", "s_nom", "v_nom", "u", "mu_s", "mu_v", "stage_cost")


def _fmt(value) -> str:
    return repr(float(value))


def _write_rows(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _read_rows(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing artifact: {path}")
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    body = [line.split(",") for line in lines[1:] if line]
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
    data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    return header, data


def write_dataset(dataset: Dataset, path) -> None:
    nz, n = dataset.z.shape[1], dataset.mu.shape[1]
    header = ["k"] + [f"z{i + 1}" for i in range(nz)] + [f"mu{i + 1}" for i in range(n)]
    rows = (
        [str(k)] + [_fmt(v) for v in dataset.z[k]] + [_fmt(v) for v in dataset.mu[k]]
        for k in range(len(dataset))
    )
    _write_rows(path, header, rows)


def read_dataset(path) -> Dataset:
    header, data = _read_rows(path)
    z_cols = [i for i, h in enumerate(header) if h.startswith("z")]
    mu_cols = [i for i, h in enumerate(header) if h.startswith("mu")]
    if header[0] != "k" or not z_cols or not mu_cols:
        raise ValueError(f"{path}: not a dataset CSV (header {','.join(header)})")
    if not np.array_equal(data[:, 0], np.arange(len(data))):
        raise ValueError(f"{path}: rows are not ordered by k")
    return Dataset(data[:, z_cols], data[:, mu_cols])


def write_runlog(log: RunLog, path) -> None:
    rows = (
        [
            str(k),
            _fmt(k * log.dt),
            _fmt(log.x_true[k, 0]),
            _fmt(log.x_true[k, 1]),
            _fmt(log.x_pred[k, 0]),
            _fmt(log.x_pred[k, 1]),
            _fmt(log.u[k]),
            _fmt(log.mu[k, 0]),
            _fmt(log.mu[k, 1]),
            _fmt(log.stage_cost[k]),
        ]
        for k in range(len(log))
    )
    _write_rows(path, RUNLOG_COLUMNS, rows)


def read_runlog(path) -> RunLog:
    header, data = _read_rows(path)
    if tuple(header) != RUNLOG_COLUMNS:
        raise ValueError(f"{path}: not a run-log CSV (header {','.join(header)})")
    dt = float(data[1, 1]) if len(data) > 1 else 0.0
    return RunLog(
        dt=dt,
        x_true=data[:, 2:4].copy(),
        x_pred=data[:, 4:6].copy(),
        u=data[:, 6].copy(),
        mu=data[:, 7:9].copy(),
        stage_cost=data[:, 9].copy(),
    )


def write_prediction(table: PredictionTable, path) -> None:
    n = table.mu_true.shape[1]
    header = (["k"] + [f"mu{i + 1}_true" for i in range(n)]
              + [f"mu{i + 1}_pred" for i in range(n)])
    rows = (
        [str(int(k))] + [_fmt(v) for v in table.mu_true[i]] + [_fmt(v) for v in table.mu_pred[i]]
        for i, k in enumerate(table.k)
    )
    _write_rows(path, header, rows)


def read_prediction(path) -> PredictionTable:
    header, data = _read_rows(path)
    true_cols = [i for i, h in enumerate(header) if h.endswith("_true")]
    pred_cols = [i for i, h in enumerate(header) if h.endswith("_pred")]
    if header[0] != "k" or len(true_cols) != len(pred_cols) or not true_cols:
        raise ValueError(f"{path}: not a prediction CSV (header {','.join(header)})")
    return PredictionTable(data[:, 0].astype(int), data[:, true_cols], data[:, pred_cols])


def write_json(payload: dict, path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
