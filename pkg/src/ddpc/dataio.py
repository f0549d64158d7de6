"""CSV and JSON serialization of trajectory datasets.

CSV layout: one row per time step with a leading trajectory-id column, then
the input components u_1..u_m and output components y_1..y_p.  Trajectories
appear in order, rows within a trajectory in time order.  The JSON mirror
additionally stores the window depth, so a Dataset round-trips completely.
"""
from __future__ import annotations

import csv
import json

import numpy as np

from .behavior import Dataset, Trajectory

__all__ = [
    "save_trajectories_csv",
    "load_trajectories_csv",
    "save_dataset_csv",
    "load_dataset_csv",
    "save_dataset_json",
    "load_dataset_json",
]


def save_trajectories_csv(trajectories, path) -> None:
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("nothing to save: empty trajectory list")
    m, p = trajectories[0].m, trajectories[0].p
    header = ["traj"] + [f"u_{i+1}" for i in range(m)] + [f"y_{i+1}" for i in range(p)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for tid, traj in enumerate(trajectories):
            for k in range(traj.length):
                row = [tid] + [repr(v) for v in traj.inputs[k]] + [repr(v) for v in traj.outputs[k]]
                writer.writerow(row)


def load_trajectories_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    m = sum(1 for name in header if name.startswith("u_"))
    p = sum(1 for name in header if name.startswith("y_"))
    if header[0] != "traj" or m == 0 or p == 0 or len(header) != 1 + m + p:
        raise ValueError(f"{path}: unrecognized header {header}")
    groups: dict = {}
    order = []
    for row in rows[1:]:
        tid = row[0]
        if tid not in groups:
            groups[tid] = []
            order.append(tid)
        groups[tid].append([float(v) for v in row[1:]])
    trajectories = []
    for tid in order:
        block = np.array(groups[tid])
        trajectories.append(Trajectory(block[:, :m], block[:, m:]))
    return trajectories


def save_dataset_csv(dataset: Dataset, path) -> None:
    save_trajectories_csv(dataset.trajectories, path)


def load_dataset_csv(path, window_depth: int) -> Dataset:
    return Dataset(tuple(load_trajectories_csv(path)), window_depth)


def save_dataset_json(dataset: Dataset, path) -> None:
    payload = {
        "window_depth": dataset.window_depth,
        "trajectories": [
            {"inputs": t.inputs.tolist(), "outputs": t.outputs.tolist()}
            for t in dataset.trajectories
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_dataset_json(path) -> Dataset:
    with open(path) as fh:
        payload = json.load(fh)
    trajectories = tuple(
        Trajectory(np.array(t["inputs"]), np.array(t["outputs"]))
        for t in payload["trajectories"]
    )
    return Dataset(trajectories, int(payload["window_depth"]))
