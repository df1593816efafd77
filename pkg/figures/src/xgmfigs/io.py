"""Readers for the simulator's archived run directories.

A valid run directory contains manifest.json plus summary.csv and
trajectories.csv (or rates.csv for rate grids).  Figures are computed from
these files only — never by re-running simulations — so a rendered figure is
reproducible from the archive alone.
"""

from __future__ import annotations

import json
import os

import pandas as pd


class RunDirError(ValueError):
    pass


def load_manifest(run_dir: str) -> dict:
    path = os.path.join(run_dir, "manifest.json")
    if not os.path.isdir(run_dir):
        raise RunDirError(f"{run_dir}: not a directory")
    if not os.path.exists(path):
        raise RunDirError(f"{run_dir}: no manifest.json (not a run directory)")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_csv(run_dir: str, name: str, required: tuple[str, ...]) -> pd.DataFrame:
    load_manifest(run_dir)
    path = os.path.join(run_dir, name)
    if not os.path.exists(path):
        raise RunDirError(f"{run_dir}: missing {name}")
    df = pd.read_csv(path)
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise RunDirError(f"{path}: missing columns {missing}")
    if df.empty:
        raise RunDirError(f"{path}: no rows")
    return df


def load_summary(run_dir: str, required: tuple[str, ...] = ()) -> pd.DataFrame:
    base = ("run_id", "seed", "k", "sigma", "protocol", "final_loss",
            "final_zero_noise_error", "final_coverage")
    return _load_csv(run_dir, "summary.csv", base + tuple(required))


def load_trajectories(run_dir: str, required: tuple[str, ...] = ()) -> pd.DataFrame:
    base = ("run_id", "seed", "k", "sigma", "protocol", "step", "t", "loss")
    return _load_csv(run_dir, "trajectories.csv", base + tuple(required))


def load_rates(run_dir: str) -> pd.DataFrame:
    return _load_csv(run_dir, "rates.csv",
                     ("phi", "value", "rate_mode", "sigma", "d_m11", "d_rho1"))


def load_many_summaries(run_dirs, required: tuple[str, ...] = ()) -> pd.DataFrame:
    frames = []
    for d in run_dirs:
        df = load_summary(d, required)
        df["run_dir"] = d
        frames.append(df)
    return pd.concat(frames, ignore_index=True)
