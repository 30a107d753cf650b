"""Disk cache for kernel tables keyed by their full build inputs."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .stable1d import KernelTable1D, TruncationParams, build_kernel_table


def cache_dir() -> Path:
    root = os.environ.get("CYLSTABLE_CACHE")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "cylstable"


def _key(params: TruncationParams, t_nodes, x_nodes, mollify_h, cap, check_mass) -> str:
    payload = json.dumps(
        {
            "v": __version__,
            "alpha": params.alpha,
            "delta": params.delta,
            "eps": params.eps,
            "tau": params.tau,
            "d": params.d,
            "mollify": mollify_h or 0.0,
            "cap": cap,
            "check": bool(check_mass),
        },
        sort_keys=True,
    ).encode()
    digest = hashlib.sha256(payload)
    digest.update(np.asarray(t_nodes, dtype=float).tobytes())
    digest.update(np.asarray(x_nodes, dtype=float).tobytes())
    return digest.hexdigest()[:24]


def cached_kernel_table(
    params: TruncationParams,
    t_nodes,
    x_nodes,
    mollify_h=None,
    cap: float = 45.0,
    check_mass: bool = True,
) -> KernelTable1D:
    """Build a kernel table, reusing a cached copy when inputs match exactly."""
    key = _key(params, t_nodes, x_nodes, mollify_h, cap, check_mass)
    path = cache_dir() / f"ktab_{key}.npz"
    if path.exists():
        data = np.load(path, allow_pickle=False)
        return KernelTable1D(
            alpha=params.alpha,
            delta=params.delta,
            t_nodes=data["t_nodes"],
            x_nodes=data["x_nodes"],
            values=data["values"],
            meta=json.loads(str(data["meta"])),
        )
    table = build_kernel_table(
        params, t_nodes, x_nodes, mollify_h=mollify_h, cap=cap, check_mass=check_mass
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez_compressed(
        tmp,
        t_nodes=table.t_nodes,
        x_nodes=table.x_nodes,
        values=table.values,
        meta=json.dumps(table.meta, sort_keys=True),
    )
    os.replace(tmp, path)
    return table
