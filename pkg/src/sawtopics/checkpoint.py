"""Checkpoint I/O: a zip of .npy arrays plus a JSON manifest.

Zip entries carry a fixed timestamp so identical parameters give
byte-identical files.
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


def save(path, params: dict[str, np.ndarray], config, step: int, extra: dict | None = None):
    path = Path(path)
    arrays = path.with_suffix(".npz")
    with zipfile.ZipFile(arrays, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(params):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(params[name], dtype="<f8"), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())
    manifest = {
        "layer_widths": [int(k) for k in config.layer_widths],
        "embed_dim": int(config.embed_dim),
        "hidden": int(config.hidden),
        "variant": config.variant,
        "step": int(step),
        "precision": config.precision,
        "prior_rate": float(config.prior_rate),
        "log_input": bool(config.log_input),
        "scale_mode": config.scale_mode,
        "seed": int(config.seed),
    }
    manifest.update(extra or {})
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return arrays


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    arrays = path.with_suffix(".npz")
    meta = path.with_suffix(".json")
    if not arrays.exists():
        raise FileNotFoundError(f"checkpoint arrays not found: {arrays}")
    if not meta.exists():
        raise FileNotFoundError(f"checkpoint manifest not found: {meta}")
    with np.load(arrays, allow_pickle=False) as z:
        params = {k: z[k].copy() for k in z.files}
    return params, json.loads(meta.read_text())
