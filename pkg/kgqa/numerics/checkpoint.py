# numerics/checkpoint.py
"""Flat parameter checkpoints.

``<stem>.bin`` holds little-endian float64 arrays back to back;
``<stem>.json`` is the manifest listing each array's name, shape and byte
offset. Both files are written to a temporary name and renamed into place.
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from ..errors import DataError

FORMAT_VERSION = 1
DTYPE = '<f8'


def checkpoint_paths(stem: Union[str, Path]) -> Tuple[Path, Path]:
    stem = Path(stem)
    return stem.with_suffix('.bin'), stem.with_suffix('.json')


def save_checkpoint(
    stem: Union[str, Path],
    tensors: Mapping[str, np.ndarray],
    meta: Optional[Dict[str, Any]] = None,
) -> Tuple[Path, Path]:
    bin_path, manifest_path = checkpoint_paths(stem)
    bin_path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    offset = 0
    chunks = []
    for name in tensors:
        arr = np.ascontiguousarray(tensors[name], dtype=DTYPE)
        raw = arr.tobytes()
        entries.append({
            'name': name,
            'shape': list(arr.shape),
            'offset': offset,
            'dtype': DTYPE,
        })
        chunks.append(raw)
        offset += len(raw)

    manifest = {'format': FORMAT_VERSION, 'tensors': entries, 'meta': meta or {}}

    tmp_bin = bin_path.with_suffix('.bin.tmp')
    tmp_manifest = manifest_path.with_suffix('.json.tmp')
    with open(tmp_bin, 'wb') as f:
        for raw in chunks:
            f.write(raw)
    with open(tmp_manifest, 'w') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    os.replace(tmp_bin, bin_path)
    os.replace(tmp_manifest, manifest_path)
    return bin_path, manifest_path


def load_checkpoint(stem: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    bin_path, manifest_path = checkpoint_paths(stem)
    if not manifest_path.exists() or not bin_path.exists():
        raise DataError(f"checkpoint not found: {Path(stem)}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    if manifest.get('format') != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format {manifest.get('format')!r}")
    blob = bin_path.read_bytes()

    tensors: Dict[str, np.ndarray] = {}
    for entry in manifest['tensors']:
        shape = tuple(entry['shape'])
        count = int(np.prod(shape)) if shape else 1
        start = entry['offset']
        end = start + count * np.dtype(entry['dtype']).itemsize
        if end > len(blob):
            raise DataError(f"checkpoint {bin_path} truncated at tensor {entry['name']}")
        arr = np.frombuffer(blob[start:end], dtype=entry['dtype']).reshape(shape)
        tensors[entry['name']] = arr.astype(np.float64)
    return tensors, manifest.get('meta', {})
