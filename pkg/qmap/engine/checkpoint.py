"""Checkpoints: a JSON manifest plus one little-endian float32 blob per array."""
import logging
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from qmap.engine.params import ParamStore
from qmap.schemas.checkpoint import ArrayEntry, CheckpointManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
BLOB_DTYPE = np.dtype('<f4')


def _blob_name(store: str, name: str) -> str:
    return f'{store}.{name}.f32'


def save_checkpoint(directory, manifest: CheckpointManifest, stores: Dict[str, ParamStore]) -> Path:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for store_name, store in stores.items():
        for name, array in store.items():
            file_name = _blob_name(store_name, name)
            np.ascontiguousarray(array, dtype=BLOB_DTYPE).tofile(path / file_name)
            entries.append(ArrayEntry(store=store_name, name=name, shape=array.shape, file=file_name))
    manifest = manifest.model_copy(update={'arrays': entries})
    (path / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2))
    logger.info(f'Saved checkpoint {manifest.spec_name} step {manifest.step} to {path}')
    return path


def load_manifest(directory) -> CheckpointManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f'No checkpoint manifest at {path}')
    return CheckpointManifest.model_validate_json(path.read_text())


def load_checkpoint(directory) -> Tuple[CheckpointManifest, Dict[str, ParamStore]]:
    path = Path(directory)
    manifest = load_manifest(path)
    stores: Dict[str, ParamStore] = {}
    for entry in manifest.arrays:
        data = np.fromfile(path / entry.file, dtype=BLOB_DTYPE)
        expected = int(np.prod(entry.shape)) if entry.shape else 1
        if data.size != expected:
            raise ValueError(f'{entry.file}: expected {expected} values, found {data.size}')
        stores.setdefault(entry.store, ParamStore())[entry.name] = data.astype(np.float32).reshape(entry.shape)
    return manifest, stores
