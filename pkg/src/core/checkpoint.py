import io
import json
import logging
import zipfile
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.core.errors import CheckpointError
from src.core.network import ModelParams

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=FIXED_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(params: ModelParams, path: Union[str, Path], config_hash: str,
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Writes parameters to a zip archive holding `meta.json` and one `params/<name>.npy` per block.
    Member timestamps are fixed, so equal parameters give byte-identical files.

    Args:
        params (ModelParams): Parameters to store.
        path (Union[str, Path]): Target file.
        config_hash (str): Architecture hash of the run configuration.
        extra (Optional[Dict[str, Any]]): Additional JSON-serializable metadata (variant, epoch, ...).

    Returns:
        Path: The written checkpoint.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "d_h": params.d_h,
        "embedding_dim": params.embedding_dim,
        "emotion_dim": params.emotion_dim,
        "params": [{"name": name, "shape": list(params[name].shape)} for name in params.names],
        "extra": extra or {},
    }
    with zipfile.ZipFile(path, "w") as archive:
        archive.writestr(_member("meta.json"), json.dumps(meta, indent=2, sort_keys=True))
        for name in params.names:
            buffer = io.BytesIO()
            np.save(buffer, np.ascontiguousarray(params[name], dtype=np.float64), allow_pickle=False)
            archive.writestr(_member(f"params/{name}.npy"), buffer.getvalue())
    logger.info(f"💾 Saved checkpoint with {len(params.names)} parameter blocks to {path}")
    return path


def load_checkpoint(path: Union[str, Path],
                    expected_hash: Optional[str] = None) -> Tuple[ModelParams, Dict[str, Any]]:
    """
    Reads a checkpoint written by `save_checkpoint`.

    Args:
        path (Union[str, Path]): Checkpoint file.
        expected_hash (Optional[str]): When given, the stored config hash must match it.

    Returns:
        Tuple[ModelParams, Dict[str, Any]]: The parameters and the stored metadata.

    Raises:
        FileNotFoundError: If the file does not exist.
        CheckpointError: On an unknown format version, a hash mismatch or a corrupt archive.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path, "r") as archive:
            meta = json.loads(archive.read("meta.json"))
            if meta.get("format_version") != FORMAT_VERSION:
                raise CheckpointError(f"Unsupported checkpoint version {meta.get('format_version')} in {path}")
            if expected_hash is not None and meta["config_hash"] != expected_hash:
                raise CheckpointError(
                    f"Checkpoint {path} was trained with a different architecture configuration "
                    f"({meta['config_hash'][:12]} != {expected_hash[:12]})"
                )
            arrays = {}
            for entry in meta["params"]:
                value = np.load(io.BytesIO(archive.read(f"params/{entry['name']}.npy")), allow_pickle=False)
                if list(value.shape) != entry["shape"]:
                    raise CheckpointError(f"Parameter '{entry['name']}' has shape {value.shape}, expected {entry['shape']}")
                arrays[entry["name"]] = value
    except (zipfile.BadZipFile, KeyError, ValueError) as e:
        raise CheckpointError(f"Corrupt checkpoint {path}: {e}") from e

    params = ModelParams(arrays, d_h=meta["d_h"], embedding_dim=meta["embedding_dim"],
                         emotion_dim=meta["emotion_dim"])
    params.check_finite()
    logger.info(f"✅ Loaded checkpoint from {path}")
    return params, meta
