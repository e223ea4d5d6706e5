"""Byte-stable serialization helpers shared by models, caches and the CLI."""
from __future__ import annotations

import io
import zipfile
from pathlib import Path

import numpy as np

from sempca.errors import DataError

# np.savez stamps members with the current time; a fixed stamp keeps reruns byte-identical
_EPOCH = (1980, 1, 1, 0, 0, 0)


class ArtifactConflict(DataError):
    """An artifact exists with different content; runs never overwrite."""


def npz_bytes(**arrays: np.ndarray) -> bytes:
    """Serialize arrays in ``.npz`` layout with deterministic member metadata."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            member = io.BytesIO()
            np.lib.format.write_array(member, np.asanyarray(arrays[name]), allow_pickle=False)
            zf.writestr(info, member.getvalue())
    return buf.getvalue()


def write_bytes(path: str | Path, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def write_once(path: str | Path, data: bytes | str) -> bool:
    """Write ``data`` unless the file already holds it.

    Returns True when the file was written, False when an identical copy was
    already there.

    Raises:
        ArtifactConflict: the file exists with different content.
    """
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    if path.exists():
        if path.read_bytes() == data:
            return False
        raise ArtifactConflict(f"{path} already exists with different content; use a new run id")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return True
