"""Writer for the corpus matrix wire format (the integration contract).

    magic  8 bytes  b"TSGM0001"
    n, d   u32 little-endian each
    data   n*d little-endian float32, row major
    posterior files append: count u32, then per class
           name_len u32, name UTF-8, role u8 (0 other, 1 food, 2 container)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MATRIX_MAGIC = b"TSGM0001"
ROLE_BYTES = {"other": 0, "food": 1, "container": 2}


def write_matrix(
    path: str | Path,
    data: np.ndarray,
    class_names: Sequence[str] | None = None,
    class_roles: Sequence[str] | None = None,
) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2:
        raise ValueError("matrix must be 2-dimensional")
    n, d = data.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(data.tobytes())
        if class_names is not None:
            if class_roles is None or len(class_roles) != len(class_names):
                raise ValueError("class_roles must pair with class_names")
            if len(class_names) != d:
                raise ValueError("class table size must equal column count")
            fh.write(struct.pack("<I", len(class_names)))
            for name, role in zip(class_names, class_roles):
                blob = name.encode("utf-8")
                fh.write(struct.pack("<I", len(blob)))
                fh.write(blob)
                fh.write(struct.pack("<B", ROLE_BYTES[role]))
