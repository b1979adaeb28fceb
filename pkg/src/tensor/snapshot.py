"""
Binary tensor snapshots.

Layout (little-endian)::

    b'MOHT' | version u32 | count u32
    per tensor: name_len u32 | name utf-8 | rank u32 | extents u64[rank]
                | dtype tag u8 | raw elements
"""

import struct
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

from src.common.exceptions import CheckpointError

MAGIC = b'MOHT'
VERSION = 1

DTYPE_TAGS = {np.dtype('<f4'): 0, np.dtype('<f8'): 1}
TAG_DTYPES = {tag: dtype for dtype, tag in DTYPE_TAGS.items()}


def save_snapshot(path: Path, tensors: Mapping[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('wb') as fh:
        fh.write(MAGIC)
        fh.write(struct.pack('<II', VERSION, len(tensors)))
        for name, array in tensors.items():
            array = np.asarray(array)
            dtype = array.dtype.newbyteorder('<')
            if dtype not in DTYPE_TAGS:
                raise CheckpointError(
                    f'Unsupported dtype {array.dtype} for {name}',
                    path=str(path),
                )
            encoded = name.encode('utf-8')
            fh.write(struct.pack('<I', len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack('<I', array.ndim))
            fh.write(struct.pack(f'<{array.ndim}Q', *array.shape))
            fh.write(struct.pack('<B', DTYPE_TAGS[dtype]))
            fh.write(np.ascontiguousarray(array, dtype=dtype).tobytes())


def _read_exact(fh: BinaryIO, n: int, path: Path) -> bytes:
    chunk = fh.read(n)
    if len(chunk) != n:
        raise CheckpointError('Truncated snapshot', path=str(path))
    return chunk


def load_snapshot(path: Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError('Snapshot not found', path=str(path))
    tensors: dict[str, np.ndarray] = {}
    with path.open('rb') as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError('Bad snapshot magic', path=str(path))
        version, count = struct.unpack('<II', _read_exact(fh, 8, path))
        if version != VERSION:
            raise CheckpointError(
                f'Unsupported snapshot version {version}', path=str(path)
            )
        for _ in range(count):
            (name_len,) = struct.unpack('<I', _read_exact(fh, 4, path))
            name = _read_exact(fh, name_len, path).decode('utf-8')
            (rank,) = struct.unpack('<I', _read_exact(fh, 4, path))
            shape = struct.unpack(f'<{rank}Q', _read_exact(fh, 8 * rank, path))
            (tag,) = struct.unpack('<B', _read_exact(fh, 1, path))
            if tag not in TAG_DTYPES:
                raise CheckpointError(
                    f'Unknown dtype tag {tag} for {name}', path=str(path)
                )
            dtype = TAG_DTYPES[tag]
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            raw = _read_exact(fh, n_bytes, path)
            tensors[name] = (
                np.frombuffer(raw, dtype=dtype).reshape(shape).astype(
                    dtype.newbyteorder('=')
                )
            )
    return tensors
