"""Binary checkpoint format.

Layout: magic ``HGTL``, format version (u32 LE), a sequence of tensor
records, then a CRC-32 (u32 LE) of everything between the version and the
checksum.  Each record is: name length (u32), UTF-8 name, rank (u32), dims
(u32 each), then the values as row-major little-endian float64.  The
round trip is bit-exact.
"""

import struct
import zlib

import numpy as np

from .errors import CheckpointError

MAGIC = b"HGTL"
VERSION = 1


def save_tensors(path, named_tensors):
    """Write (name, float64 array) pairs; order is preserved."""
    payload = bytearray()
    for name, tensor in named_tensors:
        arr = np.ascontiguousarray(tensor, dtype="<f8")
        name_b = name.encode("utf-8")
        payload += struct.pack("<I", len(name_b))
        payload += name_b
        payload += struct.pack("<I", arr.ndim)
        for dim in arr.shape:
            payload += struct.pack("<I", dim)
        payload += arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(bytes(payload))))


def load_tensors(path):
    """Read a checkpoint back into an ordered dict of float64 arrays."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {VERSION}")
    payload = blob[8:-4]
    (crc_stored,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(payload) != crc_stored:
        raise CheckpointError(f"{path}: checksum mismatch, file corrupted")
    tensors = {}
    pos = 0
    end = len(payload)
    while pos < end:
        try:
            (name_len,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            name = payload[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", payload, pos)
            pos += 4 * rank
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            nbytes = count * 8
            if pos + nbytes > end:
                raise CheckpointError(f"{path}: truncated tensor {name!r}")
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=pos)
            pos += nbytes
            tensors[name] = arr.reshape(dims).copy()
        except (struct.error, UnicodeDecodeError) as exc:
            raise CheckpointError(f"{path}: malformed record at byte {pos}") from exc
    return tensors


def restore_into(params, tensors):
    """Copy loaded tensors into a ModelParams, validating names and shapes."""
    for name, tensor in params.named_tensors():
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {name!r}")
        loaded = tensors[name]
        if loaded.shape != tensor.shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {loaded.shape}, expected {tensor.shape}"
            )
        tensor[...] = loaded
    extra = set(tensors) - {n for n, _ in params.named_tensors()}
    if extra:
        raise CheckpointError(f"checkpoint has unexpected tensors: {sorted(extra)}")
