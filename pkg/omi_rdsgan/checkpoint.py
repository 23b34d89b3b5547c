# coding=utf-8
"""
Binary checkpoint container.

Layout, little endian throughout::
    b"RDSGAN-CKPT"  magic
    u32             format version
    per tensor:     u32 name length, UTF-8 name, u32 rank, u64 extent × rank,
                    float32 values in C order
    u32             CRC-32 of every preceding byte

Every check runs before any parameter is assigned, so a failed load never leaves a
half-restored model.
"""
import logging
import os
import struct
import zlib
from typing import Dict, Optional, Tuple

import numpy as np

from ._exceptions import (
    CheckpointChecksumError,
    CheckpointShapeError,
    CheckpointVersionError,
    ConfigError,
)
from ._model import ModelDims
from .rdsgan_model import RDSGANModel, rdsgan_model_builder

logger = logging.getLogger(__name__)

MAGIC = b"RDSGAN-CKPT"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def encode_checkpoint(model: RDSGANModel) -> bytes:
    chunks = [MAGIC, _U32.pack(FORMAT_VERSION)]
    for name, tensor in model.named_parameters():
        raw_name = name.encode("utf-8")
        chunks.append(_U32.pack(len(raw_name)))
        chunks.append(raw_name)
        chunks.append(_U32.pack(tensor.ndim))
        chunks.extend(_U64.pack(extent) for extent in tensor.shape)
        chunks.append(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    body = b"".join(chunks)
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(model: RDSGANModel, path: str) -> int:
    """
    Write ``model`` to ``path`` through a temporary file and an atomic rename.
    Returns the number of bytes written.
    """
    payload = encode_checkpoint(model)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as fp:
        fp.write(payload)
    os.replace(tmp_path, path)
    logger.info(f"<Checkpoint>:SAVED={path},BYTES={len(payload)},TENSORS={len(model.named_parameters())}")
    return len(payload)


class _Reader:
    def __init__(self, body: bytes, offset: int):
        self.body = body
        self.offset = offset

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.body):
            raise CheckpointChecksumError("checkpoint ends inside a tensor record")
        chunk = self.body[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]


def decode_checkpoint(payload: bytes) -> Dict[str, np.ndarray]:
    """
    Parse and verify a checkpoint payload into name -> float32 array.

    Exceptions::
        CheckpointChecksumError, truncated payload or CRC mismatch
        CheckpointVersionError, wrong magic or unsupported format version
    """
    header = len(MAGIC) + 4
    if len(payload) < header + 4:
        raise CheckpointChecksumError(f"checkpoint is truncated ({len(payload)} bytes)")
    body, trailer = payload[:-4], payload[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != _U32.unpack(trailer)[0]:
        raise CheckpointChecksumError("checkpoint CRC-32 does not match its contents")
    if body[:len(MAGIC)] != MAGIC:
        raise CheckpointVersionError("not an RDSGAN checkpoint (bad magic)")
    version = _U32.unpack(body[len(MAGIC):header])[0]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    reader = _Reader(body, header)
    tensors: Dict[str, np.ndarray] = {}
    while reader.offset < len(body):
        name = reader.take(reader.u32()).decode("utf-8")
        shape = tuple(reader.u64() for _ in range(reader.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape).copy()
    return tensors


def dims_from_tensors(tensors: Dict[str, np.ndarray], base: Optional[ModelDims] = None) -> Tuple[ModelDims, int, int]:
    """
    Recover (dims, n_tokens, n_relations) from tensor shapes. Settings that leave no
    trace in the shapes (dropout, encoder backend) come from ``base``.
    """
    base = base or ModelDims()
    try:
        n_tokens, word_dim = tensors["encoder.word_embed"].shape
        n_pos, pos_dim = tensors["encoder.head_pos_embed"].shape
        filters, conv_width = tensors["encoder.conv_filters"].shape
        gen_hidden = tensors["generator.seed_proj"].shape[0]
        disc_hidden = tensors["discriminator.W1"].shape[0]
        n_relations = tensors["generator.relation_matrix"].shape[0]
    except (KeyError, ValueError) as err:
        raise CheckpointShapeError(f"checkpoint lacks a tensor needed to size the model: {err}")
    update = dict(
        word_dim=word_dim, pos_dim=pos_dim, filters=filters, window=conv_width // (word_dim + 2 * pos_dim),
        max_len=(n_pos + 1) // 2, gen_hidden=gen_hidden, disc_hidden=disc_hidden,
    )
    try:
        dims = ModelDims(**{**base.model_dump(), **update})
    except ValueError as err:
        raise CheckpointShapeError(f"checkpoint shapes do not describe a valid model: {err}")
    return dims, int(n_tokens), int(n_relations)


def load_checkpoint(path: str, model: Optional[RDSGANModel] = None,
                    base_dims: Optional[ModelDims] = None) -> RDSGANModel:
    """
    Restore parameters from ``path``.
    model - (Optional) RDSGANModel, restored in place; when absent a model is sized from the file
    base_dims - (Optional) ModelDims, shape-free settings for a model sized from the file

    Exceptions::
        ConfigError, the file cannot be read
        CheckpointChecksumError, CheckpointVersionError, CheckpointShapeError
    """
    try:
        with open(path, "rb") as fp:
            payload = fp.read()
    except OSError as err:
        raise ConfigError(f"cannot read checkpoint {path}: {err.strerror}")
    tensors = decode_checkpoint(payload)
    if model is None:
        dims, n_tokens, n_relations = dims_from_tensors(tensors, base_dims)
        model = rdsgan_model_builder(dims, n_tokens, n_relations, dtype="float32")
    named = model.named_parameters()
    for name, tensor in named:
        if name not in tensors:
            raise CheckpointShapeError(f"checkpoint has no tensor {name}", tensor_name=name)
        if tensors[name].shape != tensor.shape:
            raise CheckpointShapeError(
                f"tensor {name} has shape {tensors[name].shape} in the checkpoint but {tensor.shape} in the model",
                tensor_name=name)
    extra = sorted(set(tensors) - {name for name, _ in named})
    if extra:
        raise CheckpointShapeError(f"checkpoint tensor {extra[0]} has no place in the model", tensor_name=extra[0])
    for name, tensor in named:
        tensor.data[...] = tensors[name].astype(tensor.dtype)
    logger.info(f"<Checkpoint>:LOADED={path},TENSORS={len(named)}")
    return model
