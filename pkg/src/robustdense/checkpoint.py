"""Checkpoint archive: JSON header plus raw little-endian float32 payload.

Layout: 8-byte magic, uint64 little-endian header length, UTF-8 JSON header,
parameter payload. The header carries the model config, a format version and a
parameter manifest (name, shape, dtype, byte offset into the payload).
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .errors import ValidationError

MAGIC = b"RDNSEG01"
FORMAT_VERSION = 1


def save_checkpoint(model, path, extra: dict | None = None) -> Path:
    """Write model parameters; float64 models are stored as float32."""
    path = Path(path)
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        manifest.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "float32",
            "offset": offset,
            "nbytes": arr.nbytes,
        })
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "params": manifest,
    }
    if extra:
        header["extra"] = extra
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for chunk in chunks:
            f.write(chunk)
    return path


def _read_header(path) -> tuple:
    """Returns (header dict, payload byte offset)."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValidationError(f"{path}: not a checkpoint (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len).decode("utf-8"))
    return header, len(MAGIC) + 8 + header_len


def read_header(path) -> dict:
    return _read_header(path)[0]


def load_checkpoint(path, dtype: str = "float32"):
    """Rebuild the model from a checkpoint. Returns (model, header)."""
    from .network import RobustDenseNet

    path = Path(path)
    header, payload_start = _read_header(path)
    if header.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported checkpoint format_version {header.get('format_version')}")
    cfg = ModelConfig.from_dict(header["model_config"])
    model = RobustDenseNet(cfg)
    if dtype == "float64":
        model = model.double()

    raw = path.read_bytes()
    state = {}
    for entry in header["params"]:
        start = payload_start + entry["offset"]
        arr = np.frombuffer(raw, dtype="<f4", count=int(np.prod(entry["shape"], dtype=np.int64)),
                            offset=start).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.copy()).to(
            torch.float64 if dtype == "float64" else torch.float32
        )
    missing = set(model.state_dict()) - set(state)
    unexpected = set(state) - set(model.state_dict())
    if missing or unexpected:
        raise ValidationError(
            f"checkpoint parameter manifest mismatch: missing={sorted(missing)}, "
            f"unexpected={sorted(unexpected)}"
        )
    model.load_state_dict(state)
    return model, header


def parameter_names(path) -> list:
    return [entry["name"] for entry in read_header(path)["params"]]


def checkpoint_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
