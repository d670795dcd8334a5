"""Weight file format, version 1.

A JSON manifest lists every tensor (name, shape, byte offset, byte length)
and a blob holds the tensors as little-endian float32 in row-major order.
Two layouts share the manifest:

* container: ``<u64 little-endian manifest length><manifest JSON><blob>``
* pair: ``name.json`` (manifest) next to ``name.bin`` (blob)

A path ending in ``.json`` selects the pair layout.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import WeightFormatError
from .network import NetworkDef, WeightStore, check_weights

FORMAT_VERSION = 1
_DTYPE = np.dtype("<f4")
_PREFIX = struct.Struct("<Q")


def _entries(weights: WeightStore):
    for layer in sorted(weights):
        for param in sorted(weights[layer]):
            yield layer, param, weights[layer][param]


def _encode(weights: WeightStore, net: NetworkDef | None) -> tuple[dict, bytes]:
    if net is not None:
        check_weights(net, weights)
    chunks, layers, offset = [], [], 0
    for layer, param, array in _entries(weights):
        data = np.ascontiguousarray(array, dtype=_DTYPE).tobytes()
        layers.append({
            "name": f"{layer}.{param}",
            "layer": layer,
            "param": param,
            "shape": list(array.shape),
            "offset": offset,
            "length": len(data),
        })
        chunks.append(data)
        offset += len(data)
    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture_hash": net.arch_hash() if net is not None else None,
        "architecture": net.to_dict() if net is not None else None,
        "dtype": "float32-le",
        "blob_length": offset,
        "layers": layers,
    }
    return manifest, b"".join(chunks)


def save_weights(weights: WeightStore, path, net: NetworkDef | None = None) -> Path:
    path = Path(path)
    manifest, blob = _encode(weights, net)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".json":
        blob_path = path.with_suffix(".bin")
        manifest["blob"] = blob_path.name
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        blob_path.write_bytes(blob)
    else:
        head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        path.write_bytes(_PREFIX.pack(len(head)) + head + blob)
    return path


def _decode(manifest: dict, blob: bytes, net: NetworkDef | None) -> WeightStore:
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise WeightFormatError("unknown weight format version", FORMAT_VERSION, version)
    expected_len = manifest.get("blob_length")
    if expected_len is not None and len(blob) != expected_len:
        kind = "truncated blob" if len(blob) < expected_len else "oversized blob"
        raise WeightFormatError(f"{kind}: byte length mismatch", expected_len, len(blob))
    if net is not None and manifest.get("architecture_hash") not in (None, net.arch_hash()):
        raise WeightFormatError("architecture hash mismatch", net.arch_hash(), manifest["architecture_hash"])

    weights: WeightStore = {}
    cursor = 0
    for entry in manifest["layers"]:
        shape = tuple(entry["shape"])
        want = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if entry["length"] != want:
            raise WeightFormatError(f"{entry['name']}: byte length disagrees with shape {shape}", want, entry["length"])
        if entry["offset"] != cursor:
            raise WeightFormatError(f"{entry['name']}: segments are not contiguous", cursor, entry["offset"])
        end = cursor + entry["length"]
        if end > len(blob):
            raise WeightFormatError(f"{entry['name']}: blob truncated", end, len(blob))
        array = np.frombuffer(blob, dtype=_DTYPE, count=want // _DTYPE.itemsize, offset=cursor)
        weights.setdefault(int(entry["layer"]), {})[entry["param"]] = array.reshape(shape).astype(np.float32)
        cursor = end
    if cursor != len(blob):
        raise WeightFormatError("blob has bytes not covered by the manifest's layer entries", cursor, len(blob))
    if net is not None:
        expected = sum(len(net.param_shapes(i)) for i in net.quantizable_indices)
        if len(manifest["layers"]) != expected:
            raise WeightFormatError("manifest layer count does not match the network", expected, len(manifest["layers"]))
        check_weights(net, weights)
    return weights


def read_manifest(path) -> tuple[dict, bytes]:
    path = Path(path)
    if path.suffix == ".json":
        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise WeightFormatError(f"manifest is not valid JSON: {exc}") from exc
        blob_path = path.parent / manifest.get("blob", path.with_suffix(".bin").name)
        if not blob_path.exists():
            raise WeightFormatError(f"blob file {blob_path} is missing")
        return manifest, blob_path.read_bytes()
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise WeightFormatError("container shorter than its length prefix", _PREFIX.size, len(raw))
    (n,) = _PREFIX.unpack_from(raw)
    if _PREFIX.size + n > len(raw):
        raise WeightFormatError("container truncated inside the manifest", _PREFIX.size + n, len(raw))
    try:
        manifest = json.loads(raw[_PREFIX.size:_PREFIX.size + n])
    except json.JSONDecodeError as exc:
        raise WeightFormatError(f"manifest is not valid JSON: {exc}") from exc
    return manifest, raw[_PREFIX.size + n:]


def load_weights(path, net: NetworkDef | None = None) -> WeightStore:
    manifest, blob = read_manifest(path)
    return _decode(manifest, blob, net)


def load_network(path) -> NetworkDef | None:
    """Architecture embedded in a weight file, if one was recorded."""
    manifest, _ = read_manifest(path)
    arch = manifest.get("architecture")
    return NetworkDef.from_dict(arch) if arch else None
