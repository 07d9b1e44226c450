"""Template-bank files and the on-disk C2 cache.

Bank file layout::

    b"HMXBANK\\0" | u32 format version | u32 header length | JSON header | <f4 patches

The JSON sidecar (``<file>.json``) repeats the header plus the bank hash and a
SHA-256 of the whole file, so a bank can be checked without numpy.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .layers import ModelError
from .templates import TemplateBank

BANK_MAGIC = b"HMXBANK\0"
C2_MAGIC = b"HMXC2\0\0\0"
FORMAT_VERSION = 1


class StorageError(ModelError):
    pass


def _pack(magic: bytes, header: dict, payload: bytes) -> bytes:
    blob = json.dumps(header, sort_keys=True).encode()
    return magic + struct.pack("<II", FORMAT_VERSION, len(blob)) + blob + payload


def _unpack(data: bytes, magic: bytes, path) -> tuple[dict, bytes]:
    if len(data) < len(magic) + 8 or data[:len(magic)] != magic:
        raise StorageError(f"{path}: not a {magic.rstrip(bytes(1)).decode()} file")
    version, hlen = struct.unpack_from("<II", data, len(magic))
    if version != FORMAT_VERSION:
        raise StorageError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    start = len(magic) + 8
    if len(data) < start + hlen:
        raise StorageError(f"{path}: truncated header")
    try:
        header = json.loads(data[start:start + hlen])
    except json.JSONDecodeError as exc:
        raise StorageError(f"{path}: corrupt header ({exc})") from None
    return header, data[start + hlen:]


def bank_header(bank: TemplateBank) -> dict:
    return {"format_version": FORMAT_VERSION, "size_class": bank.size_class, "band": bank.band,
            "n_orientations": bank.n_orientations, "k": bank.k, "n_templates": len(bank),
            "sigma": bank.sigma, "config_hash": bank.config_hash,
            "sources": bank.sources.tolist()}


def save_bank(bank: TemplateBank, path) -> Path:
    """Write the bank and its JSON sidecar; returns the sidecar path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = _pack(BANK_MAGIC, bank_header(bank), bank.patches.astype("<f4").tobytes())
    path.write_bytes(data)
    side = {k: v for k, v in bank_header(bank).items() if k != "sources"}
    side.update(bank_hash=bank.hash, file_sha256=hashlib.sha256(data).hexdigest(), file=path.name)
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return sidecar


def load_bank(path) -> TemplateBank:
    path = Path(path)
    header, payload = _unpack(path.read_bytes(), BANK_MAGIC, path)
    try:
        n, k, o = int(header["n_templates"]), int(header["k"]), int(header["n_orientations"])
        shape = (n, k, k, o)
        expected = n * k * k * o * 4
        if len(payload) != expected:
            raise StorageError(f"{path}: patch data is {len(payload)} bytes, header implies {expected}")
        patches = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)
        return TemplateBank(header["size_class"], int(header["band"]), patches,
                            np.asarray(header["sources"], dtype=np.int64), float(header["sigma"]),
                            header.get("config_hash", ""))
    except KeyError as exc:
        raise StorageError(f"{path}: header lacks field {exc}") from None


def verify_bank(path) -> list[str]:
    """Problems found when re-checking a bank file against its sidecar (empty list = OK)."""
    path = Path(path)
    sidecar = path.with_name(path.name + ".json")
    problems = []
    if not sidecar.exists():
        return [f"{sidecar}: missing sidecar"]
    side = json.loads(sidecar.read_text())
    data = path.read_bytes()
    if hashlib.sha256(data).hexdigest() != side.get("file_sha256"):
        problems.append(f"{path}: file hash differs from sidecar")
    try:
        bank = load_bank(path)
    except ModelError as exc:
        return problems + [str(exc)]
    if bank.hash != side.get("bank_hash"):
        problems.append(f"{path}: bank hash {bank.hash} != sidecar {side.get('bank_hash')}")
    for key in ("size_class", "band", "k", "n_templates", "n_orientations", "sigma", "config_hash"):
        if side.get(key) != bank_header(bank)[key]:
            problems.append(f"{path}: sidecar {key}={side.get(key)!r} disagrees with file")
    return problems


def image_id(img: np.ndarray) -> str:
    arr = np.ascontiguousarray(img, dtype=np.float64)
    h = hashlib.sha256(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()[:20]


class C2CacheDir:
    """C2 rows keyed by (bank hash, image hash), one file per bank.

    Values are stored as float32; rows handed out (fresh or cached) are
    rounded the same way, so a cached and an uncached run agree exactly.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self._rows: dict[str, dict[str, np.ndarray]] = {}
        self._dirty: set[str] = set()

    def _path(self, bank_hash: str) -> Path:
        return self.directory / f"c2-{bank_hash}.bin"

    def _table(self, bank_hash: str) -> dict[str, np.ndarray]:
        if bank_hash not in self._rows:
            table = {}
            path = self._path(bank_hash)
            if path.exists():
                header, payload = _unpack(path.read_bytes(), C2_MAGIC, path)
                if header.get("bank_hash") != bank_hash:
                    raise StorageError(f"{path}: cache belongs to bank {header.get('bank_hash')}")
                ids = header["image_ids"]
                n_t = int(header["n_templates"])
                if len(payload) != len(ids) * n_t * 4:
                    raise StorageError(f"{path}: truncated matrix")
                mat = np.frombuffer(payload, dtype="<f4").reshape(len(ids), n_t)
                table = {i: mat[r].astype(np.float64) for r, i in enumerate(ids)}
            self._rows[bank_hash] = table
        return self._rows[bank_hash]

    def get(self, bank_hash: str, image: np.ndarray) -> np.ndarray | None:
        return self._table(bank_hash).get(image_id(image))

    def put(self, bank_hash: str, image: np.ndarray, values: np.ndarray) -> np.ndarray:
        row = np.asarray(values, dtype=np.float32).astype(np.float64)
        self._table(bank_hash)[image_id(image)] = row
        self._dirty.add(bank_hash)
        return row

    def flush(self) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        for bank_hash in sorted(self._dirty):
            table = self._rows[bank_hash]
            ids = sorted(table)
            mat = np.stack([table[i] for i in ids]).astype("<f4")
            header = {"bank_hash": bank_hash, "image_ids": ids, "n_templates": int(mat.shape[1])}
            self._path(bank_hash).write_bytes(_pack(C2_MAGIC, header, mat.tobytes()))
        self._dirty.clear()
