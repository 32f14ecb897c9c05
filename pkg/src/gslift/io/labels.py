"""Per-Gaussian label sidecar (LBGL binary files).

Layout: magic ``LBGL``, u32 version (1), u32 Gaussian count N, three u32
arrays (object, part, subpart label per Gaussian; 0 means unlabeled), then
two parent maps (part to object, subpart to part), each stored as a u32 pair
count followed by (child, parent) u32 pairs sorted by child id.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from gslift.errors import FormatError, IntegrityError, TruncationError

MAGIC = b"LBGL"
VERSION = 1

LEVELS = ("object", "part", "subpart")


@dataclass
class LabelStore:
    """Hierarchical segmentation labels for every Gaussian of a field.

    Label id 0 marks an unlabeled Gaussian at that level. ``part_parents``
    maps each part id to its object id, ``subpart_parents`` each subpart id
    to its part id; together they form a forest over the nonzero ids.
    """

    object_labels: np.ndarray
    part_labels: np.ndarray
    subpart_labels: np.ndarray
    part_parents: dict = field(default_factory=dict)
    subpart_parents: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.object_labels.shape[0]
        for name in ("object_labels", "part_labels", "subpart_labels"):
            arr = np.asarray(getattr(self, name), dtype=np.uint32)
            if arr.shape != (n,):
                raise IntegrityError(
                    f"{name} has shape {arr.shape}, expected ({n},) to match object_labels"
                )
            setattr(self, name, arr)

    def __len__(self) -> int:
        return self.object_labels.shape[0]

    def labels_for(self, level: str) -> np.ndarray:
        if level not in LEVELS:
            raise IntegrityError(f"unknown level '{level}', expected one of {LEVELS}")
        return getattr(self, f"{level}_labels")

    def instance_sets(self, level: str) -> dict:
        """Mapping of nonzero label id to a sorted array of Gaussian indices."""
        labels = self.labels_for(level)
        out = {}
        order = np.argsort(labels, kind="stable")
        sorted_labels = labels[order]
        boundaries = np.nonzero(np.diff(sorted_labels))[0] + 1
        for chunk in np.split(order, boundaries):
            if chunk.size and labels[chunk[0]] > 0:
                out[int(labels[chunk[0]])] = np.sort(chunk)
        return out

    def validate(self) -> None:
        """Check the forest structure and per-Gaussian containment."""
        _check_parent_map(
            self.part_parents, self.part_labels, self.object_labels, "part", "object"
        )
        _check_parent_map(
            self.subpart_parents, self.subpart_labels, self.part_labels, "subpart", "part"
        )


def _check_parent_map(parents: dict, child_labels, parent_labels, child_name, parent_name):
    child_ids = set(int(v) for v in np.unique(child_labels) if v > 0)
    keys = set(int(k) for k in parents)
    missing = child_ids - keys
    if missing:
        raise IntegrityError(
            f"{child_name} id {sorted(missing)[0]} has no entry in the {child_name}-parent map"
        )
    dangling = keys - child_ids
    if dangling:
        raise IntegrityError(
            f"{child_name}-parent map names id {sorted(dangling)[0]} "
            f"which labels no Gaussian"
        )
    valid_parents = set(int(v) for v in np.unique(parent_labels) if v > 0)
    for child, parent in parents.items():
        if int(parent) not in valid_parents:
            raise IntegrityError(
                f"{child_name} {child} claims {parent_name} {parent}, "
                f"but no Gaussian carries that {parent_name} label"
            )
    if child_ids:
        lookup = np.zeros(max(child_ids) + 1, dtype=np.int64)
        for child, parent in parents.items():
            lookup[int(child)] = int(parent)
        labeled = np.nonzero(child_labels)[0]
        expected = lookup[child_labels[labeled]]
        actual = parent_labels[labeled].astype(np.int64)
        bad = np.nonzero(expected != actual)[0]
        if bad.size:
            i = int(labeled[bad[0]])
            raise IntegrityError(
                f"Gaussian {i}: {child_name} {int(child_labels[i])} belongs to "
                f"{parent_name} {int(lookup[child_labels[i]])} but the Gaussian's "
                f"{parent_name} label is {int(parent_labels[i])}"
            )


def save_labels(store: LabelStore, path: str | os.PathLike) -> None:
    """Write a label sidecar; validates the hierarchy before writing."""
    store.validate()
    n = len(store)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, n))
        for level in LEVELS:
            fh.write(store.labels_for(level).astype("<u4").tobytes())
        for parents in (store.part_parents, store.subpart_parents):
            items = sorted((int(k), int(v)) for k, v in parents.items())
            fh.write(struct.pack("<I", len(items)))
            for child, parent in items:
                fh.write(struct.pack("<II", child, parent))


def load_labels(path: str | os.PathLike) -> LabelStore:
    """Read a label sidecar and validate its hierarchy."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise TruncationError(f"{path}: file shorter than the 12-byte label header")
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported label file version {version}")
    offset = 12
    arrays = []
    for level in LEVELS:
        need = offset + 4 * n
        if len(data) < need:
            raise TruncationError(f"{path}: truncated in the {level} label array")
        arrays.append(np.frombuffer(data, dtype="<u4", count=n, offset=offset).copy())
        offset = need
    maps = []
    for name in ("part", "subpart"):
        if len(data) < offset + 4:
            raise TruncationError(f"{path}: truncated before the {name}-parent map")
        (count,) = struct.unpack_from("<I", data, offset)
        offset += 4
        need = offset + 8 * count
        if len(data) < need:
            raise TruncationError(f"{path}: truncated inside the {name}-parent map")
        pairs = np.frombuffer(data, dtype="<u4", count=2 * count, offset=offset).reshape(-1, 2)
        offset = need
        mapping = {}
        for child, parent in pairs:
            child = int(child)
            if child in mapping:
                raise IntegrityError(f"{path}: duplicate child id {child} in {name}-parent map")
            mapping[child] = int(parent)
        maps.append(mapping)
    store = LabelStore(
        object_labels=arrays[0],
        part_labels=arrays[1],
        subpart_labels=arrays[2],
        part_parents=maps[0],
        subpart_parents=maps[1],
    )
    store.validate()
    return store
