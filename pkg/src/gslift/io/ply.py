"""Binary little-endian PLY reader/writer for Gaussian splat fields.

The on-disk layout follows the de-facto splat convention: per-vertex float32
properties ``x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3``
with opacity stored pre-sigmoid, scales pre-exp, and the higher-order SH
coefficients flattened channel-major. Normals are tolerated and ignored on
load and written as zeros.
"""

from __future__ import annotations

import io
import os

import numpy as np

from gslift.errors import (
    DataError,
    PlyParseError,
    PlySchemaError,
    TruncationError,
)
from gslift.io.gaussian_field import (
    VALID_SH_COUNTS,
    GaussianField,
    _checked_indices,
)

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_BASE_PROPERTIES = (
    "x", "y", "z",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)

# Epsilon keeping logit finite when an activated opacity sits exactly at 0 or 1.
_OPACITY_EPS = 1e-7
_SCALE_EPS = 1e-30


def load_field(path: str | os.PathLike) -> GaussianField:
    """Load a splat PLY file into an activated :class:`GaussianField`.

    Opacities pass through a sigmoid, scales through exp, and rotation
    quaternions are normalized. Raises :class:`PlyParseError` for malformed
    headers, :class:`PlySchemaError` when required properties are missing,
    :class:`TruncationError` on short payloads, and :class:`DataError` for
    non-finite values or zero-norm quaternions (naming the Gaussian index).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    count, names, dtype, payload_offset = _parse_header(data, str(path))

    itemsize = dtype.itemsize
    need = payload_offset + count * itemsize
    if len(data) < need:
        got = (len(data) - payload_offset) // itemsize if itemsize else 0
        raise TruncationError(
            f"{path}: payload truncated, header declares {count} vertices "
            f"but only {max(got, 0)} complete records are present"
        )
    rows = np.frombuffer(data, dtype=dtype, count=count, offset=payload_offset)

    missing = [p for p in _BASE_PROPERTIES if p not in names]
    if missing:
        raise PlySchemaError(f"{path}: missing required vertex properties: {', '.join(missing)}")

    rest_names = _rest_property_names(names, str(path))
    bands = 1 + len(rest_names) // 3

    def col(name: str) -> np.ndarray:
        return np.ascontiguousarray(rows[name])

    for name in (*_BASE_PROPERTIES, *rest_names):
        values = rows[name]
        bad = np.nonzero(~np.isfinite(values))[0]
        if bad.size:
            raise DataError(
                f"{path}: non-finite value in property '{name}' at Gaussian index {int(bad[0])}"
            )

    positions = np.stack([col("x"), col("y"), col("z")], axis=1).astype(np.float32)
    opacities = _sigmoid(np.stack([col("opacity")]).astype(np.float64)[0])
    scales = np.exp(
        np.stack([col("scale_0"), col("scale_1"), col("scale_2")], axis=1).astype(np.float64)
    )
    quats = np.stack(
        [col("rot_0"), col("rot_1"), col("rot_2"), col("rot_3")], axis=1
    ).astype(np.float64)
    norms = np.linalg.norm(quats, axis=1)
    zero = np.nonzero(norms < 1e-12)[0]
    if zero.size:
        raise DataError(f"{path}: zero-norm rotation quaternion at Gaussian index {int(zero[0])}")
    quats = quats / norms[:, None]

    sh = np.zeros((count, bands, 3), dtype=np.float32)
    sh[:, 0, 0] = col("f_dc_0")
    sh[:, 0, 1] = col("f_dc_1")
    sh[:, 0, 2] = col("f_dc_2")
    if rest_names:
        rest = np.stack([col(n) for n in rest_names], axis=1)
        # Channel-major on disk: index c * (bands - 1) + b for channel c, band b.
        sh[:, 1:, :] = rest.reshape(count, 3, bands - 1).transpose(0, 2, 1)

    return GaussianField(
        positions=positions,
        scales=scales,
        rotations=quats,
        opacities=opacities,
        sh_coeffs=sh,
    )


def save_object_field(field: GaussianField, indices, path: str | os.PathLike) -> None:
    """Write the selected Gaussians as a standalone splat PLY file.

    Inverse activations are applied (logit opacity, log scales); the output
    loads back within float32 round-off. Refuses an empty index set.
    """
    idx = _checked_indices(indices, len(field))
    bands = field.sh_coeffs.shape[1]
    rest_count = 3 * (bands - 1)

    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(rest_count)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    dtype = np.dtype([(n, "<f4") for n in names])
    out = np.zeros(idx.size, dtype=dtype)

    pos = field.positions[idx]
    out["x"], out["y"], out["z"] = pos[:, 0], pos[:, 1], pos[:, 2]
    dc = field.sh_coeffs[idx, 0, :]
    out["f_dc_0"], out["f_dc_1"], out["f_dc_2"] = dc[:, 0], dc[:, 1], dc[:, 2]
    if rest_count:
        rest = field.sh_coeffs[idx, 1:, :].transpose(0, 2, 1).reshape(idx.size, rest_count)
        for i in range(rest_count):
            out[f"f_rest_{i}"] = rest[:, i]
    opac = np.clip(field.opacities[idx], _OPACITY_EPS, 1.0 - _OPACITY_EPS)
    out["opacity"] = np.log(opac / (1.0 - opac))
    scales = np.log(np.maximum(field.scales[idx], _SCALE_EPS))
    out["scale_0"], out["scale_1"], out["scale_2"] = scales[:, 0], scales[:, 1], scales[:, 2]
    quats = field.rotations[idx]
    quats = quats / np.linalg.norm(quats, axis=1, keepdims=True)
    for i in range(4):
        out[f"rot_{i}"] = quats[:, i]

    header = io.StringIO()
    header.write("ply\n")
    header.write("format binary_little_endian 1.0\n")
    header.write(f"element vertex {idx.size}\n")
    for name in names:
        header.write(f"property float {name}\n")
    header.write("end_header\n")

    with open(path, "wb") as fh:
        fh.write(header.getvalue().encode("ascii"))
        fh.write(out.tobytes())


def save_field(field: GaussianField, path: str | os.PathLike) -> None:
    """Write the whole field (shorthand for saving the full index set)."""
    save_object_field(field, np.arange(len(field)), path)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _parse_header(data: bytes, path: str):
    """Return (vertex_count, property names, payload dtype, payload offset)."""
    end_marker = b"end_header\n"
    end = data.find(end_marker)
    if end < 0:
        raise PlyParseError(f"{path}: no end_header line found")
    header_text = data[:end].decode("ascii", errors="replace")
    lines = header_text.split("\n")

    if not lines or lines[0].strip() != "ply":
        raise PlyParseError(f"{path}: line 1: expected 'ply' magic, got {lines[0]!r}")

    count = None
    fields: list[tuple[str, str]] = []
    in_vertex = False
    saw_format = False
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if parts[1:] != ["binary_little_endian", "1.0"]:
                raise PlyParseError(
                    f"{path}: line {lineno}: unsupported format {line!r}; "
                    "only 'format binary_little_endian 1.0' is supported"
                )
            saw_format = True
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyParseError(f"{path}: line {lineno}: malformed element line {line!r}")
            name, num = parts[1], parts[2]
            try:
                n = int(num)
            except ValueError:
                raise PlyParseError(
                    f"{path}: line {lineno}: element count {num!r} is not an integer"
                ) from None
            if name == "vertex":
                if count is not None:
                    raise PlyParseError(f"{path}: line {lineno}: duplicate vertex element")
                count = n
                in_vertex = True
            else:
                if n > 0:
                    raise PlySchemaError(
                        f"{path}: line {lineno}: unsupported element '{name}' with {n} entries"
                    )
                in_vertex = False
        elif parts[0] == "property":
            if not in_vertex:
                continue
            if len(parts) == 3 and parts[1] in _SCALAR_TYPES:
                fields.append((parts[2], _SCALAR_TYPES[parts[1]]))
            elif parts[1] == "list":
                raise PlyParseError(
                    f"{path}: line {lineno}: list properties are not supported for vertices"
                )
            else:
                raise PlyParseError(f"{path}: line {lineno}: malformed property line {line!r}")
        elif parts[0] == "end_header":
            break
        else:
            raise PlyParseError(f"{path}: line {lineno}: unrecognized header line {line!r}")

    if not saw_format:
        raise PlyParseError(f"{path}: missing format line in header")
    if count is None:
        raise PlySchemaError(f"{path}: no vertex element in header")
    if not fields:
        raise PlySchemaError(f"{path}: vertex element has no properties")

    seen = set()
    for name, _ in fields:
        if name in seen:
            raise PlySchemaError(f"{path}: duplicate vertex property '{name}'")
        seen.add(name)

    for name in _BASE_PROPERTIES:
        for fname, code in fields:
            if fname == name and code not in ("f4", "f8"):
                raise PlySchemaError(
                    f"{path}: property '{name}' must be float or double, got '{code}'"
                )

    dtype = np.dtype([(name, "<" + code) for name, code in fields])
    return count, {name for name, _ in fields}, dtype, end + len(end_marker)


def _rest_property_names(names: set, path: str) -> list[str]:
    rest = sorted(
        (n for n in names if n.startswith("f_rest_")),
        key=lambda n: int(n.split("_")[-1]),
    )
    expected_counts = {3 * (k - 1) for k in VALID_SH_COUNTS}
    if len(rest) not in expected_counts:
        raise PlySchemaError(
            f"{path}: found {len(rest)} f_rest_* properties; expected one of "
            f"{sorted(expected_counts)}"
        )
    for i, name in enumerate(rest):
        if name != f"f_rest_{i}":
            raise PlySchemaError(f"{path}: f_rest_* properties are not contiguous from 0")
    return rest
