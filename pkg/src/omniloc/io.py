"""Point clouds as PLY, panoramas as PNG, results and configs as text."""

from __future__ import annotations

import json
import warnings
from dataclasses import fields
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import Panorama, PointCloud, Pose, matrix_to_quaternion, quaternion_to_matrix
from .pipeline import LocalizationResult, LocalizerConfig

PLY_PROPERTIES = ("x", "y", "z", "red", "green", "blue")
_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class FormatError(ValueError):
    """A malformed input file; ``line`` is 1-based when known."""

    def __init__(self, path, message: str, line: int | None = None):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.line = line


# ---------------------------------------------------------------- PLY


def write_ply(path, cloud: PointCloud, binary: bool = True) -> None:
    """float32 x, y, z and uchar red, green, blue; colors rounded from [0, 1]."""
    rgb = np.round(np.clip(cloud.colors, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {cloud.count}",
        *(f"property float {p}" for p in "xyz"),
        *(f"property uchar {p}" for p in ("red", "green", "blue")),
        "end_header",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            rec = np.empty(cloud.count, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1")])
            for k, p in enumerate("xyz"):
                rec[p] = cloud.positions[:, k]
            for k, p in enumerate(("red", "green", "blue")):
                rec[p] = rgb[:, k]
            f.write(rec.tobytes())
        else:
            xyz = cloud.positions.astype(np.float32)
            lines = (f"{a!r} {b!r} {c!r} {r} {g} {bl}" for (a, b, c), (r, g, bl) in zip(xyz.tolist(), rgb.tolist()))
            f.write(("\n".join(lines) + ("\n" if cloud.count else "")).encode("ascii"))


def read_ply(path) -> PointCloud:
    """Load a vertex cloud; other elements are skipped, extra properties ignored."""
    data = Path(path).read_bytes()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise FormatError(path, "not a PLY file (missing 'ply' magic or 'end_header')", 1)
    body_start = data.index(b"\n", end) + 1 if b"\n" in data[end:] else len(data)
    header = data[:body_start].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements: list[tuple[str, int, list]] = []  # (name, count, [(prop, dtype)])
    for lineno, line in enumerate(header, start=1):
        tok = line.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info", "end_header"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian"):
                raise FormatError(path, f"unsupported format {' '.join(tok[1:])!r}", lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            try:
                elements.append((tok[1], int(tok[2]), []))
            except (IndexError, ValueError):
                raise FormatError(path, f"bad element line {line!r}", lineno) from None
        elif tok[0] == "property":
            if not elements:
                raise FormatError(path, "property before any element", lineno)
            if len(tok) == 5 and tok[1] == "list":
                elements[-1][2].append((tok[4], ("list", _ply_type(path, tok[2], lineno), _ply_type(path, tok[3], lineno))))
            elif len(tok) == 3:
                elements[-1][2].append((tok[2], _ply_type(path, tok[1], lineno)))
            else:
                raise FormatError(path, f"bad property line {line!r}", lineno)
        else:
            raise FormatError(path, f"unknown header keyword {tok[0]!r}", lineno)
    if fmt is None:
        raise FormatError(path, "missing format line", 2)

    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise FormatError(path, "no vertex element")
    names = [p for p, _ in vertex[2]]
    missing = [p for p in PLY_PROPERTIES if p not in names]
    if missing:
        raise FormatError(path, f"vertex element lacks properties {missing}")

    if fmt == "ascii":
        table = _read_ascii(path, data[body_start:], elements, len(header))
    else:
        table = _read_binary(path, data[body_start:], elements)
    positions = np.stack([table[p].astype(np.float64) for p in "xyz"], axis=1)
    colors = np.stack([table[p].astype(np.float64) for p in ("red", "green", "blue")], axis=1) / 255.0
    if not np.all(np.isfinite(positions)):
        raise FormatError(path, "non-finite vertex coordinates")
    return PointCloud(positions, np.clip(colors, 0.0, 1.0))


def _ply_type(path, name: str, lineno: int) -> str:
    try:
        return _PLY_TYPES[name]
    except KeyError:
        raise FormatError(path, f"unknown property type {name!r}", lineno) from None


def _read_ascii(path, body: bytes, elements, header_lines: int) -> dict:
    lines = body.decode("ascii", errors="replace").splitlines()
    pos = 0
    for name, count, props in elements:
        if any(isinstance(t, tuple) for _, t in props) and name == "vertex":
            raise FormatError(path, "list properties on vertices are not supported")
        rows = []
        for _ in range(count):
            lineno = header_lines + pos + 1
            if pos >= len(lines):
                raise FormatError(path, f"file ends after {pos} data lines; {name} element is truncated", lineno)
            if name == "vertex":
                tok = lines[pos].split()
                if len(tok) < len(props):
                    raise FormatError(path, f"expected {len(props)} values, found {len(tok)}", lineno)
                try:
                    rows.append([float(v) for v in tok[: len(props)]])
                except ValueError:
                    raise FormatError(path, f"non-numeric value in {lines[pos]!r}", lineno) from None
            pos += 1
        if name == "vertex":
            arr = np.array(rows, dtype=np.float64).reshape(count, len(props))
            return {p: arr[:, k] for k, (p, _) in enumerate(props)}
    raise FormatError(path, "no vertex element")


def _read_binary(path, body: bytes, elements) -> dict:
    offset = 0
    for name, count, props in elements:
        if any(isinstance(t, tuple) for _, t in props):
            if name == "vertex":
                raise FormatError(path, "list properties on vertices are not supported")
            offset = _skip_list_element(path, body, offset, count, props)
            continue
        dtype = np.dtype([(p, "<" + t) for p, t in props])
        need = dtype.itemsize * count
        if offset + need > len(body):
            got = max(0, (len(body) - offset) // dtype.itemsize)
            raise FormatError(path, f"{name} element is truncated: {got} of {count} records present")
        table = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
        if name == "vertex":
            return table
        offset += need
    raise FormatError(path, "no vertex element")


def _skip_list_element(path, body: bytes, offset: int, count: int, props) -> int:
    for _ in range(count):
        for _, t in props:
            if isinstance(t, tuple):
                len_t, item_t = np.dtype("<" + t[1]), np.dtype("<" + t[2])
                if offset + len_t.itemsize > len(body):
                    raise FormatError(path, "list element is truncated")
                n = int(np.frombuffer(body, dtype=len_t, count=1, offset=offset)[0])
                offset += len_t.itemsize + n * item_t.itemsize
            else:
                offset += np.dtype(t).itemsize
    return offset


# ---------------------------------------------------------------- PNG


def write_png(path, image: Panorama) -> None:
    Image.fromarray(np.round(np.clip(image.pixels, 0.0, 1.0) * 255.0).astype(np.uint8), "RGB").save(path)


def read_png(path) -> Panorama:
    try:
        with Image.open(path) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, SyntaxError) as err:
        raise FormatError(path, f"cannot decode image ({err})") from None
    H, W = pixels.shape[:2]
    if W != 2 * H:
        warnings.warn(f"{path}: {W}x{H} panorama is not 2:1; using it as is", stacklevel=2)
    return Panorama(pixels)


# ---------------------------------------------------------------- poses and results


def pose_to_dict(pose: Pose) -> dict:
    return {
        "quaternion_wxyz": [float(v) for v in matrix_to_quaternion(pose.rotation)],
        "rotation_matrix": [[float(v) for v in row] for row in pose.rotation],
        "translation": [float(v) for v in pose.translation],
    }


def pose_from_dict(d: dict) -> Pose:
    """Prefers the matrix; falls back to the quaternion."""
    if "rotation_matrix" in d:
        R = np.array(d["rotation_matrix"], dtype=np.float64)
    else:
        R = quaternion_to_matrix(np.array(d["quaternion_wxyz"], dtype=np.float64))
    return Pose(R, np.array(d["translation"], dtype=np.float64))


def result_to_dict(result: LocalizationResult, config: LocalizerConfig) -> dict:
    """JSON-ready result.  Wall-clock timings are left out so equal runs give equal bytes."""
    return {
        "pose": pose_to_dict(result.best_pose),
        "final_loss": _num(result.best_loss),
        "failed": bool(result.failed),
        "candidate_count": int(result.candidate_count),
        "candidates": [
            {
                "start": pose_to_dict(start),
                "initial_loss": _num(loss),
                "histogram_score": None if result.start_poses.scores is None else _num(result.start_poses.scores[k]),
                "loss_trajectory": [_num(v) for v in trace.loss_history],
                "final": pose_to_dict(trace.final_pose),
            }
            for k, (start, loss, trace) in enumerate(zip(result.start_poses.poses, result.start_poses.losses, result.traces))
        ],
        "config": config.to_dict(),
        "seed": int(config.seed),
    }


def _num(v: float):
    # JSON has no inf/nan; null marks "nothing projected"
    v = float(v)
    return v if np.isfinite(v) else None


def dump_json(path, obj) -> None:
    # repr-precision floats, sorted keys: reproducible bytes
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise FormatError(path, err.msg, err.lineno) from None


# ---------------------------------------------------------------- config


def read_config(path, base: LocalizerConfig | None = None) -> LocalizerConfig:
    """Flat ``key = value`` text; ``#`` starts a comment.  Unknown keys are errors."""
    base = base or LocalizerConfig()
    types = {f.name: f.type for f in fields(LocalizerConfig)}
    values = base.to_dict()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(path, f"expected key=value, got {raw!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise FormatError(path, f"unknown key {key!r}", lineno)
        try:
            values[key] = _parse_value(value, types[key])
        except ValueError as err:
            raise FormatError(path, f"{key}: {err}", lineno) from None
    try:
        return LocalizerConfig(**values)
    except ValueError as err:
        raise FormatError(path, str(err)) from None


def write_config(path, config: LocalizerConfig) -> None:
    Path(path).write_text("".join(f"{k} = {_format_value(v)}\n" for k, v in config.to_dict().items()))


def _parse_value(text: str, kind: str):
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "int":
        return int(text)
    return float(text)


def _format_value(v) -> str:
    return str(v).lower() if isinstance(v, bool) else repr(v)
