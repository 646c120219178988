"""Point-cloud I/O: PLY parsing/serialization and voxelization."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateError,
    IoError,
    ParseError,
    PreconditionError,
    TruncatedError,
    UnsupportedError,
)

log = logging.getLogger(__name__)

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

NORMAL_TOL = 1e-6
MAX_BIT_DEPTH = 16


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RawPointCloud:
    """Pre-voxelization cloud in source units."""

    positions: np.ndarray
    colors: np.ndarray | None = None
    normals: np.ndarray | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pos)):
            raise PreconditionError("positions must be finite")
        object.__setattr__(self, "positions", _frozen(pos))
        if self.colors is not None:
            col = np.asarray(self.colors)
            if col.shape != pos.shape:
                raise PreconditionError("colors must have one RGB triple per position")
            if col.size and (col.min() < 0 or col.max() > 255):
                raise PreconditionError("colors must be 8-bit")
            object.__setattr__(self, "colors", _frozen(col.astype(np.uint8)))
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pos.shape:
                raise PreconditionError("normals must have one 3-vector per position")
            if nrm.size and np.max(np.abs(np.linalg.norm(nrm, axis=1) - 1.0)) > NORMAL_TOL:
                raise PreconditionError("normals must be unit length")
            object.__setattr__(self, "normals", _frozen(nrm))

    def __len__(self):
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class ColoredPointCloud:
    """Voxelized cloud: unique integer coordinates in ``[0, 2**bit_depth)``
    with one RGB color each.

    ``source_scale`` and ``source_offset`` map voxel coordinates back to the
    original units (``position = coord * scale + offset``).
    """

    points: np.ndarray
    colors: np.ndarray
    bit_depth: int = 10
    source_scale: float = 1.0
    source_offset: tuple = (0.0, 0.0, 0.0)
    _checked: bool = field(default=True, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 3)
        col = np.asarray(self.colors).reshape(-1, 3)
        if len(pts) != len(col):
            raise PreconditionError(
                f"points ({len(pts)}) and colors ({len(col)}) differ in length")
        if not 1 <= int(self.bit_depth) <= MAX_BIT_DEPTH:
            raise PreconditionError(f"bit_depth {self.bit_depth} outside [1, 16]")
        if col.size and (col.min() < 0 or col.max() > 255):
            raise PreconditionError("colors must be 8-bit")
        if self._checked and len(pts):
            hi = (1 << int(self.bit_depth)) - 1
            if pts.min() < 0 or pts.max() > hi:
                raise PreconditionError(
                    f"coordinates outside [0, {hi}] for bit_depth {self.bit_depth}")
            if len(np.unique(pack_coords(pts))) != len(pts):
                raise PreconditionError("duplicate coordinates")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "colors", _frozen(col.astype(np.uint8)))
        object.__setattr__(self, "bit_depth", int(self.bit_depth))
        object.__setattr__(self, "source_scale", float(self.source_scale))
        object.__setattr__(
            self, "source_offset", tuple(float(v) for v in self.source_offset))
        object.__setattr__(self, "_checked", True)

    def __len__(self):
        return len(self.points)

    @property
    def peak(self) -> int:
        return (1 << self.bit_depth) - 1

    def with_points(self, points, colors) -> "ColoredPointCloud":
        """Same voxel frame, different content."""
        return ColoredPointCloud(points, colors, self.bit_depth,
                                 self.source_scale, self.source_offset)

    def sorted(self) -> "ColoredPointCloud":
        order = np.argsort(pack_coords(self.points), kind="stable")
        return self.with_points(self.points[order], self.colors[order])

    def same_frame(self, other: "ColoredPointCloud") -> bool:
        return (self.bit_depth == other.bit_depth
                and self.source_scale == other.source_scale
                and self.source_offset == other.source_offset)


# Packed int64 keys: 21 bits per axis with a bias, x most significant, so
# integer order equals lexicographic (x, y, z) order.
_KEY_BITS = 21
_KEY_BIAS = 1 << (_KEY_BITS - 1)
_KEY_MASK = (1 << _KEY_BITS) - 1


def pack_coords(coords) -> np.ndarray:
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3) + _KEY_BIAS
    return (c[:, 0] << (2 * _KEY_BITS)) | (c[:, 1] << _KEY_BITS) | c[:, 2]


def unpack_coords(keys) -> np.ndarray:
    k = np.asarray(keys, dtype=np.int64)
    out = np.empty((len(k), 3), dtype=np.int64)
    out[:, 0] = (k >> (2 * _KEY_BITS)) & _KEY_MASK
    out[:, 1] = (k >> _KEY_BITS) & _KEY_MASK
    out[:, 2] = k & _KEY_MASK
    return out - _KEY_BIAS


def sort_coords(coords) -> np.ndarray:
    """Unique coordinates in lexicographic order."""
    return unpack_coords(np.unique(pack_coords(coords)))


# --------------------------------------------------------------------------
# PLY

@dataclass
class _Element:
    name: str
    count: int
    props: list = field(default_factory=list)  # (name, dtype) or (name, (count_t, item_t))

    @property
    def has_list(self):
        return any(isinstance(t, tuple) for _, t in self.props)

    def dtype(self, endian="<"):
        return np.dtype([(n, endian + t) for n, t in self.props])


def _parse_header(fh):
    """Return (format, elements, body_start_line)."""
    first = fh.readline()
    if first.strip() != b"ply":
        raise ParseError("missing 'ply' magic", line=1)
    fmt = None
    elements = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise ParseError("unexpected end of file inside header", line=lineno)
        try:
            words = raw.decode("ascii").split()
        except UnicodeDecodeError:
            raise ParseError("non-ascii header line", line=lineno) from None
        if not words:
            continue
        kw = words[0]
        if kw == "format":
            if len(words) != 3 or words[2] != "1.0":
                raise ParseError(f"bad format line {raw!r}", line=lineno)
            fmt = words[1]
            if fmt == "binary_big_endian":
                raise UnsupportedError("binary_big_endian PLY is not supported")
            if fmt not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unknown format {fmt!r}", line=lineno)
        elif kw in ("comment", "obj_info"):
            continue
        elif kw == "element":
            if len(words) != 3:
                raise ParseError("element line needs a name and a count", line=lineno)
            try:
                count = int(words[2])
            except ValueError:
                raise ParseError(f"bad element count {words[2]!r}", line=lineno) from None
            if count < 0:
                raise ParseError("negative element count", line=lineno)
            elements.append(_Element(words[1], count))
        elif kw == "property":
            if not elements:
                raise ParseError("property before any element", line=lineno)
            if len(words) == 5 and words[1] == "list":
                ct, it = PLY_TYPES.get(words[2]), PLY_TYPES.get(words[3])
                if ct is None or it is None:
                    raise ParseError(f"unknown list types in {raw!r}", line=lineno)
                elements[-1].props.append((words[4], (ct, it)))
            elif len(words) == 3:
                t = PLY_TYPES.get(words[1])
                if t is None:
                    raise ParseError(f"unknown property type {words[1]!r}", line=lineno)
                elements[-1].props.append((words[2], t))
            else:
                raise ParseError(f"malformed property line {raw!r}", line=lineno)
        elif kw == "end_header":
            break
        else:
            raise ParseError(f"unexpected header keyword {kw!r}", line=lineno)
    if fmt is None:
        raise ParseError("header has no format line", line=lineno)
    return fmt, elements, lineno + 1


def _skip_binary(buf, pos, el):
    if not el.has_list:
        size = el.dtype().itemsize * el.count
        if pos + size > len(buf):
            raise TruncatedError(f"element {el.name!r} truncated")
        return pos + size
    for _ in range(el.count):
        for _, t in el.props:
            if isinstance(t, tuple):
                ct, it = np.dtype("<" + t[0]), np.dtype("<" + t[1])
                if pos + ct.itemsize > len(buf):
                    raise TruncatedError(f"element {el.name!r} truncated")
                n = int(np.frombuffer(buf, ct, 1, pos)[0])
                pos += ct.itemsize + n * it.itemsize
            else:
                pos += np.dtype(t).itemsize
            if pos > len(buf):
                raise TruncatedError(f"element {el.name!r} truncated")
    return pos


def _ascii_vertex(lines, start_line, el):
    if el.has_list:
        raise UnsupportedError("list properties on the vertex element")
    nprop = len(el.props)
    rows = []
    for i, line in enumerate(lines):
        toks = line.split()
        if len(toks) != nprop:
            raise ParseError(f"expected {nprop} values, got {len(toks)}",
                             line=start_line + i)
        rows.append(toks)
    out = np.empty(len(rows), dtype=el.dtype())
    if not rows:
        return out
    table = np.array(rows)
    for j, (name, t) in enumerate(el.props):
        try:
            col = table[:, j].astype(np.float64)
        except ValueError:
            bad = next(i for i, r in enumerate(rows) if not _is_number(r[j]))
            raise ParseError(f"non-numeric value {rows[bad][j]!r}",
                             line=start_line + bad) from None
        out[name] = col.astype(t)
    return out


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_ply(path) -> RawPointCloud:
    """Read the vertex element of an ascii or binary_little_endian PLY file.

    Properties other than x/y/z, red/green/blue and nx/ny/nz are skipped,
    as are all non-vertex elements.
    """
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    with fh:
        fmt, elements, body_line = _parse_header(fh)
        body = fh.read()
    names = [e.name for e in elements]
    if "vertex" not in names:
        raise ParseError("no vertex element in header")
    vi = names.index("vertex")
    vel = elements[vi]
    pnames = [n for n, _ in vel.props]
    for axis in "xyz":
        if axis not in pnames:
            raise ParseError(f"vertex element lacks property {axis!r}")

    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").splitlines()
        idx = 0
        line_no = body_line
        for el in elements[:vi]:
            idx += el.count
            line_no += el.count
        vlines = lines[idx: idx + vel.count]
        if len(vlines) < vel.count or any(not ln.strip() for ln in vlines):
            have = sum(1 for ln in vlines if ln.strip())
            raise TruncatedError(
                f"header declares {vel.count} vertices, found {have}")
        data = _ascii_vertex(vlines, line_no, vel)
    else:
        pos = 0
        for el in elements[:vi]:
            pos = _skip_binary(body, pos, el)
        if vel.has_list:
            raise UnsupportedError("list properties on the vertex element")
        dt = vel.dtype("<")
        need = dt.itemsize * vel.count
        if pos + need > len(body):
            raise TruncatedError(
                f"header declares {vel.count} vertices, payload holds "
                f"{(len(body) - pos) // max(dt.itemsize, 1)}")
        data = np.frombuffer(body, dt, vel.count, pos)

    positions = np.stack([data[a].astype(np.float64) for a in "xyz"], axis=1)
    colors = None
    if all(c in pnames for c in ("red", "green", "blue")):
        colors = np.stack([data[c] for c in ("red", "green", "blue")], axis=1)
        colors = np.clip(colors, 0, 255).astype(np.uint8)
    normals = None
    if all(c in pnames for c in ("nx", "ny", "nz")):
        normals = np.stack([data[c].astype(np.float64) for c in ("nx", "ny", "nz")], axis=1)
        if len(normals) and np.max(np.abs(np.linalg.norm(normals, axis=1) - 1)) > NORMAL_TOL:
            log.warning("%s: normals are not unit length; dropping them", path)
            normals = None
    return RawPointCloud(positions, colors, normals)


def write_ply(cloud: RawPointCloud, path, binary: bool = True) -> None:
    """Write ``cloud`` as PLY; positions are stored as doubles."""
    n = len(cloud)
    if n == 0:
        raise PreconditionError("cannot write an empty cloud")
    props = [("x", "f8"), ("y", "f8"), ("z", "f8")]
    if cloud.colors is not None:
        props += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if cloud.normals is not None:
        props += [("nx", "f4"), ("ny", "f4"), ("nz", "f4")]
    rev = {"f8": "double", "f4": "float", "u1": "uchar"}
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {n}"]
    header += [f"property {rev[t]} {name}" for name, t in props]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    data = np.empty(n, dtype=[(name, "<" + t) for name, t in props])
    for i, a in enumerate("xyz"):
        data[a] = cloud.positions[:, i]
    if cloud.colors is not None:
        for i, c in enumerate(("red", "green", "blue")):
            data[c] = cloud.colors[:, i]
    if cloud.normals is not None:
        for i, c in enumerate(("nx", "ny", "nz")):
            data[c] = cloud.normals[:, i]

    if binary:
        payload = data.tobytes()
    else:
        fmts = []
        for name, t in props:
            fmts.append({"f8": "%.17g", "f4": "%.9g", "u1": "%d"}[t])
        sio = io.StringIO()
        cols = [data[name] for name, _ in props]
        np.savetxt(sio, np.column_stack([c.astype(np.float64) for c in cols]),
                   fmt=fmts, delimiter=" ")
        payload = sio.getvalue().encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(payload)
    except OSError as exc:
        raise IoError(str(exc)) from exc


# --------------------------------------------------------------------------
# voxelization

def voxelize(raw: RawPointCloud, bit_depth: int = 10) -> ColoredPointCloud:
    """Quantize ``raw`` onto a ``2**bit_depth`` grid.

    Positions are shifted by the bounding-box minimum and isotropically
    scaled so that the largest extent spans ``2**bit_depth - 1`` voxels,
    then rounded half-up. Points landing in the same voxel are merged and
    their colors averaged per channel (half-up). Output is sorted
    lexicographically.
    """
    if not 1 <= bit_depth <= MAX_BIT_DEPTH:
        raise PreconditionError(f"bit_depth {bit_depth} outside [1, 16]")
    if len(raw) == 0:
        raise PreconditionError("cannot voxelize an empty cloud")
    pos = raw.positions
    offset = pos.min(axis=0)
    extent = float((pos.max(axis=0) - offset).max())
    if extent == 0.0:
        raise DegenerateError("all points are identical")
    hi = (1 << bit_depth) - 1
    scale = extent / hi
    coords = np.floor((pos - offset) / scale + 0.5).astype(np.int64)
    np.clip(coords, 0, hi, out=coords)

    keys = pack_coords(coords)
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if raw.colors is not None:
        sums = np.zeros((len(uniq), 3), dtype=np.int64)
        np.add.at(sums, inverse, raw.colors.astype(np.int64))
        colors = (2 * sums + counts[:, None]) // (2 * counts[:, None])
    else:
        colors = np.zeros((len(uniq), 3), dtype=np.int64)
    return ColoredPointCloud(unpack_coords(uniq), colors, bit_depth, scale,
                             tuple(offset.tolist()))


def devoxelize(cloud: ColoredPointCloud) -> RawPointCloud:
    if cloud.source_scale <= 0:
        raise PreconditionError("source_scale must be positive")
    pos = cloud.points.astype(np.float64) * cloud.source_scale + np.asarray(cloud.source_offset)
    return RawPointCloud(pos, cloud.colors)


def load_cloud(path, bit_depth: int = 10) -> ColoredPointCloud:
    """Read a PLY and voxelize it, unless it already holds integer
    coordinates inside the ``bit_depth`` range, which are kept as-is."""
    raw = read_ply(path)
    pos = raw.positions
    hi = (1 << bit_depth) - 1
    if (len(pos) and np.all(pos == np.round(pos)) and pos.min() >= 0 and pos.max() <= hi
            and len(np.unique(pack_coords(pos.astype(np.int64)))) == len(pos)):
        colors = raw.colors if raw.colors is not None else np.zeros((len(pos), 3), np.uint8)
        return ColoredPointCloud(pos.astype(np.int64), colors, bit_depth)
    return voxelize(raw, bit_depth)


def save_cloud(cloud: ColoredPointCloud, path, binary: bool = True) -> None:
    """Write voxel coordinates (not source units) with colors."""
    write_ply(RawPointCloud(cloud.points.astype(np.float64), cloud.colors), path, binary)
