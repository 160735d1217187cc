"""SfM ingestion and file I/O.

Parses COLMAP text reconstructions, builds the pixel-to-point training
datasets, handles deterministic train/test splits, and reads/writes the
PFM depth and PLY point-cloud file formats.

All parsers are pure functions over file contents; every returned value is
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    BadDims,
    BadMagic,
    DanglingReference,
    DimensionMismatch,
    EmptyDataset,
    IoFailure,
    MalformedLine,
    MissingFile,
    NoCorrespondences,
    TruncatedPayload,
    UnknownImage,
    UnsupportedProperty,
)
from .pointcloud import DensifiedCloud, PointSource

# Feature with no 3D track; COLMAP writes -1 in images.txt.
SENTINEL_NONE = -1

# Depth value marking an unusable pixel; any value <= 0 is treated as invalid.
INVALID_DEPTH = -1.0


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraIntrinsics:
    camera_id: int
    model: str
    width: int
    height: int
    params: tuple[float, ...]


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    name: str
    camera_id: int
    qvec: np.ndarray        # (4,) wxyz
    tvec: np.ndarray        # (3,)
    xys: np.ndarray         # (n, 2) pixel coordinates
    point3d_ids: np.ndarray  # (n,) int64, SENTINEL_NONE where unlinked

    def linked_count(self) -> int:
        return int(np.count_nonzero(self.point3d_ids != SENTINEL_NONE))


@dataclass(frozen=True)
class Point3D:
    point3d_id: int
    xyz: np.ndarray   # (3,)
    rgb: np.ndarray   # (3,) uint8
    error: float
    track: tuple[tuple[int, int], ...]  # (image_id, feature_index)


@dataclass(frozen=True)
class SparseModel:
    cameras: tuple[CameraIntrinsics, ...]
    images: tuple[ImageRecord, ...]
    points3d: tuple[Point3D, ...]

    def camera_by_id(self, camera_id: int) -> CameraIntrinsics:
        for cam in self.cameras:
            if cam.camera_id == camera_id:
                return cam
        raise KeyError(f"no camera with id {camera_id}")

    def image_by_id(self, image_id: int) -> ImageRecord:
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise UnknownImage(f"no image with id {image_id}")

    def positions(self) -> np.ndarray:
        """(n, 3) array of 3D point positions, in file order."""
        if not self.points3d:
            return np.zeros((0, 3))
        return np.stack([p.xyz for p in self.points3d])

    def colors(self) -> np.ndarray:
        """(n, 3) uint8 array of point colours, in file order."""
        if not self.points3d:
            return np.zeros((0, 3), dtype=np.uint8)
        return np.stack([p.rgb for p in self.points3d])


@dataclass(frozen=True)
class PixelSample:
    u_norm: float
    v_norm: float
    depth: Optional[float] = None


@dataclass(frozen=True)
class TargetVector:
    x: float
    y: float
    z: float
    r: float
    g: float
    b: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.r, self.g, self.b])


@dataclass(frozen=True)
class PixelToPointDataset:
    image_id: int
    width: int
    height: int
    samples: tuple[tuple[PixelSample, TargetVector], ...]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def has_depth(self) -> bool:
        """True when every sample carries a usable depth value."""
        return bool(self.samples) and all(s.depth is not None for s, _ in self.samples)

    def input_matrix(self) -> np.ndarray:
        """(n, 2) normalized pixel inputs, or (n, 3) with the depth column."""
        if self.has_depth:
            return np.array([[s.u_norm, s.v_norm, s.depth] for s, _ in self.samples])
        return np.array([[s.u_norm, s.v_norm] for s, _ in self.samples]).reshape(len(self.samples), 2)

    def target_matrix(self) -> np.ndarray:
        """(n, 6) targets: world position then [0,1] colour channels."""
        return np.array([t.as_array() for _, t in self.samples]).reshape(len(self.samples), 6)

    def train_pixels(self) -> np.ndarray:
        """(n, 2) unnormalized pixel coordinates of the samples."""
        return np.array(
            [[s.u_norm * self.width, s.v_norm * self.height] for s, _ in self.samples]
        ).reshape(len(self.samples), 2)

    def drop_missing_depth(self) -> "PixelToPointDataset":
        """Dataset restricted to samples with a valid depth value."""
        kept = tuple(pair for pair in self.samples if pair[0].depth is not None)
        return replace(self, samples=kept)


@dataclass(frozen=True)
class DepthMap:
    width: int
    height: int
    values: np.ndarray  # (height, width) float32, row-major top-to-bottom

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32)
        if vals.shape != (self.height, self.width):
            raise BadDims(
                f"depth grid shape {vals.shape} != (height={self.height}, width={self.width})"
            )
        object.__setattr__(self, "values", vals)

    def value_at(self, u: float, v: float) -> Optional[float]:
        """Nearest-pixel depth at an unnormalized pixel coordinate.

        Uses the COLMAP half-pixel-centre convention, so the nearest pixel
        index is floor(u). Returns None for invalid (non-positive) depths.
        """
        ix = min(max(int(np.floor(u)), 0), self.width - 1)
        iy = min(max(int(np.floor(v)), 0), self.height - 1)
        d = float(self.values[iy, ix])
        if not np.isfinite(d) or d <= 0.0:
            return None
        return d


@dataclass(frozen=True)
class SplitResult:
    train: PixelToPointDataset
    test: PixelToPointDataset
    degenerate: bool  # one side ended up empty


# ---------------------------------------------------------------------------
# COLMAP text parsing
# ---------------------------------------------------------------------------

def _data_lines(path: Path):
    """Yield (line_number, stripped_line) skipping comments; keeps blanks."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                continue
            yield lineno, line


def _parse_cameras(path: Path) -> list[CameraIntrinsics]:
    cameras: list[CameraIntrinsics] = []
    seen: set[int] = set()
    for lineno, line in _data_lines(path):
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 4:
            raise MalformedLine(path, lineno, f"expected at least 4 fields, got {len(tokens)}")
        try:
            camera_id = int(tokens[0])
            width = int(tokens[2])
            height = int(tokens[3])
            params = tuple(float(t) for t in tokens[4:])
        except ValueError as exc:
            raise MalformedLine(path, lineno, str(exc)) from exc
        if camera_id in seen:
            raise MalformedLine(path, lineno, f"duplicate camera id {camera_id}")
        if width < 1 or height < 1:
            raise MalformedLine(path, lineno, f"non-positive image size {width}x{height}")
        seen.add(camera_id)
        cameras.append(CameraIntrinsics(camera_id, tokens[1], width, height, params))
    return cameras


def _parse_images(path: Path) -> list[ImageRecord]:
    images: list[ImageRecord] = []
    seen: set[int] = set()
    header = None  # pending image header awaiting its feature line
    last_lineno = 0
    for lineno, line in _data_lines(path):
        last_lineno = lineno
        if header is None:
            if not line:
                continue
            tokens = line.split()
            if len(tokens) < 10:
                raise MalformedLine(path, lineno, f"expected 10 header fields, got {len(tokens)}")
            try:
                image_id = int(tokens[0])
                qvec = np.array([float(t) for t in tokens[1:5]])
                tvec = np.array([float(t) for t in tokens[5:8]])
                camera_id = int(tokens[8])
            except ValueError as exc:
                raise MalformedLine(path, lineno, str(exc)) from exc
            name = " ".join(tokens[9:])
            if image_id in seen:
                raise MalformedLine(path, lineno, f"duplicate image id {image_id}")
            seen.add(image_id)
            header = (image_id, name, camera_id, qvec, tvec)
        else:
            tokens = line.split()
            if len(tokens) % 3 != 0:
                raise MalformedLine(
                    path, lineno, f"feature line has {len(tokens)} fields, not a multiple of 3"
                )
            try:
                xys = np.array(
                    [[float(tokens[i]), float(tokens[i + 1])] for i in range(0, len(tokens), 3)]
                ).reshape(-1, 2)
                ids = np.array([int(tokens[i + 2]) for i in range(0, len(tokens), 3)], dtype=np.int64)
            except ValueError as exc:
                raise MalformedLine(path, lineno, str(exc)) from exc
            image_id, name, camera_id, qvec, tvec = header
            images.append(ImageRecord(image_id, name, camera_id, qvec, tvec, xys, ids))
            header = None
    if header is not None:
        raise MalformedLine(path, last_lineno, "image header without a feature line")
    return images


def _parse_points3d(path: Path) -> list[Point3D]:
    points: list[Point3D] = []
    seen: set[int] = set()
    for lineno, line in _data_lines(path):
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 8 or (len(tokens) - 8) % 2 != 0:
            raise MalformedLine(path, lineno, f"expected 8 + 2k fields, got {len(tokens)}")
        try:
            point3d_id = int(tokens[0])
            xyz = np.array([float(t) for t in tokens[1:4]])
            rgb = np.array([int(t) for t in tokens[4:7]], dtype=np.int64)
            error = float(tokens[7])
            track = tuple(
                (int(tokens[i]), int(tokens[i + 1])) for i in range(8, len(tokens), 2)
            )
        except ValueError as exc:
            raise MalformedLine(path, lineno, str(exc)) from exc
        if point3d_id in seen:
            raise MalformedLine(path, lineno, f"duplicate point3d id {point3d_id}")
        if np.any(rgb < 0) or np.any(rgb > 255):
            raise MalformedLine(path, lineno, f"colour out of 8-bit range: {tokens[4:7]}")
        seen.add(point3d_id)
        points.append(Point3D(point3d_id, xyz, rgb.astype(np.uint8), error, track))
    return points


def parse_colmap_model(dir_path) -> SparseModel:
    """Parse a COLMAP text reconstruction (cameras/images/points3D.txt).

    Validates referential integrity: every feature's point id must exist in
    points3D.txt and every track entry must name an existing image and a
    feature index inside that image's feature list.
    """
    dir_path = Path(dir_path)
    paths = {name: dir_path / f"{name}.txt" for name in ("cameras", "images", "points3D")}
    for name, path in paths.items():
        if not path.is_file():
            raise MissingFile(f"missing {path}")

    cameras = _parse_cameras(paths["cameras"])
    images = _parse_images(paths["images"])
    points3d = _parse_points3d(paths["points3D"])

    point_ids = {p.point3d_id for p in points3d}
    camera_ids = {c.camera_id for c in cameras}
    image_by_id = {img.image_id: img for img in images}

    for img in images:
        if img.camera_id not in camera_ids:
            raise DanglingReference(
                f"image {img.image_id} cites nonexistent camera {img.camera_id}"
            )
        for pid in img.point3d_ids:
            if pid != SENTINEL_NONE and int(pid) not in point_ids:
                raise DanglingReference(
                    f"image {img.image_id} cites nonexistent point3d id {int(pid)}"
                )
    for pt in points3d:
        for image_id, feat_idx in pt.track:
            img = image_by_id.get(image_id)
            if img is None:
                raise DanglingReference(
                    f"point {pt.point3d_id} track cites nonexistent image {image_id}"
                )
            if not (0 <= feat_idx < img.xys.shape[0]):
                raise DanglingReference(
                    f"point {pt.point3d_id} track cites feature {feat_idx} "
                    f"outside image {image_id} ({img.xys.shape[0]} features)"
                )

    return SparseModel(tuple(cameras), tuple(images), tuple(points3d))


# ---------------------------------------------------------------------------
# Key frames and dataset construction
# ---------------------------------------------------------------------------

def select_key_frames(model: SparseModel, k: int) -> list[int]:
    """Image ids ranked by 2D-3D correspondence count, best first.

    Ties break towards the smaller image id. Returns min(k, #images) ids.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    counts = [(img.linked_count(), img.image_id) for img in model.images]
    if not any(c for c, _ in counts):
        raise NoCorrespondences("no image has a feature linked to a 3D point")
    ranked = sorted(counts, key=lambda ci: (-ci[0], ci[1]))
    return [image_id for _, image_id in ranked[: min(k, len(ranked))]]


def build_pixel_dataset(
    model: SparseModel, image_id: int, depth: Optional[DepthMap] = None
) -> PixelToPointDataset:
    """Pixel-to-point dataset for one image.

    One sample per feature with a valid track: input is the pixel divided by
    the camera width/height, target is the 3D position plus colour/255.
    When a depth map is supplied, each sample additionally carries the
    nearest-pixel depth (None where the depth value is invalid).
    """
    img = model.image_by_id(image_id)
    cam = model.camera_by_id(img.camera_id)
    if depth is not None and (depth.width != cam.width or depth.height != cam.height):
        raise DimensionMismatch(
            f"depth map {depth.width}x{depth.height} vs camera {cam.width}x{cam.height}"
        )

    point_by_id = {p.point3d_id: p for p in model.points3d}
    samples: list[tuple[PixelSample, TargetVector]] = []
    for (u, v), pid in zip(img.xys, img.point3d_ids):
        if pid == SENTINEL_NONE:
            continue
        pt = point_by_id[int(pid)]
        d = depth.value_at(u, v) if depth is not None else None
        sample = PixelSample(u_norm=float(u) / cam.width, v_norm=float(v) / cam.height, depth=d)
        target = TargetVector(
            float(pt.xyz[0]), float(pt.xyz[1]), float(pt.xyz[2]),
            float(pt.rgb[0]) / 255.0, float(pt.rgb[1]) / 255.0, float(pt.rgb[2]) / 255.0,
        )
        samples.append((sample, target))
    return PixelToPointDataset(image_id, cam.width, cam.height, tuple(samples))


def split_dataset(ds: PixelToPointDataset, train_fraction: float, seed: int) -> SplitResult:
    """Deterministic shuffled split; train size = round(fraction * n)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(ds)
    if n == 0:
        raise EmptyDataset("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    train = replace(ds, samples=tuple(ds.samples[i] for i in train_idx))
    test = replace(ds, samples=tuple(ds.samples[i] for i in test_idx))
    degenerate = len(train) == 0 or len(test) == 0
    if degenerate:
        warnings.warn(
            f"degenerate split: train={len(train)} test={len(test)}", stacklevel=2
        )
    return SplitResult(train, test, degenerate)


# ---------------------------------------------------------------------------
# PFM depth maps
# ---------------------------------------------------------------------------

def read_depth_pfm(path) -> DepthMap:
    """Read a single-channel 'Pf' PFM file.

    PFM stores rows bottom-to-top; the returned grid is top-to-bottom.
    The sign of the scale line selects endianness; its magnitude is not
    applied. Non-finite payload values become the invalid marker.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise MissingFile(f"cannot read {path}: {exc}") from exc

    def next_token(offset: int) -> tuple[bytes, int]:
        while offset < len(raw) and raw[offset : offset + 1].isspace():
            offset += 1
        start = offset
        while offset < len(raw) and not raw[offset : offset + 1].isspace():
            offset += 1
        return raw[start:offset], offset

    magic, off = next_token(0)
    if magic != b"Pf":
        raise BadMagic(f"{path}: expected 'Pf' magic, got {magic!r}")
    w_tok, off = next_token(off)
    h_tok, off = next_token(off)
    try:
        width, height = int(w_tok), int(h_tok)
    except ValueError as exc:
        raise BadDims(f"{path}: bad dimension tokens {w_tok!r} {h_tok!r}") from exc
    if width < 1 or height < 1:
        raise BadDims(f"{path}: non-positive dimensions {width}x{height}")
    scale_tok, off = next_token(off)
    try:
        scale = float(scale_tok)
    except ValueError as exc:
        raise BadDims(f"{path}: bad scale token {scale_tok!r}") from exc
    off += 1  # single whitespace byte terminates the header
    payload = raw[off : off + 4 * width * height]
    if len(payload) < 4 * width * height:
        raise TruncatedPayload(
            f"{path}: payload holds {len(payload)} bytes, need {4 * width * height}"
        )
    endian = "<" if scale < 0 else ">"
    grid = np.frombuffer(payload, dtype=endian + "f4").reshape(height, width)
    grid = np.ascontiguousarray(grid[::-1])  # bottom-to-top -> top-to-bottom
    grid = np.where(np.isfinite(grid), grid, np.float32(INVALID_DEPTH))
    return DepthMap(width, height, grid)


# ---------------------------------------------------------------------------
# PLY point clouds
# ---------------------------------------------------------------------------

_PLY_PROPS = ("x", "y", "z", "red", "green", "blue", "source")

_PLY_SCALAR_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}

_PLY_NUMPY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def write_ply(cloud: DensifiedCloud, path, binary: bool = True) -> None:
    """Write the cloud with x/y/z, red/green/blue, and the source tag."""
    if not np.all(np.isfinite(cloud.positions)):
        raise ValueError("cloud positions must be finite")
    path = Path(path)
    fmt = "binary_little_endian" if binary else "ascii"
    header_lines = [
        "ply",
        f"format {fmt} 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property uchar source",
        "end_header",
    ]
    header = ("\n".join(header_lines) + "\n").encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            if binary:
                rec = np.empty(
                    len(cloud),
                    dtype=[(n, "<f4") for n in ("x", "y", "z")]
                    + [(n, "u1") for n in ("red", "green", "blue", "source")],
                )
                rec["x"], rec["y"], rec["z"] = cloud.positions.T
                rec["red"], rec["green"], rec["blue"] = cloud.colors.T
                rec["source"] = cloud.sources
                fh.write(rec.tobytes())
            else:
                for pos, col, src in zip(cloud.positions, cloud.colors, cloud.sources):
                    # %.9g round-trips float32 exactly
                    fh.write(
                        (
                            f"{pos[0]:.9g} {pos[1]:.9g} {pos[2]:.9g} "
                            f"{col[0]} {col[1]} {col[2]} {src}\n"
                        ).encode("ascii")
                    )
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _parse_ply_header(raw: bytes, path: Path):
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise IoFailure(f"{path}: not a PLY file")
    body_start = raw.index(b"\n", end) + 1
    header_text = raw[:end].decode("ascii", errors="replace")

    binary = None
    n_vertices = None
    props: list[tuple[str, str]] = []  # (type, name)
    in_vertex = False
    seen_element = False
    for line in header_text.splitlines():
        tokens = line.split()
        if not tokens or tokens[0] in ("ply", "comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if tokens[1] == "ascii":
                binary = False
            elif tokens[1] == "binary_little_endian":
                binary = True
            else:
                raise UnsupportedProperty(f"{path}: unsupported format {tokens[1]}")
        elif tokens[0] == "element":
            if tokens[1] == "vertex":
                if seen_element:
                    raise UnsupportedProperty(f"{path}: vertex is not the first element")
                n_vertices = int(tokens[2])
                in_vertex = True
            else:
                in_vertex = False
            seen_element = True
        elif tokens[0] == "property" and in_vertex:
            if tokens[1] == "list":
                raise UnsupportedProperty(f"{path}: list property in vertex element")
            if tokens[1] not in _PLY_SCALAR_SIZES:
                raise UnsupportedProperty(f"{path}: unknown property type {tokens[1]}")
            props.append((tokens[1], tokens[2]))
    if binary is None or n_vertices is None:
        raise IoFailure(f"{path}: header lacks format or vertex element")
    names = [n for _, n in props]
    for coord in ("x", "y", "z"):
        if coord not in names:
            raise UnsupportedProperty(f"{path}: vertex element lacks property {coord}")
    return binary, n_vertices, props, body_start


def read_ply(path) -> DensifiedCloud:
    """Read a PLY point cloud written by write_ply or a compatible tool.

    Colour channels default to 0 when absent; the source tag defaults to
    PointSource.SFM for foreign files that lack it.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    binary, n, props, body_start = _parse_ply_header(raw, path)

    if binary:
        dtype = np.dtype([(name, "<" + _PLY_NUMPY_TYPES[typ]) for typ, name in props])
        body = raw[body_start : body_start + dtype.itemsize * n]
        if len(body) < dtype.itemsize * n:
            raise IoFailure(f"{path}: binary payload truncated")
        table = np.frombuffer(body, dtype=dtype)
    else:
        lines = raw[body_start:].decode("ascii", errors="replace").splitlines()
        rows = [line.split() for line in lines if line.strip()]
        if len(rows) < n:
            raise IoFailure(f"{path}: expected {n} vertex lines, found {len(rows)}")
        dtype = np.dtype([(name, _PLY_NUMPY_TYPES[typ]) for typ, name in props])
        table = np.zeros(n, dtype=dtype)
        for i in range(n):
            if len(rows[i]) < len(props):
                raise IoFailure(f"{path}: vertex line {i} has too few columns")
            for (typ, name), tok in zip(props, rows[i]):
                table[name][i] = float(tok) if _PLY_NUMPY_TYPES[typ][0] == "f" else int(tok)

    names = {n for _, n in props}
    positions = np.stack(
        [table["x"], table["y"], table["z"]], axis=1
    ).astype(np.float32)
    colors = np.zeros((n, 3), dtype=np.uint8)
    for i, channel in enumerate(("red", "green", "blue")):
        if channel in names:
            colors[:, i] = table[channel].astype(np.uint8)
    sources = (
        table["source"].astype(np.uint8)
        if "source" in names
        else np.full(n, int(PointSource.SFM), dtype=np.uint8)
    )
    return DensifiedCloud(positions, colors, sources)


# ---------------------------------------------------------------------------
# Dataset CSV interchange
# ---------------------------------------------------------------------------

def write_dataset_csv(ds: PixelToPointDataset, path) -> None:
    """Write the dataset with '#'-prefixed metadata and a one-line header.

    Columns are u_norm,v_norm[,depth],x,y,z,r,g,b; the depth column is
    present only when every sample carries a depth. 17 significant digits
    give exact float64 round trips.
    """
    with_depth = ds.has_depth
    cols = ["u_norm", "v_norm"] + (["depth"] if with_depth else []) + list("xyzrgb")
    lines = [
        f"# image_id = {ds.image_id}",
        f"# width = {ds.width}",
        f"# height = {ds.height}",
        ",".join(cols),
    ]
    for sample, target in ds.samples:
        vals = [sample.u_norm, sample.v_norm]
        if with_depth:
            vals.append(sample.depth)
        vals += [target.x, target.y, target.z, target.r, target.g, target.b]
        lines.append(",".join(f"{v:.17g}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset_csv(path) -> PixelToPointDataset:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing dataset file {path}")
    meta = {"image_id": 0, "width": None, "height": None}
    header = None
    samples: list[tuple[PixelSample, TargetVector]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line.lstrip("# ").partition("=")
            key = key.strip()
            if key in meta:
                meta[key] = int(value.strip())
            continue
        if header is None:
            header = line.split(",")
            continue
        tokens = line.split(",")
        if len(tokens) != len(header):
            raise MalformedLine(path, lineno, f"expected {len(header)} columns, got {len(tokens)}")
        try:
            row = dict(zip(header, (float(t) for t in tokens)))
        except ValueError as exc:
            raise MalformedLine(path, lineno, str(exc)) from exc
        sample = PixelSample(row["u_norm"], row["v_norm"], row.get("depth"))
        target = TargetVector(row["x"], row["y"], row["z"], row["r"], row["g"], row["b"])
        samples.append((sample, target))
    if header is None:
        raise MalformedLine(path, 0, "dataset file has no header line")
    if meta["width"] is None or meta["height"] is None:
        raise MalformedLine(path, 0, "dataset file lacks width/height metadata")
    return PixelToPointDataset(meta["image_id"], meta["width"], meta["height"], tuple(samples))
