"""
File formats: Net JSON, OBJ grids and polylines, ansatz JSON, flexion sequences.

OBJ grid convention: vertices are written row-major (f_00, f_01, ...,
f_10, ...), quads go to group ``faces`` and every polyline of a family is an
``l`` record in a group named after the family (``i_lines``, ``j_lines``,
``diag_minus_lines``, ``diag_plus_lines``). A ``# grid rows cols`` comment
records the grid size. Import accepts any OBJ following this convention and
checks its face and polyline records against the declared grid.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError

from src.core.errors import BadTopology, ConfigError, EmptySelection
from src.models.crpc import CrpcAnsatz, GraphSample
from src.models.gridshell import GridshellExtract, Lamella
from src.models.net import FAMILIES, Net, NetDocument, WebRoles

logger = logging.getLogger("isoweb")

OBJ_GROUPS = {"i": "i_lines", "j": "j_lines", "diag_minus": "diag_minus_lines", "diag_plus": "diag_plus_lines"}
FACE_GROUP = "faces"

Model = TypeVar("Model", bound=BaseModel)


# =========================================================
# JSON helpers
# =========================================================

def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def write_json(data, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, default=_plain))
    logger.info("Wrote %s", path)
    return path


def read_json(path: Path, what: str = "file"):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"{what} not found: {path}", field=what, path=str(path)) from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} is not valid JSON: {path} ({e.msg} at line {e.lineno})", field=what) from e


def parse_document(model: Type[Model], data, what: str) -> Model:
    """Validate ``data`` against ``model``; the first failing field is named in the ConfigError."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or what
        raise ConfigError(f"Invalid {what}: {loc}: {first['msg']}", field=loc) from e


# =========================================================
# Net JSON
# =========================================================

def net_to_dict(net: Net) -> dict:
    return NetDocument.from_net(net).model_dump(by_alias=True)


def net_from_dict(data: dict) -> Net:
    return parse_document(NetDocument, data, "net").to_net()


def write_net_json(net: Net, path: Path) -> Path:
    return write_json(net_to_dict(net), path)


def read_net_json(path: Path) -> Net:
    return net_from_dict(read_json(path, "net file"))


# =========================================================
# Ansatz JSON and height fields
# =========================================================

def write_ansatz_json(ansatz: CrpcAnsatz, path: Path) -> Path:
    return write_json(ansatz.to_dict(), path)


def read_ansatz_json(path: Path) -> CrpcAnsatz:
    return CrpcAnsatz.from_dict(read_json(path, "ansatz file"))


def write_height_field_obj(sample: GraphSample, path: Path) -> Path:
    """Sampled graph as a quad grid, faces only."""
    return write_obj(Net(sample.grid()), path, families=())


# =========================================================
# OBJ
# =========================================================

def _default_families(net: Net) -> List[str]:
    tagged = [f for f in FAMILIES if net.roles.of(f) != "none"]
    return tagged or ["i", "j"]


def write_obj(net: Net, path: Path, families: Optional[Sequence[str]] = None) -> Path:
    families = _default_families(net) if families is None else list(families)
    lines = ["# isoweb net", f"# grid {net.rows} {net.cols}"]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in net.flat().tolist()]

    lines.append(f"g {FACE_GROUP}")
    for i, j in net.faces():
        ids = [net.vertex_id(a, b) + 1 for a, b in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))]
        lines.append("f " + " ".join(map(str, ids)))
    for family in families:
        lines.append(f"g {OBJ_GROUPS[family]}")
        for poly in net.polylines(family):
            if len(poly) >= 2:
                lines.append("l " + " ".join(str(net.vertex_id(*k) + 1) for k in poly.indices))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    logger.info("Wrote %s", path)
    return path


def _parse_obj(text: str):
    vertices: List[List[float]] = []
    records: Dict[str, List[List[int]]] = {}
    grid = None
    group = "default"
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("# grid"):
            grid = tuple(int(t) for t in line.split()[2:4])
            continue
        if not line or line.startswith("#"):
            continue
        tag, *rest = line.split()
        if tag == "v":
            vertices.append([float(t) for t in rest[:3]])
        elif tag == "g":
            group = rest[0] if rest else "default"
        elif tag in ("f", "l"):
            try:
                ids = [int(t.split("/")[0]) - 1 for t in rest]
            except ValueError as e:
                raise BadTopology(f"Malformed {tag} record on line {number}", line=number) from e
            records.setdefault(group if tag == "l" else FACE_GROUP, []).append(ids)
    return np.array(vertices, dtype=float).reshape(-1, 3), records, grid


def _check_faces(faces: List[List[int]], net: Net) -> None:
    expected = {
        frozenset(net.vertex_id(a, b) for a, b in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)))
        for i, j in net.faces()
    }
    got = [frozenset(f) for f in faces]
    if len(got) != len(expected) or set(got) != expected:
        raise BadTopology("OBJ faces do not form the declared row-major grid", faces=len(got), expected=len(expected))


def _check_polylines(group: str, polylines: List[List[int]], net: Net) -> None:
    family = next(f for f, g in OBJ_GROUPS.items() if g == group)
    expected = {tuple(net.vertex_id(*k) for k in p.indices) for p in net.polylines(family) if len(p) >= 2}
    for ids in polylines:
        if tuple(ids) not in expected and tuple(reversed(ids)) not in expected:
            raise BadTopology(f"Polyline in group {group} is not a {family}-line of the row-major grid", group=group)


def import_obj(path: Path, rows: int, cols: int, roles: Optional[WebRoles] = None) -> Net:
    """
    Read a rows x cols grid written in the convention above.

    At least one face or polyline record is required so the vertex order
    can be verified; missing vertices, foreign faces or lines that do not
    follow the row-major grid raise BadTopology.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as e:
        raise ConfigError(f"OBJ file not found: {path}", field="input", path=str(path)) from e
    vertices, records, grid = _parse_obj(text)

    if grid is not None and grid != (rows, cols):
        raise BadTopology(f"OBJ declares a {grid[0]}x{grid[1]} grid, expected {rows}x{cols}")
    if len(vertices) != rows * cols:
        raise BadTopology(f"Expected {rows * cols} vertices, found {len(vertices)}", rows=rows, cols=cols)
    if not records:
        raise BadTopology("OBJ has no face or polyline records to verify the grid")
    for ids in (i for rec in records.values() for i in rec):
        if min(ids) < 0 or max(ids) >= len(vertices):
            raise BadTopology("OBJ record references a missing vertex")

    net = Net(vertices.reshape(rows, cols, 3), roles).check_distinct()
    if FACE_GROUP in records:
        _check_faces(records[FACE_GROUP], net)
    for group, polylines in records.items():
        if group in OBJ_GROUPS.values():
            _check_polylines(group, polylines, net)
    return net


# =========================================================
# Gridshell extraction
# =========================================================

def strided(count: int, stride: int) -> List[int]:
    """Every ``stride``-th index, always keeping the last one."""
    keep = list(range(0, count, stride))
    if keep and keep[-1] != count - 1:
        keep.append(count - 1)
    return keep


def inside_polygon(polygon: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Even-odd rule for each point against the closed polygon."""
    poly = np.asarray(polygon, dtype=float)
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    a, b = poly, np.roll(poly, -1, axis=0)
    x, y = p[:, 0][:, None], p[:, 1][:, None]
    straddles = (a[:, 1] > y) != (b[:, 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    hits = straddles & (x < x_cross)
    return np.sum(hits, axis=1) % 2 == 1


def _runs(mask: np.ndarray) -> Iterable[slice]:
    start = None
    for k, inside in enumerate(list(mask) + [False]):
        if inside and start is None:
            start = k
        elif not inside and start is not None:
            if k - start >= 2:
                yield slice(start, k)
            start = None


def extract_gridshell(net: Net, extract: GridshellExtract) -> List[Lamella]:
    v = net.vertices
    lamellas: List[Lamella] = []
    for family in extract.families:
        lines = [p for p in net.polylines(family) if len(p) >= 2]
        for k in strided(len(lines), extract.stride):
            poly = lines[k]
            pts = np.array([v[idx] for idx in poly.indices])
            if extract.trim is None:
                lamellas.append(Lamella(family, poly.key, pts, list(poly.indices)))
                continue
            mask = inside_polygon(extract.trim, pts[:, :2])
            for run in _runs(mask):
                lamellas.append(Lamella(family, poly.key, pts[run], list(poly.indices[run])))
    if not lamellas:
        raise EmptySelection("Extraction keeps no polyline", stride=extract.stride)
    logger.info("Extracted %d lamellas from %d families", len(lamellas), len(extract.families))
    return lamellas


def write_lamellas_obj(lamellas: List[Lamella], path: Path) -> Path:
    lines = ["# isoweb gridshell"]
    records: Dict[str, List[str]] = {}
    count = 0
    for lam in lamellas:
        lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in lam.points.tolist()]
        ids = range(count + 1, count + len(lam.points) + 1)
        records.setdefault(lam.family, []).append("l " + " ".join(map(str, ids)))
        count += len(lam.points)
    for family, recs in records.items():
        lines.append(f"g {OBJ_GROUPS[family]}")
        lines += recs
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    logger.info("Wrote %s", path)
    return path


# =========================================================
# Sequences
# =========================================================

def write_sequence(nets: Sequence[Net], out_dir: Path, manifest: dict, prefix: str = "step") -> List[Path]:
    """One JSON and one OBJ per net plus ``manifest.json``."""
    out_dir = Path(out_dir)
    written = []
    for k, net in enumerate(nets):
        written.append(write_net_json(net, out_dir / f"{prefix}_{k:03d}.json"))
        written.append(write_obj(net, out_dir / f"{prefix}_{k:03d}.obj"))
    written.append(write_json(manifest, out_dir / "manifest.json"))
    return written
