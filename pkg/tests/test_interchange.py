import json

import numpy as np
import pytest

from src.core.errors import BadTopology, ConfigError, DegenerateParameters, EmptySelection
from src.models.gridshell import GridshellExtract
from src.models.net import KIND_ROLES, WebRoles
from src.services.crpc import ansatz_sample, build_c2l
from src.services.interchange import (
    extract_gridshell,
    import_obj,
    inside_polygon,
    net_from_dict,
    net_to_dict,
    read_ansatz_json,
    read_json,
    read_net_json,
    strided,
    write_ansatz_json,
    write_height_field_obj,
    write_lamellas_obj,
    write_net_json,
    write_obj,
    write_sequence,
)
from tests.factories import aag_net, grid_net, random_heights_net


def obj_records(path):
    groups, group = {}, None
    for line in path.read_text().splitlines():
        tag, *rest = line.split() or [""]
        if tag == "g":
            group = rest[0]
        elif tag in ("f", "l"):
            groups.setdefault(group, []).append([int(t) for t in rest])
    return groups


# =========================================================
# Net JSON
# =========================================================

def test_net_json_round_trip_is_exact(tmp_path, rng):
    net = random_heights_net(rng, 6, 4).with_roles(KIND_ROLES["AAG"])
    back = read_net_json(write_net_json(net, tmp_path / "net.json"))
    assert np.array_equal(back.vertices, net.vertices)
    assert back.roles == net.roles
    assert back.boundary_policy == net.boundary_policy


def test_net_document_uses_camel_case():
    data = net_to_dict(grid_net(2, 3))
    assert set(data) == {"rows", "cols", "vertices", "roles", "boundaryPolicy"}
    assert data["vertices"][1] == [0.0, 1.0, 0.0]


def test_net_document_errors():
    data = net_to_dict(grid_net(3, 3))
    data["vertices"] = data["vertices"][:-1]
    with pytest.raises(BadTopology):
        net_from_dict(data)

    del data["rows"]
    with pytest.raises(ConfigError) as e:
        net_from_dict(data)
    assert e.value.context["field"] == "rows"


def test_net_document_rejects_repeated_vertices():
    data = net_to_dict(grid_net(3, 3))
    data["vertices"][4] = data["vertices"][0]
    with pytest.raises(BadTopology) as e:
        net_from_dict(data)
    assert e.value.context["vertex"] == (0, 0)


def test_read_json_errors(tmp_path):
    with pytest.raises(ConfigError) as e:
        read_json(tmp_path / "missing.json", "seedFile")
    assert e.value.exit_code == 2
    assert "seedFile" in e.value.detail

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        read_json(bad)


def test_ansatz_json_round_trip(tmp_path):
    a = build_c2l(60.0, [0.5 + 0.25j])
    back = read_ansatz_json(write_ansatz_json(a, tmp_path / "ansatz.json"))
    assert back.gamma == 60.0
    assert back.flat_points == [0.5 + 0.25j]
    assert back.h == a.h and back.g == a.g


def test_height_field_obj(tmp_path):
    sample = ansatz_sample(build_c2l(70.0), (0.0, 1.0, 0.0, 0.5), 0.25)
    path = write_height_field_obj(sample, tmp_path / "field.obj")
    text = path.read_text()
    assert "# grid 5 3" in text
    assert sum(line.startswith("v ") for line in text.splitlines()) == 15
    assert set(obj_records(path)) == {"faces"}
    assert len(obj_records(path)["faces"]) == 8


# =========================================================
# OBJ grids
# =========================================================

def test_obj_round_trip_is_exact(tmp_path, rng):
    net = random_heights_net(rng, 5, 7)
    back = import_obj(write_obj(net, tmp_path / "net.obj"), 5, 7)
    assert np.array_equal(back.vertices, net.vertices)


def test_obj_groups_follow_roles(tmp_path):
    net = aag_net()
    path = write_obj(net, tmp_path / "aag.obj")
    groups = obj_records(path)
    assert set(groups) == {"faces", "i_lines", "j_lines", "diag_minus_lines"}
    assert len(groups["faces"]) == 9
    assert len(groups["i_lines"]) == 4
    # corner diagonals have a single vertex and are not written
    assert len(groups["diag_minus_lines"]) == 5

    back = import_obj(path, 4, 4, KIND_ROLES["AAG"])
    assert np.array_equal(back.vertices, net.vertices)
    assert back.roles == KIND_ROLES["AAG"]


def test_obj_accepts_reversed_polylines(tmp_path):
    net = grid_net(3, 4)
    path = tmp_path / "lines.obj"
    v = "\n".join(f"v {x} {y} {z}" for x, y, z in net.flat().tolist())
    path.write_text(v + "\ng i_lines\nl 4 3 2 1\nl 5 6 7 8\n")
    assert np.array_equal(import_obj(path, 3, 4).vertices, net.vertices)


def test_shuffled_obj_is_rejected(tmp_path, rng):
    """
    Flow:
    - write a 4x5 grid, then permute its vertex records
    - remap every face and polyline to the new vertex ids (same mesh, other order)
    - import sees faces that do not follow row-major order
    """
    path = write_obj(random_heights_net(rng, 4, 5), tmp_path / "net.obj")
    lines = path.read_text().splitlines()
    vertices = [ln for ln in lines if ln.startswith("v ")]
    perm = rng.permutation(len(vertices))
    assert not np.array_equal(perm, np.arange(len(vertices)))
    new_id = np.empty_like(perm)
    new_id[perm] = np.arange(len(perm))

    out = [ln for ln in lines if ln.startswith("#")] + [vertices[k] for k in perm]
    for ln in lines:
        tag, *rest = ln.split()
        if tag == "g":
            out.append(ln)
        elif tag in ("f", "l"):
            out.append(" ".join([tag] + [str(new_id[int(t) - 1] + 1) for t in rest]))
    shuffled = tmp_path / "shuffled.obj"
    shuffled.write_text("\n".join(out) + "\n")

    with pytest.raises(BadTopology):
        import_obj(shuffled, 4, 5)


def test_grid_with_hole_is_rejected(tmp_path):
    path = write_obj(grid_net(4, 4), tmp_path / "net.obj")
    lines = path.read_text().splitlines()

    first_face = next(k for k, ln in enumerate(lines) if ln.startswith("f "))
    holed = tmp_path / "holed.obj"
    holed.write_text("\n".join(lines[:first_face] + lines[first_face + 1:]) + "\n")
    with pytest.raises(BadTopology):
        import_obj(holed, 4, 4)

    missing_vertex = tmp_path / "missing.obj"
    first_vertex = next(k for k, ln in enumerate(lines) if ln.startswith("v "))
    missing_vertex.write_text("\n".join(lines[:first_vertex] + lines[first_vertex + 1:]) + "\n")
    with pytest.raises(BadTopology):
        import_obj(missing_vertex, 4, 4)


def test_obj_import_errors(tmp_path):
    net = grid_net(3, 3)
    path = write_obj(net, tmp_path / "net.obj")
    with pytest.raises(BadTopology):
        import_obj(path, 3, 4)

    bare = tmp_path / "bare.obj"
    bare.write_text("\n".join(f"v {x} {y} {z}" for x, y, z in net.flat().tolist()) + "\n")
    with pytest.raises(BadTopology):
        import_obj(bare, 3, 3)

    with pytest.raises(ConfigError):
        import_obj(tmp_path / "nowhere.obj", 3, 3)


# =========================================================
# Gridshell extraction
# =========================================================

def test_strided_keeps_endpoints():
    assert strided(19, 3) == [0, 3, 6, 9, 12, 15, 18]
    assert strided(20, 3) == [0, 3, 6, 9, 12, 15, 18, 19]
    assert strided(5, 1) == [0, 1, 2, 3, 4]
    assert strided(1, 4) == [0]


def test_stride_three_keeps_seven_of_nineteen_lines():
    lamellas = extract_gridshell(grid_net(19, 4), GridshellExtract(stride=3, families=("i",)))
    assert [lam.key for lam in lamellas] == [0, 3, 6, 9, 12, 15, 18]
    assert all(len(lam.points) == 4 for lam in lamellas)


def test_stride_one_without_trim_is_identity(rng):
    net = random_heights_net(rng, 4, 6)
    lamellas = extract_gridshell(net, GridshellExtract())
    assert len(lamellas) == 4 + 6
    for lam in lamellas:
        poly = net.polylines(lam.family)[lam.key]
        assert lam.indices == list(poly.indices)
        assert np.array_equal(lam.points, np.array([net.vertices[p] for p in poly.indices]))


def test_trim_cuts_lines_to_inside_runs():
    net = grid_net(5, 5)
    half = np.array([[-1.0, -1.0], [2.5, -1.0], [2.5, 5.0], [-1.0, 5.0]])
    lamellas = extract_gridshell(net, GridshellExtract(trim=half))
    i_lines = [lam for lam in lamellas if lam.family == "i"]
    j_lines = [lam for lam in lamellas if lam.family == "j"]
    assert [lam.key for lam in i_lines] == [0, 1, 2]
    assert all(len(lam.points) == 5 for lam in i_lines)
    assert len(j_lines) == 5
    assert all(len(lam.points) == 3 and lam.points[:, 0].max() == 2.0 for lam in j_lines)


def test_trim_with_notch_splits_a_line():
    net = grid_net(3, 7)
    # the notch removes x < 1.5, 1.5 < y < 4.5
    u = np.array([[-1, -1], [3, -1], [3, 8], [-1, 8], [-1, 4.5], [1.5, 4.5], [1.5, 1.5], [-1, 1.5]], dtype=float)
    lamellas = extract_gridshell(net, GridshellExtract(families=("i",), trim=u))
    row1 = [lam for lam in lamellas if lam.key == 1]
    assert [lam.indices for lam in row1] == [[(1, 0), (1, 1)], [(1, 5), (1, 6)]]


def test_disjoint_trim_selects_nothing():
    far = np.array([[10.0, 10.0], [11.0, 10.0], [11.0, 11.0]])
    with pytest.raises(EmptySelection):
        extract_gridshell(grid_net(4, 4), GridshellExtract(trim=far))


def test_extract_validation():
    with pytest.raises(DegenerateParameters):
        GridshellExtract(stride=0)
    with pytest.raises(BadTopology):
        GridshellExtract(trim=np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(BadTopology):
        GridshellExtract(trim=np.array([[0.0, 0.0], [1.0, 1.0]]))


def test_inside_polygon_even_odd():
    square = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    inside = inside_polygon(square, np.array([[1.0, 1.0], [3.0, 1.0], [-0.5, 0.5], [1.9, 0.1]]))
    assert inside.tolist() == [True, False, False, True]


def test_lamellas_obj_groups(tmp_path):
    net = grid_net(5, 5, roles=WebRoles(diag_plus="asymptotic"))
    lamellas = extract_gridshell(net, GridshellExtract(stride=2, families=("i", "diag_plus")))
    groups = obj_records(write_lamellas_obj(lamellas, tmp_path / "shell.obj"))
    assert set(groups) == {"i_lines", "diag_plus_lines"}
    assert len(groups["i_lines"]) == 3
    assert len(groups["diag_plus_lines"]) == len([lam for lam in lamellas if lam.family == "diag_plus"])
    ids = [k for recs in groups.values() for rec in recs for k in rec]
    assert sorted(ids) == list(range(1, len(ids) + 1))


# =========================================================
# Sequences
# =========================================================

def test_write_sequence(tmp_path):
    nets = [grid_net(3, 3), grid_net(3, 3, height=lambda x, y: 0.1 * x)]
    written = write_sequence(nets, tmp_path / "seq", {"steps": 1})
    assert len(written) == 5
    assert (tmp_path / "seq" / "step_001.obj").exists()
    assert json.loads((tmp_path / "seq" / "manifest.json").read_text()) == {"steps": 1}
    assert np.array_equal(read_net_json(tmp_path / "seq" / "step_001.json").vertices, nets[1].vertices)
