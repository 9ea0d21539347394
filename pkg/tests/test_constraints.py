import math

import numpy as np
import pytest

from src.core.errors import DegenerateFace, NoFootPoint, ZeroEdge
from src.models.net import KIND_ROLES, Net, WebRoles
from src.services.constraints import (
    BlockBuilder,
    ConstraintProblem,
    angle_faces,
    build_anet_constraints,
    build_angle_constraints,
    build_curve_closeness,
    build_fairness,
    build_geodesic_constraints,
    build_surface_closeness,
    build_vertex_closeness,
    foot_point,
)
from src.models.solver import SolverConfig
from src.services.guided_projection import assemble_energy, init_aux_variables
from src.services.variables import VariableLayout, vertex_keys
from tests.factories import aag_net, ggg_net, grid_net, saddle_net


def vertex_layout(net):
    layout = VariableLayout()
    layout.add("f", vertex_keys(net.shape), 3)
    return layout, net.vertices.reshape(-1).copy()


def polyline_net(points):
    """Two i-lines: the polyline under test and a copy shifted in z."""
    p = np.asarray(points, dtype=float)
    return Net(np.stack([p, p + [0.0, 0.0, 1.0]]), WebRoles(i_lines="geodesic"))


# =========================================================
# Block mechanics
# =========================================================

def test_block_builder_quadratic_and_linear_terms():
    bb = BlockBuilder()
    r = bb.row()
    bb.quad(r, 0, 1, 2.0)
    bb.quad(r, 1, 1, 1.0)
    bb.lin(r, 0, -3.0)
    bb.const(r, 4.0)
    block = bb.build("toy")
    x = np.array([2.0, -1.0])
    # 2 x0 x1 + x1^2 - 3 x0 + 4
    assert block.residuals(x)[0] == pytest.approx(-4.0 + 1.0 - 6.0 + 4.0)
    J = block.jacobian(x, 2).toarray()
    assert np.allclose(J, [[2.0 * x[1] - 3.0, 2.0 * x[0] + 2.0 * x[1]]])


def test_problem_folds_weights_and_splits_energies():
    layout = VariableLayout()
    layout.add("f", [0], 1)
    hard, soft = BlockBuilder(), BlockBuilder()
    hard.lin(hard.row(), 0)
    soft.lin(soft.row(), 0)
    soft.const(0, -1.0)
    problem = ConstraintProblem(layout, [hard.build("h"), soft.build("s", hard=False, weight=0.25)])
    x = np.array([3.0])
    assert np.allclose(problem.residuals(x), [3.0, 0.5 * 2.0])
    assert problem.energies(x) == pytest.approx((9.0, 0.25 * 4.0))
    assert problem.jacobian(x).toarray().ravel().tolist() == [1.0, 0.5]


# =========================================================
# A-net and geodesic constraints
# =========================================================

def test_anet_constraints_vanish_on_saddle():
    net = saddle_net(5, 5).with_roles(KIND_ROLES["CRPC"])
    aux = init_aux_variables(net, "CRPC")
    block = build_anet_constraints(aux.layout, net)
    assert np.abs(block.residuals(aux.x)).max() <= 1e-12


def test_anet_unit_row_of_doubled_normal(planar_grid):
    net = planar_grid.with_roles(KIND_ROLES["CRPC"])
    aux = init_aux_variables(net, "CRPC")
    assert np.allclose(aux.layout.view(aux.x, "n_anet"), [0.0, 0.0, 1.0])
    block = build_anet_constraints(aux.layout, net)
    assert np.abs(block.residuals(aux.x)).max() == 0.0

    x = aux.x.copy()
    x[aux.layout.span("n_anet")] *= 2.0
    r = block.residuals(x)
    # four star rows then the norm row per vertex
    assert np.allclose(r[4::5], 3.0)
    assert np.allclose(np.delete(r, np.s_[4::5]), 0.0)


def test_geodesic_constraints_at_eps0_on_isotropic_web():
    net = ggg_net()
    aux = init_aux_variables(net, "GGG")
    for family in net.roles.families("geodesic"):
        block = build_geodesic_constraints(aux.layout, net, family, 0.0)
        assert block.n_rows > 0
        assert np.abs(block.residuals(aux.x)).max() <= 1e-12


def test_geodesic_constraints_at_eps1_on_flat_web():
    net = ggg_net(phi=lambda x, y: 0.0 * x)
    aux = init_aux_variables(net, "GGG")
    # every line is straight, so all binormals come from the fallback
    assert len(aux.flagged) > 0
    for family in net.roles.families("geodesic"):
        block = build_geodesic_constraints(aux.layout, net, family, 1.0)
        assert np.abs(block.residuals(aux.x)).max() <= 1e-14


def test_geodesic_constraints_detect_curved_line_at_eps1(rng):
    theta = 0.3 * np.arange(5)
    radius = np.array([1.0, 1.5, 2.0])[:, None]
    v = np.stack([radius * np.cos(theta), radius * np.sin(theta), 0.0 * radius * theta], axis=-1)
    net = Net(v, WebRoles(i_lines="geodesic"))
    layout = VariableLayout()
    layout.add("f", vertex_keys(net.shape), 3)
    keys = [(1, j) for j in range(1, 4)]
    layout.add("b_i", keys, 3)
    layout.add("n_geo", keys, 3)
    block = build_geodesic_constraints(layout, net, "i", 1.0)
    for _ in range(20):
        b = rng.standard_normal((3, 3))
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        x = np.concatenate([v.reshape(-1), b.reshape(-1), np.tile([0.0, 0.0, 1.0], 3)])
        assert np.abs(block.residuals(x)).max() > 1e-3


# =========================================================
# Fairness
# =========================================================

@pytest.mark.parametrize(
    "points, midpoint, tangent",
    [
        ([[0, 0, 0], [1, 0, 0], [2, 0, 0]], 0.0, 0.0),
        ([[0, 0, 0], [1, 0, 0], [3, 0, 0]], 1.0, 0.0),
        ([[0, 0, 0], [1, 0, 0], [1, 1, 0]], math.sqrt(2.0), math.sqrt(2.0)),
    ],
)
def test_fairness_forms(points, midpoint, tangent):
    net = polyline_net(points)
    layout, x = vertex_layout(net)
    mid = build_fairness(layout, net, ["i"], 1.0, form="midpoint").residuals(x)[:3]
    tan = build_fairness(layout, net, ["i"], 1.0, form="tangent").residuals(x)[:3]
    auto = build_fairness(layout, net, ["i"], 1.0).residuals(x)[:3]
    assert np.linalg.norm(mid) == pytest.approx(midpoint, abs=1e-14)
    assert np.linalg.norm(tan) == pytest.approx(tangent, abs=1e-14)
    # a three-point line has its middle vertex next to both ends
    assert np.allclose(auto, tan)


def test_fairness_uses_midpoint_away_from_ends():
    net = polyline_net([[k * k, 0.0, 0.0] for k in range(5)])
    layout, x = vertex_layout(net)
    block = build_fairness(layout, net, ["i"], 1.0)
    r = block.residuals(x)[:9].reshape(3, 3)
    assert r[1] == pytest.approx([2 * 4 - 1 - 9, 0.0, 0.0])
    assert np.allclose(r[0], 0.0) and np.allclose(r[2], 0.0)


def test_fairness_rejects_coincident_vertices():
    net = polyline_net([[0, 0, 0], [0, 0, 0], [1, 0, 0]])
    layout, _ = vertex_layout(net)
    with pytest.raises(ZeroEdge):
        build_fairness(layout, net, ["i"], 1.0)


# =========================================================
# Closeness
# =========================================================

def test_vertex_and_surface_closeness(saddle):
    layout, x = vertex_layout(saddle)
    normals = {(1, 1): np.array([0.0, 0.0, 1.0]), (2, 2): np.array([1.0, 0.0, 0.0])}
    vert = build_vertex_closeness(layout, saddle.vertices, 1.0)
    surf = build_surface_closeness(layout, saddle, normals, 1.0)
    assert np.abs(vert.residuals(x)).max() == 0.0
    assert np.abs(surf.residuals(x)).max() == 0.0

    moved = x.copy()
    moved[layout.ids("f", (1, 1))] += [0.4, -0.2, 0.05]
    assert surf.residuals(moved)[0] == pytest.approx(0.05)
    assert np.linalg.norm(vert.residuals(moved)) == pytest.approx(math.sqrt(0.16 + 0.04 + 0.0025))


def test_curve_closeness_allows_sliding():
    net = grid_net(2, 2)
    layout, x = vertex_layout(net)
    curve = np.array([[-1.0, 0.3, 0.2], [4.0, 0.3, 0.2]])
    block = build_curve_closeness(layout, net, [(0, 0)], curve, 1.0)
    assert np.linalg.norm(block.residuals(x)) == pytest.approx(math.hypot(0.3, 0.2))

    slid = x.copy()
    slid[layout.ids("f", (0, 0))] += [0.7, 0.0, 0.0]
    assert np.linalg.norm(block.residuals(slid)) == pytest.approx(math.hypot(0.3, 0.2))

    on_curve = x.copy()
    on_curve[layout.ids("f", (0, 0))] = [1.5, 0.3, 0.2]
    assert np.abs(block.residuals(on_curve)).max() <= 1e-15


def test_foot_point():
    q, e1 = foot_point(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], dtype=float), np.array([1.4, 0.5, 0.3]))
    assert np.allclose(q, [1.0, 0.5, 0.0])
    assert np.allclose(e1, [0.0, 1.0, 0.0])
    with pytest.raises(NoFootPoint):
        foot_point(np.zeros((1, 3)), np.zeros(3))
    with pytest.raises(NoFootPoint):
        foot_point(np.zeros((3, 3)), np.zeros(3))


# =========================================================
# Angle constraints
# =========================================================

def test_angle_constraints_on_unit_grid(planar_grid):
    layout, x = vertex_layout(planar_grid)
    faces = list(planar_grid.faces())
    assert np.abs(build_angle_constraints(layout, planar_grid, 90.0, faces).residuals(x)).max() <= 1e-15
    assert np.allclose(build_angle_constraints(layout, planar_grid, 60.0, faces).residuals(x), -0.5)


def test_angle_constraints_reject_collapsed_face():
    v = np.zeros((2, 2, 3))
    v[1, :, 0] = 1.0
    net = Net(v)
    layout, _ = vertex_layout(net)
    with pytest.raises(DegenerateFace):
        build_angle_constraints(layout, net, 60.0, [(0, 0)])


def test_angle_faces_skip_boundary_and_flat_points(planar_grid):
    # 5x5 grid: the interior faces are (1,1), (1,2), (2,1), (2,2)
    assert angle_faces(planar_grid) == [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert angle_faces(planar_grid, [(1.5, 1.5)]) == [(1, 2), (2, 1), (2, 2)]
    assert angle_faces(planar_grid, [(0.5, 0.5)], radius=0.8) == [(1, 2), (2, 1), (2, 2)]


# =========================================================
# Quadraticity and Jacobians
# =========================================================

@pytest.mark.parametrize("kind, make", [("GGG", ggg_net), ("AAG", aag_net)])
def test_jacobians_match_central_differences(kind, make, rng):
    net = make()
    config = SolverConfig(kind=kind)
    aux = init_aux_variables(net, kind)
    problem = assemble_energy(net, kind, 0.5, config, aux)
    x = aux.x + 0.01 * rng.standard_normal(aux.x.shape)
    for block in problem.blocks:
        if block.n_rows == 0:
            continue
        h = rng.standard_normal(x.shape)
        t = 1e-3
        fd = (block.residuals(x + t * h) - block.residuals(x - t * h)) / (2 * t)
        analytic = block.jacobian(x, problem.n_vars) @ h
        assert np.allclose(analytic, fd, rtol=1e-6, atol=1e-8 * (1.0 + np.abs(fd).max())), block.name

        # Jacobian affine in x: vanishing second difference
        J0 = block.jacobian(x, problem.n_vars).toarray()
        J1 = block.jacobian(x + h, problem.n_vars).toarray()
        J2 = block.jacobian(x + 2 * h, problem.n_vars).toarray()
        assert np.abs(J2 - 2 * J1 + J0).max() <= 1e-9 * (1.0 + np.abs(J2).max()), block.name


def test_crpc_blocks_are_quadratic(saddle, rng):
    net = saddle.with_roles(KIND_ROLES["CRPC"])
    config = SolverConfig(kind="CRPC", gamma=60.0, fix_boundary=True)
    aux = init_aux_variables(net, "CRPC")
    problem = assemble_energy(net, "CRPC", 1.0, config, aux, boundary=net)
    names = {b.name for b in problem.blocks}
    assert {"anet", "angle", "boundary_i0", "boundary_corners", "fairness"} <= names
    x = aux.x + 0.01 * rng.standard_normal(aux.x.shape)
    h = rng.standard_normal(x.shape)
    for block in problem.blocks:
        fd = (block.residuals(x + 1e-3 * h) - block.residuals(x - 1e-3 * h)) / 2e-3
        assert np.allclose(block.jacobian(x, problem.n_vars) @ h, fd, rtol=1e-6, atol=1e-8), block.name
