import numpy as np
import pytest

from src.core.errors import InconsistentRoles
from src.models.crpc import GraphSample
from src.models.net import KIND_ROLES, WebRoles
from src.models.solver import LmSettings, SoftWeights, SolverConfig
from src.services.constraints import ConstraintProblem, build_anet_constraints, build_vertex_closeness
from src.services.crpc import trace_asymptotic_quadmesh
from src.services.guided_projection import (
    _decayed,
    assemble_energy,
    continuation_summary,
    fairness_residual_max,
    init_aux_variables,
    run_continuation,
)
from src.services.levenberg import lm_step
from src.services.net_core import anet_residual
from tests.factories import aag_net, agag_net, ggg_net, grid_net, saddle_net


# =========================================================
# Initialization and assembly
# =========================================================

@pytest.mark.parametrize("kind, make", [("GGG", ggg_net), ("AAG", aag_net), ("AGAG", agag_net)])
def test_exact_isotropic_webs_start_feasible(kind, make):
    net = make()
    config = SolverConfig(kind=kind)
    aux = init_aux_variables(net, kind)
    problem = assemble_energy(net, kind, 0.0, config, aux)
    e_hard, _ = problem.energies(aux.x)
    assert e_hard <= 1e-8


def test_traced_crpc_mesh_starts_as_anet():
    traced = trace_asymptotic_quadmesh(GraphSample(lambda x, y: x * y, (-3, 3, -3, 3), 0.1), (1.0, 1.0), 5, 5, 0.25)
    net = traced.net.with_roles(KIND_ROLES["CRPC"])
    problem = assemble_energy(net, "CRPC", 0.0, SolverConfig(kind="CRPC", gamma=60.0))
    aux = init_aux_variables(net, "CRPC")
    assert problem.block("anet").energy(aux.x) <= 1e-8


def test_aag_keeps_two_normal_sets():
    aux = init_aux_variables(aag_net(), "AAG")
    assert aux.layout.has("n_anet") and aux.layout.has("n_geo")
    assert np.allclose(aux.layout.view(aux.x, "n_geo"), [0.0, 0.0, 1.0])
    assert np.allclose(np.linalg.norm(aux.layout.view(aux.x, "n_anet"), axis=1), 1.0)


@pytest.mark.parametrize("kind, make, coupled", [("GGG", ggg_net, False), ("AAG", aag_net, True), ("AGAG", agag_net, False)])
def test_geodesic_normals_tied_to_edges_only_with_one_geodesic_family(kind, make, coupled):
    problem = assemble_energy(make(), kind, 0.5, SolverConfig(kind=kind))
    names = {b.name for b in problem.blocks}
    assert ("coupling_n_geo" in names) == coupled
    assert ("unit_n_geo" in names) == (not coupled)


def test_assemble_energy_rejects_bad_kinds(planar_grid):
    with pytest.raises(InconsistentRoles):
        init_aux_variables(planar_grid.with_roles(KIND_ROLES["GGG"]), "XYZ")
    with pytest.raises(InconsistentRoles):
        init_aux_variables(planar_grid.with_roles(WebRoles(i_lines="geodesic")), "GGG")


def test_crpc_boundary_terms_only_when_prescribed(saddle):
    net = saddle.with_roles(KIND_ROLES["CRPC"])
    free = assemble_energy(net, "CRPC", 1.0, SolverConfig(kind="CRPC", gamma=60.0))
    assert not any(b.name.startswith("boundary") for b in free.blocks)
    fixed = assemble_energy(net, "CRPC", 1.0, SolverConfig(kind="CRPC", gamma=60.0, fix_boundary=True), boundary=net)
    assert sum(b.name.startswith("boundary") for b in fixed.blocks) == 5
    aux = init_aux_variables(net, "CRPC")
    assert fixed.block("boundary_corners").energy(aux.x) == 0.0


def test_weight_decay_ends_at_zero():
    config = SolverConfig(kind="GGG", weights=SoftWeights(fairness=1e-2, surf_close=1e-2, vert_close=1e-2))
    assert _decayed(config.weights, 0, config).fairness == 1e-2
    assert _decayed(config.weights, 1, config).fairness == pytest.approx(1e-3)
    assert _decayed(config.weights, 2, config).vert_close == pytest.approx(1e-4)
    assert _decayed(config.weights, 3, config) == SoftWeights(fairness=0.0, surf_close=0.0, vert_close=0.0)


# =========================================================
# Projection steps
# =========================================================

def test_noisy_anet_is_projected_back(rng):
    """
    Flow:
    - saddle z = xy on a unit grid, vertices moved by 1% of the edge length
    - A-net constraints plus a light pull to the noisy positions
    - 20 damped Gauss-Newton steps bring E_A under 1e-5
    """
    clean = saddle_net(6, 6).with_roles(KIND_ROLES["CRPC"])
    noisy = clean.with_vertices(clean.vertices + 0.01 * rng.standard_normal(clean.vertices.shape))
    aux = init_aux_variables(noisy, "CRPC")
    anet = build_anet_constraints(aux.layout, noisy)
    pull = build_vertex_closeness(aux.layout, noisy.vertices, 1e-6)
    problem = ConstraintProblem(aux.layout, [anet, pull])

    x, damping, settings = aux.x, 1e-4, LmSettings()
    assert anet.energy(x) > 1e-5
    for it in range(20):
        x, stats = lm_step(problem, x, damping, settings, it)
        assert stats.energy_after <= stats.energy_before
        damping = max(stats.damping * settings.down, 1e-12)
    assert anet.energy(x) <= 1e-5
    assert anet_residual(aux.to_net(noisy, x)) <= 1e-2


# =========================================================
# Continuation
# =========================================================

def test_solved_input_needs_no_iterations(planar_grid):
    net = planar_grid.with_roles(KIND_ROLES["CRPC"])
    result = run_continuation(net, "CRPC", SolverConfig(kind="CRPC", gamma=90.0))
    assert result.converged
    assert [s.iterations for s in result.per_eps] == [0, 0, 0, 0, 0]
    assert not any(s.at_cap for s in result.per_eps)
    assert result.history == []
    assert np.array_equal(result.net.vertices, net.vertices)


def test_ggg_continuation_reaches_target():
    net = ggg_net()
    config = SolverConfig(kind="GGG")
    result = run_continuation(net, "GGG", config)
    assert result.converged, result.per_eps
    assert result.e_hard <= 1e-5
    assert [s.eps for s in result.per_eps] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert result.per_eps[0].iterations == 0

    summary = continuation_summary(result, net, config)
    assert summary["vertices"] == 25
    assert summary["variables"] == result.variable_count
    assert summary["failedEps"] is None
    assert np.isfinite(summary["maxDisplacement"])


def test_direct_run_uses_single_eps():
    config = SolverConfig(kind="AAG", max_iter_per_eps=3).without_continuation()
    result = run_continuation(aag_net(), "AAG", config)
    assert [s.eps for s in result.per_eps] == [1.0]
    assert len(result.history) <= 3


def test_failed_eps_is_reported():
    config = SolverConfig(kind="GGG", max_iter_per_eps=1, hard_target=1e-30)
    result = run_continuation(ggg_net(), "GGG", config)
    assert not result.converged
    assert result.per_eps[-1].eps == result.failed_eps
    assert not result.per_eps[-1].converged
    assert result.per_eps[-1].iterations <= 1
    assert result.per_eps[-1].at_cap == (result.per_eps[-1].iterations == 1)


def test_continuation_is_deterministic():
    config = SolverConfig(kind="AAG", eps_schedule=[0.0, 1.0], max_iter_per_eps=4)
    first = run_continuation(aag_net(), "AAG", config)
    second = run_continuation(aag_net(), "AAG", config)
    assert [s.e_hard for s in first.history] == [s.e_hard for s in second.history]
    assert np.array_equal(first.net.vertices, second.net.vertices)


def test_fairness_residual_max():
    flat = grid_net(5, 5, roles=WebRoles(i_lines="geodesic", j_lines="geodesic"))
    assert fairness_residual_max(flat) == 0.0
    bumped = flat.vertices.copy()
    bumped[2, 2, 2] = 0.5
    assert fairness_residual_max(flat.with_vertices(bumped)) == pytest.approx(1.0, rel=0.05)
