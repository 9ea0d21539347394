import json
import logging
import math
from pathlib import Path

import numpy as np
import pytest

from src.api.deps import constructor_params, parse_job
from src.api.optimize import summary_table
from src.api.schemas import AagSeedFile, KoenigsSeedFile
from src.main import main, run_batch
from src.services.constraints import angle_faces
from src.services.crpc import build_c2l
from src.services.flexnets import tnet_from_cone_cylinder
from src.services.interchange import parse_document, read_net_json, write_ansatz_json, write_net_json, write_obj
from src.services.net_core import face_central_angle
from tests.factories import aag_net, cone_cylinder_data, generic_qnet, grid_net, paraboloid_net, saddle_seed


def write_config(path, data):
    path.write_text(json.dumps(data))
    return path


def run_cli(tmp_path, command, config, *extra, name="job"):
    cfg = write_config(tmp_path / f"{name}.json", config)
    out = tmp_path / name
    return main([command, "--config", str(cfg), "--output", str(out), *extra]), out


def read(path):
    return json.loads(path.read_text())


# =========================================================
# construct
# =========================================================

def test_construct_pencil_ggg(tmp_path):
    code, out = run_cli(tmp_path, "construct", {"constructor": "pencil_ggg", "params": {"n": 4, "h": 0.25}})
    assert code == 0
    assert read_net_json(out / "net.json").shape == (5, 5)
    assert (out / "net.obj").exists()
    report = read(out / "report.json")
    assert report["constructor"] == "pencil_ggg"
    for family in ("i", "j", "diag_plus"):
        assert report["geodesic"][family]["eps0"] <= 1e-10, report["geodesic"]


def test_construct_missing_seed_file_names_the_field(tmp_path, caplog):
    with caplog.at_level(logging.ERROR, logger="isoweb"):
        code, out = run_cli(tmp_path, "construct", {"constructor": "aag_propagate"})
    assert code == 2
    assert "seedFile" in caplog.text
    assert not (out / "net.json").exists()

    code, _ = run_cli(
        tmp_path, "construct", {"constructor": "aag_propagate", "seedFile": str(tmp_path / "none.json")}, name="other"
    )
    assert code == 2


def test_construct_aag_from_seed_file(tmp_path):
    seed = saddle_seed(3)
    seed_file = write_config(
        tmp_path / "seed.json",
        {
            "lines": [[ln.a, ln.b, ln.c] for ln in seed.lines.lines],
            "diagonal": seed.diagonal.tolist(),
            "aux": seed.aux.tolist(),
        },
    )
    code, out = run_cli(tmp_path, "construct", {"constructor": "aag_propagate", "seedFile": str(seed_file)})
    assert code == 0
    net = read_net_json(out / "net.json")
    assert np.allclose(net.vertices, aag_net(3).vertices, atol=1e-12)
    assert net.roles.diag_minus == "geodesic"


def test_construct_crpc_writes_ansatz_and_traced_net(tmp_path):
    params = {"gamma": 60.0, "flatPoints": [[0.0, 0.0]], "seed": [0.5, 0.2], "rows": 5, "cols": 5, "step": 0.05}
    code, out = run_cli(tmp_path, "construct", {"constructor": "crpc", "params": params})
    assert code == 0
    assert read(out / "ansatz.json")["gamma"] == 60.0
    net = read_net_json(out / "net.json")
    assert net.shape == (5, 5)
    assert net.roles.i_lines == "asymptotic"
    assert read(out / "report.json")["leftDomain"] is False


def test_construct_tnet_reports_class_checks(tmp_path):
    d = cone_cylinder_data(6, 6)
    params = {"a": d.a.tolist(), "b": d.b.tolist(), "sigma": d.sigma.tolist()}
    code, out = run_cli(tmp_path, "construct", {"constructor": "tnet", "params": params})
    assert code == 0
    report = read(out / "report.json")
    assert report["classI"]["passed"] is True
    assert report["classI"]["direction"] == "l"


def test_construct_rejects_bad_parameters(tmp_path):
    code, _ = run_cli(tmp_path, "construct", {"constructor": "pencil_ggg", "params": {"n": 0}})
    assert code == 2
    code, _ = run_cli(tmp_path, "construct", {"constructor": "nope"}, name="unknown")
    assert code == 2
    code, _ = run_cli(tmp_path, "construct", {"params": {}}, name="empty")
    assert code == 2


# =========================================================
# optimize
# =========================================================

@pytest.fixture
def ggg_input(tmp_path):
    code, out = run_cli(tmp_path, "construct", {"constructor": "pencil_ggg", "params": {"n": 4, "h": 0.25}}, name="ggg")
    assert code == 0
    return out / "net.json"


@pytest.mark.slow
def test_optimize_ggg(tmp_path, ggg_input):
    config = {"input": str(ggg_input), "solver": {"kind": "GGG", "maxIterPerEps": 20}}
    code, out = run_cli(tmp_path, "optimize", config)
    assert code == 0
    stats = read(out / "stats.json")
    assert stats["eHard"] <= 1e-5
    assert stats["vertices"] == 25
    assert [s["eps"] for s in stats["perEps"]] == [0.0, 0.25, 0.5, 0.75, 1.0]
    summary = (out / "summary.txt").read_text()
    assert "E_hard" in summary and "N_v" in summary
    assert read_net_json(out / "net.json").shape == (5, 5)


def test_optimize_failure_still_writes_best_iterate(tmp_path, ggg_input):
    config = {"input": str(ggg_input), "solver": {"kind": "GGG", "maxIterPerEps": 1, "hardTarget": 1e-30}}
    code, out = run_cli(tmp_path, "optimize", config)
    assert code == 3
    assert (out / "net.json").exists()
    assert read(out / "stats.json")["failedEps"] is not None


def test_optimize_schedule_flags(tmp_path, ggg_input):
    config = {"input": str(ggg_input), "kind": "GGG"}
    code, out = run_cli(tmp_path, "optimize", config, "--seed-epsilon-schedule", "0,0.5,1", name="schedule")
    assert code in (0, 3)
    assert [s["eps"] for s in read(out / "stats.json")["perEps"]][0] == 0.0

    code, out = run_cli(tmp_path, "optimize", config, "--ablation-no-continuation", name="direct")
    assert code in (0, 3)
    assert [s["eps"] for s in read(out / "stats.json")["perEps"]] == [1.0]

    code, _ = run_cli(tmp_path, "optimize", config, "--seed-epsilon-schedule", "0.5,1", name="bad")
    assert code == 2


def test_summary_table_marks_capped_stages():
    summary = {
        "kind": "CRPC", "vertices": 625, "variables": 2952, "iterations": 23, "timePerIter": 0.1,
        "weights": {"fairness": 5e-3, "surfClose": 5e-3, "vertClose": 5e-3},
        "eHard": 1.9e-6, "maxDisplacement": 0.02, "failedEps": None,
        "perEps": [
            {"eps": 0.0, "iterations": 20, "eHard": 1.9e-6, "converged": True, "atCap": True},
            {"eps": 1.0, "iterations": 3, "eHard": 1.9e-6, "converged": True, "atCap": False},
        ],
    }
    lines = summary_table(summary).splitlines()
    assert lines[-2].endswith("(iteration cap)")
    assert "cap" not in lines[-1]


def test_optimize_crpc_needs_gamma(tmp_path, ggg_input):
    code, _ = run_cli(tmp_path, "optimize", {"input": str(ggg_input), "kind": "CRPC"})
    assert code == 2


# =========================================================
# flex
# =========================================================

def test_flex_tnet_writes_sequence(tmp_path):
    net_file = write_net_json(tnet_from_cone_cylinder(cone_cylinder_data()), tmp_path / "tnet.json")
    config = {"input": str(net_file), "flex": {"mode": "isotropic", "steps": 5, "amplitude": 0.0125}}
    code, out = run_cli(tmp_path, "flex", config)
    assert code == 0
    manifest = read(out / "manifest.json")
    assert manifest["steps"] == 5
    assert len(manifest["schedule"]) == 6
    assert manifest["omegaDrift"] <= 1e-8
    assert set(manifest["driverEdge"]) == {"direction", "i", "j"}
    assert (out / "step_005.obj").exists()


def test_flex_rigid_net_exits_3_with_partial_output(tmp_path, rng):
    net_file = write_net_json(generic_qnet(rng), tmp_path / "rigid.json")
    code, out = run_cli(tmp_path, "flex", {"input": str(net_file)})
    assert code == 3
    assert (out / "step_000.json").exists()
    assert read(out / "manifest.json")["failedStep"] == 0


# =========================================================
# diagnose / extract / export
# =========================================================

def test_diagnose_net_json_and_obj(tmp_path):
    net = paraboloid_net(5, 5)
    json_file = write_net_json(net, tmp_path / "p.json")
    code, out = run_cli(tmp_path, "diagnose", {"input": str(json_file)})
    assert code == 0
    assert read(out / "report.json")["vertexCount"] == 25

    obj_file = write_obj(net, tmp_path / "p.obj")
    code, out = run_cli(tmp_path, "diagnose", {"input": str(obj_file), "rows": 5, "cols": 5}, name="obj")
    assert code == 0

    code, _ = run_cli(tmp_path, "diagnose", {"input": str(obj_file)}, name="norows")
    assert code == 2


def test_extract(tmp_path):
    net_file = write_net_json(grid_net(19, 4), tmp_path / "g.json")
    code, out = run_cli(tmp_path, "extract", {"input": str(net_file), "extract": {"stride": 3, "families": ["i"]}})
    assert code == 0
    records = [ln for ln in (out / "gridshell.obj").read_text().splitlines() if ln.startswith("l ")]
    assert len(records) == 7

    far = {"trim": [[50, 50], [51, 50], [51, 51]]}
    code, _ = run_cli(tmp_path, "extract", {"input": str(net_file), "extract": far}, name="far")
    assert code == 2


def test_export(tmp_path):
    net_file = write_net_json(grid_net(3, 3), tmp_path / "g.json")
    code, out = run_cli(tmp_path, "export", {"input": str(net_file)})
    assert code == 0
    assert (out / "net.obj").exists()

    ansatz_file = write_ansatz_json(build_c2l(60.0), tmp_path / "a.json")
    params = {"domain": [0.0, 1.0, 0.0, 1.0], "spacing": 0.25}
    code, out = run_cli(tmp_path, "export", {"input": str(ansatz_file), "params": params}, name="field")
    assert code == 0
    assert "# grid 5 5" in (out / "height_field.obj").read_text()

    code, _ = run_cli(tmp_path, "export", {"input": str(ansatz_file)}, name="nodomain")
    assert code == 2


# =========================================================
# Batch and determinism
# =========================================================

def test_batch_exit_code_is_worst_job(tmp_path):
    jobs = [
        {"command": "construct", "constructor": "pencil_ggg", "params": {"n": 2}},
        {"command": "construct", "constructor": "aag_propagate"},
    ]
    code, out = run_cli(tmp_path, "construct", {"jobs": jobs})
    assert code == 2
    assert (out / "job_00" / "net.json").exists()
    assert not (out / "job_01" / "net.json").exists()


def test_batch_runs_in_parallel_workers(tmp_path):
    jobs = [{"command": "construct", "constructor": "pencil_ggg", "params": {"n": n}} for n in (2, 3, 4)]
    assert run_batch(jobs, tmp_path, threads=3) == 0
    assert [read_net_json(tmp_path / f"job_{k:02d}" / "net.json").rows for k in range(3)] == [3, 4, 5]


def test_cli_is_deterministic(tmp_path):
    params = {"gamma": 60.0, "flatPoints": [[0.0, 0.0]], "seed": [0.5, 0.2], "rows": 5, "cols": 5, "step": 0.05}
    config = {"constructor": "crpc", "params": params}
    first = run_cli(tmp_path, "construct", config, name="first")
    second = run_cli(tmp_path, "construct", config, name="second")
    assert first[0] == second[0] == 0
    for name in ("net.json", "net.obj", "ansatz.json", "report.json"):
        assert (first[1] / name).read_bytes() == (second[1] / name).read_bytes()


def test_missing_config_file(tmp_path):
    assert main(["diagnose", "--config", str(tmp_path / "absent.json"), "--output", str(tmp_path)]) == 2


# =========================================================
# Recipes
# =========================================================

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("recipe", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_recipes_are_valid_jobs(recipe):
    job = parse_job(read(CONFIGS / recipe))
    assert job.constructor is not None
    constructor_params(job)
    if job.command == "optimize":
        assert job.solver_config().kind in ("GGG", "AAG", "AGAG", "CRPC")


def test_recipe_seed_files_parse():
    aag = parse_document(AagSeedFile, read(CONFIGS / "seeds" / "aag_saddle.json"), "seedFile")
    assert len(aag.lines) == 41 and len(aag.diagonal) == 21 and len(aag.aux) == 22
    koenigs = parse_document(KoenigsSeedFile, read(CONFIGS / "seeds" / "koenigs_grid.json"), "seedFile")
    assert len(koenigs.lines) == 2 * (len(koenigs.row0) - 1) + 1


def test_rigid_control_recipe_fails_at_step_zero(tmp_path):
    code = main(["flex", "--config", str(CONFIGS / "flex_rigid_control.json"), "--output", str(tmp_path)])
    assert code == 3
    assert read(tmp_path / "manifest.json")["failedStep"] == 0


def run_recipe(tmp_path, monkeypatch, recipe):
    monkeypatch.chdir(CONFIGS.parent)
    code = main(["optimize", "--config", str(CONFIGS / recipe), "--output", str(tmp_path)])
    return code, read(tmp_path / "stats.json")


@pytest.mark.slow
@pytest.mark.parametrize(
    "recipe, vertices",
    [("ggg_pencil.json", 625), ("aag_propagate.json", 441), ("agag_conic.json", 361), ("crpc_one_flat_point.json", 625)],
)
def test_optimize_recipe_converges_within_budget(tmp_path, monkeypatch, recipe, vertices):
    code, stats = run_recipe(tmp_path, monkeypatch, recipe)
    assert code == 0, stats["perEps"]
    assert stats["vertices"] == vertices
    assert stats["eHard"] <= 1e-5
    assert all(s["converged"] and s["iterations"] <= 20 for s in stats["perEps"]), stats["perEps"]
    assert stats["timePerIter"] * stats["iterations"] < 60.0


@pytest.mark.slow
def test_ggg_recipe_ablation_is_rougher_without_continuation(tmp_path, monkeypatch):
    code, _ = run_recipe(tmp_path, monkeypatch, "ggg_pencil.json")
    assert code == 0
    ablation = read(tmp_path / "ablation.json")
    assert ablation["continuation"]["failedEps"] is None
    assert ablation["ratio"] >= 5.0, ablation


@pytest.mark.slow
def test_crpc_recipe_holds_the_node_angle(tmp_path, monkeypatch):
    code, _ = run_recipe(tmp_path, monkeypatch, "crpc_one_flat_point.json")
    assert code == 0
    net = read_net_json(tmp_path / "net.json")
    faces = angle_faces(net, [(0.0, 0.0)], 0.1)
    errors = np.array([abs(math.degrees(face_central_angle(net, i, j)) - 60.0) for i, j in faces])
    assert len(faces) > 0
    assert np.mean(errors <= 0.1) >= 0.95, errors.max()


def test_flex_with_inline_constructor(tmp_path):
    config = {
        "constructor": "euclidean_tnet",
        "params": {
            "profile": [[1.0, 0.0], [1.2, 0.5], [1.3, 1.1], [1.3, 1.8]],
            "sigmas": [1.0, 1.15, 1.35, 1.5],
            "heights": [0.0, 0.7, 1.3, 2.0],
        },
        "flex": {"mode": "euclidean", "steps": 2, "amplitude": 0.05},
    }
    code, out = run_cli(tmp_path, "flex", config)
    assert code == 0
    manifest = read(out / "manifest.json")
    assert set(manifest["driverEdge"]) == {"direction", "i", "j"}
    assert manifest["distanceDrift"] <= 1e-6
