import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np

from src.api.deps import HEIGHTS, constructor_params, load_aag_seed, load_input_net, load_koenigs_seed, output_dir
from src.api.schemas import JobConfig
from src.core.errors import EXIT_OK, BadTopology, DegenerateParameters
from src.models.crpc import BoundarySpec, ComplexPoly, CrpcAnsatz
from src.models.flex import ConeCylinderData
from src.models.net import KIND_ROLES, Net
from src.services.crpc import ansatz_from_factor, ansatz_sample, fit_boundary, trace_asymptotic_quadmesh
from src.services.diagnostics import diagnostics_report
from src.services.flexnets import class_i_check, class_ii_check, euclidean_tnet, tnet_from_cone_cylinder
from src.services.interchange import write_ansatz_json, write_json, write_net_json, write_obj
from src.services.net_core import planarity_residual
from src.services.web_construct import (
    aag_propagate,
    affine_top_view,
    agag_heights,
    build_agag,
    conic_tangent_gnet,
    cubic_tangent_web_arithmetic,
    koenigs_lift,
    koenigs_propagate,
    koenigs_residual,
    lift_to_graph,
    pencil_line_web,
    planar_quad_lift,
)

logger = logging.getLogger("isoweb")


@dataclass
class Construction:
    net: Net
    extras: Dict[str, object] = field(default_factory=dict)
    ansatz: Optional[CrpcAnsatz] = None


# =========================================================
# Constructors
# =========================================================

def _pencil_ggg(job: JobConfig) -> Construction:
    p = constructor_params(job)
    return Construction(lift_to_graph(pencil_line_web(p.n, p.h), HEIGHTS[p.height]))


def _cubic_ggg(job: JobConfig) -> Construction:
    p = constructor_params(job)
    web = cubic_tangent_web_arithmetic(p.alpha, p.beta, p.h, p.m, p.n, p.diagonal)
    return Construction(lift_to_graph(web, HEIGHTS[p.height]))


def _aag_propagate(job: JobConfig) -> Construction:
    constructor_params(job)
    return Construction(aag_propagate(load_aag_seed(job)))


def _koenigs_aag(job: JobConfig) -> Construction:
    p = constructor_params(job)
    data = koenigs_propagate(load_koenigs_seed(job))
    z = koenigs_lift(data.vertices, p.stencil, height=p.scale)
    net = Net(np.concatenate([data.vertices, z[..., None]], axis=-1), KIND_ROLES["AAG"])
    return Construction(net, {"koenigsResidual": koenigs_residual(data), "multipliers": data.multipliers})


def _agag(job: JobConfig) -> Construction:
    p = constructor_params(job)
    gnet, _ = conic_tangent_gnet(p.thetas, p.phis, p.axes_i, p.axes_j)
    if p.affine is not None:
        gnet = affine_top_view(gnet, np.array(p.affine.matrix), p.affine.offset)
    z = agag_heights(gnet, p.scale)
    boundary = np.full(z.shape, np.nan)
    boundary[0, :] = z[0, :]
    boundary[:, 0] = z[:, 0]
    result = build_agag(gnet, boundary)
    return Construction(
        result.net,
        {"liftResidual": result.residual, "trivial": result.trivial, "parityResiduals": result.parity_residuals},
    )


def _crpc(job: JobConfig) -> Construction:
    p = constructor_params(job)
    flat = [complex(x, y) for x, y in p.flat_points]
    extras: Dict[str, object] = {}
    if p.boundary is not None:
        spec = BoundarySpec(np.array(p.boundary.polygon), np.array(p.boundary.values), p.boundary.k)
        fit = fit_boundary(spec, p.gamma, flat)
        ansatz = fit.ansatz
        extras.update(misfit=fit.misfit, fitConverged=fit.converged, fitIterations=fit.iterations, fitSamples=fit.samples)
    else:
        ansatz = ansatz_from_factor(p.gamma, flat, ComplexPoly([complex(re, im) for re, im in p.factor]))

    traced = trace_asymptotic_quadmesh(ansatz_sample(ansatz, p.domain, p.spacing), p.seed, p.rows, p.cols, p.step)
    if traced.left_domain:
        logger.warning("Asymptotic trace left the domain; net truncated to %dx%d", *traced.net.shape)
    extras.update(leftDomain=traced.left_domain, anetResidual=traced.anet_residual, notes=traced.notes)
    return Construction(traced.net.with_roles(KIND_ROLES["CRPC"]), extras, ansatz)


def _tnet(job: JobConfig) -> Construction:
    p = constructor_params(job)
    net = tnet_from_cone_cylinder(ConeCylinderData(np.array(p.a), np.array(p.b), np.array(p.sigma)))
    extras = {}
    if net.rows >= 4 and net.cols >= 4:
        extras["classI"] = class_i_check(net).to_dict()
    if net.rows >= 3 and net.cols >= 3:
        extras["classII"] = class_ii_check(net).to_dict()
    return Construction(net, extras)


def _euclidean_tnet(job: JobConfig) -> Construction:
    p = constructor_params(job)
    net = euclidean_tnet(p.profile, p.sigmas, p.heights)
    return Construction(net, {"planarity": planarity_residual(net)})


def _quad_lift(job: JobConfig) -> Construction:
    p = constructor_params(job)
    try:
        tv = np.array(p.topviews, dtype=float)
    except ValueError as e:
        raise BadTopology("Top views must form a full rows x cols grid", field="params.topviews") from e
    z = np.full(tv.shape[:2], np.nan)
    if len(p.row0) != z.shape[1] or len(p.col0) != z.shape[0]:
        raise DegenerateParameters(f"Need {z.shape[1]} row-0 and {z.shape[0]} column-0 heights", field="params")
    z[0, :] = p.row0
    z[:, 0] = p.col0
    net = planar_quad_lift(tv, z)
    return Construction(net, {"planarity": planarity_residual(net)})


CONSTRUCTORS: Dict[str, Callable[[JobConfig], Construction]] = {
    "pencil_ggg": _pencil_ggg,
    "cubic_ggg": _cubic_ggg,
    "aag_propagate": _aag_propagate,
    "koenigs_aag": _koenigs_aag,
    "agag": _agag,
    "crpc": _crpc,
    "tnet": _tnet,
    "euclidean_tnet": _euclidean_tnet,
    "quad_lift": _quad_lift,
}


# =========================================================
# Command
# =========================================================

def construct(job: JobConfig) -> Construction:
    logger.info("Constructing %s", job.constructor)
    built = CONSTRUCTORS[job.constructor](job)
    if job.roles is not None:
        built.net = built.net.with_roles(job.roles)
    return built


def job_net(job: JobConfig) -> Net:
    """Input net of a job: the file named by ``input``, else the net its constructor builds."""
    if job.input is not None:
        return load_input_net(job)
    return construct(job).net


def run(job: JobConfig, out_dir: Path) -> int:
    """
    Writes:
    - net.json and net.obj
    - report.json: diagnostics plus constructor extras
    - ansatz.json for CRPC constructions
    """
    out = output_dir(job, out_dir)
    built = construct(job)
    write_net_json(built.net, out / "net.json")
    write_obj(built.net, out / "net.obj")
    if built.ansatz is not None:
        write_ansatz_json(built.ansatz, out / "ansatz.json")
    report = diagnostics_report(built.net).model_dump(by_alias=True)
    report["constructor"] = job.constructor
    report.update(built.extras)
    write_json(report, out / "report.json")
    return EXIT_OK
