import logging
from pathlib import Path

from src.api.construct import job_net
from src.api.deps import output_dir
from src.api.schemas import JobConfig
from src.core.errors import EXIT_OK, StepFailed
from src.models.flex import FlexionResult
from src.services.flexnets import flex_net, length_drift, omega_drift
from src.services.interchange import write_sequence
from src.services.net_core import planarity_residual

logger = logging.getLogger("isoweb")


def _drift(result: FlexionResult) -> dict:
    first, last = result.nets[0], result.nets[-1]
    if result.mode == "isotropic":
        return {"omegaDrift": omega_drift(first, last), "topViewDrift": length_drift(first, last, top_view=True)}
    return {"distanceDrift": length_drift(first, last, top_view=False), "planarity": planarity_residual(last)}


def run(job: JobConfig, out_dir: Path) -> int:
    """
    Writes step_000 .. step_N as JSON and OBJ plus manifest.json. A failed
    step still writes the nets computed before it and re-raises.
    """
    out = output_dir(job, out_dir)
    net = job_net(job)
    logger.info("Flexing %dx%d net in %s mode", net.rows, net.cols, job.flex.mode)
    try:
        result = flex_net(net, job.flex)
    except StepFailed as e:
        manifest = {
            "steps": len(e.partial) - 1,
            "mode": job.flex.mode,
            "failedStep": e.context["step"],
            "residual": e.context["residual"],
        }
        write_sequence(e.partial, out, manifest)
        raise

    write_sequence(result.nets, out, {**result.manifest(), **_drift(result)})
    return EXIT_OK
