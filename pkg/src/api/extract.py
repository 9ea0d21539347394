import logging
from pathlib import Path

import numpy as np

from src.api.construct import job_net
from src.api.deps import output_dir
from src.api.schemas import JobConfig
from src.core.errors import EXIT_OK
from src.models.gridshell import GridshellExtract
from src.services.interchange import extract_gridshell, write_lamellas_obj

logger = logging.getLogger("isoweb")


def gridshell_recipe(job: JobConfig) -> GridshellExtract:
    p = job.extract
    trim = np.array(p.trim, dtype=float) if p.trim is not None else None
    return GridshellExtract(stride=p.stride, families=tuple(p.families), trim=trim)


def run(job: JobConfig, out_dir: Path) -> int:
    out = output_dir(job, out_dir)
    lamellas = extract_gridshell(job_net(job), gridshell_recipe(job))
    write_lamellas_obj(lamellas, out / "gridshell.obj")
    return EXIT_OK
