"""Shared loaders for the command handlers: job validation, input nets, seeds, named surfaces."""

from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np
from pydantic import BaseModel

from src.api.schemas import CONSTRUCTOR_PARAMS, AagSeedFile, JobConfig, KoenigsSeedFile
from src.core.errors import ConfigError, MissingField
from src.models.net import Net
from src.models.web import AagSeed, KoenigsSeed, Line2D, LineFamily
from src.services.interchange import import_obj, parse_document, read_json, read_net_json
from src.services.web_construct import aag_seed_from_surface

HEIGHTS: Dict[str, Callable] = {
    "paraboloid": lambda x, y: 0.5 * (x * x + y * y),
    "saddle": lambda x, y: x * y,
    "plane": lambda x, y: 0.0 * x,
    "monkey_saddle": lambda x, y: x ** 3 - 3.0 * x * y * y,
}


def parse_job(data: dict) -> JobConfig:
    return parse_document(JobConfig, data, "job config")


def constructor_params(job: JobConfig) -> BaseModel:
    model = CONSTRUCTOR_PARAMS[job.constructor]
    return parse_document(model, job.params, f"{job.constructor} params")


def _diagonal_family(lines) -> LineFamily:
    return LineFamily("diag_minus", [Line2D.from_coefficients(a, b, c) for a, b, c in lines])


def _seed_document(job: JobConfig) -> dict:
    if job.seed_file is None:
        raise MissingField("seedFile")
    return read_json(job.seed_file, "seedFile")


def load_aag_seed(job: JobConfig) -> AagSeed:
    doc = parse_document(AagSeedFile, _seed_document(job), "seedFile")
    lines = _diagonal_family(doc.lines)
    if doc.diagonal is not None and doc.aux is not None:
        return AagSeed(lines, np.array(doc.diagonal, dtype=float), np.array(doc.aux, dtype=float))
    return aag_seed_from_surface(HEIGHTS[doc.surface], lines, doc.diagonal_t, doc.aux_t)


def load_koenigs_seed(job: JobConfig) -> KoenigsSeed:
    doc = parse_document(KoenigsSeedFile, _seed_document(job), "seedFile")
    return KoenigsSeed(
        lines=_diagonal_family(doc.lines),
        row0=np.array(doc.row0, dtype=float),
        col0=np.array(doc.col0, dtype=float),
        diagonal=np.array(doc.diagonal, dtype=float),
        superdiagonal=np.array(doc.superdiagonal, dtype=float),
        nu00=doc.nu00,
        nu01=doc.nu01,
    )


def load_input_net(job: JobConfig) -> Net:
    """Net JSON, or an OBJ grid when the input ends in ``.obj`` (needs rows and cols)."""
    path = Path(job.input)
    if path.suffix.lower() == ".obj":
        if job.rows is None:
            raise MissingField("rows")
        if job.cols is None:
            raise MissingField("cols")
        net = import_obj(path, job.rows, job.cols, job.roles)
    else:
        net = read_net_json(path)
    if job.roles is not None:
        net = net.with_roles(job.roles)
    return net


def output_dir(job: JobConfig, default: Path) -> Path:
    out = Path(job.output) if job.output is not None else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def schedule_override(text: Optional[str]) -> Optional[list]:
    """``--seed-epsilon-schedule`` as a list of floats."""
    if text is None:
        return None
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise ConfigError(f"Invalid epsilon schedule: {text}", field="seedEpsilonSchedule") from e
