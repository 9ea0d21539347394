import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

from src.api import construct, diagnose, export, extract, flex, optimize
from src.api.deps import parse_job, schedule_override
from src.api.schemas import BatchConfig
from src.core.errors import EXIT_OK, ConfigError, IsowebError
from src.core.log_config import configure_logging
from src.core.settings import ISOWEB_OUTPUT_DIR, ISOWEB_THREADS
from src.services.interchange import parse_document, read_json

logger = logging.getLogger("isoweb")

COMMANDS = {
    "construct": construct.run,
    "optimize": optimize.run,
    "flex": flex.run,
    "diagnose": diagnose.run,
    "extract": extract.run,
    "export": export.run,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isoweb", description="Isotropic webs, nets and their Euclidean counterparts")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="job config JSON, or {\"jobs\": [...]} for a batch")
        p.add_argument("--output", type=Path, default=Path(ISOWEB_OUTPUT_DIR))
        p.add_argument("--seed-epsilon-schedule", dest="schedule", help="comma separated eps values, 0 first and 1 last")
        p.add_argument("--ablation-no-continuation", dest="no_continuation", action="store_true")
        p.add_argument("--verbose", action="store_true")
    return parser


# =========================================================
# Jobs
# =========================================================

def _with_overrides(data: dict, command: str, schedule: Optional[list], no_continuation: bool) -> dict:
    data = dict(data)
    data.setdefault("command", command)
    if schedule is not None and data["command"] == "optimize":
        solver = dict(data.get("solver") or {"kind": data.get("kind")})
        solver["epsSchedule"] = schedule
        data["solver"] = solver
    if no_continuation:
        data["noContinuation"] = True
    return data


def run_job(data: dict, out_dir: Path) -> int:
    """Run one job; every isoweb error becomes its exit code."""
    try:
        job = parse_job(data)
        return COMMANDS[job.command](job, Path(out_dir))
    except IsowebError as e:
        logger.error("%s", json.dumps(e.to_dict(), default=str))
        return e.exit_code


def run_batch(jobs: List[dict], out_dir: Path, threads: int = ISOWEB_THREADS) -> int:
    """Jobs without an output go to ``out_dir/job_NN``; the worst exit code wins."""
    placed = []
    for k, data in enumerate(jobs):
        if data.get("output") is None:
            data = {**data, "output": str(Path(out_dir) / f"job_{k:02d}")}
        placed.append(data)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        codes = list(pool.map(lambda d: run_job(d, out_dir), placed))
    logger.info("Batch finished: %d jobs, exit codes %s", len(codes), codes)
    return max(codes, default=EXIT_OK)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        schedule = schedule_override(args.schedule)
        data = read_json(args.config, "config")
        if not isinstance(data, dict):
            raise ConfigError("Config must be a JSON object", field="config")
        batch = parse_document(BatchConfig, data, "batch config") if "jobs" in data else None
    except IsowebError as e:
        logger.error("%s", json.dumps(e.to_dict(), default=str))
        return e.exit_code

    if batch is not None:
        jobs = [_with_overrides(j, args.command, schedule, args.no_continuation) for j in batch.jobs]
        return run_batch(jobs, args.output)
    return run_job(_with_overrides(data, args.command, schedule, args.no_continuation), args.output)


if __name__ == "__main__":
    sys.exit(main())
