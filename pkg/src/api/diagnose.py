from pathlib import Path

from src.api.construct import job_net
from src.api.deps import output_dir
from src.api.schemas import JobConfig
from src.core.errors import EXIT_OK
from src.services.diagnostics import diagnostics_report
from src.services.interchange import write_json


def run(job: JobConfig, out_dir: Path) -> int:
    out = output_dir(job, out_dir)
    report = diagnostics_report(job_net(job))
    write_json(report.model_dump(by_alias=True), out / "report.json")
    return EXIT_OK
