from pathlib import Path

from src.api.deps import load_input_net, output_dir
from src.api.schemas import JobConfig
from src.core.errors import EXIT_OK, MissingField
from src.services.crpc import ansatz_sample
from src.services.interchange import read_ansatz_json, read_json, write_height_field_obj, write_obj

ANSATZ_KEYS = {"gCoeffs", "hCoeffs"}


def run(job: JobConfig, out_dir: Path) -> int:
    """
    Net JSON (or OBJ grid) to net.obj; an ansatz JSON is sampled over
    ``params.domain`` at ``params.spacing`` and written as height_field.obj.
    """
    out = output_dir(job, out_dir)
    path = Path(job.input)
    if path.suffix.lower() == ".json" and ANSATZ_KEYS <= set(read_json(path, "input")):
        for key in ("domain", "spacing"):
            if key not in job.params:
                raise MissingField(f"params.{key}")
        sample = ansatz_sample(read_ansatz_json(path), tuple(job.params["domain"]), float(job.params["spacing"]))
        write_height_field_obj(sample, out / "height_field.obj")
        return EXIT_OK

    write_obj(load_input_net(job), out / "net.obj")
    return EXIT_OK
