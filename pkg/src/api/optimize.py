import logging
from pathlib import Path
from typing import List

from src.api.construct import job_net
from src.api.deps import output_dir
from src.api.schemas import JobConfig
from src.core.errors import EXIT_OK, ContinuationFailed
from src.models.net import KIND_ROLES, Net, WebRoles
from src.models.solver import SolverConfig
from src.services.guided_projection import continuation_summary, fairness_residual_max, run_continuation
from src.services.interchange import write_json, write_net_json, write_obj

logger = logging.getLogger("isoweb")

SUMMARY_COLUMNS = ("|V|", "N_v", "w_fair", "w_surf", "w_vert", "T/iter [s]", "E_hard", "max disp")


# =========================================================
# Helpers
# =========================================================

def summary_table(summary: dict) -> str:
    """Plain-text table with one row per run."""
    w = summary["weights"]
    row = [
        str(summary["vertices"]),
        str(summary["variables"]),
        f"{w['fairness']:.1e}",
        f"{w['surfClose']:.1e}",
        f"{w['vertClose']:.1e}",
        f"{summary['timePerIter']:.3f}",
        f"{summary['eHard']:.2e}",
        f"{summary['maxDisplacement']:.3e}",
    ]
    widths = [max(len(h), len(c)) for h, c in zip(SUMMARY_COLUMNS, row)]
    lines = [
        "  ".join(h.rjust(n) for h, n in zip(SUMMARY_COLUMNS, widths)),
        "  ".join(c.rjust(n) for c, n in zip(row, widths)),
        "",
        f"kind: {summary['kind']}",
        f"iterations: {summary['iterations']}",
        f"failed eps: {summary['failedEps']}",
    ]
    for s in summary["perEps"]:
        cap = "  (iteration cap)" if s["atCap"] else ""
        lines.append(f"  eps={s['eps']:.3f}  it={s['iterations']:3d}  E_hard={s['eHard']:.3e}  converged={s['converged']}{cap}")
    return "\n".join(lines) + "\n"


def _net_for_kind(net: Net, kind: str) -> Net:
    if net.roles == WebRoles():
        logger.info("Input net has no role tags; using the %s roles", kind)
        return net.with_roles(KIND_ROLES[kind])
    return net


def fairness_ablation(net: Net, config: SolverConfig) -> dict:
    """Same weights with and without the eps schedule; the ratio compares max fairness residuals."""
    with_schedule = run_continuation(net, config.kind, config)
    direct = run_continuation(net, config.kind, config.without_continuation())
    smooth = fairness_residual_max(with_schedule.net)
    rough = fairness_residual_max(direct.net)
    ratio = rough / smooth if smooth > 0.0 else float("inf")
    logger.info("Ablation fairness ratio (direct / continuation): %.3f", ratio)
    return {
        "continuation": {"fairnessMax": smooth, "eHard": with_schedule.e_hard, "failedEps": with_schedule.failed_eps},
        "direct": {"fairnessMax": rough, "eHard": direct.e_hard, "failedEps": direct.failed_eps},
        "ratio": ratio,
    }


# =========================================================
# Command
# =========================================================

def run(job: JobConfig, out_dir: Path) -> int:
    """
    Writes:
    - net.json and net.obj: the last accepted iterate
    - initial.json when the input net was constructed in place
    - stats.json: per-run summary plus the iteration history
    - summary.txt
    - ablation.json when ``fairnessAblation`` is set
    """
    out = output_dir(job, out_dir)
    config = job.solver_config()
    net = _net_for_kind(job_net(job), config.kind)
    if job.input is None:
        write_net_json(net, out / "initial.json")

    result = run_continuation(net, config.kind, config)
    write_net_json(result.net, out / "net.json")
    write_obj(result.net, out / "net.obj")

    summary = continuation_summary(result, net, config)
    history: List[dict] = [
        {"eps": s.eps, "iteration": s.iteration, "eHard": s.e_hard, "eSoft": s.e_soft,
         "stepNorm": s.step_norm, "damping": s.damping}
        for s in result.history
    ]
    write_json({**summary, "history": history}, out / "stats.json")
    (out / "summary.txt").write_text(summary_table(summary))

    if job.fairness_ablation:
        write_json(fairness_ablation(net, config), out / "ablation.json")

    if not result.converged:
        logger.error("Best iterate written to %s", out)
        raise ContinuationFailed(result.failed_eps, result.e_hard)
    return EXIT_OK
