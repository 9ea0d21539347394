import logging

import numpy as np

from src.core.errors import GeometryError
from src.models.net import FAMILIES, Net
from src.models.report import AngleStats, DiagnosticsReport, GeodesicResiduals, OmegaHistogram
from src.services.net_core import (
    DIAGONAL_STENCIL,
    GRID_STENCIL,
    anet_residual,
    curvature_omega,
    face_central_angle,
    family_polylines,
    geodesic_residual,
    planarity_residual,
)

logger = logging.getLogger("isoweb")

OMEGA_BINS = 10
OMEGA_MIN_WIDTH = 1e-6


def _family_geodesic(net: Net, family: str, eps: float) -> float:
    worst = 0.0
    for poly in family_polylines(net, family):
        try:
            worst = max(worst, geodesic_residual(net, poly, eps))
        except GeometryError:
            logger.warning("Skipping degenerate %s-line %s in diagnostics", family, poly.key)
    return worst


def _omega_range(values) -> tuple:
    """Histogram range, widened around the mean when Omega is (nearly) constant."""
    lo, hi = float(np.min(values)), float(np.max(values))
    width = OMEGA_MIN_WIDTH * max(1.0, abs(lo), abs(hi))
    if hi - lo >= width:
        return lo, hi
    mid = 0.5 * (lo + hi)
    return mid - 0.5 * width, mid + 0.5 * width


def diagnostics_report(net: Net) -> DiagnosticsReport:
    """
    Aggregate residuals of a net:
    - geodesic residuals per tagged family at eps 0 and 1
    - A-net residual of the grid net and of both diagonal nets
    - face planarity, central angle statistics, histogram of Omega
    """
    geodesic = {}
    for family in FAMILIES:
        if net.roles.of(family) == "none":
            continue
        geodesic[family] = GeodesicResiduals(
            eps0=_family_geodesic(net, family, 0.0),
            eps1=_family_geodesic(net, family, 1.0),
        )

    anet = {}
    if net.rows >= 3 and net.cols >= 3:
        anet["grid"] = anet_residual(net, GRID_STENCIL)
        anet["even"] = anet_residual(net, DIAGONAL_STENCIL, parity=0)
        anet["odd"] = anet_residual(net, DIAGONAL_STENCIL, parity=1)

    angles = []
    for i, j in net.faces():
        try:
            angles.append(face_central_angle(net, i, j))
        except GeometryError:
            continue
    angle_stats = (
        AngleStats(min=min(angles), max=max(angles), mean=float(np.mean(angles))) if angles else None
    )

    omega = None
    try:
        values = [curvature_omega(net, i, j) for i, j in net.interior()]
        if values:
            counts, edges = np.histogram(values, bins=OMEGA_BINS, range=_omega_range(values))
            omega = OmegaHistogram(counts=counts.tolist(), edges=edges.tolist())
    except GeometryError as e:
        # Omega needs planar, non-isotropic faces
        logger.debug("Omega histogram skipped: %s", e.detail)

    return DiagnosticsReport(
        vertex_count=net.rows * net.cols,
        rows=net.rows,
        cols=net.cols,
        geodesic=geodesic,
        anet=anet,
        planarity=planarity_residual(net),
        angles=angle_stats,
        omega=omega,
    )
