from src.models.net import KIND_ROLES, Net, NetDocument, WebRoles
from src.models.web import AagSeed, KoenigsSeed, Line2D, LineFamily, LineWeb
from src.models.crpc import BoundarySpec, ComplexPoly, CrpcAnsatz, GraphSample
from src.models.solver import ContinuationResult, LmSettings, SoftWeights, SolverConfig
from src.models.flex import ConeCylinderData, DriverEdge, FlexConfig, FlexionResult
from src.models.gridshell import GridshellExtract, Lamella
from src.models.report import DiagnosticsReport
