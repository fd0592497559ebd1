"""
Type definitions for the mtwgeo package.
"""

from .types import (
    JsonFloat,
    ManifoldDeclaration,
    Diagnostic,
    OperationError,
    FocalReportDict,
    CutReportDict,
    MtwEvaluationDict,
    GridSpec,
    ZSpec,
    ScanReport,
    KCFit,
    TenseurineFit,
    LemmaFit,
    LipschitzProbeReport,
    NonfocalityReport,
    LipcontrolReport,
    DiffIneqReport,
    SemiconvexityReportDict,
    CheckResult,
    OperationResult,
    ScenarioDict,
    RunReport,
)

__all__ = [
    "JsonFloat",
    "ManifoldDeclaration",
    "Diagnostic",
    "OperationError",
    "FocalReportDict",
    "CutReportDict",
    "MtwEvaluationDict",
    "GridSpec",
    "ZSpec",
    "ScanReport",
    "KCFit",
    "TenseurineFit",
    "LemmaFit",
    "LipschitzProbeReport",
    "NonfocalityReport",
    "LipcontrolReport",
    "DiffIneqReport",
    "SemiconvexityReportDict",
    "CheckResult",
    "OperationResult",
    "ScenarioDict",
    "RunReport",
]
