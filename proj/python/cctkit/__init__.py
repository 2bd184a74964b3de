"""Transient stability and critical clearing time toolkit.

Thin wrapper over the C++ core: case handling, time-domain simulation,
trajectory sensitivity to the fault-clearing time, and CCT computation by
two-point extrapolation or bisection.
"""

from ._core import (  # noqa: F401
    CctBracket,
    CctEstimate,
    CctkitError,
    ComparisonReport,
    FaultScenario,
    FleetResult,
    LambdaPoint,
    NetworkCase,
    PeakResult,
    SensitivityTrajectory,
    SnSeries,
    StabilityVerdict,
    StateLayout,
    Trajectory,
    auto_probes,
    bisect_cct,
    builtin_case,
    builtin_case_names,
    classify_stability,
    cli_main,
    compare_with_tds,
    estimate_cct,
    estimate_json,
    extrapolate_root,
    load_case,
    peak,
    peak_in_window,
    report_json,
    resolve_case,
    sensitivity_csv,
    sensitivity_finite_difference,
    sensitivity_variational,
    simulate,
    sn_gfl,
    sn_sync,
    trajectory_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
