"""Subsynchronous apparent-impedance toolkit.

Time-domain simulation of probe-modulated networks, dq impedance-spectrum
identification, analytic references for passive benches, and canned
reproduction studies. The heavy lifting lives in the compiled ``_subsweep``
module; this package re-exports its public surface.
"""

from ._subsweep import (  # noqa: F401
    AnalyticSpectra,
    EstimateOptions,
    FigureReport,
    GridSweepResult,
    IdentifiedModel,
    IdentifyOptions,
    ImpedanceSpectrum,
    InjectionResult,
    LpfSpec,
    Provenance,
    Scenario,
    ScenarioError,
    SimulationError,
    SimulationResult,
    SolverSettings,
    SpectrumComparison,
    SpectrumPeak,
    SteadyStats,
    WaveformRecord,
    __version__,
    analytic_spectra,
    compare_spectra,
    find_peaks,
    identify_gridsweep,
    identify_injection,
    known_figures,
    load_scenario,
    log_frequency_grid,
    lpf_response,
    natural_frequency,
    repro_figure,
    run_simulation,
    scenario_hash,
    steady_state_check,
)

__all__ = [
    "AnalyticSpectra",
    "EstimateOptions",
    "FigureReport",
    "GridSweepResult",
    "IdentifiedModel",
    "IdentifyOptions",
    "ImpedanceSpectrum",
    "InjectionResult",
    "LpfSpec",
    "Provenance",
    "Scenario",
    "ScenarioError",
    "SimulationError",
    "SimulationResult",
    "SolverSettings",
    "SpectrumComparison",
    "SpectrumPeak",
    "SteadyStats",
    "WaveformRecord",
    "__version__",
    "analytic_spectra",
    "compare_spectra",
    "find_peaks",
    "identify_gridsweep",
    "identify_injection",
    "known_figures",
    "load_scenario",
    "log_frequency_grid",
    "lpf_response",
    "natural_frequency",
    "repro_figure",
    "run_simulation",
    "scenario_hash",
    "steady_state_check",
]
