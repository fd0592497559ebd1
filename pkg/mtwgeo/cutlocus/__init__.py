"""Cut times, injectivity domains and radial distance."""

from .cutlocus import (
    CutOptions,
    CutReport,
    DomainSample,
    PROBE_MODES,
    cut_time,
    injectivity_lower_bound,
    clear_cut_cache,
    domain_sample,
    radial_distance,
    radial_distance_to_domain,
    interpolated_cut,
    cut_margin,
    delta_of_set,
    verify_lem1,
    verify_lem2,
    cut_lipschitz_probe,
    nonfocality_report,
    export_domain_csv,
    plot_domain_svg,
)

__all__ = [
    "CutOptions",
    "CutReport",
    "DomainSample",
    "PROBE_MODES",
    "cut_time",
    "injectivity_lower_bound",
    "clear_cut_cache",
    "domain_sample",
    "radial_distance",
    "radial_distance_to_domain",
    "interpolated_cut",
    "cut_margin",
    "delta_of_set",
    "verify_lem1",
    "verify_lem2",
    "cut_lipschitz_probe",
    "nonfocality_report",
    "export_domain_csv",
    "plot_domain_svg",
]
