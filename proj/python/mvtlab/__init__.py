"""Measurement-versions identity checks, factor diagnostics and two-wave studies."""

from ._core import (
    Error,
    Scenario,
    analytic_bias,
    derivation_chain,
    fit_one_factor,
    fixture_names,
    item_by_item,
    proportionality_test,
    run_battery,
    run_config,
    sample,
    simulate_two_wave,
    verify_identity,
)

__all__ = [
    "Error",
    "Scenario",
    "analytic_bias",
    "derivation_chain",
    "fit_one_factor",
    "fixture_names",
    "item_by_item",
    "proportionality_test",
    "run_battery",
    "run_config",
    "sample",
    "simulate_two_wave",
    "verify_identity",
]
