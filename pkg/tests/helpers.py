"""Builders for the synthetic tank scenarios shared across test modules."""

import copy

REFERENCE_TRUTH = {
    "h_max": 14.0,
    "x_t": 8.7,
    "x_b": 8.4,
    "c": 0.6,
    "r": 0.12,
    "a": [0.0, 0.0, 0.5],
    "sigma": 0.25,
    "pollution": {"t0": 0.0, "h0": 12.0},
    "calibration": [{"t0": 0.0, "h0": 14.0}, {"t0": 0.0, "h0": 14.0}],
}


def scenario_config(
    out_dir,
    seed=1,
    pollution_time=250.8,
    truth_overrides=None,
    n_chains=4,
    n_iterations=5000,
    proposals_per_iteration=5,
    figures=True,
    **extra,
):
    """Config dict for a full synthetic run: two calibration series plus one
    post-drainage pollution observation, with the start state held out."""
    truth = copy.deepcopy(REFERENCE_TRUTH)
    if truth_overrides:
        truth.update(copy.deepcopy(truth_overrides))
    config = {
        "out_dir": str(out_dir),
        "seed": seed,
        "figures": figures,
        # Keep noise-negative rows near the drained state: dropping them
        # would truncate the noise distribution and bias the fit.
        "level_cutoff": -1000.0,
        "sampler": {
            "n_chains": n_chains,
            "n_iterations": n_iterations,
            "proposals_per_iteration": proposals_per_iteration,
        },
        "simulate": {
            "truth": truth,
            "designs": [
                {
                    "id": "calib1",
                    "kind": "calibration",
                    "times": {"start": 0, "stop": 450, "step": 15},
                },
                {
                    "id": "calib2",
                    "kind": "calibration",
                    "times": {"start": 0, "stop": 450, "step": 15},
                },
                {
                    "id": "pollution",
                    "kind": "pollution",
                    "times": [pollution_time],
                    "record_initial": True,
                },
            ],
        },
    }
    config.update(extra)
    return config


def tiny_scenario_config(out_dir, **overrides):
    """A fast, deliberately under-sampled variant for CLI plumbing tests."""
    kwargs = {
        "seed": 7,
        "n_chains": 2,
        "n_iterations": 80,
        "proposals_per_iteration": 1,
        "figures": False,
        "trajectory_draws": 4,
        "mae_draws": 5,
        "discrepancy_draws": 5,
    }
    kwargs.update(overrides)
    config = scenario_config(out_dir, **kwargs)
    # Coarser series keep the forward solves cheap.
    for design in config["simulate"]["designs"]:
        if design["kind"] == "calibration":
            design["times"] = {"start": 0, "stop": 450, "step": 75}
    return config
