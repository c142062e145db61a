from manyiv.simulation.designs import (
    ControlsDesign,
    DesignInfeasibleError,
    GroupDesign,
    build_design,
    gen_controls_design,
    gen_group_design,
)
from manyiv.simulation.rng import Stream, mix64
from manyiv.simulation.runner import run_bias, run_experiment, run_power_curve, run_size

__all__ = [
    "ControlsDesign",
    "DesignInfeasibleError",
    "GroupDesign",
    "Stream",
    "build_design",
    "gen_controls_design",
    "gen_group_design",
    "mix64",
    "run_bias",
    "run_experiment",
    "run_power_curve",
    "run_size",
]
