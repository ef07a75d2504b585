DEFAULT_ENV_FILE = "ringflow.env"
DEFAULT_SEED = 20090301
DEFAULT_STEPS = 2000
DEFAULT_BURN_IN = 1000
DEFAULT_GRID_POINTS = 101
DEFAULT_MAX_DENOMINATOR = 10_000
DEFAULT_WORKERS = 1

TOLERANCE = 1e-9
PERIODICITY_TOLERANCE = 1e-10
TRIANGLE_TOLERANCE = 1e-12
SLOPE_MERGE_TOLERANCE = 1e-6
MAJORANT_GRID_POINTS = 512
SNAPSHOT_FULL_STRIDE_MAX_CARS = 64
SNAPSHOT_MAX_ROWS = 1000
FLOAT_FORMAT = "%.12g"

INITIAL_CONDITIONS = ("uniform", "platoon", "random")
COMMANDS = ("eigen", "simulate", "diagram", "sweep", "fit")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NON_CONVERGENCE = 3

ENV_FILE_ENV = "RINGFLOW_ENV_FILE"
SEED_ENV = "RINGFLOW_SEED"
WORKERS_ENV = "RINGFLOW_WORKERS"
MAX_DENOMINATOR_ENV = "RINGFLOW_MAX_DENOMINATOR"
LOG_LEVEL_ENV = "LOG_LEVEL"

THREE_PHASE_CONTROLS = ((1.0, 0.0), (1.0 / 3.0, 1.0 / 8.0), (-1.0, 1.0))
A6_GAME_ROWS = (
    ("free", ((1.0, 0.0),)),
    ("dense", ((0.27, 0.07),)),
    ("congested", ((-0.19, 0.18),)),
    ("jam", ((-0.25, 0.2), (-0.2, 0.17), (0.0, 0.0))),
)
