import os
import sys
import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Parallelism cap for the Monte Carlo kernel (unset: numba default)
THREADS = os.getenv('JUMPPUT_THREADS')
LOG_LEVEL = os.getenv('JUMPPUT_LOG_LEVEL', 'INFO')

# Grid: log-spaced nodes on [K * GRID_LOWER_FACTOR, K * GRID_UPPER_FACTOR]
GRID_POINTS = int(os.getenv('JUMPPUT_GRID_POINTS', 2000))
GRID_MIN_POINTS = 100
GRID_LOWER_FACTOR = 1e-3
GRID_UPPER_FACTOR = 1e2

# Jump law discretisation
QUADRATURE_ORDER = int(os.getenv('JUMPPUT_QUADRATURE_ORDER', 32))
PROBABILITY_SUM_TOL = 1e-12
QUADRATURE_SUM_TOL = 1e-10
LOGNORMAL_MEAN_TOL = 1e-8
TABLE_MAX_RATIO = 10.0

# Tolerances (the *_FACTOR ones are multiplied by the strike)
TOL_SHAPE_FACTOR = 1e-7
TOL_ROOT_FACTOR = 1e-10
TOL_TRUNC_FACTOR = 1e-6
TOL_FIT = 1e-3
TOL_PDE = 1e-4
TOL_ODE = 1e-8
WRONSKIAN_TOL = 1e-6

# Fundamental solutions
ODE_RTOL = 1e-12
ODE_ATOL = 1e-13
# integration starts outside the grid, ODE_LEAD_DECAYS decay lengths of the end transient (at most ODE_LEAD_MAX in log x)
ODE_LEAD_DECAYS = 30.0
ODE_LEAD_MAX = 2.0
INFINITY_DECAY_RATIO = 1e-4
EXIT_SLOPE_THRESHOLD = 0.1

# Solver
EPSILON = 1e-6
BOUNDARY_FLOOR_FACTOR = 10.0  # boundary search starts at factor * x_min
TRUNCATION_CHECK_FACTOR = 10.0  # truncation gap measured on x <= factor * K
PDE_CHECK_FACTOR = 50.0  # continuation residual measured on (l, factor * K)

# Monte Carlo
MC_PATHS = 100_000
MC_DT = 1e-3
MC_HORIZON_FACTOR = 200.0  # T_max = MC_HORIZON_FACTOR / alpha
MC_SEED = 0
MC_STD_ERRORS = 3.0
MC_ALLOWANCE_FACTOR = 2e-3

# Output
OUTPUT_DIR = os.getenv('JUMPPUT_OUTPUT_DIR', 'out')
CSV_FORMAT = '%.18g'


def configure_logging(level=None):
    """Console logging shared by the CLI and the smoke script"""
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stdout)]
    )
