"""Module with the Constants used in vicloud."""

# Tolerances
PD_EIGEN_TOL = 1e-10
PSD_TRACE_TOL = 1e-10
ORTHONORMAL_TOL = 1e-8
BOUNDARY_TOL = 1e-10
JACOBIAN_COND_MAX = 1e12
PCA_RANK_TOL = 1e-12
SIGMA_HAT_MIN = 1e-14
CENTERED_TOL = 1e-12

# Logistic fitting
LOGISTIC_TOL = 1e-8
LOGISTIC_MAX_ITER = 100
SEPARATION_NORM = 1e6

# Logistic Rashomon sampler
N_PER_ROUND = 500
BOX_SCALE = 2.0
SCALE_FACTOR_R = 1.2
M_ROUNDS = 3
R_BAR = 1.5
RADIAL_EXPONENT = 1.0
SURVIVAL_TARGET = 0.75
SURVIVAL_SLACK = 0.10
STABILITY_THRESHOLD = 0.02
N_SHUFFLES = 20

# Decision tables
MAX_SUBSET_SIZE = 20
MAX_FEATURES = 4

# VID rendering
PANEL_SIZE = 160
PANEL_MARGIN = 40
AXIS_PADDING = 0.05
PALETTE = ('#1f77b4', '#ff7f0e', '#2ca02c', '#d62728',
           '#9467bd', '#8c564b', '#e377c2', '#7f7f7f')
OVERLAY_COLOR = '#000000'

# Command line
OUTPUT_ROOT_ENV = 'VIC_OUTPUT_ROOT'
DEFAULT_OUTPUT_ROOT = 'runs'
N_BOUNDARY = 2000
N_INTERIOR = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
