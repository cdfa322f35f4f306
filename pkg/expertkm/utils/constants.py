from dotenv import load_dotenv
import os

load_dotenv()

# ======================== LOGGING CONFIGURATION ========================
LOG_LEVEL = os.getenv("EXPERTKM_LOG_LEVEL", "INFO")

# ======================== NUMERIC TOLERANCES ========================
# Guard for IPCW denominators 1 - G(W-)
EPS_DIV = float(os.getenv("EXPERTKM_EPS_DIV", "1e-12"))
QUAD_TAIL_MASS = float(os.getenv("EXPERTKM_QUAD_TAIL_MASS", "1e-10"))
QUAD_TOL = float(os.getenv("EXPERTKM_QUAD_TOL", "1e-10"))
QUAD_LIMIT = int(os.getenv("EXPERTKM_QUAD_LIMIT", "200"))
GRAD_TOL = float(os.getenv("EXPERTKM_GRAD_TOL", "1e-9"))
INVERSION_XTOL = float(os.getenv("EXPERTKM_INVERSION_XTOL", "1e-12"))

# ======================== CURVE EXPORT CONFIGURATION ========================
GRID_POINTS = int(os.getenv("EXPERTKM_GRID_POINTS", "512"))
THETA_QUANTILE = float(os.getenv("EXPERTKM_THETA_QUANTILE", "0.95"))
FLOAT_FORMAT = os.getenv("EXPERTKM_FLOAT_FORMAT", "%.17g")

# ======================== FITTING CONFIGURATION ========================
SWEEP_WORKERS = int(os.getenv("EXPERTKM_SWEEP_WORKERS", "1"))

# ======================== SIMULATION DEFAULTS ========================
DEFAULT_SEED = int(os.getenv("EXPERTKM_DEFAULT_SEED", "1"))
DEFAULT_SAMPLE_SIZE = int(os.getenv("EXPERTKM_DEFAULT_SAMPLE_SIZE", "5000"))

# Disability scenario hazards: total exp(a - b t), contaminant
# exp(a - b t) / 8 + exp(a - c t) / 4 on [0, horizon]
HAZARD_A = 0.1
HAZARD_B = 1.5
HAZARD_C = 2.5
HAZARD_HORIZON = 20.0
CONTAMINANT_WEIGHTS = (0.125, 0.25)

# Crude expert effectiveness presets
CRUDE_P0_PRESETS = (0.75, 0.95)

# Sophisticated expert noise presets (shape, rate) for the mean and sd noise
SOPH_NOISE_PRESETS = {
    "expert1": ((1.0, 1.0), (1.0, 10.0)),
    "expert2": ((10.0, 10.0), (1.0, 100.0)),
}

# Dataset expert scheme presets
UNIFORM_REOPEN_Q = 0.02
TOP_QUANTILE_FRACTION = 0.10
TOP_QUANTILE_KEEP = 0.80
PROPORTIONAL_KERNEL = (1.05, 0.1, 0.5)
TOP_QUANTILE_KERNEL = (0.10, 1.5, 0.1, 1.0 / 3.0)
