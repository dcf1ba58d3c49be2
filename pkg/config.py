"""
Configurazione centralizzata
Costanti lette da variabili d'ambiente (file .env supportato via python-dotenv).
Ogni modulo importa da qui i default; la CLI li sovrascrive con i flag.
"""

import os
from dotenv import load_dotenv

load_dotenv()


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from None


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}") from None


# ============================================================================
# LOGGING
# ============================================================================

LOGS_DIR = os.environ.get("LOGS_DIR", "/tmp/matgen_logs")
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO").upper()

# ============================================================================
# DIFFUSIONE
# ============================================================================

DEFAULT_SEED = _env_int("MATGEN_SEED", 0)
DEFAULT_STEPS = _env_int("MATGEN_STEPS", 50)
DEFAULT_ETA = _env_float("MATGEN_ETA", 0.0)

SCHEDULE_T = _env_int("MATGEN_T", 1000)
BETA_START = _env_float("MATGEN_BETA_START", 8.5e-4)
BETA_END = _env_float("MATGEN_BETA_END", 0.012)

# ============================================================================
# GEOMETRIA LATENTE
# ============================================================================

LATENT_CHANNELS = _env_int("MATGEN_LATENT_CHANNELS", 14)
LATENT_FACTOR = _env_int("MATGEN_LATENT_FACTOR", 8)  # pixel per cella latente
MAP_CHANNELS = _env_int("MATGEN_MAP_CHANNELS", 9)

# ============================================================================
# PATCH E PARALLELISMO
# ============================================================================

DEFAULT_PATCH = _env_int("MATGEN_PATCH", 32)
MAX_PARALLEL_PATCHES = _env_int("MATGEN_MAX_PARALLEL_PATCHES", 8)
RESTART_STRENGTH = _env_float("MATGEN_RESTART_STRENGTH", 0.6)

DECODE_PATCH = _env_int("MATGEN_DECODE_PATCH", 64)  # 64 celle = 512 px
DECODE_OVERLAP = _env_float("MATGEN_DECODE_OVERLAP", 0.25)
DECODE_SIGMA_FRAC = _env_float("MATGEN_DECODE_SIGMA_FRAC", 0.25)
DECODER_HALO = _env_int("MATGEN_DECODER_HALO", 1)

# ============================================================================
# MASCHERE, MATERIALI, CONTROLLI
# ============================================================================

BORDER_FRAC = _env_float("MATGEN_BORDER_FRAC", 1.0 / 16.0)
MASK_MAX_FRAC = _env_float("MATGEN_MASK_MAX_FRAC", 0.4)

DISPLACEMENT_MAX = _env_float("MATGEN_DISPLACEMENT_MAX", 10.0)
TILECHECK_THRESHOLD = _env_float("MATGEN_TILECHECK_THRESHOLD", 2.0)

# End config.py
