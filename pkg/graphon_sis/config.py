import os
from dotenv import load_dotenv

load_dotenv()

def _optional_float(name):
    value = os.environ.get(name)
    return float(value) if value else None

class Config:
    """Base configuration class."""
    OUTPUT_ROOT = os.environ.get('GRAPHON_SIS_OUTPUT_ROOT') or 'results'
    LOG_LEVEL = os.environ.get('GRAPHON_SIS_LOG_LEVEL') or 'INFO'
    WORKERS = int(os.environ.get('GRAPHON_SIS_WORKERS', 4))

    # Integrator
    REL_TOL = 1e-8
    ABS_TOL = 1e-10
    STATE_TOL = 1e-8
    SAMPLE_TOL = 1e-5
    MIN_STEP_RATIO = 1e-7
    STIFF_STEPS = 100

    # Spectral solver
    EIGEN_TOL = 1e-12
    EIGEN_MAX_ITER = 100000

    # Endemic solver
    ENDEMIC_TOL = 1e-10
    ENDEMIC_MAX_ITER = 1000000

    # Closed-form SI Omega solver
    OMEGA_REL_TOL = 1e-11
    OMEGA_ABS_TOL = 1e-15

    # Power-law mesh; no phi1 cap unless one is configured
    POWER_LAW_GRID_SIZE = 2000
    POWER_LAW_PHI_CAP = _optional_float('GRAPHON_SIS_POWER_LAW_PHI_CAP')

    # Kernel distance refinement limit
    REFINEMENT_MAX_CELLS = 20000

class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = os.environ.get('GRAPHON_SIS_LOG_LEVEL') or 'DEBUG'

class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False

class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    WORKERS = 2
    LOG_LEVEL = 'WARNING'
    POWER_LAW_GRID_SIZE = 300

config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': ProductionConfig
}
