"""
Graphon SIS package.
Deterministic SIS/SI epidemics on graphon kernels: spectra, integration,
small-initial-condition alignment, eternal solutions and closed-form SI
oracles.
"""

import logging
import os

from graphon_sis.config import config

__version__ = '1.0.0'


def get_config(config_name=None):
    """
    Resolve a configuration class.

    Args:
        config_name (str): Key of the config dict; defaults to GRAPHON_SIS_ENV

    Returns:
        type: Configuration class
    """
    config_name = config_name or os.getenv('GRAPHON_SIS_ENV', 'default')
    return config.get(config_name, config['default'])


def configure_logging(config_class=None):
    """Set the package log level from the configuration."""
    config_class = config_class or get_config()
    logging.basicConfig(format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logging.getLogger('graphon_sis').setLevel(config_class.LOG_LEVEL)
    return config_class
