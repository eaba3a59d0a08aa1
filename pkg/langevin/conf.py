"""
Acceso a los valores por defecto del laboratorio (``settings.LAB``).
"""

from django.conf import settings

DEFAULTS = {
    'BLOWUP_NORM': 1e12,
    'ENSEMBLE_BLOCK_SIZE': 4096,
    'CHECK_TOLERANCE': 1e-9,
    'FINE_SUBSTEP_RATIO': 64,
    'W1_EXACT_MAX': 512,
    'SLICED_PROJECTIONS': 64,
    'TV_BINS': 64,
    'TV_BOX_STDS': 5.0,
}


def lab_setting(name):
    """Devuelve ``settings.LAB[name]`` o su valor por defecto."""
    return getattr(settings, 'LAB', {}).get(name, DEFAULTS[name])
