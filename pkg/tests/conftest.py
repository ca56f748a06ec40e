"""
Configuración común de pytest: rutas del proyecto y marcador `slow`.
"""

import os
import sys

import pytest

# Añadir rutas del proyecto
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='Ejecuta también las reproducciones a escala de escritorio')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: reproducción a escala de escritorio (requiere --runslow)')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='necesita --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)
