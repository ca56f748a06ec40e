"""
Acelerador opcional: compila los bucles críticos con Numba si está disponible.

Sin Numba las mismas funciones se ejecutan como Python puro (mismos resultados,
mucho más lentas), igual que el respaldo en Python del núcleo de simulación.
"""

try:
    from numba import njit as _numba_njit
    NUMBA_AVAILABLE = True
except ImportError:
    _numba_njit = None
    NUMBA_AVAILABLE = False


def njit(*args, **kwargs):
    """Equivalente a numba.njit(cache=True, ...) o decorador identidad sin Numba."""
    if NUMBA_AVAILABLE:
        kwargs.setdefault('cache', True)
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func
