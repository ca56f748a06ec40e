"""
Flujos aleatorios reproducibles basados en contador (Philox).

Cada tupla (semilla base, claves...) identifica un flujo independiente, de modo que
el resultado de una celda del experimento no depende del orden de ejecución ni del
número de procesos.
"""

import hashlib
from typing import Optional

import numpy as np

# Roles de flujo: separan la aleatoriedad de la fórmula de la de WalkSAT
STREAM_FORMULA = 0
STREAM_WALKSAT = 1
STREAM_ROOTS = 2

_UNIFORM_BLOCK = 1 << 14


def make_generator(seed: int, *key: int) -> np.random.Generator:
    """
    Crea un generador Philox para la semilla y la clave dadas.

    Args:
        seed: Semilla base de 64 bits
        key: Enteros no negativos que identifican el flujo (celda, réplica, rol...)

    Returns:
        numpy.random.Generator independiente para cada clave distinta
    """
    seq = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                 spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(base_seed: int, *fields) -> int:
    """
    Deriva una semilla estable de 63 bits a partir de la semilla base y los campos
    de la celda (cabe en la columna int64 del CSV).

    Se usa BLAKE2b sobre la representación textual: el valor no depende de la
    versión de Python ni del hash aleatorizado de cadenas.
    """
    payload = ':'.join([str(int(base_seed))] + [repr(f) for f in fields]).encode('utf-8')
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, 'little') >> 1


class UniformStream:
    """
    Fuente de uniformes en [0, 1) servida por bloques.

    El motor compilado consume directamente el bloque actual (buffer + posición);
    el bucle en Python usa next_uniform(). Ambos consumen la misma secuencia.
    """

    def __init__(self, generator: np.random.Generator, block_size: int = _UNIFORM_BLOCK):
        self.generator = generator
        self.block_size = block_size
        self.buffer = np.empty(0, dtype=np.float64)
        self.position = 0

    def refill(self, minimum: int = 1) -> None:
        """Descarta lo consumido y añade un bloque nuevo (al menos `minimum` libres)."""
        remaining = self.buffer[self.position:]
        size = max(self.block_size, minimum)
        self.buffer = np.concatenate([remaining, self.generator.random(size)])
        self.position = 0

    def available(self) -> int:
        return self.buffer.shape[0] - self.position

    def next_uniform(self) -> float:
        if self.position >= self.buffer.shape[0]:
            self.refill()
        value = float(self.buffer[self.position])
        self.position += 1
        return value

    def next_index(self, k: int) -> int:
        """Índice uniforme en [0, k)."""
        if k <= 0:
            raise ValueError("No se puede muestrear de un conjunto vacío")
        return min(int(self.next_uniform() * k), k - 1)


def make_stream(seed: Optional[int], *key: int) -> UniformStream:
    """Atajo: UniformStream sobre make_generator(seed, *key). seed=None → entropía del sistema."""
    if seed is None:
        seed = int(np.random.SeedSequence().entropy) & 0xFFFFFFFFFFFFFFFF
    return UniformStream(make_generator(seed, *key))
