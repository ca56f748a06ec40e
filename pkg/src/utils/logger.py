import logging
import sys
from typing import Optional


def setup_logger(name: str = 'walksat_lab', log_file: Optional[str] = None,
                 level=logging.INFO) -> logging.Logger:
    """
    Configura y devuelve un logger con salida a consola y, opcionalmente, a archivo.

    Llamadas repetidas con el mismo nombre no duplican handlers; sólo ajustan el nivel.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')

    # Handler para archivo
    if log_file and not any(isinstance(h, logging.FileHandler) for h in logger.handlers):
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    # Handler para consola (stderr: stdout queda libre para CSV/JSON)
    if not any(type(h) is logging.StreamHandler for h in logger.handlers):
        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)

    for handler in logger.handlers:
        handler.setLevel(level)
    logger.propagate = False

    return logger
