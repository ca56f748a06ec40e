"""
Módulo de validación de parámetros para los experimentos de WalkSAT.
"""

VALID_MODES = ('sweep_n', 'sweep_alpha', 'verify', 'ucp_stats', 'single_run')


def validate_experiment_config(config: dict) -> list:
    """
    Valida los parámetros de configuración de un experimento.
    Args:
        config: Diccionario de configuración (ExperimentConfig.to_dict())
    Returns:
        Lista de errores encontrados (vacía si todo es correcto)
    """
    errors = []
    if config.get('mode') not in VALID_MODES:
        errors.append(f"Modo desconocido: {config.get('mode')!r} (válidos: {', '.join(VALID_MODES)}).")

    n_values = config.get('n_values') or []
    if any(int(n) < 2 for n in n_values):
        errors.append("Todos los valores de n deben ser al menos 2.")
    if not n_values:
        if config.get('n_min', 0) < 2:
            errors.append("n_min debe ser al menos 2.")
        if config.get('n_max', 0) < config.get('n_min', 0):
            errors.append("n_max debe ser mayor o igual que n_min.")
        if config.get('n_points', 0) < 1:
            errors.append("n_points debe ser mayor que 0.")

    alpha_values = config.get('alpha_values') or []
    if any(float(a) <= 0 for a in alpha_values):
        errors.append("Todas las densidades alpha deben ser positivas.")
    if not alpha_values:
        if config.get('alpha_min', 0) <= 0:
            errors.append("alpha_min debe ser positivo.")
        if config.get('alpha_max', 0) < config.get('alpha_min', 0):
            errors.append("alpha_max debe ser mayor o igual que alpha_min.")
        if config.get('alpha_points', 0) < 1:
            errors.append("alpha_points debe ser mayor que 0.")

    if config.get('m') is not None and config['m'] < 0:
        errors.append("El número de cláusulas m no puede ser negativo.")
    if config.get('replicates', 0) < 1:
        errors.append("El número de réplicas debe ser mayor que 0.")
    if config.get('workers', 0) < 1:
        errors.append("El número de procesos debe ser mayor que 0.")
    if config.get('track_vars', 0) < 0:
        errors.append("El número de variables seguidas no puede ser negativo.")
    if config.get('cap') is not None and config['cap'] < 0:
        errors.append("El límite de inversiones no puede ser negativo.")
    if config.get('unsat_cap') is not None and config['unsat_cap'] < 0:
        errors.append("El límite de inversiones para instancias UNSAT no puede ser negativo.")
    return errors
