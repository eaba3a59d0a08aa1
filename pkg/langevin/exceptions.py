"""
Errores del laboratorio.

Las verificaciones (supuestos, deriva, pasos) no lanzan excepciones cuando una
desigualdad falla: devuelven un informe. Estas clases cubren entradas inválidas,
configuraciones incoherentes y trayectorias que explotan.
"""


class LabError(Exception):
    """Raíz de los errores del laboratorio."""


class ArgumentError(LabError, ValueError):
    """Argumento fuera de su dominio (tamaños, rangos, muestras vacías)."""


class DomainError(ArgumentError):
    """Entrada numérica no finita."""


class ConfigurationError(LabError):
    """Constantes o parámetros declarados incompatibles entre sí."""


class UnsupportedObjectiveError(LabError):
    """La operación solo existe para ciertos objetivos (p. ej. el oráculo gaussiano)."""


class NumericalBlowupError(LabError):
    """Un estado dejó de ser finito durante la integración."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"Estado no finito en el paso {step}")


class RunConflictError(LabError):
    """El directorio de salida ya contiene otra configuración."""
