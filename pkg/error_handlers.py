"""
Error Handlers Module
Gestione centralizzata degli errori della pipeline con logging specifico.
"""

import logging
import functools
import traceback
from typing import Callable, Any

logger = logging.getLogger(__name__)

# ============================================================================
# ERROR CLASSES
# ============================================================================

class MatGenError(Exception):
    """Eccezione base della pipeline materiali."""
    exit_code = 2


class ValidationError(MatGenError, ValueError):
    """Parametri o configurazione non validi."""
    exit_code = 1


class ShapeError(ValidationError):
    """Dimensioni di griglie/mappe incompatibili."""


class ContractError(MatGenError):
    """Un denoiser o decoder ha violato il proprio contratto di output."""


class NumericalError(MatGenError):
    """Valori non finiti (NaN/inf) in una griglia."""


class MaterialIOError(MatGenError):
    """File mappa/manifest illeggibile o incoerente."""


def exit_code_for(e: BaseException) -> int:
    """Codice di uscita CLI: 1 validazione, 2 errore a runtime."""
    return getattr(e, "exit_code", 2)

# ============================================================================
# DECORATOR
# ============================================================================

def log_errors(operation_name: str = None, reraise: bool = True):
    """
    Decorator per logging dettagliato degli errori.

    Args:
        operation_name: Nome dell'operazione (se None, usa il nome della funzione)
        reraise: Se True, rilancia l'eccezione dopo averla loggata
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            op_name = operation_name or func.__name__
            try:
                return func(*args, **kwargs)
            except ValidationError as e:
                # errori attesi: niente traceback
                logger.error(f"❌ Errore in '{op_name}': {type(e).__name__}: {e}")
                if reraise:
                    raise
                return None
            except Exception as e:
                logger.error(
                    f"❌ Errore in '{op_name}': {type(e).__name__}: {e}",
                    exc_info=True
                )
                if reraise:
                    raise
                return None
        return wrapper
    return decorator

# ============================================================================
# UTILITY FUNCTIONS
# ============================================================================

def format_exception(e: Exception, include_traceback: bool = False) -> str:
    """
    Formatta un'eccezione in una stringa leggibile.

    Args:
        e: L'eccezione da formattare
        include_traceback: Se includere il traceback completo
    """
    msg = f"{type(e).__name__}: {e}"
    if include_traceback:
        tb = "".join(traceback.format_exception(type(e), e, e.__traceback__))
        msg += f"\nTraceback:\n{tb}"
    return msg


def log_validation_error(field: str, value: Any, expected: str = None):
    """
    Log specifico per errori di validazione.

    Args:
        field: Campo che non ha passato la validazione
        value: Valore ricevuto
        expected: Vincolo atteso
    """
    expected_str = f" (atteso: {expected})" if expected else ""
    logger.warning(f"📝 Errore validazione campo '{field}'{expected_str}: valore={value!r}")


def require(condition: bool, message: str, field: str = None, value: Any = None,
            error: type = ValidationError):
    """Solleva `error(message)` se la condizione e' falsa, loggando il campo."""
    if condition:
        return
    if field is not None:
        log_validation_error(field, value, message)
    raise error(message)

# End error_handlers.py
