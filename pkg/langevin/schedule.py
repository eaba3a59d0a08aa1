"""
Sucesiones de pasos η_k, tiempos acumulados t_n y sus condiciones.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import linregress

from .choices import ScheduleKind
from .exceptions import ArgumentError, ConfigurationError

logger = logging.getLogger(__name__)

# tolerancia relativa para reconocer un tiempo de la malla
GRID_RTOL = 1e-9


@dataclass(frozen=True)
class StepSchedule:
    """
    Pasos η_k = eta (constante) o η_k = eta / k^alpha (polinomial, 0 < alpha < 1).

    ``omega`` y ``theta`` son los parámetros de las condiciones sobre los pasos;
    ``burn_in`` es el primer índice desde el que se exigen.
    """

    kind: str = ScheduleKind.CONSTANT
    eta: float = 0.1
    alpha: float = 0.0
    omega: float = 0.5
    theta: float = 1.0
    burn_in: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'kind', ScheduleKind(self.kind))
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ConfigurationError(f"El paso inicial debe ser positivo (recibido {self.eta})")
        if self.kind == ScheduleKind.POLYNOMIAL and not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha debe estar en (0, 1) (recibido {self.alpha})")
        if self.omega <= 0 or self.theta <= 0:
            raise ConfigurationError("omega y theta deben ser positivos")
        if self.burn_in < 0:
            raise ConfigurationError("burn_in no puede ser negativo")

    @classmethod
    def constant(cls, eta, **kwargs):
        return cls(ScheduleKind.CONSTANT, eta, **kwargs)

    @classmethod
    def polynomial(cls, eta, alpha, **kwargs):
        return cls(ScheduleKind.POLYNOMIAL, eta, alpha, **kwargs)

    def with_theta(self, theta):
        return replace(self, theta=float(theta))


def eta(s, k):
    """η_k para k >= 1."""
    if int(k) != k or k < 1:
        raise ArgumentError(f"El índice del paso debe ser >= 1 (recibido {k})")
    if s.kind == ScheduleKind.CONSTANT:
        return s.eta
    return s.eta / k ** s.alpha


def etas(s, n, start=1):
    """Vector (η_start, ..., η_{start+n-1})."""
    if n < 0:
        raise ArgumentError("n no puede ser negativo")
    if s.kind == ScheduleKind.CONSTANT:
        return np.full(n, s.eta)
    k = np.arange(start, start + n, dtype=float)
    return s.eta / k ** s.alpha


def cumulative_time(s, n):
    """t_n = η_1 + ... + η_n, con t_0 = 0."""
    if n < 0:
        raise ArgumentError("n no puede ser negativo")
    if n == 0:
        return 0.0
    return math.fsum(etas(s, n))


def time_grid(s, n):
    """(t_0, t_1, ..., t_n)."""
    return np.concatenate([[0.0], np.cumsum(etas(s, n))])


def index_of_time(s, t):
    """
    Índice n tal que t_n = t.

    Raises:
        ArgumentError: si t no cae en la malla.
    """
    if t < 0:
        raise ArgumentError(f"El tiempo no puede ser negativo (recibido {t})")
    if t == 0:
        return 0
    if s.kind == ScheduleKind.CONSTANT:
        n = round(t / s.eta)
        if n >= 1 and math.isclose(cumulative_time(s, n), t, rel_tol=GRID_RTOL):
            return n
        raise ArgumentError(f"El tiempo {t} no pertenece a la malla de pasos {s.eta}")
    offset, total, chunk = 0, 0.0, 4096
    while True:
        times = total + np.cumsum(etas(s, chunk, start=offset + 1))
        hit = np.flatnonzero(np.isclose(times, t, rtol=GRID_RTOL, atol=0.0))
        if hit.size:
            return offset + int(hit[0]) + 1
        if times[-1] > t:
            raise ArgumentError(f"El tiempo {t} no pertenece a la malla polinomial")
        offset, total, chunk = offset + chunk, times[-1], chunk * 2


@dataclass
class Assumption3Report:
    """Resultado de ``check_assumption3``."""

    passed: bool
    n0: int
    regime: str
    k_max: int
    burn_in: int
    step_bound: float
    worst_step_margin: float
    worst_difference_margin: float

    def as_dict(self):
        return dict(self.__dict__)


def _check_omega(theta, omega):
    if not 0 < omega < 2 * theta:
        raise ConfigurationError(f"omega debe estar en (0, 2θ) = (0, {2 * theta}) (recibido {omega})")


def check_assumption3(s, k_max):
    """
    Verifica η_k <= (2θ − ω)/(2θ²) y η_{k-1} − η_k <= ω·η_k² para k <= k_max.

    Para k = 1 se toma η_0 = η_1. ``n0`` es el menor índice a partir del cual
    ambas condiciones valen hasta k_max. El régimen es ``from_start`` (n0 = 1),
    ``eventual`` (1 < n0 <= k_max) o ``violated``. Pasa si n0 <= max(burn_in, 1).
    """
    theta, omega = s.theta, s.omega
    _check_omega(theta, omega)
    if k_max < 1:
        raise ArgumentError("k_max debe ser >= 1")
    steps = etas(s, k_max)
    previous = np.concatenate([steps[:1], steps[:-1]])
    bound = (2 * theta - omega) / (2 * theta ** 2)
    step_margin = bound - steps
    difference_margin = omega * steps ** 2 - (previous - steps)
    failing = np.flatnonzero((step_margin < 0) | (difference_margin < 0))
    n0 = 1 if failing.size == 0 else int(failing[-1]) + 2
    if n0 == 1:
        regime = 'from_start'
    elif n0 <= k_max:
        regime = 'eventual'
    else:
        regime = 'violated'
    passed = n0 <= max(s.burn_in, 1)
    if not passed:
        logger.warning("Pasos fuera de condición hasta k=%d (régimen %s)", n0 - 1, regime)
    tail = slice(n0 - 1, None)
    return Assumption3Report(
        passed=passed,
        n0=n0,
        regime=regime,
        k_max=int(k_max),
        burn_in=s.burn_in,
        step_bound=bound,
        worst_step_margin=float(step_margin[tail].min()) if n0 <= k_max else float(step_margin.min()),
        worst_difference_margin=(
            float(difference_margin[tail].min()) if n0 <= k_max else float(difference_margin.min())
        ),
    )


@dataclass
class WeightedSum:
    """Suma Σ η_k^{1+ε} e^{-θ(t_n − t_k)} separada en cabeza (k < start) y cola."""

    value: float
    head: float
    bound: float
    start: int

    @property
    def holds(self):
        return self.value <= self.bound

    def as_dict(self):
        return {'value': self.value, 'head': self.head, 'bound': self.bound, 'start': self.start, 'holds': self.holds}


def weighted_sum(s, n, eps, theta=None, start=1):
    """
    Suma ponderada de pasos y su cota 4/(2θ − (4ε − 1)ω)·η_n^ε.

    Args:
        s (StepSchedule): pasos.
        n (int): último índice.
        eps (float): exponente en [0, 1/2].
        theta (float | None): tasa; por defecto ``s.theta``.
        start (int): primer índice de la cola (n0 si las condiciones valen solo a la larga).

    Raises:
        ConfigurationError: si ω no está en (0, 2θ).
    """
    if not 0 <= eps <= 0.5:
        raise ArgumentError(f"eps debe estar en [0, 1/2] (recibido {eps})")
    if n < 1:
        raise ArgumentError("n debe ser >= 1")
    if not 1 <= start <= n:
        raise ArgumentError(f"start debe estar en [1, n] (recibido {start})")
    theta = s.theta if theta is None else theta
    _check_omega(theta, s.omega)
    steps = etas(s, n)
    # t_n − t_k = η_{k+1} + ... + η_n
    remaining = np.concatenate([np.cumsum(steps[::-1])[::-1][1:], [0.0]])
    terms = steps ** (1 + eps) * np.exp(-theta * remaining)
    bound = 4.0 / (2 * theta - (4 * eps - 1) * s.omega) * steps[-1] ** eps
    return WeightedSum(
        value=math.fsum(terms[start - 1:]),
        head=math.fsum(terms[:start - 1]),
        bound=bound,
        start=start,
    )


def theta_from_contraction(times, distances, fit_start=2.0):
    """
    Tasa θ estimada como −pendiente de log(distancia) frente a t para t >= fit_start.

    Raises:
        ConfigurationError: si la traza no contrae.
    """
    times = np.asarray(times, dtype=float)
    distances = np.asarray(distances, dtype=float)
    window = (times >= fit_start) & (distances > 0)
    if window.sum() < 3:
        raise ConfigurationError("La traza de acoplamiento no tiene puntos suficientes para estimar θ")
    slope = linregress(times[window], np.log(distances[window])).slope
    if not slope < 0:
        raise ConfigurationError(f"La traza de acoplamiento no contrae (pendiente {slope:.4g})")
    return float(-slope)
