"""
Función de Lyapunov V(m, x), su generador y hechos de la distribución estacionaria.

V(m, x) = f(x) + (γ²/4)(|x + m/γ|² + |m/γ|² − λ|x|²)
        = f(x) + (|γx + m|² + |m|² − λγ²|x|²)/4

La segunda forma es la que se evalúa: no divide por γ.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .dynamics import State
from .exceptions import ConfigurationError, UnsupportedObjectiveError
from .objective import AssumptionReport, CosinePerturbedQuadratic, QuadraticWell, margin_check, sample_ball

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LyapunovParams:
    """λ y Å de la desigualdad de deriva."""

    lam: float
    ring_a: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError(f"λ debe ser positivo (recibido {self.lam})")
        if not self.ring_a >= 0:
            raise ConfigurationError(f"Å no puede ser negativo (recibido {self.ring_a})")

    @staticmethod
    def max_lambda(constants, gamma):
        return min(0.25, constants.a / (4 * constants.L + gamma ** 2))

    @staticmethod
    def min_ring_a(constants, lam):
        return constants.K + 2 * lam * (constants.B ** 2 / (2 * constants.L) + constants.A)

    @classmethod
    def default(cls, constants, gamma):
        """Mayor λ admisible y menor Å compatible."""
        lam = cls.max_lambda(constants, gamma)
        return cls(lam, cls.min_ring_a(constants, lam))

    def validate(self, constants, gamma):
        if self.lam > self.max_lambda(constants, gamma):
            raise ConfigurationError(
                f"λ={self.lam} supera min(1/4, a/(4L + γ²)) = {self.max_lambda(constants, gamma):.6g}"
            )
        if self.ring_a < self.min_ring_a(constants, self.lam):
            raise ConfigurationError(f"Å={self.ring_a} es menor que {self.min_ring_a(constants, self.lam):.6g}")
        return self


def _sq(v):
    return np.sum(np.square(v), axis=-1)


def _dot(u, v):
    return np.sum(u * v, axis=-1)


def lyapunov_value(p, lp, obj, s):
    """V(m, x) en el estado ``s`` (admite lotes)."""
    return potential(p, lp, obj)(s.m, s.x)


def potential(p, lp, obj):
    """V como función vectorizada de (m, x)."""
    gamma = p.gamma

    def value(m, x):
        m, x = np.asarray(m, dtype=float), np.asarray(x, dtype=float)
        return obj.value(x) + 0.25 * (_sq(gamma * x + m) + _sq(m) - lp.lam * gamma ** 2 * _sq(x))

    return value


def lyapunov_gradients(p, lp, obj, s):
    """(∇_m V, ∇_x V) en forma cerrada."""
    gamma = p.gamma
    grad_m = s.m + 0.5 * gamma * s.x
    grad_x = obj.grad(s.x) + 0.5 * gamma ** 2 * (1 - lp.lam) * s.x + 0.5 * gamma * s.m
    return grad_m, grad_x


def generator_apply_V(p, lp, obj, s):
    """𝒜V = −⟨∇_m V, γm + ∇f(x)⟩ + ⟨∇_x V, m⟩ + β²d/2."""
    grad_m, grad_x = lyapunov_gradients(p, lp, obj, s)
    drift = p.gamma * s.m + obj.grad(s.x)
    return -_dot(grad_m, drift) + _dot(grad_x, s.m) + 0.5 * p.beta ** 2 * s.dim


def drift_constant(p, lp, dim):
    """(γÅ + dβ²)/2."""
    return 0.5 * (p.gamma * lp.ring_a + dim * p.beta ** 2)


@dataclass
class DriftReport:
    """Informe de la desigualdad 𝒜V <= −λγV + (γÅ + dβ²)/2."""

    points: int
    worst_margin: float
    violating_points: list

    @property
    def passed(self):
        return not self.violating_points

    def as_dict(self):
        return {'points': self.points, 'worst_margin': self.worst_margin,
                'violating_points': self.violating_points, 'passed': self.passed}


def _phase_points(obj, sample_count, radius, seed):
    z = sample_ball(np.random.default_rng(seed), sample_count, 2 * obj.dim, radius)
    return State(z[:, :obj.dim], z[:, obj.dim:])


def drift_check(p, lp, obj, sample_count, radius, seed=0, tolerance=1e-9):
    """
    Evalúa la desigualdad de deriva en puntos uniformes de la bola de radio ``radius``.

    Un punto viola la desigualdad si su margen es menor que
    −tolerance·(1 + |𝒜V| + λγV).
    """
    s = _phase_points(obj, sample_count, radius, seed)
    generator = generator_apply_V(p, lp, obj, s)
    contraction = lp.lam * p.gamma * lyapunov_value(p, lp, obj, s)
    margins = drift_constant(p, lp, obj.dim) - contraction - generator
    allowed = -tolerance * (1 + np.abs(generator) + np.abs(contraction))
    bad = np.flatnonzero(margins < allowed)
    violating = [{'m': s.m[i].tolist(), 'x': s.x[i].tolist(), 'margin': float(margins[i])} for i in bad[:20]]
    if bad.size:
        logger.warning("Desigualdad de deriva violada en %d de %d puntos", bad.size, sample_count)
    return DriftReport(int(sample_count), float(margins.min()), violating)


def lyapunov_bounds_check(p, lp, obj, sample_count, radius, seed=0):
    """V >= max{(1 − 2λ)/(4(1 − λ))·|m|², (γ²/8)(1 − 2λ)|x|²}."""
    s = _phase_points(obj, sample_count, radius, seed)
    value = lyapunov_value(p, lp, obj, s)
    lam = lp.lam
    lower = np.maximum((1 - 2 * lam) / (4 * (1 - lam)) * _sq(s.m), p.gamma ** 2 / 8 * (1 - 2 * lam) * _sq(s.x))

    def witness(i):
        return {'m': s.m[i].tolist(), 'x': s.x[i].tolist()}

    return AssumptionReport([
        margin_check('lyapunov_nonnegative', value, value, witness),
        margin_check('lyapunov_lower_bound', value - lower, value, witness),
    ])


def dissipativity_check(obj, lp, p, sample_count, radius, seed=0):
    """
    ⟨x, ∇f(x)⟩ >= a|x|²/2 − K >= 2λ(f(x) + γ²|x|²/4) − Å en puntos de la bola.
    """
    c = obj.constants
    xs = sample_ball(np.random.default_rng(seed), sample_count, obj.dim, radius)
    norm2 = _sq(xs)
    inner = _dot(xs, obj.grad(xs))
    middle = 0.5 * c.a * norm2 - c.K
    upper = 2 * lp.lam * (obj.value(xs) + 0.25 * p.gamma ** 2 * norm2) - lp.ring_a

    def witness(i):
        return {'x': xs[i].tolist()}

    return AssumptionReport([
        margin_check('dissipativity_lower', inner - middle, inner, witness),
        margin_check('dissipativity_lyapunov', middle - upper, middle, witness),
    ])


def quadratic_sandwich_check(obj, sample_count, radius, seed=0):
    """a|x|²/2 − (K/2)·log 3 <= f(x) <= L|x|² + B²/(2L) + A."""
    c = obj.constants
    xs = sample_ball(np.random.default_rng(seed), sample_count, obj.dim, radius)
    norm2 = _sq(xs)
    f = obj.value(xs)

    def witness(i):
        return {'x': xs[i].tolist()}

    return AssumptionReport([
        margin_check('sandwich_lower', f - (0.5 * c.a * norm2 - 0.5 * c.K * math.log(3)), f, witness),
        margin_check('sandwich_upper', c.L * norm2 + c.B ** 2 / (2 * c.L) + c.A - f, f, witness),
    ])


def stationary_log_density(p, obj, s):
    """log π(m, x) sin normalizar: −(γ/β²)(|m|² + 2f(x))."""
    if not p.beta > 0:
        raise ConfigurationError("La densidad estacionaria requiere β > 0")
    return -(p.gamma / p.beta ** 2) * (_sq(s.m) + 2 * obj.value(s.x))


def stationary_moments(p, obj):
    """
    Varianzas estacionarias por coordenada de m y de x.

    Var(m) = β²/(2γ) siempre. Var(x) es β²/(2γs) para el pozo cuadrático y
    sale de cuadratura unidimensional para la cuadrática perturbada.
    """
    if not (p.gamma > 0 and p.beta > 0):
        raise ConfigurationError("Los momentos estacionarios requieren γ > 0 y β > 0")
    var_m = p.beta ** 2 / (2 * p.gamma)
    if isinstance(obj, QuadraticWell):
        var_x = p.beta ** 2 / (2 * p.gamma * obj.scale)
    elif isinstance(obj, CosinePerturbedQuadratic):
        weight = 2 * p.gamma / p.beta ** 2

        def density(t):
            return math.exp(-weight * (0.5 * obj.scale * t * t + obj.amplitude * (1 - math.cos(t))))

        mass = quad(density, -np.inf, np.inf)[0]
        var_x = quad(lambda t: t * t * density(t), -np.inf, np.inf)[0] / mass
    else:
        raise UnsupportedObjectiveError(f"Sin momentos estacionarios conocidos para {obj!r}")
    return {'var_m': var_m, 'var_x': var_x}


@dataclass(frozen=True)
class MomentEnvelope:
    """e^{−rate·t}·V0 + ĉ·d."""

    v0: float
    rate: float
    c_hat: float
    dim: int

    def bound(self, t):
        return np.exp(-self.rate * np.asarray(t, dtype=float)) * self.v0 + self.c_hat * self.dim

    def violations(self, times, means, factor=1.0):
        """Índices donde la media observada supera factor·envolvente."""
        return np.flatnonzero(np.asarray(means) > factor * self.bound(times))


def calibrate_envelope(times, means, v0, rate, dim):
    """
    Ajusta ĉ una sola vez sobre una corrida de calibración.

    ĉ es el menor valor con el que la envolvente cubre toda la traza de
    medias y nunca es menor que la media tardía de V dividida por d.
    """
    times, means = np.asarray(times, dtype=float), np.asarray(means, dtype=float)
    residual = np.max(means - np.exp(-rate * times) * v0)
    late = means[-max(1, len(means) // 4):].mean()
    c_hat = max(residual, late, 0.0) / dim
    return MomentEnvelope(float(v0), float(rate), float(c_hat), int(dim))


@dataclass(frozen=True)
class GronwallEnvelope:
    """e^{−λγt}V0 + (γÅ + dβ²)/(2λγ)·(1 − e^{−λγt})."""

    v0: float
    rate: float
    level: float

    def bound(self, t):
        decay = np.exp(-self.rate * np.asarray(t, dtype=float))
        return decay * self.v0 + self.level * (1 - decay)


def gronwall_envelope(p, lp, v0, dim):
    rate = lp.lam * p.gamma
    return GronwallEnvelope(float(v0), rate, drift_constant(p, lp, dim) / rate)
