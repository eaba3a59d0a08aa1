"""
Funciones objetivo y modelos de gradiente estocástico.

Define el objetivo f(x) = E_ξ F(x, ξ), el gradiente ruidoso
∇F(x, ξ) = ∇f(x) + σ·ξ (ruido aditivo, independiente del estado) y el
registro de constantes (A, B, L, a, b, K, A0, q, A0', q', B1, B2) que las
demás piezas del laboratorio consumen. Las constantes se declaran y se
verifican por muestreo; nunca se estiman.
"""

import copy
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .choices import NoiseKind, ObjectiveKind
from .conf import lab_setting
from .exceptions import ArgumentError, ConfigurationError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectiveConstants:
    """
    Constantes declaradas de un objetivo y de su ruido de gradiente.

    Attributes:
        A (float): cota de |f(0)|.
        B (float): cota de |∇f(0)|.
        L (float): constante de Lipschitz de ∇f.
        a (float): pendiente de disipatividad.
        b (float): desplazamiento de disipatividad (puede ser 0).
        A0 (float): cota del momento q del ruido de gradiente.
        A0p (float): cota del momento q' del ruido de gradiente.
        B1 (float): cota del momento 8 de sup ||∇²F||.
        B2 (float): cota de las normas de operador de las terceras derivadas.
        q (float): orden del momento de A0 (q >= 2).
        qp (float): orden del momento de A0p (q' >= 4).
    """

    A: float
    B: float
    L: float
    a: float
    b: float
    A0: float
    A0p: float
    B1: float
    B2: float
    q: float = 2.0
    qp: float = 4.0

    def __post_init__(self):
        for name in ('A', 'B', 'b', 'A0', 'A0p', 'B1', 'B2'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"La constante {name} debe ser finita y no negativa (recibido {value})")
        for name in ('L', 'a'):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigurationError(f"La constante {name} debe ser positiva (recibido {value})")
        if self.q < 2:
            raise ConfigurationError(f"q debe ser >= 2 (recibido {self.q})")
        if self.qp < 4:
            raise ConfigurationError(f"q' debe ser >= 4 (recibido {self.qp})")

    @property
    def K(self):
        """K = b + B²/(2a)."""
        return self.b + self.B ** 2 / (2 * self.a)

    def as_dict(self):
        data = {name: getattr(self, name) for name in self.__dataclass_fields__}
        data['K'] = self.K
        return data


@dataclass(frozen=True)
class GradNoiseModel:
    """
    Ruido aditivo del gradiente: ∇F(x, ξ) = ∇f(x) + scale·ξ.

    ξ es normal estándar o Student-t estándar con ``dof`` grados de libertad.
    """

    kind: str = NoiseKind.GAUSSIAN
    scale: float = 1.0
    dof: float = 9.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', NoiseKind(self.kind))
        if not math.isfinite(self.scale) or self.scale < 0:
            raise ConfigurationError(f"La escala del ruido debe ser no negativa (recibido {self.scale})")
        if self.kind == NoiseKind.STUDENT_T and self.dof <= 4:
            raise ConfigurationError(f"Student-t requiere dof > 4 (recibido {self.dof})")

    def sample(self, rng, shape):
        """Extrae ξ con la forma pedida (las extracciones, no el ruido escalado)."""
        if self.kind == NoiseKind.STUDENT_T:
            return rng.standard_t(self.dof, size=shape)
        return rng.standard_normal(shape)

    def noise(self, xi):
        return self.scale * np.asarray(xi, dtype=float)

    def coordinate_moments(self):
        """Momentos (E ξ_i², E ξ_i⁴) de una coordenada de ξ."""
        if self.kind == NoiseKind.STUDENT_T:
            nu = self.dof
            return nu / (nu - 2), 3 * nu ** 2 / ((nu - 2) * (nu - 4))
        return 1.0, 3.0

    def moment_bound(self, q, dim):
        """
        (E|σξ|^q)^{1/q} en forma cerrada.

        Gaussiano: momento de la distribución chi. Student-t: exacto para q = 2;
        para 2 < q <= 4 devuelve el valor con q = 4, que lo acota por la
        desigualdad de Lyapunov.
        """
        if self.scale == 0:
            return 0.0
        if self.kind == NoiseKind.GAUSSIAN:
            log_moment = 0.5 * q * math.log(2) + gammaln((dim + q) / 2) - gammaln(dim / 2)
            return self.scale * math.exp(log_moment / q)
        mu2, mu4 = self.coordinate_moments()
        if q <= 2:
            return self.scale * math.sqrt(dim * mu2)
        if q <= 4:
            return self.scale * (dim * mu4 + dim * (dim - 1) * mu2 ** 2) ** 0.25
        raise ConfigurationError(f"Momento de orden {q} no disponible en forma cerrada para Student-t")


class Objective:
    """
    Base de los objetivos f: R^d -> [0, ∞).

    Todas las evaluaciones aceptan ejes iniciales (lotes de puntos) y operan
    sobre el último eje, de dimensión ``dim``.
    """

    kind = None

    def __init__(self, dim, constants=None, noise=None):
        if int(dim) != dim or dim < 1:
            raise ArgumentError(f"La dimensión debe ser un entero positivo (recibido {dim})")
        self.dim = int(dim)
        self.constants = constants if constants is not None else declare_constants(self, noise)

    def with_constants(self, **overrides):
        """Copia del objetivo con algunas constantes redeclaradas."""
        clone = copy.copy(self)
        clone.constants = replace(self.constants, **overrides)
        return clone

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ArgumentError(f"Se esperaba un vector de dimensión {self.dim}, forma recibida {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("El punto contiene valores no finitos")
        return x

    def minimizer(self):
        return np.zeros(self.dim)

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def third_derivative_norm(self, x):
        raise NotImplementedError

    def curvature_constants(self):
        """Constantes exactas que dependen solo de f (A, B, L, a, b, B1, B2)."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class QuadraticWell(Objective):
    """f(x) = s|x|²/2; constantes exactas L = a = s, b = 0, A = B = 0."""

    kind = ObjectiveKind.QUADRATIC_WELL

    def __init__(self, dim, scale=1.0, constants=None, noise=None):
        if not scale > 0:
            raise ConfigurationError(f"La curvatura debe ser positiva (recibido {scale})")
        self.scale = float(scale)
        super().__init__(dim, constants, noise)

    def value(self, x):
        return 0.5 * self.scale * np.sum(np.square(x), axis=-1)

    def grad(self, x):
        return self.scale * np.asarray(x, dtype=float)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.scale * np.eye(self.dim), x.shape + (self.dim,)).copy()

    def third_derivative_norm(self, x):
        return np.zeros(np.shape(x)[:-1])

    def curvature_constants(self):
        s = self.scale
        return dict(A=0.0, B=0.0, L=s, a=s, b=0.0, B1=s, B2=0.0)

    def __repr__(self):
        return f"QuadraticWell(dim={self.dim}, scale={self.scale})"


class CosinePerturbedQuadratic(Objective):
    """
    f(x) = s|x|²/2 + amp·Σ(1 − cos x_i), con 0 <= amp < s.

    No convexa en general pero disipativa: a = s − amp/2 y
    b = amp·d·max(2, 1 + L) satisfacen la desigualdad de disipatividad.
    """

    kind = ObjectiveKind.COSINE_PERTURBED

    def __init__(self, dim, scale=1.0, amplitude=0.1, constants=None, noise=None):
        if not scale > 0:
            raise ConfigurationError(f"La curvatura debe ser positiva (recibido {scale})")
        if not 0 <= amplitude < scale:
            raise ConfigurationError(
                f"La amplitud debe cumplir 0 <= amp < escala (recibido amp={amplitude}, escala={scale})"
            )
        self.scale = float(scale)
        self.amplitude = float(amplitude)
        super().__init__(dim, constants, noise)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        # 1 - cos t = 2 sin²(t/2), estable cerca de 0
        bump = 2.0 * np.square(np.sin(0.5 * x))
        return 0.5 * self.scale * np.sum(np.square(x), axis=-1) + self.amplitude * np.sum(bump, axis=-1)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale * x + self.amplitude * np.sin(x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        diagonal = self.scale + self.amplitude * np.cos(x)
        return diagonal[..., :, None] * np.eye(self.dim)

    def third_derivative_norm(self, x):
        # tensor diagonal: la norma de operador es el máximo de |amp·sin x_i|
        return self.amplitude * np.max(np.abs(np.sin(np.asarray(x, dtype=float))), axis=-1)

    def curvature_constants(self):
        s, amp = self.scale, self.amplitude
        L = s + amp
        return dict(A=0.0, B=0.0, L=L, a=s - amp / 2, b=amp * self.dim * max(2.0, 1.0 + L), B1=L, B2=amp)

    def __repr__(self):
        return f"CosinePerturbedQuadratic(dim={self.dim}, scale={self.scale}, amplitude={self.amplitude})"


def declare_constants(objective, noise=None, q=2.0, qp=4.0, **overrides):
    """
    Registro de constantes exactas para ``objective`` con ruido ``noise``.

    Args:
        objective (Objective): objetivo ya construido.
        noise (GradNoiseModel | None): ruido del gradiente; ``None`` equivale a ruido nulo.
        q (float): orden del momento de A0.
        qp (float): orden del momento de A0'.
        **overrides: constantes declaradas a mano (p. ej. ``L=0.5``).

    Returns:
        ObjectiveConstants: constantes listas para verificar.
    """
    values = objective.curvature_constants()
    if noise is not None:
        if noise.kind == NoiseKind.STUDENT_T and noise.dof <= qp:
            raise ConfigurationError(f"Student-t requiere dof > q' (dof={noise.dof}, q'={qp})")
        values['A0'] = noise.moment_bound(q, objective.dim)
        values['A0p'] = noise.moment_bound(qp, objective.dim)
    else:
        values['A0'] = values['A0p'] = 0.0
    values.update(q=float(q), qp=float(qp))
    values.update(overrides)
    return ObjectiveConstants(**values)


def build_objective(kind, dim, scale=1.0, amplitude=0.1, noise=None, q=2.0, qp=4.0, **overrides):
    """Construye un objetivo a partir del bloque de configuración."""
    kind = ObjectiveKind(kind)
    if kind == ObjectiveKind.QUADRATIC_WELL:
        objective = QuadraticWell(dim, scale=scale)
    else:
        objective = CosinePerturbedQuadratic(dim, scale=scale, amplitude=amplitude)
    objective.constants = declare_constants(objective, noise, q=q, qp=qp, **overrides)
    return objective


def grad_f(obj, x):
    """∇f(x); lanza ``DomainError`` si x no es finito."""
    return obj.grad(obj.check_point(x))


def stoch_grad(obj, noise, x, xi):
    """∇F(x, ξ) = ∇f(x) + σ·ξ."""
    x = obj.check_point(x)
    return obj.grad(x) + noise.noise(xi)


def minibatch_grad(obj, noise, x, batch):
    """
    Media de ``stoch_grad`` sobre un minilote.

    Args:
        x: punto(s) de forma (..., d).
        batch: extracciones ξ de forma (..., N, d), N >= 1.
    """
    x = obj.check_point(x)
    batch = np.asarray(batch, dtype=float)
    if batch.ndim < 2 or batch.shape[-2] == 0:
        raise ArgumentError("El minilote no puede estar vacío")
    return _minibatch_grad(obj, noise, x, batch)


def _minibatch_grad(obj, noise, x, batch):
    # sin validación: la usan los bucles de integración sobre estados ya congelados
    return obj.grad(x) + noise.scale * np.mean(batch, axis=-2)


def loss_sample(obj, noise, x, xi):
    """F(x, ξ) = f(x) + σ⟨ξ, x⟩, cuyo gradiente es ``stoch_grad``."""
    x = obj.check_point(x)
    return obj.value(x) + noise.scale * np.sum(np.asarray(xi, dtype=float) * x, axis=-1)


@dataclass
class CheckResult:
    """Resultado de una desigualdad verificada por muestreo."""

    name: str
    worst_margin: float
    passed: bool
    witness: dict | None = None
    points: int = 0

    def as_dict(self):
        return {
            'name': self.name,
            'worst_margin': self.worst_margin,
            'passed': self.passed,
            'witness': self.witness,
            'points': self.points,
        }


@dataclass
class AssumptionReport:
    """Lista de verificaciones con sus peores márgenes."""

    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    @property
    def failures(self):
        return [check for check in self.checks if not check.passed]

    def get(self, name):
        return next(check for check in self.checks if check.name == name)

    def as_dict(self):
        return {'passed': self.passed, 'checks': [check.as_dict() for check in self.checks]}


def sample_ball(rng, count, dim, radius):
    """Puntos uniformes en la bola de radio ``radius``."""
    directions = rng.standard_normal((count, dim))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    radii = radius * rng.random(count) ** (1.0 / dim)
    return directions * radii[:, None]


def margin_check(name, margins, scale, witnesses):
    """
    Arma un ``CheckResult`` a partir de márgenes puntuales.

    Un punto pasa si margin >= -tol·(1 + scale), con ``tol`` de ``LAB['CHECK_TOLERANCE']``.
    ``witnesses`` recibe el índice del peor punto y devuelve el testigo.
    """
    margins = np.atleast_1d(np.asarray(margins, dtype=float))
    scale = np.broadcast_to(np.abs(np.asarray(scale, dtype=float)), margins.shape)
    tolerance = lab_setting('CHECK_TOLERANCE')
    worst = int(np.argmin(margins))
    ok = margins >= -tolerance * (1.0 + scale)
    passed = bool(np.all(ok))
    witness = None if passed else witnesses(int(np.argmin(np.where(ok, np.inf, margins))))
    if not passed:
        logger.warning("Verificación '%s' fallida, peor margen %.3e", name, margins[worst])
    return CheckResult(name, float(margins[worst]), passed, witness, int(margins.size))


def _moment_check(name, bound, noise, rng, count, dim, q):
    draws = noise.noise(noise.sample(rng, (count, dim)))
    powers = np.linalg.norm(draws, axis=-1) ** q
    estimate = powers.mean()
    stderr = powers.std(ddof=1) / math.sqrt(count) if count > 1 else 0.0
    empirical = max(estimate - 5.0 * stderr, 0.0) ** (1.0 / q)
    margin = bound - empirical
    witness = {'empirical': empirical, 'declared': bound, 'q': q}
    return margin_check(name, [margin], [bound], lambda _: witness)


def verify_assumptions(obj, noise, sample_count, radius, seed=0):
    """
    Verifica por muestreo las constantes declaradas de ``obj``.

    Toma ``sample_count`` pares de puntos uniformes en la bola de radio
    ``radius`` y comprueba: no negatividad de f, cotas en el origen,
    suavidad (Lipschitz de ∇f), disipatividad, crecimiento lineal, los dos
    momentos del ruido, la cota del hessiano (L y B1) y la de terceras
    derivadas (B2). Una desigualdad violada aparece en el informe con su
    testigo; no se lanza ninguna excepción.

    Returns:
        AssumptionReport: peores márgenes por verificación.
    """
    if sample_count < 1:
        raise ArgumentError("sample_count debe ser >= 1")
    c = obj.constants
    rng = np.random.default_rng(seed)
    xs = sample_ball(rng, sample_count, obj.dim, radius)
    ys = sample_ball(rng, sample_count, obj.dim, radius)
    gx, gy = obj.grad(xs), obj.grad(ys)
    delta = xs - ys
    dist = np.linalg.norm(delta, axis=-1)

    def pair_witness(i):
        return {'x': xs[i].tolist(), 'y': ys[i].tolist()}

    def point_witness(i):
        return {'x': xs[i].tolist()}

    fx = obj.value(xs)
    grad_gap = np.linalg.norm(gx - gy, axis=-1)
    inner = np.sum(delta * (gx - gy), axis=-1)
    zero = np.zeros(obj.dim)
    f0, g0 = abs(float(obj.value(zero))), float(np.linalg.norm(obj.grad(zero)))
    hessian_norm = np.max(np.abs(np.linalg.eigvalsh(obj.hessian(xs))), axis=-1)
    third = obj.third_derivative_norm(xs)

    checks = [
        margin_check('nonnegativity', fx, fx, point_witness),
        margin_check('origin_value', [c.A - f0], [c.A], lambda _: {'f0': f0}),
        margin_check('origin_gradient', [c.B - g0], [c.B], lambda _: {'grad0': g0}),
        margin_check('smoothness', c.L * dist - grad_gap, c.L * dist, pair_witness),
        margin_check('dissipativity', inner - c.a * dist ** 2 + c.b, c.a * dist ** 2, pair_witness),
        margin_check(
            'linear_growth',
            c.L * np.linalg.norm(xs, axis=-1) + c.B - np.linalg.norm(gx, axis=-1),
            c.L * np.linalg.norm(xs, axis=-1),
            point_witness,
        ),
        _moment_check('gradient_noise_moment', c.A0, noise, rng, sample_count, obj.dim, c.q),
        _moment_check('gradient_noise_high_moment', c.A0p, noise, rng, sample_count, obj.dim, c.qp),
        margin_check('hessian_lipschitz', c.L - hessian_norm, c.L, point_witness),
        margin_check('hessian_moment', c.B1 - hessian_norm, c.B1, point_witness),
        margin_check('third_derivative', c.B2 - third, c.B2, point_witness),
    ]
    return AssumptionReport(checks)
