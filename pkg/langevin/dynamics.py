"""
Sistemas estocásticos sobre el espacio de fases (m, x).

- SGD con momento (``sgdm_step``).
- Sistema intermedio con coeficientes congelados en t_k (``intermediate_step``).
- Difusión de Langevin subamortiguada por Euler-Maruyama fino (``langevin_em_step``).
- Transición gaussiana exacta para el pozo cuadrático (``exact_ou_step``).

Toda la aleatoriedad sale de ``NoiseStream``: dos sistemas con la misma semilla
en modo ``brownian_derived`` recorren el mismo camino browniano.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy.linalg import expm, solve_continuous_lyapunov

from . import schedule as schedules
from .choices import NoiseMode, System
from .conf import lab_setting
from .exceptions import ArgumentError, ConfigurationError, DomainError, NumericalBlowupError, UnsupportedObjectiveError
from .metrics import Ensemble
from .objective import QuadraticWell, _minibatch_grad

logger = logging.getLogger(__name__)

# límite de dt·|autovalor| para el exponencial aumentado
VAN_LOAN_MAX_EXPONENT = 10.0


@dataclass(frozen=True)
class ModelParams:
    """Fricción γ, temperatura β, tamaño de minilote N y dimensión d."""

    gamma: float
    beta: float
    batch_size: int = 1
    dim: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ConfigurationError(f"gamma debe ser no negativo (recibido {self.gamma})")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ConfigurationError(f"beta debe ser no negativo (recibido {self.beta})")
        if self.batch_size < 1:
            raise ConfigurationError(f"El minilote debe tener al menos un elemento (recibido {self.batch_size})")
        if self.dim < 1:
            raise ConfigurationError(f"La dimensión debe ser positiva (recibido {self.dim})")

    @staticmethod
    def friction_threshold(constants):
        """√2·(2L + a)/√a."""
        return math.sqrt(2) * (2 * constants.L + constants.a) / math.sqrt(constants.a)

    def check_friction(self, constants):
        threshold = self.friction_threshold(constants)
        if not self.gamma > threshold:
            raise ConfigurationError(
                f"La fricción γ={self.gamma} no supera el umbral de contracción {threshold:.4g}"
            )


@dataclass
class State:
    """Momento m y posición x; admite ejes iniciales (varias trayectorias)."""

    m: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.m.shape != self.x.shape or self.m.ndim == 0:
            raise ArgumentError(f"m y x deben tener la misma forma ({self.m.shape} frente a {self.x.shape})")
        if not (np.all(np.isfinite(self.m)) and np.all(np.isfinite(self.x))):
            raise DomainError("El estado contiene valores no finitos")

    @property
    def dim(self):
        return self.m.shape[-1]

    def stacked(self):
        return np.concatenate([self.m, self.x], axis=-1)

    @classmethod
    def from_stacked(cls, z):
        z = np.asarray(z, dtype=float)
        half = z.shape[-1] // 2
        return cls(z[..., :half], z[..., half:])


@dataclass
class StepDraws:
    """Extracciones de un paso: minilote ξ, ζ, incremento ΔB y subincrementos finos."""

    batch: np.ndarray | None
    zeta: np.ndarray
    dB: np.ndarray
    fine: np.ndarray


def derive_seed(seed, *key):
    """Semilla entera independiente derivada de (seed, key)."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


class NoiseStream:
    """
    Flujo reproducible de extracciones.

    Cada subflujo (``substream``) es un generador PCG64 independiente; el
    cursor cuenta los pasos consumidos. Dentro de un paso el minilote se
    extrae antes que las gaussianas.
    """

    def __init__(self, seed, mode=NoiseMode.BROWNIAN, key=()):
        self.seed = int(seed)
        self.mode = NoiseMode(mode)
        self.key = tuple(int(k) for k in key)
        self.cursor = 0
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.rng = np.random.Generator(np.random.PCG64(sequence))

    def substream(self, *index):
        return NoiseStream(self.seed, self.mode, self.key + tuple(index))

    def gaussian(self, shape):
        return self.rng.standard_normal(shape)

    def draw(self, eta, shape, noise=None, batch_size=0, substeps=1):
        """
        Extracciones de un paso de tamaño ``eta`` para estados de forma ``shape``.

        En modo ``brownian_derived`` ζ = ΔB/√η con ΔB la suma de los
        ``substeps`` incrementos finos; en ``independent_normals`` ζ es
        independiente del camino browniano.
        """
        shape = tuple(shape)
        batch = None
        if noise is not None and batch_size > 0:
            batch = noise.sample(self.rng, shape[:-1] + (batch_size, shape[-1]))
        fine = math.sqrt(eta / substeps) * self.rng.standard_normal((substeps,) + shape)
        dB = fine.sum(axis=0) if substeps > 1 else fine[0]
        if self.mode == NoiseMode.BROWNIAN:
            zeta = dB / math.sqrt(eta)
        else:
            zeta = self.rng.standard_normal(shape)
        self.cursor += 1
        return StepDraws(batch, zeta, dB, fine)


def _check_step(m, x, step):
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(x))):
        raise NumericalBlowupError(step)
    return State(m, x)


def _sgdm_update(m, x, eta, p, obj, noise, zeta, batch):
    m_next = m - p.gamma * eta * m - eta * _minibatch_grad(obj, noise, x, batch) + p.beta * (math.sqrt(eta) * zeta)
    return m_next, x + eta * m


def _intermediate_update(m, x, eta, p, obj, noise, dB, batch):
    m_next = m - p.gamma * eta * m - eta * _minibatch_grad(obj, noise, x, batch) + p.beta * dB
    return m_next, x + eta * m


def _em_update(m, x, delta, p, obj, dB):
    m_next = m - delta * (p.gamma * m + obj.grad(x)) + p.beta * dB
    return m_next, x + delta * m


def sgdm_step(s, eta, p, obj, noise, zeta, batch, step=None):
    """
    Un paso de SGD con momento.

    m' = m − γη·m − η·ĝ(x) + β√η·ζ y x' = x + η·m, con ĝ la media del
    minilote. La posición usa el momento anterior.
    """
    if not eta > 0:
        raise ArgumentError(f"El paso debe ser positivo (recibido {eta})")
    with np.errstate(all='ignore'):
        m, x = _sgdm_update(s.m, s.x, eta, p, obj, noise, np.asarray(zeta, dtype=float), np.asarray(batch, dtype=float))
    return _check_step(m, x, step)


def intermediate_step(s, eta, p, obj, noise, dB, batch, step=None):
    """Paso del sistema intermedio: como ``sgdm_step`` con β·ΔB en lugar de β√η·ζ."""
    if not eta > 0:
        raise ArgumentError(f"El paso debe ser positivo (recibido {eta})")
    with np.errstate(all='ignore'):
        m, x = _intermediate_update(s.m, s.x, eta, p, obj, noise, np.asarray(dB, dtype=float), np.asarray(batch, dtype=float))
    return _check_step(m, x, step)


def langevin_em_step(s, delta, p, obj, dB, step=None):
    """Subpaso de Euler-Maruyama: ∇f se evalúa en la x actual."""
    if not delta > 0:
        raise ArgumentError(f"El subpaso debe ser positivo (recibido {delta})")
    with np.errstate(all='ignore'):
        m, x = _em_update(s.m, s.x, delta, p, obj, np.asarray(dB, dtype=float))
    return _check_step(m, x, step)


def quadratic_scale(obj):
    if not isinstance(obj, QuadraticWell):
        raise UnsupportedObjectiveError(
            f"La transición gaussiana exacta solo existe para el pozo cuadrático, no para {obj!r}"
        )
    return obj.scale


def drift_matrix(gamma, scale, dim=1):
    """D = [[−γI, −sI], [I, 0]] sobre (m, x)."""
    block = np.array([[-gamma, -scale], [1.0, 0.0]])
    return np.kron(block, np.eye(dim))


def drift_rate(gamma, scale):
    """Mayor parte real de los autovalores de la matriz de deriva."""
    return float(np.max(np.linalg.eigvals(drift_matrix(gamma, scale)).real))


@lru_cache(maxsize=256)
def ou_transition(dt, gamma, scale, beta, dim):
    """
    Matriz de transición Φ = exp(dt·D) y raíz simétrica de la covarianza.

    La covarianza ∫_0^dt exp(uD)·Q·exp(uDᵀ) du, con Q = diag(β²I, 0), sale
    del exponencial de la matriz aumentada [[−D, Q], [0, Dᵀ]]·dt. Para dt
    largo y deriva estable se usa Σ∞ − Φ·Σ∞·Φᵀ, con Σ∞ la solución de
    D·Σ + Σ·Dᵀ + Q = 0; el exponencial aumentado pierde precisión ahí.
    """
    size = 2 * dim
    D = drift_matrix(gamma, scale, dim)
    Q = np.zeros((size, size))
    Q[:dim, :dim] = beta ** 2 * np.eye(dim)
    phi = expm(D * dt)
    spectrum = np.linalg.eigvals(D)
    if dt * np.max(np.abs(spectrum)) > VAN_LOAN_MAX_EXPONENT and np.max(spectrum.real) < 0:
        stationary = solve_continuous_lyapunov(D, -Q)
        cov = stationary - phi @ stationary @ phi.T
    else:
        augmented = np.zeros((2 * size, 2 * size))
        augmented[:size, :size] = -D
        augmented[:size, size:] = Q
        augmented[size:, size:] = D.T
        blocks = expm(augmented * dt)
        cov = phi @ blocks[:size, size:]
    cov = 0.5 * (cov + cov.T)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    root = (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T
    phi.setflags(write=False)
    root.setflags(write=False)
    return phi, root


def _ou_apply(z, dt, gamma, scale, beta, gauss):
    dim = z.shape[-1] // 2
    phi, root = ou_transition(float(dt), float(gamma), float(scale), float(beta), int(dim))
    return z @ phi.T + gauss @ root.T


def exact_ou_step(s, dt, p, scale, gauss):
    """
    Muestra la ley exacta de la difusión a tiempo dt para f(x) = s|x|²/2.

    ``scale`` es la curvatura s o un ``QuadraticWell``; ``gauss`` son 2d
    normales estándar.
    """
    if not isinstance(scale, (int, float)):
        scale = quadratic_scale(scale)
    if dt < 0:
        raise ArgumentError(f"dt no puede ser negativo (recibido {dt})")
    if dt == 0:
        return State(s.m.copy(), s.x.copy())
    return State.from_stacked(_ou_apply(s.stacked(), dt, p.gamma, scale, p.beta, np.asarray(gauss, dtype=float)))


def exact_ou_ensemble(init, t, p, scale, count, seed):
    """``count`` extracciones independientes de la ley exacta a tiempo t desde ``init``."""
    if not isinstance(scale, (int, float)):
        scale = quadratic_scale(scale)
    stream = NoiseStream(seed, key=(0,))
    z0 = np.broadcast_to(init.stacked(), (count, 2 * init.dim))
    if t == 0:
        return Ensemble(np.array(z0), time_label=0.0)
    points = _ou_apply(z0, t, p.gamma, scale, p.beta, stream.gaussian((count, 2 * init.dim)))
    return Ensemble(points, time_label=float(t))


@dataclass
class ContractionTrace:
    times: np.ndarray
    distances: np.ndarray

    def to_frame(self):
        return pd.DataFrame({'time': self.times, 'distance': self.distances})


def coupled_contraction_pair(s1, s2, horizon, delta, p, obj, stream):
    """
    Dos cadenas de Euler-Maruyama con los mismos incrementos brownianos.

    Devuelve la distancia en el espacio de fases en cada subpaso.
    """
    if not delta > 0 or horizon < 0:
        raise ArgumentError("delta debe ser positivo y el horizonte no negativo")
    steps = int(round(horizon / delta))
    m1, x1, m2, x2 = s1.m, s1.x, s2.m, s2.x
    distances = np.empty(steps + 1)
    distances[0] = math.hypot(np.linalg.norm(m1 - m2), np.linalg.norm(x1 - x2))
    sqrt_delta = math.sqrt(delta)
    with np.errstate(all='ignore'):
        for k in range(1, steps + 1):
            dB = sqrt_delta * stream.gaussian(m1.shape)
            m1, x1 = _em_update(m1, x1, delta, p, obj, dB)
            m2, x2 = _em_update(m2, x2, delta, p, obj, dB)
            distance = math.hypot(np.linalg.norm(m1 - m2), np.linalg.norm(x1 - x2))
            if not (math.isfinite(distance) and np.all(np.isfinite(x1)) and np.all(np.isfinite(m1))):
                raise NumericalBlowupError(k)
            distances[k] = distance
    return ContractionTrace(np.arange(steps + 1) * delta, distances)


@dataclass
class EnsembleRun:
    """Instantáneas de un conjunto de trayectorias y su registro de explosiones."""

    system: str
    seed: int
    snapshots: list = field(default_factory=list)
    blowup_steps: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def count(self):
        return len(self.blowup_steps)

    @property
    def blowup_count(self):
        return int(np.sum(self.blowup_steps >= 0))

    @property
    def blowup_fraction(self):
        return self.blowup_count / self.count if self.count else 0.0

    def final(self):
        return self.snapshots[-1]

    def to_frame(self):
        """Filas (time, trajectory_id, m_1..m_d, x_1..x_d) de todas las instantáneas."""
        frames = []
        for snapshot in self.snapshots:
            half = snapshot.dim // 2
            columns = [f'm_{i + 1}' for i in range(half)] + [f'x_{i + 1}' for i in range(half)]
            frame = pd.DataFrame(snapshot.points, columns=columns)
            frame.insert(0, 'trajectory_id', snapshot.trajectory_ids)
            frame.insert(0, 'time', snapshot.time_label)
            frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=['time', 'trajectory_id'])
        return pd.concat(frames, ignore_index=True)

    def manifest(self):
        return {
            'system': str(self.system),
            'seed': self.seed,
            'trajectories': self.count,
            'blowups': self.blowup_count,
            'record_times': [snapshot.time_label for snapshot in self.snapshots],
        }


def _fine_delta(step_sizes, fine_delta):
    if fine_delta is not None:
        return fine_delta
    return float(step_sizes.min()) / lab_setting('FINE_SUBSTEP_RATIO')


def _evolve_block(block, z0, ids, system, step_sizes, record_steps, p, obj, noise, stream, fine_delta):
    dim = z0.shape[-1] // 2
    count = len(z0)
    m, x = z0[:, :dim].copy(), z0[:, dim:].copy()
    blowup = np.full(count, -1, dtype=int)
    active = np.ones(count, dtype=bool)
    limit = lab_setting('BLOWUP_NORM')
    records = {}
    scale = quadratic_scale(obj) if system == System.EXACT_OU else None

    def snapshot(k):
        records[k] = (np.concatenate([m, x], axis=1)[active], ids[active])

    if 0 in record_steps:
        snapshot(0)
    if system == System.EXACT_OU:
        # la ley exacta permite saltar de un registro al siguiente
        previous = 0
        for k in sorted(s for s in record_steps if s > 0):
            dt = float(step_sizes[previous:k].sum())
            z = _ou_apply(np.concatenate([m, x], axis=1), dt, p.gamma, scale, p.beta, stream.gaussian((count, 2 * dim)))
            m, x = z[:, :dim], z[:, dim:]
            previous = k
            snapshot(k)
        return block, records, blowup

    last = max(record_steps)
    with np.errstate(all='ignore'):
        for k in range(1, last + 1):
            eta = float(step_sizes[k - 1])
            if system == System.LANGEVIN_EM:
                substeps = max(1, math.ceil(eta / fine_delta - 1e-9))
                draws = stream.draw(eta, m.shape, substeps=substeps)
                m_new, x_new = m, x
                for increment in draws.fine:
                    m_new, x_new = _em_update(m_new, x_new, eta / substeps, p, obj, increment)
            else:
                draws = stream.draw(eta, m.shape, noise, p.batch_size)
                if system == System.SGDM:
                    m_new, x_new = _sgdm_update(m, x, eta, p, obj, noise, draws.zeta, draws.batch)
                else:
                    m_new, x_new = _intermediate_update(m, x, eta, p, obj, noise, draws.dB, draws.batch)
            bad = ~(np.all(np.isfinite(m_new), axis=1) & np.all(np.isfinite(x_new), axis=1))
            bad |= np.hypot(np.linalg.norm(m_new, axis=1), np.linalg.norm(x_new, axis=1)) > limit
            bad &= active
            if bad.any():
                blowup[bad] = k
                active &= ~bad
                logger.warning("Explosión numérica en el paso %d: %d trayectorias congeladas", k, int(bad.sum()))
            m = np.where(active[:, None], m_new, m)
            x = np.where(active[:, None], x_new, x)
            if k in record_steps:
                snapshot(k)
    return block, records, blowup


def evolve_ensemble(init, system, schedule, p, obj, noise, seed, record_times,
                    mode=NoiseMode.BROWNIAN, fine_delta=None, threads=1):
    """
    Evoluciona un conjunto de trayectorias independientes.

    Args:
        init (Ensemble): estados iniciales.
        system (System): sistema a integrar.
        schedule (StepSchedule): pasos η_k.
        p (ModelParams): γ, β, N.
        obj (Objective): objetivo.
        noise (GradNoiseModel): ruido del gradiente.
        seed (int): semilla raíz.
        record_times (list[float]): tiempos t_n de la malla donde se toman instantáneas.
        mode (NoiseMode): relación entre ζ y el camino browniano.
        fine_delta (float | None): subpaso de Euler-Maruyama; por defecto η_min/64.
        threads (int): hilos de trabajo; no cambia el resultado.

    Returns:
        EnsembleRun: una instantánea por tiempo pedido, en orden creciente.

    Los bloques de ``ENSEMBLE_BLOCK_SIZE`` trayectorias usan el subflujo
    (seed, bloque). Una trayectoria que deja de ser finita o supera
    ``BLOWUP_NORM`` queda congelada y marcada con su paso.
    """
    system = System(system)
    record_steps = sorted({schedules.index_of_time(schedule, t) for t in record_times})
    if not record_steps:
        raise ArgumentError("Se necesita al menos un tiempo de registro")
    last = record_steps[-1]
    step_sizes = schedules.etas(schedule, last)
    delta = _fine_delta(step_sizes, fine_delta) if system == System.LANGEVIN_EM and last else None
    if system == System.EXACT_OU:
        quadratic_scale(obj)

    points = np.asarray(init.points, dtype=float)
    size = lab_setting('ENSEMBLE_BLOCK_SIZE')
    blocks = [(b, slice(start, start + size)) for b, start in enumerate(range(0, len(points), size))]
    root = NoiseStream(seed, mode)

    def work(item):
        b, rows = item
        ids = np.arange(len(points))[rows]
        return _evolve_block(b, points[rows], ids, system, step_sizes, set(record_steps),
                             p, obj, noise, root.substream(b), delta)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(work, blocks))

    grid = schedules.time_grid(schedule, last)
    snapshots = []
    for k in record_steps:
        parts = [records[k] for _, records, _ in results]
        stacked = np.concatenate([part[0] for part in parts]) if parts else np.empty((0, points.shape[1]))
        ids = np.concatenate([part[1] for part in parts]) if parts else np.empty(0, dtype=int)
        snapshots.append(Ensemble(stacked, time_label=float(grid[k]), trajectory_ids=ids,
                                  excluded=len(points) - len(ids)))
    blowup_steps = np.concatenate([b for _, _, b in results]) if results else np.empty(0, dtype=int)
    run = EnsembleRun(system, int(seed), snapshots, blowup_steps)
    if run.blowup_count:
        logger.warning("%s: %d de %d trayectorias explotaron", system, run.blowup_count, run.count)
    return run
