"""
Estimadores empíricos de distancias (W1, TV), momentos y ajuste de tasas.

Las distancias se calculan sobre el vector completo del espacio de fases
(m, x) concatenado.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import ot
from scipy.stats import linregress

from .choices import Functional
from .conf import lab_setting
from .exceptions import ArgumentError

logger = logging.getLogger(__name__)


@dataclass
class Ensemble:
    """
    Nube de puntos (m, x) en R^{2d} tomada en ``time_label``.

    ``trajectory_ids`` identifica de qué trayectoria sale cada fila y
    ``excluded`` cuenta las trayectorias descartadas por explosión.
    """

    points: np.ndarray
    time_label: float = 0.0
    trajectory_ids: np.ndarray | None = None
    excluded: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] % 2:
            raise ArgumentError(f"Se esperaba una matriz (n, 2d), forma recibida {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ArgumentError("El conjunto contiene puntos no finitos")
        if self.trajectory_ids is None:
            self.trajectory_ids = np.arange(len(self.points))

    @classmethod
    def from_arrays(cls, m, x, time_label=0.0):
        return cls(np.concatenate([np.atleast_2d(m), np.atleast_2d(x)], axis=1), time_label)

    @classmethod
    def point_mass(cls, m, x, count, time_label=0.0):
        """``count`` copias del punto (m, x)."""
        z = np.concatenate([np.ravel(m), np.ravel(x)])
        return cls(np.tile(z, (count, 1)), time_label)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def momenta(self):
        return self.points[:, :self.dim // 2]

    @property
    def positions(self):
        return self.points[:, self.dim // 2:]

    def head(self, count):
        return Ensemble(self.points[:count], self.time_label, self.trajectory_ids[:count], self.excluded)

    def summary(self):
        return {
            'time': self.time_label,
            'count': len(self),
            'excluded': self.excluded,
            'mean_m': self.momenta.mean(axis=0).tolist() if len(self) else [],
            'var_m': self.momenta.var(axis=0).tolist() if len(self) else [],
            'mean_x': self.positions.mean(axis=0).tolist() if len(self) else [],
            'var_x': self.positions.var(axis=0).tolist() if len(self) else [],
        }


def _as_cloud(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _check_equal_sizes(a, b):
    if len(a) != len(b):
        raise ArgumentError(f"Las muestras deben tener el mismo tamaño ({len(a)} frente a {len(b)})")
    if len(a) == 0:
        raise ArgumentError("Las muestras no pueden estar vacías")


def w1_1d(a, b):
    """W1 empírica exacta en una dimensión: media de |a_(i) − b_(i)|."""
    a = np.sort(np.ravel(np.asarray(a, dtype=float)))
    b = np.sort(np.ravel(np.asarray(b, dtype=float)))
    _check_equal_sizes(a, b)
    return float(np.mean(np.abs(a - b)))


def w1_exact_small(a, b):
    """
    W1 empírica por asignación óptima con coste euclídeo.

    Raises:
        ArgumentError: tamaños distintos o mayores que ``LAB['W1_EXACT_MAX']``.
    """
    a, b = _as_cloud(a), _as_cloud(b)
    _check_equal_sizes(a, b)
    limit = lab_setting('W1_EXACT_MAX')
    if len(a) > limit:
        raise ArgumentError(f"Asignación exacta limitada a {limit} puntos; use el estimador proyectado")
    weights = np.full(len(a), 1.0 / len(a))
    cost = ot.dist(a, b, metric='euclidean')
    return float(ot.emd2(weights, weights, cost))


def random_directions(k, n_proj, seed):
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((n_proj, k))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def w1_sliced(a, b, n_proj=None, seed=0):
    """Media de W1 en una dimensión sobre ``n_proj`` proyecciones aleatorias; cota inferior de W1."""
    a, b = _as_cloud(a), _as_cloud(b)
    _check_equal_sizes(a, b)
    n_proj = n_proj or lab_setting('SLICED_PROJECTIONS')
    if n_proj < 1:
        raise ArgumentError("Se necesita al menos una proyección")
    directions = random_directions(a.shape[1], n_proj, seed)
    pa = np.sort(a @ directions.T, axis=0)
    pb = np.sort(b @ directions.T, axis=0)
    return float(np.mean(np.abs(pa - pb)))


def w1(a, b, n_proj=None, seed=0):
    """W1 exacta si el tamaño lo permite, proyectada en otro caso. Devuelve (valor, estimador)."""
    if len(a) <= lab_setting('W1_EXACT_MAX'):
        return w1_exact_small(a, b), 'exact'
    return w1_sliced(a, b, n_proj, seed), 'sliced'


def default_box(a, b, stds=None):
    """Caja media ± ``stds`` desviaciones de la muestra conjunta."""
    stds = lab_setting('TV_BOX_STDS') if stds is None else stds
    pooled = np.concatenate([_as_cloud(a), _as_cloud(b)])
    center, spread = pooled.mean(axis=0), pooled.std(axis=0)
    return [(c - stds * s, c + stds * s) for c, s in zip(center, spread)]


def tv_histogram(a, b, bins_per_axis=None, range_box=None):
    """
    TV entre histogramas: (1/2)·Σ |p̂_a − p̂_b| sobre las celdas y una celda de desborde.

    Args:
        a, b: muestras en R^k con k <= 2.
        bins_per_axis (int): celdas por eje; por defecto ``LAB['TV_BINS']``.
        range_box (list[tuple]): (inf, sup) por eje; por defecto media ± 5 desviaciones.
    """
    a, b = _as_cloud(a), _as_cloud(b)
    if a.shape[1] != b.shape[1] or a.shape[1] > 2:
        raise ArgumentError("TV por histograma solo admite muestras de dimensión 1 o 2")
    if len(a) == 0 or len(b) == 0:
        raise ArgumentError("Las muestras no pueden estar vacías")
    bins = bins_per_axis or lab_setting('TV_BINS')
    box = default_box(a, b) if range_box is None else [tuple(edge) for edge in range_box]
    if len(box) != a.shape[1] or any(not (math.isfinite(lo) and math.isfinite(hi) and hi > lo) for lo, hi in box):
        raise ArgumentError(f"Caja de histograma degenerada: {box}")
    counts_a = np.histogramdd(a, bins=bins, range=box)[0].ravel()
    counts_b = np.histogramdd(b, bins=bins, range=box)[0].ravel()
    inside_a, inside_b = counts_a.sum() / len(a), counts_b.sum() / len(b)
    if min(inside_a, inside_b) < 0.99:
        logger.warning("La caja del histograma cubre solo %.1f%% de una muestra", 100 * min(inside_a, inside_b))
    gap = np.abs(counts_a / len(a) - counts_b / len(b)).sum() + abs((1 - inside_a) - (1 - inside_b))
    return float(min(1.0, 0.5 * gap))


def coordinate_pair_tv(a, b, bins_per_axis=None):
    """Máximo sobre i de la TV entre las marginales (m_i, x_i); cota inferior de la TV conjunta."""
    a, b = _as_cloud(a), _as_cloud(b)
    half = a.shape[1] // 2
    return max(tv_histogram(a[:, [i, half + i]], b[:, [i, half + i]], bins_per_axis) for i in range(half))


def empirical_moment(e, p, functional, potential=None):
    """
    Media de |m|^{2p}, |x|^{2p} o V(m, x)^p sobre el conjunto.

    ``potential`` es una función V(m, x) vectorizada, necesaria para ``lyapunov_v``.
    """
    if p < 1:
        raise ArgumentError(f"p debe ser >= 1 (recibido {p})")
    if len(e) == 0:
        raise ArgumentError("No hay puntos en el conjunto")
    functional = Functional(functional)
    if functional == Functional.NORM_M:
        values = np.sum(e.momenta ** 2, axis=1) ** p
    elif functional == Functional.NORM_X:
        values = np.sum(e.positions ** 2, axis=1) ** p
    else:
        if potential is None:
            raise ArgumentError("lyapunov_v requiere la función V")
        values = np.asarray(potential(e.momenta, e.positions)) ** p
    return float(np.mean(values))


@dataclass
class RateFit:
    """Ajuste de log(distancia) frente a log(escala)."""

    pairs: list
    slope: float
    intercept: float
    r2: float
    stderr: float = 0.0

    def as_dict(self):
        return {'slope': self.slope, 'intercept': self.intercept, 'r2': self.r2, 'stderr': self.stderr,
                'pairs': [list(pair) for pair in self.pairs]}


def rate_fit(pairs):
    """Mínimos cuadrados de log(distancia) frente a log(η); al menos 3 pares positivos."""
    pairs = [(float(scale), float(distance)) for scale, distance in pairs]
    if len(pairs) < 3:
        raise ArgumentError(f"El ajuste necesita al menos 3 pares (recibidos {len(pairs)})")
    scales, distances = np.array(pairs).T
    if np.any(scales <= 0) or np.any(distances <= 0):
        raise ArgumentError("El ajuste log-log requiere escalas y distancias positivas")
    if np.ptp(scales) == 0:
        raise ArgumentError("Las escalas del ajuste deben ser distintas")
    fit = linregress(np.log(scales), np.log(distances))
    return RateFit(pairs, float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), float(fit.stderr))


def noise_floor(estimator, a1, a2, **kwargs):
    """Distancia entre dos muestras independientes de la misma ley: resolución del estimador."""
    return estimator(a1, a2, **kwargs)


def bell_number(n):
    """Número de particiones de un conjunto de n elementos."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for value in row:
            nxt.append(nxt[-1] + value)
        row = nxt
    return row[0]


@dataclass
class MomentRatioReport:
    p: int
    ratios: dict = field(default_factory=dict)
    bound: float = 0.0

    @property
    def passed(self):
        return all(ratio <= self.bound for ratio in self.ratios.values())

    def as_dict(self):
        return {'p': self.p, 'ratios': {str(k): v for k, v in self.ratios.items()}, 'bound': self.bound,
                'passed': self.passed}


def minibatch_moment_ratio(noise, dim, batch_sizes, p=2, draws=2000, seed=0):
    """
    N^p·E|Ū_N|^{2p} / E|U|^{2p} para la media Ū_N de N copias del ruido U.

    El cociente queda acotado por el número de Bell de 2p para todo N.
    """
    if int(p) != p or p < 1:
        raise ArgumentError("p debe ser un entero positivo")
    rng = np.random.default_rng(seed)
    single = noise.noise(noise.sample(rng, (draws, dim)))
    reference = np.mean(np.sum(single ** 2, axis=1) ** p)
    ratios = {}
    for size in batch_sizes:
        means = noise.noise(noise.sample(rng, (draws, size, dim))).mean(axis=1)
        moment = np.mean(np.sum(means ** 2, axis=1) ** p)
        ratios[int(size)] = float(size ** p * moment / reference) if reference > 0 else 0.0
    return MomentRatioReport(int(p), ratios, float(bell_number(2 * int(p))))
