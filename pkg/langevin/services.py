"""
Experimentos del laboratorio.

Cada ``run_*`` recibe una ``ExperimentConfig`` ya validada (ver
``serializers.ExperimentConfigSerializer``) y devuelve un
``ExperimentResult`` con filas para ``results.csv`` y un veredicto para
``verdict.json``. ``write_outputs`` es el único escritor de archivos.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from django.utils import timezone
from scipy.stats import linregress

from . import metrics
from . import schedule as schedules
from .choices import Experiment, ObjectiveKind, Status, System
from .dynamics import (
    NoiseStream,
    State,
    coupled_contraction_pair,
    derive_seed,
    drift_rate,
    evolve_ensemble,
    exact_ou_ensemble,
    _em_update,
    _sgdm_update,
)
from .exceptions import ArgumentError, NumericalBlowupError, RunConflictError
from .lyapunov import (
    LyapunovParams,
    calibrate_envelope,
    dissipativity_check,
    drift_check,
    gronwall_envelope,
    lyapunov_bounds_check,
    potential,
    quadratic_sandwich_check,
    stationary_moments,
)
from .metrics import Ensemble
from .objective import loss_sample, verify_assumptions

logger = logging.getLogger(__name__)

TV_LIMITATION = "El factor dimensional d^{7/2} de la cota en TV no se verifica; solo la dependencia en (√η_n, 1/√N) con d fijo."
SLICED_LIMITATION = "Con más de W1_EXACT_MAX puntos la W1 es la versión proyectada, una cota inferior de la W1 exacta."


@dataclass
class Tolerances:
    """Ventanas y bandas de aceptación; forman parte del hash de configuración."""

    w1_slope: tuple = (0.35, 0.7)
    one_step_slope: tuple = (1.2, 1.8)
    contraction_r2: float = 0.9
    contraction_rel: float = 0.02
    stationary_rel: float = 0.10
    generalization_factor: float = 3.0
    envelope_factor: float = 1.1
    blowup_fraction: float = 0.01
    floor_factor: float = 3.0
    standard_errors: float = 3.0


@dataclass
class ExperimentConfig:
    """Configuración resuelta: objetos de dominio más los ajustes de la corrida."""

    experiment: str
    objective: object
    noise: object
    params: object
    schedule: object
    tolerances: Tolerances = field(default_factory=Tolerances)
    lyapunov: object = None
    ensemble_size: int = 2000
    horizon_time: float = 5.0
    horizon_steps: int | None = None
    record_times: list = field(default_factory=list)
    system: str = System.SGDM
    noise_mode: str = 'brownian_derived'
    init: State | None = None
    init2: State | None = None
    seeds: list = field(default_factory=lambda: [0])
    fine_ratio: int = 64
    fine_delta: float = 1e-3
    fit_start: float = 2.0
    projections: int = 64
    tv_bins: int = 64
    tv_c: float = 1.0
    sample_count: int = 10000
    radius: float = 10.0
    k_max: int = 100000
    eta_ladder: list = field(default_factory=list)
    batch_ladder: list = field(default_factory=list)
    beta_ladder: list = field(default_factory=list)
    weighted_sum_eps: list = field(default_factory=lambda: [0.0, 0.25, 0.5])
    weighted_sum_n: list = field(default_factory=lambda: [10, 100, 1000])
    envelope_seeds: int = 5
    theta_from_contraction: bool = False
    config_hash: str = ''
    canonical: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = self.objective.dim
        if self.init is None:
            self.init = State(np.ones(dim), np.ones(dim))
        if self.init2 is None:
            self.init2 = State(-np.ones(dim), -np.ones(dim))

    @property
    def seed(self):
        return self.seeds[0]

    @property
    def dim(self):
        return self.objective.dim

    @property
    def is_quadratic(self):
        return self.objective.kind == ObjectiveKind.QUADRATIC_WELL

    @property
    def lyapunov_params(self):
        return self.lyapunov or LyapunovParams.default(self.objective.constants, self.params.gamma)


@dataclass
class Verdict:
    experiment: str
    status: str
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    limitations: list = field(default_factory=list)

    @property
    def passed(self):
        return self.status == Status.PASS

    def as_dict(self):
        return {
            'experiment': str(self.experiment),
            'status': str(self.status),
            'checks': _jsonable(self.checks),
            'notes': list(self.notes),
            'limitations': list(self.limitations),
        }


@dataclass
class ExperimentResult:
    experiment: str
    verdict: Verdict
    rows: list = field(default_factory=list)
    blowups: int = 0
    frame: pd.DataFrame | None = None

    def to_frame(self):
        if self.frame is not None:
            return self.frame
        return pd.DataFrame(self.rows)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _status_from(checks):
    return Status.PASS if all(checks.values()) else Status.FAIL


def _record_grid(cfg, sched, points=20):
    """Tiempos de la malla repartidos uniformemente hasta el horizonte."""
    last = _horizon_index(cfg, sched)
    grid = schedules.time_grid(sched, last)
    indices = np.unique(np.linspace(0, last, points + 1).astype(int))
    return [float(grid[i]) for i in indices]


def _horizon_index(cfg, sched):
    if cfg.horizon_steps:
        return int(cfg.horizon_steps)
    return schedules.index_of_time(sched, cfg.horizon_time)


def _init_ensemble(cfg, count, state=None):
    state = state or cfg.init
    return Ensemble.point_mass(state.m, state.x, count)


def _evolve(cfg, system, sched, params, seed, record_times, count=None, threads=1, fine_delta=None):
    count = cfg.ensemble_size if count is None else count
    return evolve_ensemble(
        _init_ensemble(cfg, count), system, sched, params, cfg.objective, cfg.noise, seed,
        record_times, mode=cfg.noise_mode, fine_delta=fine_delta, threads=threads,
    )


def _reference_cloud(cfg, sched, params, horizon, seed, fine_delta, threads=1):
    """Nube de la difusión a tiempo ``horizon``: ley exacta si f es cuadrática, Euler-Maruyama fino si no."""
    if cfg.is_quadratic:
        return exact_ou_ensemble(cfg.init, horizon, params, cfg.objective, cfg.ensemble_size, seed).points, 0
    run = _evolve(cfg, System.LANGEVIN_EM, sched, params, seed, [horizon], threads=threads, fine_delta=fine_delta)
    return run.final().points, run.blowup_count


def _trim(a, b):
    size = min(len(a), len(b))
    return a[:size], b[:size]


def _w1(cfg, a, b, seed):
    a, b = _trim(a, b)
    return metrics.w1(a, b, cfg.projections, seed)


def _tv(cfg, a, b):
    a, b = _trim(a, b)
    if cfg.dim == 1:
        return metrics.tv_histogram(a, b, cfg.tv_bins)
    return metrics.coordinate_pair_tv(a, b, cfg.tv_bins)


def _ladder_point(cfg, sched, params, key, threads, distance):
    """SGDm frente a la difusión en un punto de la escalera, con piso de ruido propio."""
    n = _horizon_index(cfg, sched)
    horizon = float(schedules.time_grid(sched, n)[-1])
    eta_n = schedules.eta(sched, n) if n else sched.eta
    fine_delta = eta_n / cfg.fine_ratio
    seed = derive_seed(cfg.seed, *key)
    scheme = _evolve(cfg, System.SGDM, sched, params, derive_seed(seed, 0), [horizon], threads=threads)
    reference, ref_blowups = _reference_cloud(cfg, sched, params, horizon, derive_seed(seed, 1), fine_delta, threads)
    twin, twin_blowups = _reference_cloud(cfg, sched, params, horizon, derive_seed(seed, 2), fine_delta, threads)
    value, estimator = distance(scheme.final().points, reference)
    floor, _ = metrics.noise_floor(distance, twin, reference)
    blowups = scheme.blowup_count + ref_blowups + twin_blowups
    logger.info("η=%.5g N=%d t=%.4g: distancia %.4g (piso %.4g, %s)",
                eta_n, params.batch_size, horizon, value, floor, estimator)
    row = {
        'time': horizon, 'eta_n': eta_n, 'batch_size': params.batch_size, 'estimator': estimator,
        'value': value, 'noise_floor': floor, 'n_samples': len(reference), 'seed': seed, 'blowups': blowups,
    }
    return row, blowups / (3 * max(cfg.ensemble_size, 1))


def _invalid(experiment, rows, blowups, fraction, limit, notes=None):
    notes = list(notes or [])
    notes.append(f"Fracción de trayectorias explotadas {fraction:.3%} supera el límite {limit:.1%}")
    logger.warning("Experimento %s inválido por explosiones", experiment)
    return ExperimentResult(experiment, Verdict(experiment, Status.INVALID, {}, notes), rows, blowups)


def run_simulate(cfg, threads=1):
    """Evoluciona el sistema configurado y vuelca las instantáneas."""
    record_times = cfg.record_times or [cfg.horizon_time]
    run = _evolve(cfg, cfg.system, cfg.schedule, cfg.params, cfg.seed, record_times, threads=threads)
    checks = {'blowup_fraction_ok': run.blowup_fraction <= cfg.tolerances.blowup_fraction}
    status = Status.PASS if checks['blowup_fraction_ok'] else Status.INVALID
    notes = [json.dumps(_jsonable(snapshot.summary())) for snapshot in run.snapshots]
    verdict = Verdict(Experiment.SIMULATE, status, checks, notes)
    return ExperimentResult(Experiment.SIMULATE, verdict, blowups=run.blowup_count, frame=run.to_frame())


def run_rate_w1(cfg, threads=1):
    """
    Orden en η de la W1 entre SGDm y la difusión a un tiempo común.

    Ajusta log(W1 − piso) frente a log(η_n) y exige la pendiente dentro de
    ``tolerances.w1_slope``. Con ``batch_ladder`` comprueba además que la
    distancia no crece con N (dentro del piso).
    """
    tol = cfg.tolerances
    rows, worst_fraction = [], 0.0

    def distance(a, b):
        return _w1(cfg, a, b, cfg.seed)

    for i, eta in enumerate(cfg.eta_ladder):
        row, fraction = _ladder_point(cfg, replace(cfg.schedule, eta=eta), cfg.params, (1, i), threads, distance)
        rows.append({**row, 'ladder': 'eta'})
        worst_fraction = max(worst_fraction, fraction)
    for j, size in enumerate(cfg.batch_ladder):
        params = replace(cfg.params, batch_size=size)
        row, fraction = _ladder_point(cfg, cfg.schedule, params, (2, j), threads, distance)
        rows.append({**row, 'ladder': 'batch'})
        worst_fraction = max(worst_fraction, fraction)
    blowups = sum(row['blowups'] for row in rows)
    if worst_fraction > tol.blowup_fraction:
        return _invalid(Experiment.RATE_W1, rows, blowups, worst_fraction, tol.blowup_fraction)

    limitations = [SLICED_LIMITATION] if any(row['estimator'] == 'sliced' for row in rows) else []
    eta_rows = [row for row in rows if row['ladder'] == 'eta']
    if all(row['value'] <= row['noise_floor'] for row in eta_rows):
        verdict = Verdict(Experiment.RATE_W1, Status.DEGENERATE, {}, ["Todas las distancias quedan bajo el piso de ruido"], limitations)
        return ExperimentResult(Experiment.RATE_W1, verdict, rows, blowups)
    pairs = [(row['eta_n'], row['value'] - row['noise_floor']) for row in eta_rows if row['value'] > row['noise_floor']]
    if len(pairs) < 3:
        verdict = Verdict(Experiment.RATE_W1, Status.DEGENERATE, {},
                          ["Menos de tres distancias sobre el piso de ruido; no hay ajuste"], limitations)
        return ExperimentResult(Experiment.RATE_W1, verdict, rows, blowups)

    fit = metrics.rate_fit(pairs)
    largest = max(eta_rows, key=lambda row: row['eta_n'])
    checks = {
        'slope_in_window': tol.w1_slope[0] <= fit.slope <= tol.w1_slope[1],
        'signal_above_floor': largest['value'] >= tol.floor_factor * largest['noise_floor'],
    }
    batch_rows = [row for row in rows if row['ladder'] == 'batch']
    if len(batch_rows) > 1:
        checks['batch_monotone'] = all(
            later['value'] <= earlier['value'] + max(earlier['noise_floor'], later['noise_floor'])
            for earlier, later in zip(batch_rows, batch_rows[1:])
        )
    verdict = Verdict(Experiment.RATE_W1, _status_from(checks), {**checks, 'fit': fit.as_dict()}, [], limitations)
    logger.info("rate_w1: pendiente %.3f (R²=%.3f) -> %s", fit.slope, fit.r2, verdict.status)
    return ExperimentResult(Experiment.RATE_W1, verdict, rows, blowups)


def run_rate_tv(cfg, threads=1):
    """
    TV por histograma entre SGDm y la difusión a lo largo de escaleras en η y en N.

    Comprueba el descenso por pares en η (dentro del piso) y que el N mayor
    no empeora al menor; informa la saturación en el η más pequeño.
    """
    tol = cfg.tolerances
    rows, worst_fraction = [], 0.0

    def distance(a, b):
        return _tv(cfg, a, b), 'histogram' if cfg.dim == 1 else 'histogram_pairs'

    for i, eta in enumerate(sorted(cfg.eta_ladder, reverse=True)):
        row, fraction = _ladder_point(cfg, replace(cfg.schedule, eta=eta), cfg.params, (1, i), threads, distance)
        rows.append({**row, 'ladder': 'eta'})
        worst_fraction = max(worst_fraction, fraction)
    for j, size in enumerate(sorted(cfg.batch_ladder)):
        row, fraction = _ladder_point(cfg, cfg.schedule, replace(cfg.params, batch_size=size), (2, j), threads, distance)
        rows.append({**row, 'ladder': 'batch'})
        worst_fraction = max(worst_fraction, fraction)
    blowups = sum(row['blowups'] for row in rows)
    if worst_fraction > tol.blowup_fraction:
        return _invalid(Experiment.RATE_TV, rows, blowups, worst_fraction, tol.blowup_fraction, [TV_LIMITATION])

    eta_rows = [row for row in rows if row['ladder'] == 'eta']
    batch_rows = [row for row in rows if row['ladder'] == 'batch']
    if all(row['value'] <= row['noise_floor'] for row in rows):
        verdict = Verdict(Experiment.RATE_TV, Status.DEGENERATE, {}, ["Todas las distancias quedan bajo el piso de ruido"],
                          [TV_LIMITATION])
        return ExperimentResult(Experiment.RATE_TV, verdict, rows, blowups)
    checks = {}
    if len(eta_rows) > 1:
        checks['eta_decreasing'] = all(
            later['value'] <= earlier['value'] + max(earlier['noise_floor'], later['noise_floor'])
            for earlier, later in zip(eta_rows, eta_rows[1:])
        )
    if len(batch_rows) > 1:
        first, last = batch_rows[0], batch_rows[-1]
        checks['batch_decreasing'] = last['value'] <= first['value'] + max(first['noise_floor'], last['noise_floor'])
    notes = []
    if eta_rows:
        smallest = eta_rows[-1]
        notes.append(f"TV en el η menor: {smallest['value']:.4g} (piso {smallest['noise_floor']:.4g})")
    if cfg.dim == 2:
        notes.append("Con d = 2 la TV es el máximo sobre los pares marginales (m_i, x_i).")
    verdict = Verdict(Experiment.RATE_TV, _status_from(checks), checks, notes, [TV_LIMITATION])
    return ExperimentResult(Experiment.RATE_TV, verdict, rows, blowups)


def contraction_fit(trace, fit_start):
    """Pendiente de log(distancia) frente a t sobre [fit_start, horizonte]."""
    window = (trace.times >= fit_start) & (trace.distances > 0)
    if window.sum() < 3:
        raise ArgumentError("La ventana de ajuste tiene menos de tres puntos positivos")
    fit = linregress(trace.times[window], np.log(trace.distances[window]))
    return float(fit.slope), float(fit.rvalue ** 2)


def run_contraction(cfg, threads=1):
    """Tasa de contracción θ̂ del acoplamiento síncrono."""
    tol = cfg.tolerances
    stream = NoiseStream(derive_seed(cfg.seed, 7), cfg.noise_mode)
    try:
        trace = coupled_contraction_pair(cfg.init, cfg.init2, cfg.horizon_time, cfg.fine_delta,
                                         cfg.params, cfg.objective, stream)
    except NumericalBlowupError as exc:
        verdict = Verdict(Experiment.CONTRACTION, Status.INVALID, {}, [f"Explosión numérica en el paso {exc.step}"])
        return ExperimentResult(Experiment.CONTRACTION, verdict, blowups=1)
    frame = trace.to_frame()
    if not np.any(trace.distances > 0):
        verdict = Verdict(Experiment.CONTRACTION, Status.DEGENERATE, {}, ["Puntos iniciales idénticos: traza nula"])
        return ExperimentResult(Experiment.CONTRACTION, verdict, frame=frame)
    slope, r2 = contraction_fit(trace, cfg.fit_start)
    theta_hat = -slope
    checks = {'theta_positive': theta_hat > 0, 'r2_ok': r2 >= tol.contraction_r2}
    extra = {'theta_hat': theta_hat, 'r2': r2}
    if cfg.is_quadratic:
        oracle = -drift_rate(cfg.params.gamma, cfg.objective.scale)
        extra['theta_oracle'] = oracle
        checks['matches_eigenvalue'] = abs(theta_hat - oracle) <= tol.contraction_rel * oracle
    logger.info("contracción: θ̂ = %.5f (R² = %.4f)", theta_hat, r2)
    verdict = Verdict(Experiment.CONTRACTION, _status_from(checks), {**checks, **extra},
                      [f"Ajuste sobre t en [{cfg.fit_start}, {cfg.horizon_time}] con δ = {cfg.fine_delta}"])
    return ExperimentResult(Experiment.CONTRACTION, verdict, frame=frame)


def run_one_step_check(cfg, threads=1):
    """
    Error a un paso: W1 entre una nube de SGDm y una de la difusión tras un paso η.

    Ambas nubes comparten el camino browniano (la difusión se integra con
    ``fine_ratio`` subpasos). El piso es la distancia entre esa difusión y
    otra con camino independiente; solo entran en el ajuste los pasos cuya
    distancia lo supera. También informa el cuarto momento acoplado y el
    segundo momento del incremento dividido por η.
    """
    tol = cfg.tolerances
    count, dim = cfg.ensemble_size, cfg.dim
    params, obj, noise = cfg.params, cfg.objective, cfg.noise
    rows = []
    for i, eta in enumerate(cfg.eta_ladder):
        stream = NoiseStream(derive_seed(cfg.seed, i), 'brownian_derived')
        twin_stream = NoiseStream(derive_seed(cfg.seed, i, 1), 'brownian_derived')
        m0 = np.tile(cfg.init.m, (count, 1))
        x0 = np.tile(cfg.init.x, (count, 1))
        draws = stream.draw(eta, (count, dim), noise, params.batch_size, cfg.fine_ratio)
        twin = twin_stream.draw(eta, (count, dim), substeps=cfg.fine_ratio)
        delta = eta / cfg.fine_ratio
        with np.errstate(all='ignore'):
            m_s, x_s = _sgdm_update(m0, x0, eta, params, obj, noise, draws.zeta, draws.batch)
            m_d, x_d = m0, x0
            m_t, x_t = m0, x0
            for increment, other in zip(draws.fine, twin.fine):
                m_d, x_d = _em_update(m_d, x_d, delta, params, obj, increment)
                m_t, x_t = _em_update(m_t, x_t, delta, params, obj, other)
        scheme = np.concatenate([m_s, x_s], axis=1)
        diffusion = np.concatenate([m_d, x_d], axis=1)
        value, estimator = _w1(cfg, scheme, diffusion, cfg.seed)
        floor, _ = _w1(cfg, np.concatenate([m_t, x_t], axis=1), diffusion, cfg.seed)
        fourth = float(np.mean(np.sum((m_d - m_s) ** 2, axis=1) ** 2) + np.mean(np.sum((x_d - x_s) ** 2, axis=1) ** 2))
        increment_moment = float(np.mean(np.sum((m_s - m0) ** 2, axis=1)) + np.mean(np.sum((x_s - x0) ** 2, axis=1))) / eta
        rows.append({
            'time': eta, 'eta_n': eta, 'estimator': estimator, 'value': value, 'noise_floor': floor,
            'coupled_fourth_moment': fourth, 'increment_moment_per_eta': increment_moment,
            'n_samples': count, 'seed': cfg.seed,
        })
    limitations = [SLICED_LIMITATION] if any(row['estimator'] == 'sliced' for row in rows) else []
    resolved = [row for row in rows if row['value'] > row['noise_floor']]
    if len(resolved) < 3:
        verdict = Verdict(Experiment.ONE_STEP_CHECK, Status.DEGENERATE, {},
                          ["Menos de tres distancias sobre el piso de ruido: los sistemas no se distinguen"],
                          limitations)
        return ExperimentResult(Experiment.ONE_STEP_CHECK, verdict, rows)
    # nubes con camino compartido: el piso filtra pasos pero no se resta
    fit = metrics.rate_fit([(row['eta_n'], row['value']) for row in resolved])
    checks = {'slope_in_window': tol.one_step_slope[0] <= fit.slope <= tol.one_step_slope[1]}
    notes = [f"Incremento/η máximo {max(row['increment_moment_per_eta'] for row in rows):.4g}"]
    if len(resolved) < len(rows):
        notes.append(f"Ajuste sobre {len(resolved)} de {len(rows)} pasos; el resto queda bajo el piso de ruido")
    verdict = Verdict(Experiment.ONE_STEP_CHECK, _status_from(checks), {**checks, 'fit': fit.as_dict()}, notes, limitations)
    logger.info("one_step_check: pendiente %.3f -> %s", fit.slope, verdict.status)
    return ExperimentResult(Experiment.ONE_STEP_CHECK, verdict, rows)


def generalization_floor(constants, beta, dim):
    """J = (β²/4)·log[(2eL/a)·((2ab + B²)/(d·a·β²) + 1)]."""
    c = constants
    inner = (2 * c.a * c.b + c.B ** 2) / (dim * c.a * beta ** 2) + 1
    return beta ** 2 / 4 * math.log(2 * math.e * c.L / c.a * inner)


def _excess_risk(cfg, params, seed, threads):
    sched = cfg.schedule
    horizon = float(schedules.time_grid(sched, _horizon_index(cfg, sched))[-1])
    run = _evolve(cfg, System.SGDM, sched, params, seed, [horizon], threads=threads)
    x = run.final().positions
    rng = np.random.default_rng(derive_seed(seed, 1))
    xi = cfg.noise.sample(rng, x.shape)
    losses = loss_sample(cfg.objective, cfg.noise, x, xi)
    optimum = float(cfg.objective.value(cfg.objective.minimizer()))
    excess = losses - optimum
    stderr = float(excess.std(ddof=1) / math.sqrt(len(excess))) if len(excess) > 1 else 0.0
    return {
        'beta': params.beta, 'expected_loss': float(losses.mean()),
        'expected_f': float(cfg.objective.value(x).mean()), 'excess_risk': float(excess.mean()),
        'stderr': stderr, 'floor': generalization_floor(cfg.objective.constants, params.beta, cfg.dim) * cfg.dim,
        'blowups': run.blowup_count, 'seed': seed,
    }


def run_generalization(cfg, threads=1):
    """Exceso de riesgo Ê F(x_n, ξ) − f(x*) frente al piso J·d."""
    tol = cfg.tolerances
    c = cfg.objective.constants
    main = _excess_risk(cfg, cfg.params, cfg.seed, threads)
    rows = [{**main, 'ladder': 'main'}]
    checks = {'below_floor': main['excess_risk'] <= tol.generalization_factor * main['floor']}
    notes = [f"J·d = {main['floor']:.6g}"]
    if cfg.params.beta ** 2 > c.a / 2:
        notes.append("β² > a/2: la cota de generalización no está garantizada en este régimen")
    betas = sorted(cfg.beta_ladder, reverse=True)
    if betas:
        ladder = [_excess_risk(cfg, replace(cfg.params, beta=beta), derive_seed(cfg.seed, i), threads)
                  for i, beta in enumerate(betas)]
        rows.extend({**row, 'ladder': 'beta'} for row in ladder)
        checks['beta_monotone'] = all(
            later['excess_risk'] <= earlier['excess_risk']
            + tol.standard_errors * math.hypot(earlier['stderr'], later['stderr'])
            for earlier, later in zip(ladder, ladder[1:])
        )
    blowups = sum(row['blowups'] for row in rows)
    fraction = blowups / (len(rows) * max(cfg.ensemble_size, 1))
    if fraction > tol.blowup_fraction:
        return _invalid(Experiment.GENERALIZATION, rows, blowups, fraction, tol.blowup_fraction, notes)
    verdict = Verdict(Experiment.GENERALIZATION, _status_from(checks),
                      {**checks, 'excess_risk': main['excess_risk'], 'floor': main['floor']}, notes)
    return ExperimentResult(Experiment.GENERALIZATION, verdict, rows, blowups)


def run_drift_check(cfg, threads=1):
    """Desigualdad de deriva, constantes declaradas y momentos del minilote."""
    obj, params = cfg.objective, cfg.params
    lp = cfg.lyapunov_params
    seed = cfg.seed
    drift = drift_check(params, lp, obj, cfg.sample_count, cfg.radius, seed)
    reports = {
        'assumptions': verify_assumptions(obj, cfg.noise, cfg.sample_count, cfg.radius, seed),
        'dissipativity': dissipativity_check(obj, lp, params, cfg.sample_count, cfg.radius, seed),
        'sandwich': quadratic_sandwich_check(obj, cfg.sample_count, cfg.radius, seed),
        'lyapunov_bounds': lyapunov_bounds_check(params, lp, obj, cfg.sample_count, cfg.radius, seed),
    }
    ratio = metrics.minibatch_moment_ratio(cfg.noise, cfg.dim, cfg.batch_ladder or [1, 4, 16, 64], 2,
                                           min(cfg.sample_count, 4000), seed)
    rows = [{'check': 'drift', 'worst_margin': drift.worst_margin, 'passed': drift.passed, 'points': drift.points}]
    for group, report in reports.items():
        rows.extend({'check': f'{group}.{check.name}', 'worst_margin': check.worst_margin, 'passed': check.passed,
                     'points': check.points} for check in report.checks)
    rows.extend({'check': f'minibatch_ratio.N={size}', 'worst_margin': ratio.bound - value,
                 'passed': value <= ratio.bound, 'points': 1} for size, value in ratio.ratios.items())
    checks = {'drift': drift.passed, **{group: report.passed for group, report in reports.items()},
              'minibatch_ratio': ratio.passed}
    detail = {'drift_report': drift.as_dict(), 'lambda': lp.lam, 'ring_a': lp.ring_a}
    for group, report in reports.items():
        for failure in report.failures:
            detail[f'{group}.{failure.name}'] = failure.as_dict()
    verdict = Verdict(Experiment.DRIFT_CHECK, _status_from(checks), {**checks, **detail})
    return ExperimentResult(Experiment.DRIFT_CHECK, verdict, rows)


def run_schedule_check(cfg, threads=1):
    """Condiciones sobre los pasos y la desigualdad de la suma ponderada."""
    sched = cfg.schedule
    notes = []
    if cfg.theta_from_contraction:
        stream = NoiseStream(derive_seed(cfg.seed, 11), cfg.noise_mode)
        trace = coupled_contraction_pair(cfg.init, cfg.init2, cfg.horizon_time, cfg.fine_delta,
                                         cfg.params, cfg.objective, stream)
        sched = sched.with_theta(schedules.theta_from_contraction(trace.times, trace.distances, cfg.fit_start))
        notes.append(f"θ tomado del acoplamiento síncrono: {sched.theta:.5g}")
    report = schedules.check_assumption3(sched, cfg.k_max)
    rows = []
    for n in cfg.weighted_sum_n:
        for eps in cfg.weighted_sum_eps:
            start = min(report.n0, n) if report.regime != 'violated' else 1
            total = schedules.weighted_sum(sched, n, eps, start=start)
            rows.append({'n': n, 'eps': eps, 'theta': sched.theta, 'omega': sched.omega, **total.as_dict()})
    checks = {
        'assumption3': report.passed,
        'weighted_sum': all(row['holds'] for row in rows) if report.regime != 'violated' else False,
    }
    notes.append(f"Régimen {report.regime}, n0 = {report.n0}")
    verdict = Verdict(Experiment.SCHEDULE_CHECK, _status_from(checks), {**checks, 'report': report.as_dict()}, notes)
    return ExperimentResult(Experiment.SCHEDULE_CHECK, verdict, rows)


def run_stationary_check(cfg, threads=1):
    """Varianzas marginales tras un horizonte largo frente a las estacionarias."""
    tol = cfg.tolerances
    target = stationary_moments(cfg.params, cfg.objective)
    systems = [System.SGDM] + ([System.EXACT_OU] if cfg.is_quadratic else [])
    rows, checks, blowups = [], {}, 0
    for i, system in enumerate(systems):
        run = _evolve(cfg, system, cfg.schedule, cfg.params, derive_seed(cfg.seed, i), [cfg.horizon_time], threads=threads)
        blowups += run.blowup_count
        final = run.final()
        for name, values in (('var_m', final.momenta.var(axis=0)), ('var_x', final.positions.var(axis=0))):
            for coordinate, value in enumerate(values):
                relative = abs(value - target[name]) / target[name]
                rows.append({'system': str(system), 'moment': name, 'coordinate': coordinate + 1,
                             'value': float(value), 'target': target[name], 'relative_error': relative})
                checks[f'{system}.{name}.{coordinate + 1}'] = relative <= tol.stationary_rel
    fraction = blowups / (len(systems) * max(cfg.ensemble_size, 1))
    if fraction > tol.blowup_fraction:
        return _invalid(Experiment.STATIONARY_CHECK, rows, blowups, fraction, tol.blowup_fraction)
    verdict = Verdict(Experiment.STATIONARY_CHECK, _status_from(checks), checks)
    return ExperimentResult(Experiment.STATIONARY_CHECK, verdict, rows, blowups)


def _mean_trace(run, value_fn):
    # una instantánea sin trayectorias vivas no tiene media
    alive = [snapshot for snapshot in run.snapshots if len(snapshot)]
    times = np.array([snapshot.time_label for snapshot in alive])
    means = np.array([metrics.empirical_moment(snapshot, 1, 'lyapunov_v', value_fn) for snapshot in alive])
    return times, means


def run_moment_envelope(cfg, threads=1):
    """
    Cotas uniformes en el tiempo para E V.

    La difusión se compara con e^{−λγt}V0 + ĉd y el sistema intermedio con
    e^{−λγt/2}V0 + ĉd. ĉ se ajusta una vez por sistema y luego se comprueba
    en semillas nuevas contra factor × envolvente.
    """
    tol = cfg.tolerances
    lp = cfg.lyapunov_params
    params = cfg.params
    value_fn = potential(params, lp, cfg.objective)
    v0 = float(value_fn(cfg.init.m, cfg.init.x))
    rate = lp.lam * params.gamma
    diffusion = System.EXACT_OU if cfg.is_quadratic else System.LANGEVIN_EM
    record_times = _record_grid(cfg, cfg.schedule)
    fresh = cfg.seeds[1:] or [derive_seed(cfg.seed, 100 + i) for i in range(cfg.envelope_seeds)]
    fine_delta = cfg.fine_delta if diffusion == System.LANGEVIN_EM else None
    gronwall = gronwall_envelope(params, lp, v0, cfg.dim)
    rows, checks, blowups, runs = [], {}, 0, 0
    for system, system_rate in ((diffusion, rate), (System.INTERMEDIATE, rate / 2)):
        calibration = _evolve(cfg, system, cfg.schedule, params, derive_seed(cfg.seed, 99), record_times,
                              threads=threads, fine_delta=fine_delta)
        blowups += calibration.blowup_count
        runs += 1
        times, means = _mean_trace(calibration, value_fn)
        envelope = calibrate_envelope(times, means, v0, system_rate, cfg.dim)
        violations, gronwall_violations = 0, 0
        for seed in fresh:
            run = _evolve(cfg, system, cfg.schedule, params, seed, record_times, threads=threads, fine_delta=fine_delta)
            blowups += run.blowup_count
            runs += 1
            times, means = _mean_trace(run, value_fn)
            violations += len(envelope.violations(times, means, tol.envelope_factor))
            gronwall_bound = gronwall.bound(times)
            gronwall_violations += int(np.count_nonzero(means > tol.envelope_factor * gronwall_bound))
            rows.extend({'system': str(system), 'seed': seed, 'time': t, 'mean_V': v,
                         'envelope': float(envelope.bound(t)), 'c_hat': envelope.c_hat, 'gronwall': float(g)}
                        for t, v, g in zip(times, means, gronwall_bound))
        checks[f'{system}.envelope'] = violations == 0
        # la cota de Grönwall es la de la difusión; para el sistema intermedio solo se informa
        if system == diffusion:
            checks[f'{system}.gronwall'] = gronwall_violations == 0
    fraction = blowups / (runs * max(cfg.ensemble_size, 1))
    notes = [f"λγ = {rate:.5g}, V0 = {v0:.5g}, semillas {list(fresh)}"]
    if fraction > tol.blowup_fraction:
        return _invalid(Experiment.MOMENT_ENVELOPE, rows, blowups, fraction, tol.blowup_fraction, notes)
    verdict = Verdict(Experiment.MOMENT_ENVELOPE, _status_from(checks), checks, notes)
    return ExperimentResult(Experiment.MOMENT_ENVELOPE, verdict, rows, blowups)


RUNNERS = {
    Experiment.SIMULATE: run_simulate,
    Experiment.RATE_W1: run_rate_w1,
    Experiment.RATE_TV: run_rate_tv,
    Experiment.CONTRACTION: run_contraction,
    Experiment.DRIFT_CHECK: run_drift_check,
    Experiment.SCHEDULE_CHECK: run_schedule_check,
    Experiment.STATIONARY_CHECK: run_stationary_check,
    Experiment.ONE_STEP_CHECK: run_one_step_check,
    Experiment.GENERALIZATION: run_generalization,
    Experiment.MOMENT_ENVELOPE: run_moment_envelope,
}


def run_experiment(cfg, threads=1):
    logger.info("Iniciando %s (semilla %s, hash %s)", cfg.experiment, cfg.seed, cfg.config_hash[:12])
    result = RUNNERS[Experiment(cfg.experiment)](cfg, threads=threads)
    logger.info("%s terminado: %s", cfg.experiment, result.verdict.status)
    return result


def write_outputs(result, cfg, out_dir):
    """
    Escribe ``results.csv``, ``verdict.json`` y ``manifest.json``.

    Raises:
        RunConflictError: si el directorio ya tiene un manifiesto con otro hash.
    """
    out = Path(out_dir)
    manifest_path = out / 'manifest.json'
    if manifest_path.exists():
        previous = json.loads(manifest_path.read_text(encoding='utf-8'))
        if previous.get('config_hash') != cfg.config_hash:
            raise RunConflictError(
                f"{out} ya contiene resultados de otra configuración ({previous.get('config_hash', '?')[:12]})"
            )
    out.mkdir(parents=True, exist_ok=True)
    result.to_frame().to_csv(out / 'results.csv', index=False)
    (out / 'verdict.json').write_text(json.dumps(result.verdict.as_dict(), indent=2, ensure_ascii=False), encoding='utf-8')
    manifest = {
        'experiment': str(result.experiment),
        'seeds': list(cfg.seeds),
        'config_hash': cfg.config_hash,
        'blowups': int(result.blowups),
        'created_at': timezone.now().isoformat(),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding='utf-8')
    return manifest
