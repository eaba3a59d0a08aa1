"""
Serializadores del laboratorio.

``ExperimentConfigSerializer`` valida el JSON de configuración de un
experimento, rellena los valores por defecto (que entran en el hash) y
construye los objetos de dominio en ``create()``. ``ExperimentRunSerializer``
expone el registro de ejecuciones.
"""

import hashlib
import json
from dataclasses import replace

import numpy as np
from rest_framework import serializers

from .choices import Experiment, NoiseKind, NoiseMode, ObjectiveKind, ScheduleKind, System
from .dynamics import ModelParams, State
from .exceptions import ConfigurationError, LabError
from .lyapunov import LyapunovParams
from .models import ExperimentRun
from .objective import GradNoiseModel, build_objective
from .schedule import StepSchedule, index_of_time
from .services import ExperimentConfig, Tolerances

CONSTANT_NAMES = ('A', 'B', 'L', 'a', 'b', 'A0', 'A0p', 'B1', 'B2')
FRICTION_EXPERIMENTS = (Experiment.RATE_W1, Experiment.RATE_TV, Experiment.CONTRACTION)
LADDER_EXPERIMENTS = (Experiment.RATE_W1, Experiment.ONE_STEP_CHECK)
GRID_EXPERIMENTS = (
    Experiment.SIMULATE, Experiment.RATE_W1, Experiment.RATE_TV, Experiment.STATIONARY_CHECK,
    Experiment.GENERALIZATION, Experiment.MOMENT_ENVELOPE,
)


class ObjectiveSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=ObjectiveKind.choices, default=ObjectiveKind.QUADRATIC_WELL)
    dim = serializers.IntegerField(min_value=1, default=1)
    scale = serializers.FloatField(default=1.0)
    amplitude = serializers.FloatField(min_value=0.0, default=0.1)
    q = serializers.FloatField(min_value=2.0, default=2.0)
    qp = serializers.FloatField(min_value=4.0, default=4.0)
    constants = serializers.DictField(child=serializers.FloatField(), default=dict)

    def validate_constants(self, value):
        unknown = set(value) - set(CONSTANT_NAMES)
        if unknown:
            raise serializers.ValidationError(f"Constantes desconocidas: {sorted(unknown)}")
        return value


class NoiseSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=NoiseKind.choices, default=NoiseKind.GAUSSIAN)
    scale = serializers.FloatField(min_value=0.0, default=1.0)
    dof = serializers.FloatField(default=9.0)


class ModelBlockSerializer(serializers.Serializer):
    gamma = serializers.FloatField(min_value=0.0, default=5.0)
    beta = serializers.FloatField(min_value=0.0, default=1.0)
    batch_size = serializers.IntegerField(min_value=1, default=10)


class ScheduleSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=ScheduleKind.choices, default=ScheduleKind.CONSTANT)
    eta = serializers.FloatField(default=0.01)
    alpha = serializers.FloatField(default=0.0)
    omega = serializers.FloatField(default=0.5)
    theta = serializers.FloatField(default=1.0)
    burn_in = serializers.IntegerField(min_value=0, default=0)
    theta_from_contraction = serializers.BooleanField(default=False)


class TolerancesSerializer(serializers.Serializer):
    w1_slope = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2, default=lambda: [0.35, 0.7])
    one_step_slope = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2, default=lambda: [1.2, 1.8])
    contraction_r2 = serializers.FloatField(default=0.9)
    contraction_rel = serializers.FloatField(min_value=0.0, default=0.02)
    stationary_rel = serializers.FloatField(min_value=0.0, default=0.10)
    generalization_factor = serializers.FloatField(min_value=0.0, default=3.0)
    envelope_factor = serializers.FloatField(min_value=1.0, default=1.1)
    blowup_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.01)
    floor_factor = serializers.FloatField(min_value=0.0, default=3.0)
    standard_errors = serializers.FloatField(min_value=0.0, default=3.0)


class PointSerializer(serializers.Serializer):
    m = serializers.ListField(child=serializers.FloatField(), min_length=1)
    x = serializers.ListField(child=serializers.FloatField(), min_length=1)


class LyapunovSerializer(serializers.Serializer):
    lam = serializers.FloatField()
    ring_a = serializers.FloatField(min_value=0.0)


BLOCKS = {
    'objective': ObjectiveSerializer,
    'noise': NoiseSerializer,
    'model': ModelBlockSerializer,
    'schedule': ScheduleSerializer,
    'tolerances': TolerancesSerializer,
}


class ExperimentConfigSerializer(serializers.Serializer):
    """
    Configuración completa de un experimento.

    Los bloques ausentes se rellenan con sus valores por defecto antes de
    validar, de modo que ``canonical()`` y ``config_hash()`` cubren todo lo
    que influye en el resultado.
    """

    experiment = serializers.ChoiceField(choices=Experiment.choices)
    objective = ObjectiveSerializer()
    noise = NoiseSerializer()
    model = ModelBlockSerializer()
    schedule = ScheduleSerializer()
    tolerances = TolerancesSerializer()
    lyapunov = LyapunovSerializer(required=False, allow_null=True, default=None)
    ensemble_size = serializers.IntegerField(min_value=0, default=2000)
    horizon_time = serializers.FloatField(min_value=0.0, default=5.0)
    horizon_steps = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    record_times = serializers.ListField(child=serializers.FloatField(min_value=0.0), default=list)
    system = serializers.ChoiceField(choices=System.choices, default=System.SGDM)
    noise_mode = serializers.ChoiceField(choices=NoiseMode.choices, default=NoiseMode.BROWNIAN)
    init = PointSerializer(required=False, allow_null=True, default=None)
    init2 = PointSerializer(required=False, allow_null=True, default=None)
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1, default=lambda: [0])
    fine_ratio = serializers.IntegerField(min_value=1, default=64)
    fine_delta = serializers.FloatField(default=1e-3)
    fit_start = serializers.FloatField(min_value=0.0, default=2.0)
    projections = serializers.IntegerField(min_value=1, default=64)
    tv_bins = serializers.IntegerField(min_value=2, default=64)
    tv_c = serializers.FloatField(default=1.0)
    sample_count = serializers.IntegerField(min_value=1, default=10000)
    radius = serializers.FloatField(default=10.0)
    k_max = serializers.IntegerField(min_value=1, default=100000)
    eta_ladder = serializers.ListField(child=serializers.FloatField(), default=lambda: [0.1, 0.05, 0.025, 0.0125])
    batch_ladder = serializers.ListField(child=serializers.IntegerField(min_value=1), default=list)
    beta_ladder = serializers.ListField(child=serializers.FloatField(min_value=0.0), default=list)
    weighted_sum_eps = serializers.ListField(child=serializers.FloatField(min_value=0.0, max_value=0.5),
                                             default=lambda: [0.0, 0.25, 0.5])
    weighted_sum_n = serializers.ListField(child=serializers.IntegerField(min_value=1), default=lambda: [10, 100, 1000])
    envelope_seeds = serializers.IntegerField(min_value=1, default=5)

    def to_internal_value(self, data):
        if isinstance(data, dict):
            data = dict(data)
            for name in BLOCKS:
                if data.get(name) is None:
                    data[name] = {}
        return super().to_internal_value(data)

    def validate(self, attrs):
        try:
            config = self._build(attrs)
        except (LabError, ValueError) as exc:
            raise serializers.ValidationError(str(exc)) from exc
        self._check_rules(attrs, config)
        return attrs

    def _check_rules(self, attrs, config):
        experiment = attrs['experiment']
        constants = config.objective.constants
        dim = config.dim
        if experiment in FRICTION_EXPERIMENTS:
            try:
                config.params.check_friction(constants)
            except ConfigurationError as exc:
                raise serializers.ValidationError({'model': str(exc)}) from exc
        if experiment == Experiment.RATE_TV:
            if dim > 2:
                raise serializers.ValidationError({'objective': "La TV por histograma solo admite d en {1, 2}"})
            largest = max([config.schedule.eta, *attrs['eta_ladder']])
            if largest > attrs['tv_c'] / dim ** 2:
                raise serializers.ValidationError(
                    {'schedule': f"η₁ = {largest} supera c·d⁻² = {attrs['tv_c'] / dim ** 2}"}
                )
        if attrs['system'] == System.EXACT_OU and not config.is_quadratic:
            raise serializers.ValidationError({'system': "La transición exacta requiere un pozo cuadrático"})
        if experiment in LADDER_EXPERIMENTS and len(set(attrs['eta_ladder'])) < 3:
            raise serializers.ValidationError({'eta_ladder': "Se necesitan al menos tres pasos distintos"})
        if any(eta <= 0 for eta in attrs['eta_ladder']):
            raise serializers.ValidationError({'eta_ladder': "Los pasos deben ser positivos"})
        if attrs['fine_delta'] <= 0:
            raise serializers.ValidationError({'fine_delta': "El subpaso fino debe ser positivo"})
        for name in ('init', 'init2'):
            point = attrs.get(name)
            if point and (len(point['m']) != dim or len(point['x']) != dim):
                raise serializers.ValidationError({name: f"El punto inicial debe tener dimensión {dim}"})
        self._check_grid(attrs, config)

    def _check_grid(self, attrs, config):
        experiment = attrs['experiment']
        if attrs['horizon_steps'] or experiment not in GRID_EXPERIMENTS:
            return
        schedules = [config.schedule]
        if experiment in (Experiment.RATE_W1, Experiment.RATE_TV):
            schedules += [replace(config.schedule, eta=eta) for eta in attrs['eta_ladder']]
        try:
            for sched in schedules:
                index_of_time(sched, attrs['horizon_time'])
                for t in attrs['record_times']:
                    index_of_time(sched, t)
        except LabError as exc:
            raise serializers.ValidationError({'horizon_time': str(exc)}) from exc

    def _build(self, attrs):
        block = attrs['objective']
        noise_block = attrs['noise']
        noise = GradNoiseModel(noise_block['kind'], noise_block['scale'], noise_block['dof'])
        objective = build_objective(
            block['kind'], block['dim'], scale=block['scale'], amplitude=block['amplitude'],
            noise=noise, q=block['q'], qp=block['qp'], **block['constants'],
        )
        model = attrs['model']
        params = ModelParams(model['gamma'], model['beta'], model['batch_size'], block['dim'])
        sched_block = {k: v for k, v in attrs['schedule'].items() if k != 'theta_from_contraction'}
        schedule = StepSchedule(**sched_block)
        tolerances = Tolerances(**{**attrs['tolerances'],
                                   'w1_slope': tuple(attrs['tolerances']['w1_slope']),
                                   'one_step_slope': tuple(attrs['tolerances']['one_step_slope'])})
        lyapunov = LyapunovParams(**attrs['lyapunov']) if attrs.get('lyapunov') else None

        def point(data):
            return State(np.array(data['m']), np.array(data['x'])) if data else None

        return ExperimentConfig(
            experiment=attrs['experiment'], objective=objective, noise=noise, params=params, schedule=schedule,
            tolerances=tolerances, lyapunov=lyapunov, ensemble_size=attrs['ensemble_size'],
            horizon_time=attrs['horizon_time'], horizon_steps=attrs['horizon_steps'],
            record_times=list(attrs['record_times']), system=attrs['system'], noise_mode=attrs['noise_mode'],
            init=point(attrs.get('init')), init2=point(attrs.get('init2')), seeds=list(attrs['seeds']),
            fine_ratio=attrs['fine_ratio'], fine_delta=attrs['fine_delta'], fit_start=attrs['fit_start'],
            projections=attrs['projections'], tv_bins=attrs['tv_bins'], tv_c=attrs['tv_c'],
            sample_count=attrs['sample_count'], radius=attrs['radius'], k_max=attrs['k_max'],
            eta_ladder=list(attrs['eta_ladder']), batch_ladder=list(attrs['batch_ladder']),
            beta_ladder=list(attrs['beta_ladder']), weighted_sum_eps=list(attrs['weighted_sum_eps']),
            weighted_sum_n=list(attrs['weighted_sum_n']), envelope_seeds=attrs['envelope_seeds'],
            theta_from_contraction=attrs['schedule']['theta_from_contraction'],
        )

    def canonical(self):
        """Configuración validada con todos los valores por defecto, en tipos JSON."""
        return json.loads(json.dumps(self.validated_data, default=str))

    def config_hash(self):
        payload = json.dumps(self.canonical(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()

    def create(self, validated_data):
        """
        Construye la ``ExperimentConfig`` con sus objetos de dominio.

        Returns:
            ExperimentConfig: lista para ``services.run_experiment``.
        """
        config = self._build(validated_data)
        config.canonical = self.canonical()
        config.config_hash = self.config_hash()
        return config


class ExperimentRunSerializer(serializers.ModelSerializer):
    """Registro de una ejecución; todos los campos son de solo lectura."""

    class Meta:
        model = ExperimentRun
        fields = '__all__'
        read_only_fields = [field.name for field in ExperimentRun._meta.fields]
