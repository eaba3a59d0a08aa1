"""
Enumeraciones compartidas por el modelo, los serializadores y los simuladores.
"""

from django.db import models


class ObjectiveKind(models.TextChoices):
    QUADRATIC_WELL = 'quadratic_well', 'Pozo cuadrático'
    COSINE_PERTURBED = 'cosine_perturbed_quadratic', 'Cuadrática perturbada por coseno'


class NoiseKind(models.TextChoices):
    GAUSSIAN = 'additive_gaussian', 'Gaussiano aditivo'
    STUDENT_T = 'additive_student_t', 'Student-t aditivo'


class NoiseMode(models.TextChoices):
    INDEPENDENT = 'independent_normals', 'Normales independientes'
    BROWNIAN = 'brownian_derived', 'Derivado del browniano'


class ScheduleKind(models.TextChoices):
    CONSTANT = 'constant', 'Constante'
    POLYNOMIAL = 'polynomial', 'Polinomial'


class System(models.TextChoices):
    SGDM = 'sgdm', 'SGD con momento'
    INTERMEDIATE = 'intermediate', 'Sistema intermedio'
    LANGEVIN_EM = 'langevin_em', 'Langevin (Euler-Maruyama fino)'
    EXACT_OU = 'exact_ou', 'Transición gaussiana exacta'


class Functional(models.TextChoices):
    NORM_M = 'norm_m', '|m|^2'
    NORM_X = 'norm_x', '|x|^2'
    LYAPUNOV_V = 'lyapunov_v', 'V(m, x)'


class Experiment(models.TextChoices):
    SIMULATE = 'simulate', 'Simulación'
    RATE_W1 = 'rate_w1', 'Tasa en W1'
    RATE_TV = 'rate_tv', 'Tasa en TV'
    CONTRACTION = 'contraction', 'Contracción'
    DRIFT_CHECK = 'drift_check', 'Deriva de Lyapunov'
    SCHEDULE_CHECK = 'schedule_check', 'Pasos decrecientes'
    STATIONARY_CHECK = 'stationary_check', 'Distribución estacionaria'
    ONE_STEP_CHECK = 'one_step_check', 'Error a un paso'
    GENERALIZATION = 'generalization', 'Error de generalización'
    MOMENT_ENVELOPE = 'moment_envelope', 'Envolvente de momentos'


class Status(models.TextChoices):
    PASS = 'pass', 'Aprobado'
    FAIL = 'fail', 'Fallido'
    DEGENERATE = 'degenerate', 'Degenerado'
    INVALID = 'invalid', 'Inválido'
