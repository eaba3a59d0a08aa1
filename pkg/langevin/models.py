"""
Modelos de la aplicación Langevin.

Define ExperimentRun, el registro de cada ejecución lanzada desde la línea
de comandos.
"""

from django.db import models

from .choices import Experiment, Status


class ExperimentRun(models.Model):
    """
    Una ejecución de un experimento.

    Attributes:
        experiment (str): Experimento ejecutado.
        config_hash (str): SHA-256 de la configuración canónica.
        seed (int): Semilla principal.
        output_dir (str): Directorio con results.csv, verdict.json y manifest.json.
        status (str): Estado del veredicto.
        verdict (dict): Veredicto completo.
        blowups (int): Trayectorias congeladas por explosión numérica.
        created_at (datetime): Fecha de creación del registro.
        updated_at (datetime): Fecha de última actualización.
    """

    experiment = models.CharField(max_length=32, choices=Experiment.choices, verbose_name="Experimento")
    config_hash = models.CharField(max_length=64, db_index=True, verbose_name="Hash de configuración")
    seed = models.PositiveBigIntegerField(default=0, verbose_name="Semilla")
    output_dir = models.CharField(max_length=500, verbose_name="Directorio de salida")
    status = models.CharField(max_length=16, choices=Status.choices, verbose_name="Estado")
    verdict = models.JSONField(default=dict, verbose_name="Veredicto")
    blowups = models.PositiveIntegerField(default=0, verbose_name="Explosiones")

    # Auditoría
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    def __str__(self):
        return f"{self.experiment} [{self.status}] {self.config_hash[:12]}"

    class Meta:
        verbose_name = "Ejecución"
        verbose_name_plural = "Ejecuciones"
        ordering = ['-created_at']
