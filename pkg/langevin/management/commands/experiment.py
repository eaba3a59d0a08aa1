"""
Comando ``experiment``: ejecuta un experimento a partir de un JSON de configuración.

    python manage.py experiment rate_w1 --config cfg.json --out salida/ [--seed S] [--threads T]

Termina con código 0 solo si el veredicto es ``pass``.
"""

import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from langevin.choices import Experiment
from langevin.exceptions import LabError
from langevin.models import ExperimentRun
from langevin.serializers import ExperimentConfigSerializer
from langevin.services import run_experiment, write_outputs

logger = logging.getLogger('langevin.commands')


class Command(BaseCommand):
    help = "Ejecuta un experimento del laboratorio y escribe results.csv, verdict.json y manifest.json."

    def add_arguments(self, parser):
        parser.add_argument('experiment', choices=Experiment.values)
        parser.add_argument('--config', required=True, help="Ruta del JSON de configuración")
        parser.add_argument('--out', required=True, help="Directorio de salida")
        parser.add_argument('--seed', type=int, default=None, help="Reemplaza la lista de semillas por [S]")
        parser.add_argument('--threads', type=int, default=1, help="Hilos para los conjuntos de trayectorias")

    def handle(self, *args, **options):
        try:
            data = json.loads(Path(options['config']).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(f"No se pudo leer la configuración: {exc}") from exc
        if not isinstance(data, dict):
            raise CommandError("La configuración debe ser un objeto JSON")
        data['experiment'] = options['experiment']
        if options['seed'] is not None:
            data['seeds'] = [options['seed']]

        serializer = ExperimentConfigSerializer(data=data)
        try:
            serializer.is_valid(raise_exception=True)
            config = serializer.save()
            result = run_experiment(config, threads=max(1, options['threads']))
            write_outputs(result, config, options['out'])
        except ValidationError as exc:
            raise CommandError(f"Configuración inválida: {json.dumps(exc.detail, ensure_ascii=False, default=str)}") from exc
        except LabError as exc:
            raise CommandError(str(exc)) from exc

        verdict = result.verdict
        ExperimentRun.objects.create(
            experiment=config.experiment,
            config_hash=config.config_hash,
            seed=config.seed,
            output_dir=str(Path(options['out']).resolve()),
            status=verdict.status,
            verdict=verdict.as_dict(),
            blowups=result.blowups,
        )
        self.stdout.write(json.dumps(verdict.as_dict(), indent=2, ensure_ascii=False))
        if not verdict.passed:
            raise CommandError(f"Veredicto {verdict.status}", returncode=1)
        self.stdout.write(self.style.SUCCESS(f"{config.experiment}: {verdict.status}"))
