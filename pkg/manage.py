#!/usr/bin/env python
"""
Utilidad de administración del laboratorio.

    python manage.py migrate
    python manage.py experiment contraction --config cfg.json --out salida/
    python manage.py runserver        # registro de ejecuciones en /api/runs/
"""
import os
import sys


def main():
    """Ejecuta tareas de administración."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "No se pudo importar Django. ¿Está instalado y activo el entorno virtual?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
