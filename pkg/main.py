"""
Punto de entrada ``sgdm-lab``.

    sgdm-lab <experimento> --config cfg.json --out salida/ [--seed S] [--threads T]

Prepara Django, aplica las migraciones del registro y delega en el comando
``experiment``.
"""

import os
import sys


def main(argv=None):
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')
    import django
    from django.core.management import call_command
    from django.core.management.base import CommandError

    django.setup()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        call_command('migrate', verbosity=0, interactive=False)
        call_command('experiment', *argv)
    except CommandError as exc:
        sys.stderr.write(f"{exc}\n")
        return exc.returncode
    return 0


if __name__ == "__main__":
    sys.exit(main())
