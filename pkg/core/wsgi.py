"""
Punto WSGI del laboratorio.

Expone ``application`` para servir la API de ejecuciones en modo lectura,
por ejemplo con ``gunicorn core.wsgi:application``.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')

application = get_wsgi_application()
