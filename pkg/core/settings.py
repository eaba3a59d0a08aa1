"""
Configuración Django del laboratorio SGDm / Langevin.

Los valores sensibles y los parámetros de despliegue se leen del entorno
(archivo ``.env`` opcional). El diccionario ``LAB`` agrupa los valores por
defecto de las simulaciones, igual que ``REST_FRAMEWORK`` agrupa los de la API.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / '.env')


def _env_bool(name, default):
    return os.getenv(name, str(default)).strip().lower() in ('1', 'true', 'yes', 'on')


SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'django-insecure-sgdm-lab-solo-para-desarrollo-local')

DEBUG = _env_bool('DJANGO_DEBUG', True)

ALLOWED_HOSTS = os.getenv('DJANGO_ALLOWED_HOSTS', '*').split(',')


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'rest_framework',
    'langevin',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'core.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'core.wsgi.application'


# Base de datos: SQLite por defecto, PostgreSQL (psycopg) si se pide en el entorno.

if os.getenv('LAB_DB_ENGINE', 'sqlite') == 'postgresql':
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.postgresql',
            'NAME': os.getenv('LAB_DB_NAME', 'sgdm_lab'),
            'USER': os.getenv('LAB_DB_USER', ''),
            'PASSWORD': os.getenv('LAB_DB_PASSWORD', ''),
            'HOST': os.getenv('LAB_DB_HOST', 'localhost'),
            'PORT': os.getenv('LAB_DB_PORT', '5432'),
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': BASE_DIR / os.getenv('LAB_DB_NAME', 'db.sqlite3'),
        }
    }


LANGUAGE_CODE = 'es'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

STATIC_URL = 'static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Django REST Framework Configuration
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [
        # Solo el panel de admin inicia sesión; la API de ejecuciones es de lectura
        'rest_framework.authentication.SessionAuthentication',
    ],
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny',
    ],
}

# Valores por defecto del laboratorio (ver langevin/conf.py)
LAB = {
    'BLOWUP_NORM': float(os.getenv('LAB_BLOWUP_NORM', '1e12')),
    'ENSEMBLE_BLOCK_SIZE': int(os.getenv('LAB_ENSEMBLE_BLOCK_SIZE', '4096')),
    'CHECK_TOLERANCE': 1e-9,
    'FINE_SUBSTEP_RATIO': 64,
    'W1_EXACT_MAX': 512,
    'SLICED_PROJECTIONS': 64,
    'TV_BINS': 64,
    'TV_BOX_STDS': 5.0,
}

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'lab': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'lab',
        },
    },
    'loggers': {
        'langevin': {
            'handlers': ['console'],
            'level': os.getenv('LAB_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
