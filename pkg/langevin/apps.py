from django.apps import AppConfig


class LangevinConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'langevin'
    verbose_name = 'Laboratorio SGDm / Langevin'
