from django.apps import AppConfig


class SynthgenConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'synthgen'
    verbose_name = 'Synthetic suture phantoms'
