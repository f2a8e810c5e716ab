from django.apps import AppConfig


class DetcycleganConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'detcyclegan'
    verbose_name = 'Detection-consistent translation'
