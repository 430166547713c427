from django.apps import AppConfig


class LabAppConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "lab"
    verbose_name = "Chemostat lab"
