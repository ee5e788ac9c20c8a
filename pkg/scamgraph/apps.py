from django.apps import AppConfig


class ScamgraphConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'scamgraph'
    verbose_name = 'Fake EC Attribution'
