"""
Django settings for the ecattrib project.

Only the pieces a command-line pipeline needs are configured: the scamgraph
app (management commands and report templates), logging, and the
ECATTRIB_* environment overrides read by the commands.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
# This points to the directory where the project is installed
BASE_DIR = Path(__file__).resolve().parent.parent

# Use current working directory for artifacts unless told otherwise
WORKING_DIR = Path.cwd()

# Not used for any signing; Django requires the setting to exist.
SECRET_KEY = 'ecattrib-local-pipeline-no-secrets'

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'scamgraph',
]

# Artifacts are flat JSON files; there is no database.
DATABASES = {}

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            # Reports are markdown, not HTML.
            'autoescape': False,
        },
    },
]


# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Environment overrides. Every global command flag has a mirror here; the
# commands apply them between the config file and the explicit flags.
ECATTRIB_ENV = {
    'config': os.environ.get('ECATTRIB_CONFIG'),
    'out': os.environ.get('ECATTRIB_OUT'),
    'min_domains': os.environ.get('ECATTRIB_MIN_DOMAINS'),
    'min_sites': os.environ.get('ECATTRIB_MIN_SITES'),
    'seed': os.environ.get('ECATTRIB_SEED'),
    'defang': os.environ.get('ECATTRIB_DEFANG'),
    'suffix_snapshot': os.environ.get('ECATTRIB_SUFFIX_SNAPSHOT'),
}



# Logging
LOG_LEVEL = os.environ.get('ECATTRIB_LOG_LEVEL', 'WARNING').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'scamgraph': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'ecattrib': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}
