"""
Django settings for the suture_lab project.

The project has no HTTP surface: Django provides configuration, the run
registry database, management commands (the experiment CLI) and the test
runner.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='suture-lab-local-only-not-a-secret')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',

    # Local apps
    'core',
    'synthgen',
    'detector',
    'translation',
    'detcyclegan',
    'engine',
    'evaluation',
    'experiments',
]

MIDDLEWARE = []


# Run registry database
# Determine database engine from environment

DB_ENGINE = config('DB_ENGINE', default='django.db.backends.sqlite3')

DATABASES = {
    'default': {
        'ENGINE': DB_ENGINE,
        'NAME': config('DB_NAME', default=str(BASE_DIR / 'db.sqlite3')),
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'UTC'


# Experiment workspace
# All relative artifact paths in experiment descriptors resolve against this root.
WORKSPACE_ROOT = Path(config('WORKSPACE_ROOT', default=str(BASE_DIR / 'workspace')))

# Compute device for torch ("cpu", "cuda", "cuda:1", ...); `--device` overrides per command
COMPUTE_DEVICE = config('COMPUTE_DEVICE', default='cpu')

# Parallel data-loading workers; reproducibility holds for a fixed worker count
DATA_LOADER_WORKERS = config('DATA_LOADER_WORKERS', default=0, cast=int)

# Slow acceptance tests (full synthetic training runs) are skipped unless enabled
RUN_SLOW_TESTS = config('RUN_SLOW_TESTS', default=False, cast=bool)


# Logging configuration
LOG_LEVEL = config('LOG_LEVEL', default='INFO')
LOG_DIR = Path(config('LOG_DIR', default=str(BASE_DIR / 'logs')))
LOG_DIR.mkdir(parents=True, exist_ok=True)

_APP_LOGGERS = [
    'core', 'synthgen', 'detector', 'translation',
    'detcyclegan', 'engine', 'evaluation', 'experiments',
]

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
        'file': {
            'class': 'logging.FileHandler',
            'filename': LOG_DIR / 'suture_lab.log',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': LOG_LEVEL,
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'WARNING',
            'propagate': False,
        },
        **{
            name: {
                'handlers': ['console', 'file'],
                'level': LOG_LEVEL,
                'propagate': False,
            }
            for name in _APP_LOGGERS
        },
    },
}
