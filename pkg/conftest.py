"""Pytest wiring for the Django test suites in each app's tests.py."""
import os

import django
import pytest

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'suture_lab.settings')
django.setup()


@pytest.fixture(scope='session', autouse=True)
def _django_test_environment():
    from django.test.utils import get_runner, setup_test_environment, teardown_test_environment
    from django.conf import settings

    setup_test_environment()
    runner = get_runner(settings)(verbosity=0, interactive=False)
    old_config = runner.setup_databases()
    yield
    runner.teardown_databases(old_config)
    teardown_test_environment()
