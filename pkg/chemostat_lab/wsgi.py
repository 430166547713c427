"""
WSGI config for the chemostat_lab project.

It exposes the WSGI callable as a module-level variable named ``application``.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "chemostat_lab.settings")

application = get_wsgi_application()
