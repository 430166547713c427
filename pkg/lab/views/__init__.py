# lab/views/__init__.py
from .run_views import health_check, run_detail, run_list

__all__ = [
    'health_check',
    'run_list',
    'run_detail',
]
