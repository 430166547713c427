# lab/models.py
from django.db import models


class RunRecord(models.Model):
    KIND_CHOICES = [
        ('validate', 'Validate'),
        ('simulate_ibm', 'Simulate IBM'),
        ('solve_pde', 'Solve PDE'),
        ('converge', 'Convergence'),
        ('agree', 'Agreement'),
        ('diagnose_density', 'Density diagnostics'),
    ]

    STATUS_CHOICES = [
        ('passed', 'Passed'),
        ('failed', 'Failed'),
        ('error', 'Error'),
    ]

    kind = models.CharField(max_length=32, choices=KIND_CHOICES)
    config_hash = models.CharField(max_length=64, db_index=True)
    config_path = models.CharField(max_length=500, blank=True)
    seeds = models.JSONField(default=list)
    tool_version = models.CharField(max_length=20)

    # Outputs and results
    manifest_path = models.CharField(max_length=500, blank=True)
    outputs = models.JSONField(default=dict)  # series name -> CSV path
    metrics = models.JSONField(default=dict)
    checks = models.JSONField(default=dict)  # check name -> bool
    tolerances = models.JSONField(default=dict)
    boundary_note = models.TextField(blank=True)

    wall_clock_seconds = models.FloatField(default=0.0)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='passed')
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at', '-id']
        verbose_name = 'Run record'
        verbose_name_plural = 'Run records'

    def __str__(self):
        return f"{self.kind} {self.config_hash[:12]} ({self.status})"

    def failed_checks(self):
        return sorted(name for name, ok in self.checks.items() if not ok)

    def as_dict(self):
        return {
            'id': self.id,
            'kind': self.kind,
            'config_hash': self.config_hash,
            'config_path': self.config_path,
            'seeds': self.seeds,
            'tool_version': self.tool_version,
            'manifest_path': self.manifest_path,
            'outputs': self.outputs,
            'metrics': self.metrics,
            'checks': self.checks,
            'tolerances': self.tolerances,
            'boundary_note': self.boundary_note,
            'wall_clock_seconds': self.wall_clock_seconds,
            'status': self.status,
            'created_at': self.created_at.isoformat() if self.created_at else None,
        }
