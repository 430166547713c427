# Generated by Django 4.2.7 on 2026-10-16 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="RunRecord",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "kind",
                    models.CharField(
                        choices=[
                            ("validate", "Validate"),
                            ("simulate_ibm", "Simulate IBM"),
                            ("solve_pde", "Solve PDE"),
                            ("converge", "Convergence"),
                            ("agree", "Agreement"),
                            ("diagnose_density", "Density diagnostics"),
                        ],
                        max_length=32,
                    ),
                ),
                ("config_hash", models.CharField(db_index=True, max_length=64)),
                ("config_path", models.CharField(blank=True, max_length=500)),
                ("seeds", models.JSONField(default=list)),
                ("tool_version", models.CharField(max_length=20)),
                ("manifest_path", models.CharField(blank=True, max_length=500)),
                ("outputs", models.JSONField(default=dict)),
                ("metrics", models.JSONField(default=dict)),
                ("checks", models.JSONField(default=dict)),
                ("tolerances", models.JSONField(default=dict)),
                ("boundary_note", models.TextField(blank=True)),
                ("wall_clock_seconds", models.FloatField(default=0.0)),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("passed", "Passed"),
                            ("failed", "Failed"),
                            ("error", "Error"),
                        ],
                        default="passed",
                        max_length=20,
                    ),
                ),
                ("created_at", models.DateTimeField(auto_now_add=True)),
            ],
            options={
                "verbose_name": "Run record",
                "verbose_name_plural": "Run records",
                "ordering": ["-created_at", "-id"],
            },
        ),
    ]
