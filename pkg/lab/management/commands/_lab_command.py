# lab/management/commands/_lab_command.py
import logging

from django.core.management.base import BaseCommand, CommandError

from lab import __version__
from lab.config.lab_config import LabConfig
from lab.config.run_config import load_config
from lab.exceptions import AcceptanceCheckFailed, LabError, NumericalGuardError, SchemaError
from lab.models import RunRecord
from lab.services.persistence import persist_record

logger = logging.getLogger(__name__)


class LabCommand(BaseCommand):
    """Shared flags, error translation and record keeping for the lab verbs"""

    handler_class = None

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='YAML run configuration')
        parser.add_argument('--out', default=None, help='output directory (default: LAB_OUTPUT_DIR)')
        parser.add_argument('--seed', type=int, default=None, help='override experiment.run_seed')
        parser.add_argument('--threads', type=int, default=None, help='worker threads for independent runs')
        parser.add_argument('--strict', action='store_true', help='exit 4 when any check fails')

    def handle(self, *args, **options):
        config_path = options['config']
        out_dir = options['out'] or LabConfig.get_output_dir()
        config = None
        try:
            LabConfig.validate_config()
        except ValueError as e:
            self.stderr.write(self.style.ERROR(f"❌ {e}"))
            raise CommandError(str(e), returncode=SchemaError.exit_code) from e
        logger.debug(f"🔧 Lab settings: {LabConfig.get_config_summary()}")

        try:
            config = load_config(config_path)
            if options['seed'] is not None:
                config = config.with_run_seed(options['seed'])

            self.stdout.write(f"🔄 {self.handler_class.kind} on {config_path} ({config.config_hash()[:12]})")
            handler = self.handler_class(config, config_path=config_path, threads=options['threads'])
            report = handler.run()
            manifest = persist_record(report, out_dir)
            self._print_report(report, manifest)

            if options['strict'] and report.failed_checks():
                raise AcceptanceCheckFailed(report.failed_checks())

        except LabError as e:
            if isinstance(e, NumericalGuardError) and config is not None:
                self._record_error(config, config_path, e)
            self.stderr.write(self.style.ERROR(f'❌ {e}'))
            raise CommandError(str(e), returncode=e.exit_code) from e

    def _print_report(self, report, manifest):
        for name, ok in sorted(report.checks.items()):
            style = self.style.SUCCESS if ok else self.style.WARNING
            self.stdout.write(style(f"   {'✅' if ok else '⚠️'} {name}"))
        self.stdout.write(f"📝 Manifest: {manifest}")
        if report.failed_checks():
            self.stdout.write(self.style.WARNING(f"⚠️ {len(report.failed_checks())} check(s) failed"))
        else:
            self.stdout.write(self.style.SUCCESS(f"✅ {report.kind} finished in {report.wall_clock_seconds:.1f}s"))

    def _record_error(self, config, config_path, error):
        try:
            RunRecord.objects.create(
                kind=self.handler_class.kind,
                config_hash=config.config_hash(),
                config_path=str(config_path),
                seeds=list(config.experiment.seeds),
                tool_version=__version__,
                metrics={'error': str(error), 'error_type': type(error).__name__},
                tolerances=LabConfig.get_tolerances(config.numerics),
                status='error',
            )
        except Exception as e:
            logger.error(f"❌ Could not record failed run: {e}")
