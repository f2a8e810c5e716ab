"""
Django management command running one stage of a suture landmark experiment.

    python manage.py run train-detector --config configs/smoke.yaml --fold 0
    python manage.py run evaluate --config configs/smoke.yaml --set eval.target=translated

Exit status is 0 on success; lab errors exit with their category's code
(2 configuration, 3 missing artifact, 4 leakage, 5 validation, 6 shape,
7 contract violation, 8 checkpoint) after printing the error payload.
"""
import json
import logging

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import SutureLabError, error_payload, exit_code_for
from experiments import config
from experiments.loader import load_experiment
from experiments.stages import run_stage

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Run one experiment stage (synth-gen, train-detector, train-gan, translate, evaluate, fuse-retrain, report)'

    def add_arguments(self, parser):
        parser.add_argument('stage', choices=config.COMMANDS, help='Stage to run')
        parser.add_argument('--config', dest='descriptor', help='Experiment descriptor (YAML)')
        parser.add_argument(
            '--set',
            dest='overrides',
            action='append',
            default=[],
            metavar='SECTION.KEY=VALUE',
            help='Override one descriptor value (repeatable)',
        )
        parser.add_argument('--seed', type=int, help='Seed for every stage')
        parser.add_argument('--fold', type=int, help='Run a single fold')
        parser.add_argument('--device', help='Torch device, overrides COMPUTE_DEVICE')
        parser.add_argument('--resume', action='store_true', help='Continue training from last.pt')

    def handle(self, *args, **options):
        stage = options['stage']
        try:
            cfg = load_experiment(
                options.get('descriptor'),
                overrides=options.get('overrides') or [],
                seed=options.get('seed'),
                fold=options.get('fold'),
                device=options.get('device'),
            )
            if options.get('resume'):
                cfg.experiment.resume = True
            result = run_stage(stage, cfg)
        except SutureLabError as e:
            self.stderr.write(json.dumps(error_payload(e), default=str))
            logger.error(f"[{stage.upper()}] {e.category}: {e.message}")
            raise CommandError(e.message, returncode=exit_code_for(e))
        except Exception as e:
            logger.error(f"[{stage.upper()}] Unexpected error: {str(e)}", exc_info=True)
            raise CommandError(str(e) or e.__class__.__name__, returncode=1)

        self.stdout.write(self.style.SUCCESS(json.dumps(result.to_dict(), default=str, sort_keys=True)))
