"""Command-line driver: gen, train, eval, explore and render sub-commands."""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import dotenv_values
from pydantic import ValidationError

from qmap.config import settings
from qmap.envs.base import LevelKind
from qmap.models.training import Command, ExplorePolicy, Relabel
from qmap.schemas.run import RunConfig
from qmap.services.errors import ContractViolation
from qmap.services.workflow import RunWorkflow

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONTRACT = 2

LOG_FORMAT = '%(levelname)-5.5s [%(name)s] %(message)s'

# flags forwarded to RunConfig.with_overrides
OVERRIDE_FLAGS = [
    'seed', 'out', 'kind', 'count', 'test_count', 'size', 'width', 'height', 'coin_density', 'levels',
    'preset', 'scale_filters', 'checkpoint', 'resume', 'oracle', 'steps', 'eval_every', 'eval_levels',
    'policy', 'runs', 'batch', 'gamma', 'double_q', 'relabel',
]


class UsageError(Exception):
    pass


class QMapArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so usage errors map to their own exit code"""

    def error(self, message: str):
        raise UsageError(f'{self.prog}: {message}')


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int, default=None, help='master seed')
    parser.add_argument('--out', default=None, help='output directory')
    parser.add_argument('--config', default=None, help='run_config.json or key=value file')
    parser.add_argument('--kind', choices=[kind.value for kind in LevelKind], default=None)
    parser.add_argument('--size', type=int, default=None, help='maze observation extent')
    parser.add_argument('--width', type=int, default=None)
    parser.add_argument('--height', type=int, default=None)
    parser.add_argument('--levels', default=None, help='directory holding train/ and test/ level files')
    parser.add_argument('--coin-density', dest='coin_density', type=float, default=None)


def _model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--preset', default=None)
    parser.add_argument('--scale-filters', dest='scale_filters', type=float, default=None)
    parser.add_argument('--checkpoint', default=None, help='checkpoint directory')
    parser.add_argument('--oracle', action='store_true', default=None, help='use ground-truth Q-frames')
    parser.add_argument('--eval-levels', dest='eval_levels', type=int, default=None)


def _training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--steps', type=int, default=None)
    parser.add_argument('--batch', type=int, default=None)
    parser.add_argument('--gamma', type=float, default=None)
    parser.add_argument('--double-q', dest='double_q', action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument('--relabel', choices=[relabel.value for relabel in Relabel], default=None)


def build_parser() -> QMapArgumentParser:
    parser = QMapArgumentParser(prog='qmap', description=settings.project_name)
    commands = parser.add_subparsers(dest='command', parser_class=QMapArgumentParser)
    commands.required = True

    gen = commands.add_parser(Command.GEN.value, help='generate level files and the maze dataset')
    _common_flags(gen)
    gen.add_argument('--count', type=int, default=None)
    gen.add_argument('--test-count', dest='test_count', type=int, default=None)

    train = commands.add_parser(Command.TRAIN.value, help='train a Q-map or baseline')
    _common_flags(train)
    _model_flags(train)
    _training_flags(train)
    train.add_argument('--count', type=int, default=None)
    train.add_argument('--test-count', dest='test_count', type=int, default=None)
    train.add_argument('--eval-every', dest='eval_every', type=int, default=None)
    train.add_argument('--resume', default=None, help='checkpoint directory to continue from')

    evaluate = commands.add_parser(Command.EVAL.value, help='goal-reaching success of a checkpoint')
    _common_flags(evaluate)
    _model_flags(evaluate)
    evaluate.add_argument('--gamma', type=float, default=None)
    evaluate.add_argument('--test-count', dest='test_count', type=int, default=None)

    explore = commands.add_parser(Command.EXPLORE.value, help='coverage and combined-agent runs')
    _common_flags(explore)
    _training_flags(explore)
    explore.add_argument('--preset', default=None)
    explore.add_argument('--scale-filters', dest='scale_filters', type=float, default=None)
    explore.add_argument('--policy', choices=[policy.value for policy in ExplorePolicy], default=None)
    explore.add_argument('--runs', type=int, default=None)

    render = commands.add_parser(Command.RENDER.value, help='Q-frame heat maps and greedy-action maps')
    _common_flags(render)
    _model_flags(render)
    render.add_argument('--gamma', type=float, default=None)
    render.add_argument('--test-count', dest='test_count', type=int, default=None)
    return parser


def read_config_file(path: str) -> Dict[str, Any]:
    """A saved run_config.json, or flat key=value lines"""
    if not Path(path).is_file():
        raise OSError(f'Config file not found: {path}')
    if path.endswith('.json'):
        return json.loads(Path(path).read_text())
    return {key: value for key, value in dotenv_values(path).items() if value is not None}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """File values first, then explicit flags"""
    command = Command(args.command)
    file_values = read_config_file(args.config) if args.config else {}
    flags = {name: getattr(args, name) for name in OVERRIDE_FLAGS if getattr(args, name, None) is not None}

    if 'training' in file_values or 'exploration' in file_values:
        base = RunConfig.model_validate({**file_values, 'command': command})
        return base.with_overrides(flags)

    kind = flags.get('kind') or file_values.get('kind') or LevelKind.MAZE.value
    seed = file_values.get('seed', settings.default_seed)
    base = RunConfig.model_validate({'command': command, 'kind': kind, 'seed': seed, 'out': settings.output_dir})
    file_values = {key: value for key, value in file_values.items() if key not in ('command', 'kind')}
    return base.with_overrides(file_values).with_overrides(flags)


def run(config: RunConfig) -> Dict[str, Any]:
    workflow = RunWorkflow(config)
    handlers = {
        Command.GEN: workflow.generate,
        Command.TRAIN: workflow.train,
        Command.EVAL: workflow.evaluate,
        Command.EXPLORE: workflow.explore,
        Command.RENDER: workflow.render,
    }
    return handlers[config.command]()


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=settings.log_level.upper(), format=LOG_FORMAT)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        logger.error(str(e))
        return EXIT_USAGE

    try:
        config = resolve_config(args)
        result = run(config)
    except ValidationError as e:
        logger.error(f'Invalid configuration: {e.error_count()} error(s): {e.errors()[0]["msg"]}')
        return EXIT_CONTRACT
    except (ContractViolation, ValueError, OSError) as e:
        logger.error(f'{args.command} failed: {e}')
        return EXIT_CONTRACT

    print(json.dumps(result, indent=2, default=str))
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
