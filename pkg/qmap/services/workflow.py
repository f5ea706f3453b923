"""Orchestration of the CLI commands: levels, datasets, training, evaluation,
exploration and rendering, each returning a summary dict."""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from qmap.config import settings
from qmap.engine.checkpoint import load_manifest
from qmap.envs.base import EnvState, GridLevel, LevelKind
from qmap.envs.coverage import coverage_world_generate
from qmap.envs.env import (CoverageEnv, MAZE_TEST_STREAM, MAZE_TRAIN_STREAM, MazeEnv, episode_seed,
                           stream_seed)
from qmap.envs.level_io import read_level, write_level, write_ppm
from qmap.envs.maze import generate_padded_maze
from qmap.envs.render import render_observation
from qmap.envs.sokoban import sokoban_generate
from qmap.models.layer import OutputKind
from qmap.models.pair import ModelPair
from qmap.models.presets import base_name, preset
from qmap.models.training import ExplorePolicy
from qmap.schemas.layer import ArchitectureSpec
from qmap.schemas.run import RunConfig
from qmap.services.combined import combined_agent_run
from qmap.services.datasets import RandomCollector, build_maze_dataset
from qmap.services.errors import ContractViolation
from qmap.services.evaluator import (eval_maze_success, eval_sokoban_success, held_out_sokoban_levels,
                                     random_policy_sokoban_success)
from qmap.services.explorer import coverage_experiment
from qmap.services.oracle import OracleAdapter
from qmap.services.replay import ReplayBuffer
from qmap.services.trainer import BaselineTrainer, GoalInInputAdapter, QMapTrainer, Trainer
from qmap.utils.file_utils import clean_filename, ensure_directory_exists, level_filename, list_level_files
from qmap.utils.images import write_action_map, write_heatmap
from qmap.utils.metrics import MetricsLog, write_coverage_curves

logger = logging.getLogger(__name__)

RUN_CONFIG_NAME = 'run_config.json'
METRICS_NAME = 'metrics.csv'
DEFAULT_PRESETS = {
    LevelKind.MAZE: 'maze-qmap-nocompress',
    LevelKind.SOKOBAN: 'sokoban-qmap',
    LevelKind.COVERAGE: 'coverage-qmap-compress',
}
TASK_PRESET = 'coverage-task-dqn'


class RunWorkflow:
    """Service running one configured command end to end"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.out)
        self.logger = logger

    # -- shared helpers -------------------------------------------------

    def prepare_output(self) -> Path:
        if not ensure_directory_exists(str(self.out)):
            raise OSError(f'Cannot write to output directory {self.out}')
        (self.out / RUN_CONFIG_NAME).write_text(self.config.model_dump_json(indent=2))
        return self.out

    def extent(self, kind: Optional[LevelKind] = None) -> Tuple[int, int]:
        kind = kind or self.config.kind
        if kind == LevelKind.MAZE:
            return self.config.size, self.config.size
        return self.config.height, self.config.width

    def resolve_spec(self, name: Optional[str] = None, kind: Optional[LevelKind] = None) -> ArchitectureSpec:
        kind = kind or self.config.kind
        name = name or self.config.preset or DEFAULT_PRESETS[kind]
        if name.startswith('scaled-') or self.config.scale_filters is None:
            scale = self.config.scale_filters
        else:
            name, scale = f'scaled-{name}', self.config.scale_filters
        height, width = self.extent(kind)
        try:
            return preset(name, height, width, scale)
        except ValueError as e:
            raise ContractViolation(f'Preset {name} does not fit {height}x{width} observations: {e}')

    def new_pair(self, spec: ArchitectureSpec, seed: Optional[int] = None) -> ModelPair:
        cfg = self.config.training
        return ModelPair(spec, seed=self.config.seed if seed is None else seed, learning_rate=cfg.learning_rate,
                         beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)

    def maze_levels(self, split: str) -> List[GridLevel]:
        """Training or held-out mazes: from --levels when given, else regenerated from the seed"""
        if self.config.levels:
            files = list_level_files(str(Path(self.config.levels) / split))
            if not files:
                raise ContractViolation(f'No level files under {Path(self.config.levels) / split}')
            return [read_level(path)[0] for path in files]
        stream, count = ((MAZE_TRAIN_STREAM, self.config.count) if split == 'train'
                         else (MAZE_TEST_STREAM, self.config.test_count or self.config.eval_levels))
        return [generate_padded_maze(stream_seed(self.config.seed, stream, i), self.config.size)
                for i in range(count)]

    def sokoban_levels(self) -> List[Tuple[GridLevel, EnvState]]:
        if self.config.levels:
            files = list_level_files(str(Path(self.config.levels) / 'test'))
            if not files:
                raise ContractViolation(f'No level files under {Path(self.config.levels) / "test"}')
            return [read_level(path) for path in files]
        return held_out_sokoban_levels(self.config.seed, self.config.eval_levels, self.config.width,
                                       self.config.height, self.config.min_reachable_goals)

    def source_for(self, pair: ModelPair):
        if pair.spec.output == OutputKind.QVECTOR:
            return GoalInInputAdapter(pair, self.config.kind)
        return pair

    # -- gen ------------------------------------------------------------

    def generate(self) -> Dict[str, Any]:
        self.prepare_output()
        cfg = self.config
        written = {'train': 0, 'test': 0}
        transitions = 0
        if cfg.kind == LevelKind.MAZE:
            for split in ('train', 'test'):
                directory = self.out / split
                directory.mkdir(parents=True, exist_ok=True)
                for i, level in enumerate(self.maze_levels(split)):
                    start = MazeEnv(level, seed=level.seed or 0).state
                    write_level(directory / level_filename(i), level, start)
                    written[split] += 1
            buffer = build_maze_dataset(self.maze_levels('train'), seed=cfg.seed)
            buffer.save(self.out / 'dataset')
            transitions = len(buffer)
        elif cfg.kind == LevelKind.SOKOBAN:
            for split, held_out, count in (('train', False, cfg.count), ('test', True, cfg.test_count)):
                directory = self.out / split
                directory.mkdir(parents=True, exist_ok=True)
                levels = (held_out_sokoban_levels(cfg.seed, count, cfg.width, cfg.height, cfg.min_reachable_goals)
                          if held_out else
                          [sokoban_generate(episode_seed(cfg.seed, i), cfg.width, cfg.height, cfg.min_reachable_goals)
                           for i in range(count)])
                for i, (level, state) in enumerate(levels):
                    write_level(directory / level_filename(i), level, state)
                    written[split] += 1
        else:
            directory = self.out / 'train'
            directory.mkdir(parents=True, exist_ok=True)
            level, state = coverage_world_generate(cfg.seed, cfg.width, cfg.height, cfg.coin_density)
            write_level(directory / level_filename(0), level, state)
            written['train'] = 1
        self.logger.info(f'Generated {written["train"]} training and {written["test"]} test {cfg.kind.value} levels'
                         + (f', {transitions} transitions' if transitions else ''))
        return {'success': True, 'levels': written['train'], 'test_levels': written['test'],
                'transitions': transitions, 'out': str(self.out)}

    # -- train ----------------------------------------------------------

    def _trainer(self, pair: ModelPair, buffer: ReplayBuffer) -> Trainer:
        if pair.spec.output == OutputKind.QVECTOR:
            return BaselineTrainer(pair, buffer, self.config.training, self.config.kind, self.config.seed)
        return QMapTrainer(pair, buffer, self.config.training)

    def _evaluate(self, pair: ModelPair, test_levels) -> Dict[str, float]:
        source = self.source_for(pair)
        if self.config.kind == LevelKind.SOKOBAN:
            return eval_sokoban_success(source, test_levels, self.config.sokoban_budget_factor).metrics()
        return eval_maze_success(source, test_levels).metrics()

    def train(self) -> Dict[str, Any]:
        self.prepare_output()
        cfg = self.config
        if cfg.kind == LevelKind.COVERAGE:
            raise ContractViolation('coverage worlds are trained online by the explore command')
        spec = self.resolve_spec()
        height, width = self.extent()
        if tuple(spec.input_shape[1:]) != (height, width):
            raise ContractViolation(f'preset {spec.name} expects {spec.input_shape[1:]} frames, '
                                    f'dataset holds {height}x{width}')

        collector = None
        if cfg.kind == LevelKind.MAZE:
            buffer = build_maze_dataset(self.maze_levels('train'), seed=cfg.seed)
            test_levels = self.maze_levels('test')
        else:
            collector = RandomCollector(cfg.seed, cfg.width, cfg.height)
            buffer = ReplayBuffer((3, height, width), seed=cfg.seed, capacity=cfg.training.buffer_capacity)
            test_levels = held_out_sokoban_levels(cfg.seed, cfg.eval_levels, cfg.width, cfg.height,
                                                  cfg.min_reachable_goals)

        metrics = MetricsLog(seed=cfg.seed)
        pending: List[float] = []
        if cfg.resume:
            pair = ModelPair.load(cfg.resume, expected_spec=spec.name)
            extra = pair.manifest.extra
            if collector is not None:
                buffer = ReplayBuffer.load(Path(cfg.resume) / 'buffer')
                collector.fast_forward(int(extra.get('collected', 0)))
            trainer = self._trainer(pair, buffer)
            trainer.restore(extra.get('trainer', {}))
            metrics.extend(extra.get('metrics', []))
            pending = list(extra.get('pending_losses', []))
            self.logger.info(f'Resumed {spec.name} at update {pair.updates} from {cfg.resume}')
        else:
            pair = self.new_pair(spec)
            trainer = self._trainer(pair, buffer)

        eval_every = cfg.eval_every or settings.eval_every
        checkpoint_every = cfg.checkpoint_every or cfg.eval_every or settings.checkpoint_cadence
        last_checkpoint = None
        while pair.updates < cfg.steps:
            if collector is not None:
                if len(buffer) < cfg.training.batch or pair.updates % cfg.training.updates_per_collect == 0:
                    collector.collect(cfg.training.collect_steps, buffer)
            pending.append(trainer.train_step())
            step = pair.updates
            if step % eval_every == 0 or step == cfg.steps:
                values = {'loss': float(np.mean(pending))}
                values.update(self._evaluate(pair, test_levels))
                metrics.record(step, values)
                metrics.write_csv(self.out / METRICS_NAME)
                pending = []
            if step % checkpoint_every == 0 or step == cfg.steps:
                last_checkpoint = self._checkpoint(pair, trainer, metrics, pending, collector, buffer)

        metrics.write_csv(self.out / METRICS_NAME)
        return {'success': True, 'preset': spec.name, 'updates': pair.updates,
                'parameters': pair.network.param_count(), 'checkpoint': str(last_checkpoint) if last_checkpoint else None,
                'metrics': str(self.out / METRICS_NAME)}

    def _checkpoint(self, pair: ModelPair, trainer: Trainer, metrics: MetricsLog, pending: List[float],
                    collector: Optional[RandomCollector], buffer: ReplayBuffer) -> Path:
        directory = self.out / 'checkpoints' / f'step_{pair.updates:08d}'
        extra = {
            'trainer': trainer.state(),
            'metrics': metrics.rows,
            'pending_losses': pending,
            'run_config': self.config.model_dump(mode='json'),
        }
        if collector is not None:
            extra['collected'] = collector.steps
            buffer.save(directory / 'buffer')
        return pair.save(directory, extra=extra)

    # -- eval -----------------------------------------------------------

    def load_source(self) -> Tuple[Any, int, str]:
        """(Q-frame source, update count, name) for --oracle or a checkpoint"""
        cfg = self.config
        if cfg.oracle:
            return OracleAdapter(cfg.kind, cfg.training.gamma), 0, 'oracle'
        if not cfg.checkpoint:
            raise ContractViolation('a checkpoint (--checkpoint) or --oracle is required')
        manifest = load_manifest(cfg.checkpoint)
        if cfg.preset and base_name(cfg.preset) != base_name(manifest.spec_name):
            raise ContractViolation(f'checkpoint holds {manifest.spec_name}, not {cfg.preset}')
        height, width = self.extent()
        if tuple(manifest.architecture.input_shape[1:]) != (height, width):
            raise ContractViolation(f'checkpoint {manifest.spec_name} expects {manifest.architecture.input_shape[1:]} '
                                    f'frames, levels are {height}x{width}')
        pair = ModelPair.load(cfg.checkpoint)
        return self.source_for(pair), pair.updates, pair.spec.name

    def evaluate(self) -> Dict[str, Any]:
        self.prepare_output()
        source, step, name = self.load_source()
        metrics = MetricsLog(seed=self.config.seed)
        if self.config.kind == LevelKind.SOKOBAN:
            levels = self.sokoban_levels()
            result = eval_sokoban_success(source, levels, self.config.sokoban_budget_factor)
            floor = random_policy_sokoban_success(levels, self.config.seed, self.config.sokoban_budget_factor)
            metrics.record(step, {**result.metrics(), 'random_policy_success_rate': floor.success_rate})
        elif self.config.kind == LevelKind.MAZE:
            result = eval_maze_success(source, self.maze_levels('test'))
            metrics.record(step, result.metrics())
            for i, rate in enumerate(result.level_rates):
                metrics.record(step, {f'level_{i:03d}_success_rate': rate})
        else:
            raise ContractViolation('coverage worlds have no goal-reaching evaluation; use explore')
        path = metrics.write_csv(self.out / f'eval_{clean_filename(name)}.csv')
        return {'success': True, 'model': name, 'success_rate': result.success_rate, 'csv': str(path)}

    # -- explore --------------------------------------------------------

    def coverage_env(self) -> CoverageEnv:
        cfg = self.config
        return CoverageEnv(cfg.seed, cfg.width, cfg.height, cfg.coin_density, episode_steps=cfg.coverage_episode_steps)

    def explore(self) -> Dict[str, Any]:
        self.prepare_output()
        cfg = self.config
        if cfg.policy == ExplorePolicy.COMBINED:
            env = self.coverage_env()
            task_pair = self.new_pair(self.resolve_spec(TASK_PRESET, LevelKind.COVERAGE))
            qmap_pair = self.new_pair(self.resolve_spec(kind=LevelKind.COVERAGE))
            run = combined_agent_run(env, task_pair, qmap_pair, cfg.exploration, cfg.steps, cfg.training, cfg.seed)
            metrics = MetricsLog(seed=cfg.seed)
            metrics.record(cfg.steps, {
                'exploration_share': run.realized_share,
                'scheduled_exploration_share': run.scheduled_share,
                'total_reward': float(run.rewards[-1]) if len(run.rewards) else 0.0,
                'unique_cells': run.record.unique,
            })
            for episode, value in enumerate(run.episode_returns):
                metrics.record(episode, {'episode_return': value})
            metrics.write_csv(self.out / METRICS_NAME)
            run.record.to_csv(self.out / f'coverage_seed{cfg.seed}.csv')
            return {'success': True, 'policy': cfg.policy.value, 'exploration_share': run.realized_share,
                    'scheduled_share': run.scheduled_share, 'unique_cells': run.record.unique}

        def make_trainer(buffer: ReplayBuffer, seed: int) -> Trainer:
            pair = self.new_pair(self.resolve_spec(kind=LevelKind.COVERAGE), seed=seed)
            return QMapTrainer(pair, buffer, cfg.training)

        seeds = list(range(cfg.seed, cfg.seed + cfg.runs))
        records = coverage_experiment(self.coverage_env, cfg.policy, cfg.steps, seeds, cfg.exploration, make_trainer)
        for record in records:
            record.to_csv(self.out / f'coverage_seed{record.seed}.csv')
        write_coverage_curves(self.out / 'coverage_curves.csv', [record.curve() for record in records])
        unique = [record.unique for record in records]
        metrics = MetricsLog(seed=cfg.seed)
        for record in records:
            metrics.rows.append({'step': cfg.steps, 'metric_name': 'unique_cells', 'value': float(record.unique),
                                 'seed': record.seed})
        metrics.write_csv(self.out / METRICS_NAME)
        return {'success': True, 'policy': cfg.policy.value, 'unique_cells': unique,
                'median_unique_cells': float(np.median(unique))}

    # -- render ---------------------------------------------------------

    def render(self) -> Dict[str, Any]:
        self.prepare_output()
        source, _, name = self.load_source()
        if self.config.kind == LevelKind.SOKOBAN:
            levels = self.sokoban_levels()
        elif self.config.kind == LevelKind.MAZE:
            levels = [(level, MazeEnv(level, seed=level.seed or 0).state) for level in self.maze_levels('test')]
        else:
            levels = [coverage_world_generate(self.config.seed, self.config.width, self.config.height,
                                              self.config.coin_density)]
        levels = levels[:self.config.eval_levels]
        written = []
        for i, (level, state) in enumerate(levels):
            frame = render_observation(level, state)
            qframes = source.qframes(frame[None])[0]
            written.append(write_ppm(self.out / f'level_{i:03d}_observation.ppm', frame))
            written.append(write_heatmap(self.out / f'level_{i:03d}_maxq.ppm', qframes, level.walls))
            written.append(write_action_map(self.out / f'level_{i:03d}_actions.ppm', qframes, level.walls,
                                            state.agent if level.kind != LevelKind.SOKOBAN else None))
        self.logger.info(f'Rendered {len(levels)} levels for {name} to {self.out}')
        return {'success': True, 'model': name, 'files': [str(path) for path in written]}
