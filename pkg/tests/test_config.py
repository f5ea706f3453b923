import json

import pytest
from pydantic import ValidationError

from qmap.config import Settings
from qmap.envs.base import LevelKind
from qmap.main import build_parser, read_config_file, resolve_config
from qmap.models.training import Command, Relabel
from qmap.schemas.run import COVERAGE_EXTENT, RunConfig
from qmap.schemas.training import ExplorationConfig, TrainingConfig


def test_overrides_reach_nested_configs():
    config = RunConfig(command=Command.TRAIN).with_overrides({
        'steps': 20, 'batch': 8, 'double-q': False, 'relabel': 'all-goals', 'k_min': 5,
    })
    assert config.steps == 20
    assert config.training.batch == 8
    assert config.training.double_q is False
    assert config.training.relabel == Relabel.ALL_GOALS
    assert config.exploration.k_min == 5


def test_gamma_sets_both_discounts():
    config = RunConfig(command=Command.EXPLORE).with_overrides({'gamma': 0.8})
    assert config.training.gamma == 0.8
    assert config.exploration.gamma == 0.8


def test_unknown_and_nested_keys_rejected():
    config = RunConfig(command=Command.GEN)
    with pytest.raises(ValueError):
        config.with_overrides({'learning_rte': 1e-3})
    with pytest.raises(ValueError):
        config.with_overrides({'training': {}})


def test_none_overrides_are_skipped():
    config = RunConfig(command=Command.GEN, seed=4)
    assert config.with_overrides({'seed': None}).seed == 4


def test_coverage_worlds_default_to_32():
    config = RunConfig(command=Command.EXPLORE, kind=LevelKind.COVERAGE)
    assert (config.width, config.height) == (COVERAGE_EXTENT, COVERAGE_EXTENT)
    assert RunConfig(command=Command.EXPLORE, kind='coverage', width=24).width == 24
    assert RunConfig(command=Command.TRAIN, kind=LevelKind.SOKOBAN).width == 10


def test_invalid_values_rejected():
    with pytest.raises(ValidationError):
        RunConfig(command=Command.GEN, size=3)
    with pytest.raises(ValidationError):
        TrainingConfig(clip_low=1.0, clip_high=0.0)
    with pytest.raises(ValidationError):
        ExplorationConfig(k_min=31, k_max=30)
    with pytest.raises(ValidationError):
        TrainingConfig(gamma=1.0)


def test_sokoban_training_defaults():
    cfg = TrainingConfig.for_sokoban(learning_rate=1e-3)
    assert (cfg.batch, cfg.double_q, cfg.learning_rate) == (100, False, 1e-3)


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv('QMAP_EVAL_WORKERS', '2')
    monkeypatch.setenv('QMAP_EVAL_EVERY', '300')
    current = Settings()
    assert current.eval_workers == 2
    assert current.checkpoint_cadence == 300
    monkeypatch.setenv('QMAP_CHECKPOINT_EVERY', '50')
    assert Settings().checkpoint_cadence == 50


def test_flags_override_key_value_file(tmp_path):
    path = tmp_path / 'run.env'
    path.write_text('seed=3\ncount=2\nbatch=16\n')
    args = build_parser().parse_args(['train', '--config', str(path), '--count', '5', '--out', str(tmp_path)])
    config = resolve_config(args)
    assert (config.seed, config.count, config.training.batch) == (3, 5, 16)
    assert config.command == Command.TRAIN


def test_saved_run_config_is_reused(tmp_path):
    saved = RunConfig(command=Command.TRAIN, kind=LevelKind.SOKOBAN, seed=9, steps=50)
    path = tmp_path / 'run_config.json'
    path.write_text(saved.model_dump_json())
    args = build_parser().parse_args(['eval', '--config', str(path), '--oracle'])
    config = resolve_config(args)
    assert config.command == Command.EVAL
    assert (config.kind, config.seed, config.steps, config.oracle) == (LevelKind.SOKOBAN, 9, 50, True)


def test_coverage_flag_gets_coverage_extents(tmp_path):
    args = build_parser().parse_args(['explore', '--kind', 'coverage', '--out', str(tmp_path)])
    config = resolve_config(args)
    assert (config.width, config.height) == (32, 32)


def test_missing_config_file(tmp_path):
    with pytest.raises(OSError):
        read_config_file(str(tmp_path / 'absent.json'))
    path = tmp_path / 'partial.json'
    path.write_text(json.dumps({'seed': 2}))
    assert read_config_file(str(path)) == {'seed': 2}


def test_sokoban_runs_get_sokoban_training():
    config = RunConfig(command=Command.TRAIN, kind=LevelKind.SOKOBAN)
    assert (config.training.batch, config.training.double_q) == (100, False)
    assert RunConfig(command=Command.TRAIN, kind='sokoban').training.batch == 100
    assert RunConfig(command=Command.TRAIN).training.batch == 50
    explicit = RunConfig(command=Command.TRAIN, kind=LevelKind.SOKOBAN, training=TrainingConfig(batch=7))
    assert (explicit.training.batch, explicit.training.double_q) == (7, True)


def test_sokoban_flags_still_override_defaults(tmp_path):
    args = build_parser().parse_args(['train', '--kind', 'sokoban', '--batch', '32', '--out', str(tmp_path)])
    config = resolve_config(args)
    assert (config.training.batch, config.training.double_q) == (32, False)
