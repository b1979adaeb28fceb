import logging
import time

import numpy as np
import orjson
import pytest

from src.common.config import Settings
from src.common.logging_config import configure_logging
from src.common.monitoring import PerformanceMonitor
from src.common.step_logger import StepLogger


@pytest.fixture
def restore_root():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield root
    root.handlers[:] = handlers
    root.setLevel(level)


def test_settings_defaults(monkeypatch):
    monkeypatch.delenv('MOHETS_SEED', raising=False)
    monkeypatch.delenv('MOHETS_THREADS', raising=False)
    settings = Settings(_env_file=None)
    assert settings.MOHETS_SEED == 2021
    assert settings.MOHETS_THREADS == 1
    assert not settings.is_production


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv('MOHETS_SEED', '7')
    monkeypatch.setenv('MOHETS_ENVIRONMENT', 'production')
    settings = Settings(_env_file=None)
    assert settings.MOHETS_SEED == 7
    assert settings.is_production


def test_configure_logging_installs_one_handler(restore_root):
    configure_logging('debug')
    configure_logging('warning')
    assert len(restore_root.handlers) == 1
    assert restore_root.level == logging.WARNING


def test_monitor_tracks_phases():
    monitor = PerformanceMonitor()
    with monitor.track('load'):
        time.sleep(0.01)
    with monitor.track('load'):
        pass
    assert monitor.elapsed('load') >= 0.01
    assert monitor.elapsed('train') == 0.0
    summary = monitor.get_summary()
    assert summary['phases']['load']['count'] == 2
    assert summary['uptime_s'] >= summary['phases']['load']['total_s']


def test_monitor_records_failed_phase():
    monitor = PerformanceMonitor()

    def failing_phase():
        with monitor.track('train'):
            raise RuntimeError('diverged')

    with pytest.raises(RuntimeError):
        failing_phase()
    assert monitor.get_summary()['phases']['train']['count'] == 1


def test_step_logger_writes_json_lines(tmp_path):
    path = tmp_path / 'logs' / 'train_log.jsonl'
    step_logger = StepLogger(path)
    step_logger.log_step(
        step=1,
        epoch=0,
        lr=np.float32(1e-3),
        huber=0.5,
        balance=1.0,
        total=0.52,
        f_histogram=np.array([[0.5, 0.5]]),
    )
    step_logger.log_epoch(0, 0.4, 0.4, 0)
    step_logger.log_event('early_stop', epoch=0)
    step_logger.close()
    lines = [orjson.loads(line) for line in path.read_text().splitlines()]
    assert [r['type'] for r in lines] == ['step', 'epoch', 'event']
    assert lines[0]['f_histogram'] == [[0.5, 0.5]]
    assert lines[0]['lr'] == pytest.approx(1e-3)
    assert lines[2]['action'] == 'early_stop'


def test_step_logger_in_memory():
    step_logger = StepLogger()
    step_logger.log_epoch(3, 0.2, 0.1, 2)
    assert list(step_logger.records) == [
        {
            'type': 'epoch',
            'epoch': 3,
            'val_mse': 0.2,
            'best_val_mse': 0.1,
            'epochs_since_improvement': 2,
        }
    ]


def test_step_logger_keeps_newest_records(tmp_path):
    path = tmp_path / 'train_log.jsonl'
    with StepLogger(path, max_records=2) as step_logger:
        for epoch in range(5):
            step_logger.log_epoch(epoch, 0.1, 0.1, 0)
    assert [r['epoch'] for r in step_logger.records] == [3, 4]
    assert len(path.read_text().splitlines()) == 5


def test_step_logger_is_not_registered():
    before = set(logging.Logger.manager.loggerDict)
    with StepLogger() as step_logger:
        step_logger.log_event('start')
    assert set(logging.Logger.manager.loggerDict) == before
    assert step_logger._handler is None
