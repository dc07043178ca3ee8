from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Dict, Tuple, Any
import typeguard
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from parsl.app.app import python_app
from parsl.data_provider.files import File
from parsl.dataflow.futures import AppFuture

from relulimit.core import Network, SequenceSpec
from relulimit.checks import Check, CheckResult, load_checks
from relulimit.utils import write_text_atomic, save_yaml, log_report_to_wandb


logger = logging.getLogger(__name__) # logging per module
logger.setLevel(logging.INFO)


FLOAT_FORMAT = '%.17g'


def to_builtin(value: Any) -> Any:
    """Converts numpy data to plain python; non-finite floats become None"""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value


@typeguard.typechecked
def _app_trace_table(frame: pd.DataFrame) -> List[List]:
    columns = [str(c) for c in frame.columns]
    rows = [[to_builtin(v) for v in row] for row in frame.itertuples(index=False)]
    return [columns] + rows
app_trace_table = python_app(_app_trace_table, executors=['default'])


@typeguard.typechecked
def _app_check_table(results: List[CheckResult]) -> List[List]:
    return [['name', 'passed']] + [[r.name, r.passed] for r in results]
app_check_table = python_app(_app_check_table, executors=['default'])


@typeguard.typechecked
class Manager:
    """Writes run artifacts into one output directory

    Every file is written atomically so interrupted runs never leave
    partial artifacts behind.

    """

    def __init__(
            self,
            path_output: Union[Path, str],
            wandb_project: Optional[str] = None,
            wandb_group: Optional[str] = None,
            ) -> None:
        self.path_output   = Path(path_output)
        self.wandb_project = wandb_project
        self.wandb_group   = wandb_group
        self.path_output.mkdir(parents=True, exist_ok=True)

    def write_json(self, name: str, data: Any) -> Path:
        text = json.dumps(to_builtin(data), indent=2, allow_nan=False)
        path = write_text_atomic(self.path_output / name, text + '\n')
        logger.info('wrote {}'.format(path))
        return path

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        path = write_text_atomic(self.path_output / name, text)
        logger.info('wrote {}'.format(path))
        return path

    def save_network(self, network: Network, name: str = 'network.json') -> Path:
        return network.save(self.path_output / name)

    def save_spec(self, spec: SequenceSpec, name: str = 'spec.json') -> Path:
        return spec.save(self.path_output / name)

    def save_config(self, config: Dict[str, Any], name: str = 'run_config.yaml') -> Path:
        path = self.path_output / name
        save_yaml(to_builtin(config), outputs=[File(str(path))]).result()
        return path

    def save_checks(self, checks: List[Check]) -> Path:
        path_checks = self.path_output / 'checks'
        path_checks.mkdir(parents=False, exist_ok=True)
        for check in checks:
            check.save(path_checks) # all checks may be stored in same dir
        return path_checks

    def load_checks(self) -> Optional[List[Check]]:
        path_checks = self.path_output / 'checks'
        if not path_checks.is_dir():
            return None
        return load_checks(path_checks)

    def log_wandb(
            self,
            run_name: str,
            frame: Optional[Union[pd.DataFrame, AppFuture]] = None,
            results: Optional[AppFuture] = None,
            ) -> Optional[AppFuture]:
        if self.wandb_project is None:
            return None
        logger.info('logging {} to wandb'.format(run_name))
        names, tables = [], []
        if frame is not None:
            names.append('trace')
            tables.append(app_trace_table(frame))
        if results is not None:
            names.append('checks')
            tables.append(app_check_table(results))
        return log_report_to_wandb(
                run_name,
                self.wandb_group,
                self.wandb_project,
                names,
                inputs=tables,
                )
