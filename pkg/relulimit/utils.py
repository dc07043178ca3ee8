from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Any, Dict
import typeguard
import os
import sys
import tempfile
import importlib
import importlib.util
import multiprocessing
from pathlib import Path

from parsl.app.app import python_app
from parsl.data_provider.files import File
from parsl.executors import ThreadPoolExecutor
from parsl.config import Config


THREADS_VARIABLE = 'RELU_LIMIT_THREADS'


@typeguard.typechecked
def write_text_atomic(path: Union[Path, str], text: str) -> Path:
    """Writes through a temporary file in the target directory, then renames"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, path_tmp = tempfile.mkstemp(dir=path.parent, prefix='.' + path.name, suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', newline='\n') as f:
            f.write(text)
        os.replace(path_tmp, path)
    except BaseException:
        if os.path.exists(path_tmp):
            os.remove(path_tmp)
        raise
    return path


@typeguard.typechecked
def _combine_futures(inputs: List[Any]) -> List[Any]:
    return list(inputs)
combine_futures = python_app(_combine_futures, executors=['default'])


@typeguard.typechecked
def get_parsl_config_from_file(
        path_config: Union[Path, str],
        path_internal: Union[Path, str],
        ) -> Config:
    path_config = Path(path_config)
    assert path_config.is_file()
    spec = importlib.util.spec_from_file_location('module.name', path_config)
    parsl_config_module = importlib.util.module_from_spec(spec)
    sys.modules['module.name'] = parsl_config_module
    spec.loader.exec_module(parsl_config_module)
    return parsl_config_module.get_config(path_internal)


@typeguard.typechecked
def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit value, else RELU_LIMIT_THREADS, else the cpu count; 0 means all cpus"""
    if threads is None:
        threads = int(os.environ.get(THREADS_VARIABLE, '0'))
    if threads < 0:
        raise ValueError('thread count must be nonnegative')
    if threads == 0:
        threads = multiprocessing.cpu_count()
    return threads


@typeguard.typechecked
def get_default_parsl_config(
        path_internal: Union[Path, str],
        threads: Optional[int] = None,
        ) -> Config:
    executors = [
            ThreadPoolExecutor(label='default', max_threads=1, working_dir=str(path_internal)),
            ThreadPoolExecutor(
                label='evaluation',
                max_threads=resolve_threads(threads),
                working_dir=str(path_internal),
                ),
            ]
    return Config(executors, run_dir=str(path_internal), usage_tracking=False)


@typeguard.typechecked
def _save_yaml(input_dict: Dict, outputs: List[File] = []) -> None:
    import yaml
    from relulimit.utils import write_text_atomic
    write_text_atomic(outputs[0].filepath, yaml.dump(input_dict, default_flow_style=False))
save_yaml = python_app(_save_yaml, executors=['default'])


@typeguard.typechecked
def _log_report_to_wandb(
        run_name: str,
        group: Optional[str],
        project: str,
        names: List[str],
        inputs: List[List[List]] = [], # list of 2D tables
        ) -> None:
    from pathlib import Path
    import tempfile
    import os
    import wandb
    os.environ['WANDB_SILENT'] = 'True' # suppress logs
    path_wandb = Path(tempfile.mkdtemp())
    wandb.init(
            name=run_name,
            group=group,
            project=project,
            resume='allow',
            dir=path_wandb,
            )
    wandb_log = {}
    assert len(names) == len(inputs)
    for name, data in zip(names, inputs):
        table = wandb.Table(columns=data[0], data=data[1:])
        if name == 'trace': # one line plot per column against depth
            for column in data[0][1:]:
                title = name + '_' + column
                wandb_log[title] = wandb.plot.line(table, data[0][0], column, title=title)
        wandb_log[name + '_table'] = table
    assert path_wandb.is_dir()
    wandb.log(wandb_log)
    wandb.finish()
log_report_to_wandb = python_app(
        _log_report_to_wandb,
        executors=['default'],
        cache=True,
        )


@typeguard.typechecked
def _copy_app_future(future: Any) -> Any:
    from copy import deepcopy
    return deepcopy(future)
copy_app_future = python_app(_copy_app_future, executors=['default'])
