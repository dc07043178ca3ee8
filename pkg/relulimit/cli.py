from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Dict, Any, Iterator, Sequence
import typeguard
import argparse
import json
import shutil
import tempfile
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

import yaml
import numpy as np
import parsl
from parsl.errors import NoDataFlowKernelError

from relulimit.core import Network, SequenceSpec, NormKind, InvalidArgument, \
        ResourceLimitExceeded, BoundaryProbeError, FeasibilityError, SEQUENCE_KINDS
from relulimit.network import forward, boundary_margin, representation_check, output_map
from relulimit.regions import enumerate_frontiers, region_count_bound, check_nested
from relulimit.products import MaskRule, product_limit, series_limit, \
        check_product_conditions
from relulimit.sequences import generate_sequence, generator_from_spec
from relulimit.experiments import ConvergenceLab, DEFAULT_SCHEDULE, default_grid
from relulimit.checks import default_checks, run_checks, CHECKS, FAULTS
from relulimit.execution import ExecutionContext, EvaluationExecutionDefinition
from relulimit.manager import Manager
from relulimit.utils import get_parsl_config_from_file, get_default_parsl_config


logger = logging.getLogger(__name__) # logging per module
logger.setLevel(logging.INFO)


COMMANDS = ('gen', 'eval', 'regions', 'products', 'converge', 'verify')
EXIT_OK         = 0
EXIT_FAILED     = 1
EXIT_INVALID    = 2
EXIT_VIOLATION  = 3
EXIT_RESOURCE   = 4
EXIT_IO         = 5


@dataclass
class RunConfig:
    """Everything a command needs; persisted next to its outputs"""
    command      : str
    out          : str = 'relulimit-out'
    spec         : Optional[str] = None
    kind         : Optional[str] = None
    params       : Dict[str, Any] = field(default_factory=dict)
    network      : Optional[str] = None
    points       : Optional[str] = None
    depth        : Optional[int] = None
    depths       : List[int] = field(default_factory=lambda: list(DEFAULT_SCHEDULE))
    norm         : str = 'l1'
    tol          : float = 1e-6
    seed         : Optional[int] = None
    n_max        : int = 500
    start        : int = 2
    horizon      : Optional[int] = None
    mask_rule    : str = 'identity'
    probe        : Optional[List[float]] = None
    filter       : Optional[List[str]] = None
    fault        : Optional[str] = None
    parsl_config : Optional[str] = None
    threads      : Optional[int] = None
    wandb_project: Optional[str] = None

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise InvalidArgument('command {} unknown!'.format(self.command))

    @classmethod
    def load(cls, path: Union[Path, str]) -> RunConfig:
        try:
            with open(path, 'r') as f:
                pars_dict = yaml.load(f, Loader=yaml.FullLoader)
        except OSError as e:
            raise InvalidArgument('cannot read run config {}: {}'.format(path, e))
        known = set(f.name for f in fields(cls))
        unknown = set(pars_dict.keys()) - known
        if len(unknown) > 0:
            raise InvalidArgument('run config keys {} unknown!'.format(sorted(unknown)))
        return cls(**pars_dict)


def _parse_param(value: str) -> tuple:
    key, sep, raw = value.partition('=')
    if sep == '':
        raise argparse.ArgumentTypeError('expected key=value, got {}'.format(value))
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument('--out', default=None, help='output directory')
    shared.add_argument('--config', default=None, help='replay a persisted run config')
    shared.add_argument('--parsl-config', default=None, help='python file defining get_config')
    shared.add_argument('--threads', type=int, default=None,
            help='threads of the evaluation executor (0: all cpus)')
    shared.add_argument('--wandb-project', default=None)
    shared.add_argument('--seed', type=int, default=None)
    shared.add_argument('--norm', default='l1', choices=['l1', 'l2', 'linf'])
    shared.add_argument('--tol', type=float, default=1e-6)
    shared.add_argument('--depths', type=int, nargs='+', default=list(DEFAULT_SCHEDULE),
            help='depth schedule of pointwise experiments')

    parser = argparse.ArgumentParser(
            prog='relulimit',
            description='deep ReLU networks, their regions and their infinite-depth limits',
            )
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen', parents=[shared], help='realize a sequence prefix')
    gen.add_argument('--spec', default=None, help='sequence spec JSON')
    gen.add_argument('--kind', default=None, choices=SEQUENCE_KINDS)
    gen.add_argument('--param', action='append', type=_parse_param, default=[],
            help='generator parameter key=value (JSON values)')
    gen.add_argument('--depth', type=int, default=None)

    evaluate = commands.add_parser('eval', parents=[shared], help='evaluate a network')
    evaluate.add_argument('--network', default=None)
    evaluate.add_argument('--points', default=None, help='JSON list of input points')

    regions = commands.add_parser('regions', parents=[shared], help='enumerate regions')
    regions.add_argument('--network', default=None)
    regions.add_argument('--depth', type=int, default=None)

    products = commands.add_parser('products', parents=[shared],
            help='masked weight products and bias series')
    products.add_argument('--spec', default=None)
    products.add_argument('--mask-rule', default='identity',
            help='identity, random[:P] or zero-after:K')
    products.add_argument('--n-max', type=int, default=500)
    products.add_argument('--start', type=int, default=2)
    products.add_argument('--horizon', type=int, default=None)

    converge = commands.add_parser('converge', parents=[shared],
            help='pointwise convergence of a sequence')
    converge.add_argument('--spec', default=None)
    converge.add_argument('--points', default=None, help='JSON list of grid points')
    converge.add_argument('--probe', type=float, nargs='+', default=None)

    verify = commands.add_parser('verify', parents=[shared], help='run the verification suite')
    verify.add_argument('--filter', nargs='+', default=None,
            choices=[check_cls.name for check_cls in CHECKS])
    verify.add_argument('--fault', default=None, choices=list(FAULTS))
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        config = RunConfig.load(args.config)
        if args.out is not None:
            config.out = args.out
        return config
    known = set(f.name for f in fields(RunConfig))
    values = {k: v for k, v in vars(args).items() if k in known and v is not None}
    if args.command == 'gen':
        values['params'] = dict(args.param)
    return RunConfig(**values)


@contextmanager
def parsl_session(config: RunConfig) -> Iterator[ExecutionContext]:
    """Loads a parsl config unless a kernel is already running"""
    path_internal = Path(tempfile.mkdtemp(prefix='relulimit-'))
    owned = False
    try:
        parsl_config = parsl.dfk().config
    except NoDataFlowKernelError:
        if config.parsl_config is not None:
            parsl_config = get_parsl_config_from_file(config.parsl_config, path_internal)
        else:
            parsl_config = get_default_parsl_config(path_internal, config.threads)
        parsl_config.retries = 0
        parsl.load(parsl_config)
        owned = True
    context = ExecutionContext(parsl_config, path_internal)
    context.register(EvaluationExecutionDefinition())
    try:
        yield context
    finally:
        if owned:
            parsl.dfk().cleanup()
            parsl.clear()
        shutil.rmtree(path_internal, ignore_errors=True)


def _load_spec(config: RunConfig) -> SequenceSpec:
    if config.spec is not None:
        try:
            return SequenceSpec.load(config.spec)
        except (OSError, json.JSONDecodeError) as e:
            raise InvalidArgument('cannot read spec {}: {}'.format(config.spec, e))
    if config.kind is not None:
        return SequenceSpec(config.kind, dict(config.params), config.seed or 0)
    raise InvalidArgument('need a sequence spec file or a kind')


def _load_network(config: RunConfig) -> Network:
    if config.network is None:
        raise InvalidArgument('need a network file')
    try:
        return Network.load(config.network)
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidArgument('cannot read network {}: {}'.format(config.network, e))


def _load_points(path: str, d: int) -> np.ndarray:
    try:
        with open(path, 'r') as f:
            points = np.array(json.load(f), dtype=np.float64, ndmin=2)
    except (OSError, json.JSONDecodeError, ValueError) as e:
        raise InvalidArgument('cannot read points {}: {}'.format(path, e))
    if points.shape[1] != d:
        raise InvalidArgument('points of dimension {} for input dimension {}'.format(
            points.shape[1], d))
    return points


def run_gen(config: RunConfig, context: ExecutionContext, manager: Manager) -> int:
    spec = _load_spec(config)
    if config.seed is not None:
        spec.seed = config.seed
    if config.depth is None or config.depth < 1:
        raise InvalidArgument('gen needs a positive depth')
    network = generate_sequence(spec, config.depth)
    manager.save_spec(spec)
    manager.save_network(network)
    print('{} sequence: depth {}, width {}, input_dim {}'.format(
        spec.kind, network.depth, network.width, network.input_dim))
    return EXIT_OK


def run_eval(config: RunConfig, context: ExecutionContext, manager: Manager) -> int:
    network = _load_network(config)
    if config.points is not None:
        points = _load_points(config.points, network.input_dim)
    else:
        points, _ = default_grid(network.input_dim)
    outputs, patterns, margins = [], [], []
    for x in points:
        y, pattern = forward(network, x)
        outputs.append(y)
        patterns.append(pattern.as_list())
        margins.append(boundary_margin(network, x))
    data = {
            'points': points,
            'outputs': outputs,
            'patterns': patterns,
            'margins': margins,
            'representation_discrepancy': representation_check(network, points),
            }
    if network.output_layer is not None:
        data['mapped'] = [output_map(network, y) for y in outputs]
    manager.write_json('eval.json', data)
    print('evaluated {} points, representation discrepancy {:.3e}'.format(
        len(points), data['representation_discrepancy']))
    return EXIT_OK


def run_regions(config: RunConfig, context: ExecutionContext, manager: Manager) -> int:
    network = _load_network(config)
    depth = network.depth if config.depth is None else config.depth
    frontiers = enumerate_frontiers(network, depth)
    cells = frontiers[-1]
    bound = region_count_bound(network.width, network.input_dim, depth)
    nested = check_nested(network, depth) if depth >= 2 else None
    manager.write_json('regions.json', {
        'input_dim': network.input_dim,
        'width': network.width,
        'depth': depth,
        'count': len(cells),
        'bound': bound,
        'counts_per_depth': [len(frontier) for frontier in frontiers],
        'nested': nested,
        'cells': [cell.as_dict() for cell in cells],
        })
    print('{} regions at depth {} (bound {})'.format(len(cells), depth, bound))
    if len(cells) > bound or nested is False:
        return EXIT_VIOLATION
    return EXIT_OK


def run_products(config: RunConfig, context: ExecutionContext, manager: Manager) -> int:
    spec = _load_spec(config)
    p = NormKind.parse(config.norm)
    generator = generator_from_spec(spec)
    rule = MaskRule.parse(config.mask_rule, generator.width, config.seed or 0)
    product, product_status, product_state = product_limit(
            generator, rule, p, config.tol, config.n_max, config.start)
    series, series_status, series_state = series_limit(
            generator, rule, p, config.tol, config.n_max)
    horizon = config.horizon if config.horizon is not None else max(10, config.n_max)
    conditions = check_product_conditions(generator, p, horizon)
    manager.write_frame('products.csv', product_state.as_frame())
    manager.write_frame('series.csv', series_state.as_frame())
    manager.write_json('products.json', {
        'spec': spec.as_dict(),
        'mask_rule': config.mask_rule,
        'norm': p.value,
        'tol': config.tol,
        'product': {
            'status': product_status.value,
            'depth': product_state.depth,
            'certified': product_state.certified,
            'tail_bound': product_state.tail_bounds[-1] if product_state.certified else None,
            'value': product,
            },
        'series': {
            'status': series_status.value,
            'depth': series_state.depth,
            'value': series,
            },
        'conditions': conditions.as_dict(),
        })
    print('product: {} after {} layers'.format(product_status.value, product_state.depth))
    print('series: {} after {} layers'.format(series_status.value, series_state.depth))
    return EXIT_OK


def run_converge(config: RunConfig, context: ExecutionContext, manager: Manager) -> int:
    spec = _load_spec(config)
    p = NormKind.parse(config.norm)
    grid = None
    if config.points is not None:
        grid = _load_points(config.points, generator_from_spec(spec).input_dim)
    lab = ConvergenceLab(context, tol=config.tol, norm=p)
    report_future = lab.pointwise(spec, grid, config.depths, config.probe)
    audit_future = lab.audit(spec, max(max(config.depths), 10), report_future)
    coefficients_future = None
    if config.probe is not None:
        coefficients_future = lab.coefficients(spec, config.probe, config.depths,
                config.seed or 0)
    report = report_future.result()
    audit = audit_future.result()
    manager.write_json('report.json', report.as_dict())
    manager.write_frame('trace.csv', report.as_frame())
    manager.write_json('audit.json', audit.as_dict())
    if coefficients_future is not None:
        manager.write_json('coefficients.json', coefficients_future.result().as_dict())
    log = manager.log_wandb('converge-{}'.format(spec.kind), report.as_frame())
    if log is not None:
        log.result()
    print('verdict: {}'.format(report.verdict.value))
    if audit.contradiction:
        print('necessary conditions fail for a converged sequence')
        return EXIT_VIOLATION
    return EXIT_OK


def run_verify(config: RunConfig, context: ExecutionContext, manager: Manager) -> int:
    checks = default_checks(config.fault)
    if config.filter is not None:
        checks = [check for check in checks if check.name in config.filter]
    results_future = run_checks(checks)
    results = results_future.result()
    manager.save_checks(checks)
    passed = all(result.passed for result in results)
    manager.write_json('verify.json', {
        'passed': passed,
        'results': [result.as_dict() for result in results],
        })
    log = manager.log_wandb('verify', results=results_future)
    if log is not None:
        log.result()
    for result in results:
        print('{:<16} {}'.format(result.name, 'passed' if result.passed else 'FAILED'))
    return EXIT_OK if passed else EXIT_FAILED


RUNNERS = {
        'gen': run_gen,
        'eval': run_eval,
        'regions': run_regions,
        'products': run_products,
        'converge': run_converge,
        'verify': run_verify,
        }


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        manager = Manager(config.out, wandb_project=config.wandb_project)
        with parsl_session(config) as context:
            persisted = asdict(config)
            persisted.pop('out') # outputs replay anywhere
            manager.save_config(persisted)
            return RUNNERS[config.command](config, context, manager)
    except ResourceLimitExceeded as e:
        logger.error(str(e))
        return EXIT_RESOURCE
    except (InvalidArgument, BoundaryProbeError, TypeError, typeguard.TypeCheckError) as e:
        logger.error(str(e))
        return EXIT_INVALID
    except FeasibilityError as e:
        logger.error(str(e))
        return EXIT_FAILED
    except OSError as e:
        logger.error(str(e))
        return EXIT_IO
