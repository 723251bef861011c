"""
Input validation and loading module.
Merges built-in defaults, an optional JSON config file and command-line
overrides into a RunConfig, keeping an audit trail of every default applied.
"""

import json
from copy import deepcopy
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .core import ConfigError, MissingInputError

COMMANDS = ('gen', 'train', 'explain', 'morf', 'converge')
EXPLAIN_MODES = ('instance', 'model', 'kernel', 'poim', 'firm')
AUTO = 'auto'

DEFAULT_SIZES = [50, 100, 215, 500, 1000, 2000]

# CLI option -> (section, key)
FLAG_SECTIONS = {
    'seed': ('run', 'seed'),
    'n': ('run', 'n'),
    'threads': ('run', 'threads'),
    'out': ('run', 'out'),
    'report': ('run', 'report'),
    'data': ('data', 'path'),
    'kind': ('data', 'kind'),
    'length': ('data', 'length'),
    'alphabet': ('data', 'alphabet'),
    'motifs': ('data', 'motifs'),
    'mutation_rate': ('data', 'mutation_rate'),
    'd1': ('data', 'd1'),
    'd2': ('data', 'd2'),
    'noise': ('data', 'noise'),
    'kernel': ('kernel', 'kind'),
    'sigma': ('kernel', 'sigma'),
    'degree': ('kernel', 'degree'),
    'ridge': ('training', 'ridge'),
    'model': ('predictor', 'model'),
    'external': ('predictor', 'external'),
    'serialization': ('predictor', 'serialization'),
    'timeout': ('predictor', 'timeout'),
    'mode': ('explain', 'mode'),
    'k': ('explain', 'k'),
    'target': ('explain', 'target'),
    'instances': ('explain', 'instances'),
    'strategy': ('explain', 'strategy'),
    'epsilon': ('explain', 'epsilon'),
    'uncentered': ('explain', 'uncentered'),
    'centering': ('explain', 'centering'),
    'feature_kernel': ('explain', 'feature_kernel'),
    'score_sigma': ('explain', 'score_sigma'),
    'bins': ('explain', 'bins'),
    'pgm': ('explain', 'pgm'),
    'perturbation': ('morf', 'perturbation'),
    'radius': ('morf', 'radius'),
    'step': ('morf', 'step'),
    'steps': ('morf', 'steps'),
    'seeds': ('morf', 'seeds'),
    'relevance': ('morf', 'relevance'),
    'sizes': ('converge', 'sizes'),
    'kernel_mfi': ('converge', 'kernel_mfi'),
}


@dataclass
class RunConfig:
    """Fully resolved settings for one command."""

    command: str
    # run
    seed: int = 0
    n: int = 1000
    threads: int = 1
    out: Optional[str] = None
    report: Optional[str] = None
    # data
    data: Optional[str] = None
    kind: str = 'sequence'
    length: int = 45
    alphabet: str = 'ACGT'
    motifs: List[str] = field(default_factory=lambda: ['GGCCGTAAA@11', 'TTTCACGTTGA@24'])
    mutation_rate: float = 0.1
    d1: int = 16
    d2: int = 16
    noise: float = 0.1
    # kernel / training
    kernel: str = AUTO
    sigma: float = 1.0
    degree: int = 8
    ridge: float = 1e-3
    # predictor
    model: Optional[str] = None
    external: Optional[str] = None
    serialization: str = AUTO
    timeout: float = 30.0
    # explain
    mode: str = 'model'
    k: int = 3
    target: int = 1
    instances: int = 0
    strategy: str = AUTO
    epsilon: float = 0.05
    uncentered: bool = False
    centering: str = 'global'
    feature_kernel: str = AUTO
    score_sigma: float = 1.0
    bins: int = 10
    pgm: Optional[str] = None
    # morf
    perturbation: str = AUTO
    radius: int = 1
    step: int = 1
    steps: Optional[int] = None
    seeds: int = 10
    relevance: Optional[str] = None
    # converge
    sizes: List[int] = field(default_factory=lambda: list(DEFAULT_SIZES))
    kernel_mfi: bool = False

    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict, repr=False)

    def summary(self) -> Dict[str, Any]:
        """Flat `section.key -> value` view for reports."""
        flat = {'command': self.command}
        for section, values in self.sections.items():
            for key, value in values.items():
                flat[f"{section}.{key}"] = value
        return flat


class InputValidator:
    """Validates and processes run settings with defaults and audit tracking."""

    def __init__(self):
        self.defaults_used = []
        self.validation_errors = []
        self.warnings = []

    def load_and_validate(self, command: str, config_path: Optional[str] = None,
                          overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """
        Merge config file and overrides, apply defaults and validate.

        Args:
            command: One of gen, train, explain, morf, converge
            config_path: Optional JSON file with the same sections as RunConfig
            overrides: Explicit settings keyed by CLI option name

        Returns:
            Validated RunConfig
        """
        data = {}
        if config_path:
            try:
                with open(config_path, 'r', encoding='utf-8') as f:
                    data = json.load(f)
            except FileNotFoundError:
                raise MissingInputError(f"config file not found: {config_path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{config_path}: invalid JSON ({exc})") from None
            if not isinstance(data, dict):
                raise ConfigError(f"{config_path}: top level must be an object of sections")

        merged = self._merge_overrides(data, overrides or {})
        validated = self._apply_defaults(merged)
        self._validate_inputs(command, validated)

        if self.validation_errors:
            raise ConfigError("Input validation failed: " + '; '.join(self.validation_errors))

        flat = {option: validated[section][key] for option, (section, key) in FLAG_SECTIONS.items()}
        return RunConfig(command=command, sections=validated, **flat)

    def _merge_overrides(self, data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
        result = deepcopy(data)
        known = {section for section, _ in FLAG_SECTIONS.values()}
        for section in result:
            if section not in known:
                self.warnings.append(f"Unknown config section ignored: {section}")
        for option, value in overrides.items():
            if value is None:
                continue
            if option not in FLAG_SECTIONS:
                raise ConfigError(f"unknown setting: {option}")
            section, key = FLAG_SECTIONS[option]
            result.setdefault(section, {})[key] = value
        return result

    def _apply_defaults(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Apply defaults for missing values."""
        result = deepcopy(data)
        defaults = RunConfig(command='')

        for option, (section, key) in FLAG_SECTIONS.items():
            if section not in result or not isinstance(result[section], dict):
                result[section] = {}
            self._set_default(result[section], key, deepcopy(getattr(defaults, option)), f"{section}.{key}")

        return result

    def _set_default(self, section: Dict, key: str, default: Any, path: str):
        """Set a default value and track it."""
        if key not in section or section[key] is None:
            section[key] = default
            self.defaults_used.append(f"{path} = {default}")

    def _validate_inputs(self, command: str, data: Dict[str, Any]):
        """Validate ranges and per-command requirements."""
        errors = self.validation_errors
        run, dataset, kernel = data['run'], data['data'], data['kernel']
        explain, morf, converge = data['explain'], data['morf'], data['converge']
        predictor = data['predictor']

        if command not in COMMANDS:
            errors.append(f"Invalid command: {command}")

        self._check_int(run, 'n', 'run.n', minimum=1)
        self._check_int(run, 'seed', 'run.seed', minimum=0)
        self._check_int(run, 'threads', 'run.threads', minimum=1)

        if dataset['kind'] not in ('sequence', 'image'):
            errors.append(f"Invalid data.kind: {dataset['kind']}")
        self._check_int(dataset, 'length', 'data.length', minimum=1)
        self._check_int(dataset, 'd1', 'data.d1', minimum=8)
        self._check_int(dataset, 'd2', 'data.d2', minimum=8)
        if isinstance(dataset['motifs'], str):
            dataset['motifs'] = [m for m in dataset['motifs'].split(',') if m.strip()]
        rate = self._check_float(dataset, 'mutation_rate', 'data.mutation_rate')
        if rate is not None and not 0.0 <= rate < 1.0:
            errors.append("data.mutation_rate must lie in [0, 1)")
        self._check_float(dataset, 'noise', 'data.noise', minimum=0.0)

        if kernel['kind'] not in (AUTO, 'rbf', 'linear', 'delta', 'wd'):
            errors.append(f"Invalid kernel.kind: {kernel['kind']}")
        self._check_float(kernel, 'sigma', 'kernel.sigma', positive=True)
        self._check_int(kernel, 'degree', 'kernel.degree', minimum=1)
        self._check_float(data['training'], 'ridge', 'training.ridge', positive=True)

        if predictor['serialization'] not in (AUTO, 'sequence-string', 'image-csv'):
            errors.append(f"Invalid predictor.serialization: {predictor['serialization']}")
        self._check_float(predictor, 'timeout', 'predictor.timeout', positive=True)

        if explain['mode'] not in EXPLAIN_MODES:
            errors.append(f"Invalid explain.mode: {explain['mode']}")
        self._check_int(explain, 'k', 'explain.k', minimum=1)
        self._check_int(explain, 'target', 'explain.target', minimum=1)
        self._check_int(explain, 'instances', 'explain.instances', minimum=0)
        self._check_int(explain, 'bins', 'explain.bins', minimum=2)
        if explain['strategy'] not in (AUTO, 'exact', 'epsilon', 'intervene'):
            errors.append(f"Invalid explain.strategy: {explain['strategy']}")
        self._check_float(explain, 'epsilon', 'explain.epsilon', positive=True)
        if explain['centering'] not in ('global', 'none'):
            errors.append(f"Invalid explain.centering: {explain['centering']}")
        if explain['feature_kernel'] not in (AUTO, 'rbf', 'linear', 'delta'):
            errors.append(f"Invalid explain.feature_kernel: {explain['feature_kernel']}")
        self._check_float(explain, 'score_sigma', 'explain.score_sigma', positive=True)

        if morf['perturbation'] not in (AUTO, 'dataset-mean', 'local-mean', 'zero', 'uniform-symbol'):
            errors.append(f"Invalid morf.perturbation: {morf['perturbation']}")
        self._check_int(morf, 'radius', 'morf.radius', minimum=1)
        self._check_int(morf, 'step', 'morf.step', minimum=1)
        self._check_int(morf, 'seeds', 'morf.seeds', minimum=1)
        if morf['steps'] is not None:
            self._check_int(morf, 'steps', 'morf.steps', minimum=0)

        sizes = converge['sizes']
        if isinstance(sizes, str):
            try:
                sizes = [int(s) for s in sizes.split(',') if s.strip()]
            except ValueError:
                errors.append(f"converge.sizes must be comma-separated integers, got {sizes!r}")
                sizes = []
            converge['sizes'] = sizes
        if len(sizes) < 2 or any(b <= a for a, b in zip(sizes, sizes[1:])) or min(sizes, default=0) < 1:
            errors.append("converge.sizes must be at least 2 strictly increasing positive integers")

        # Required inputs per command
        if command in ('train', 'explain', 'morf') and not dataset['path']:
            errors.append(f"{command} needs --data")
        if command in ('explain', 'morf'):
            if not predictor['model'] and not predictor['external']:
                errors.append(f"{command} needs --model or --external")
            if predictor['model'] and predictor['external']:
                errors.append("--model and --external are mutually exclusive")
        if not run['out']:
            errors.append(f"{command} needs --out")

        if command == 'explain':
            if explain['uncentered'] and explain['mode'] != 'model':
                self.warnings.append("explain.uncentered only applies to --mode model; ignored")
            if explain['instances'] and explain['mode'] != 'instance':
                self.warnings.append("explain.instances only applies to --mode instance; ignored")

    def _check_int(self, section: Dict, key: str, path: str, minimum: int):
        value = section[key]
        if isinstance(value, bool) or not isinstance(value, int):
            try:
                value = int(value)
            except (TypeError, ValueError):
                self.validation_errors.append(f"{path} must be an integer, got {value!r}")
                return
            section[key] = value
        if value < minimum:
            self.validation_errors.append(f"{path} must be >= {minimum}, got {value}")

    def _check_float(self, section: Dict, key: str, path: str, minimum: Optional[float] = None,
                     positive: bool = False) -> Optional[float]:
        try:
            value = float(section[key])
        except (TypeError, ValueError):
            self.validation_errors.append(f"{path} must be a number, got {section[key]!r}")
            return None
        section[key] = value
        if positive and not value > 0:
            self.validation_errors.append(f"{path} must be > 0, got {value:g}")
        elif minimum is not None and value < minimum:
            self.validation_errors.append(f"{path} must be >= {minimum:g}, got {value:g}")
        return value


def load_config(command: str, config_path: Optional[str] = None,
                overrides: Optional[Dict[str, Any]] = None) -> Tuple[RunConfig, List[str], List[str]]:
    """
    Load and validate run settings.

    Returns:
        (run_config, defaults_used, warnings)
    """
    validator = InputValidator()
    config = validator.load_and_validate(command, config_path, overrides)
    return config, validator.defaults_used, validator.warnings
