"""
Scenario files for the DAN simulator.

A scenario is a TOML document with top-level run settings and one table per
concern ([ydr], [validators], [network], [consensus], [interaction],
[governance], [gating], [forecaster]). Missing keys take defaults; unknown keys
are rejected with the dotted path of the offending field.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from config import config
from errors import ParseError, ValidationError
from poa_consensus import FaultKind


def _probability(path: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(path, f"must lie in [0, 1], got {value}")


def _positive(path: str, value, allow_zero: bool = False) -> None:
    if value < 0 or (value == 0 and not allow_zero):
        raise ValidationError(path, f"must be {'nonnegative' if allow_zero else 'positive'}, got {value}")


@dataclass(frozen=True)
class YDRSection:
    distribution: str = "lognormal"
    mean: float = 1000.0
    sigma: float = 1.0

    def validate(self, path: str) -> None:
        if self.distribution not in ("lognormal", "uniform", "constant"):
            raise ValidationError(f"{path}distribution", f"unknown distribution {self.distribution!r}")
        _positive(f"{path}mean", self.mean)
        _positive(f"{path}sigma", self.sigma, allow_zero=True)


@dataclass(frozen=True)
class ValidatorSection:
    count: int = 23
    allocation: int = 1_500_000

    def validate(self, path: str) -> None:
        if self.count < 2:
            raise ValidationError(f"{path}count", "at least two validators are needed to rotate sealers")
        threshold = int(config.get('ledger.validator_threshold', 1_000_000))
        if self.allocation <= threshold:
            raise ValidationError(f"{path}allocation", f"must exceed the validator threshold {threshold}")


@dataclass(frozen=True)
class NetworkSection:
    latency_min: int = 1
    latency_max: int = 3
    drop_probability: float = 0.0

    def validate(self, path: str) -> None:
        _probability(f"{path}drop_probability", self.drop_probability)
        _positive(f"{path}latency_min", self.latency_min, allow_zero=True)
        if self.latency_max < self.latency_min:
            raise ValidationError(f"{path}latency_max", "must not be below latency_min")


@dataclass(frozen=True)
class ConsensusSection:
    reward_seal: int = int(config.get('consensus.reward_seal', 10))
    slash: int = int(config.get('consensus.slash', 100))
    epoch_blocks: int = int(config.get('consensus.epoch_blocks', 10))
    round_timeout: int = int(config.get('consensus.round_timeout', 10))
    max_failed_rounds: int = int(config.get('consensus.max_failed_rounds', 50))
    trace_messages: bool = True
    fault_probability: float = 1.0
    faults: Dict[str, str] = field(default_factory=dict)

    def validate(self, path: str) -> None:
        for name in ("reward_seal", "slash", "epoch_blocks", "round_timeout", "max_failed_rounds"):
            _positive(f"{path}{name}", getattr(self, name))
        _probability(f"{path}fault_probability", self.fault_probability)
        for key, kind in self.faults.items():
            if not key.isdigit():
                raise ValidationError(f"{path}faults.{key}", "keys are validator indices")
            if kind not in {k.value for k in FaultKind}:
                raise ValidationError(f"{path}faults.{key}", f"unknown fault {kind!r}")


@dataclass(frozen=True)
class InteractionSection:
    mode: str = "enthalpy"
    transaction_rate: float = 5.0
    satisfaction_probability: float = 0.8
    score_weight: float = 0.0
    reward: int = 5
    dissolution_penalty: int = 0
    transfer_amount: int = 10
    bond_bias: float = 1.0

    def validate(self, path: str) -> None:
        if self.mode not in ("enthalpy", "transfer"):
            raise ValidationError(f"{path}mode", f"must be 'enthalpy' or 'transfer', got {self.mode!r}")
        _positive(f"{path}transaction_rate", self.transaction_rate, allow_zero=True)
        _probability(f"{path}satisfaction_probability", self.satisfaction_probability)
        for name in ("reward", "dissolution_penalty", "bond_bias", "score_weight"):
            _positive(f"{path}{name}", getattr(self, name), allow_zero=True)
        _positive(f"{path}transfer_amount", self.transfer_amount)


@dataclass(frozen=True)
class GovernanceSection:
    burn_probability: float = 0.0
    approval_probability: float = 0.5
    quorum: float = float(config.get('governance.quorum', 0.25))
    pass_threshold: float = float(config.get('governance.pass_threshold', 0.5))

    def validate(self, path: str) -> None:
        for name in ("burn_probability", "approval_probability", "quorum", "pass_threshold"):
            _probability(f"{path}{name}", getattr(self, name))


@dataclass(frozen=True)
class GatingSection:
    enabled: bool = True
    theta: Tuple[float, ...] = (1.0, 1.0, 0.0)
    eta_short: float = float(config.get('gating.eta_short', 0.05))
    eta_long: float = float(config.get('gating.eta_long', 0.01))
    stochastic: bool = False

    def validate(self, path: str) -> None:
        if len(self.theta) != 3:
            raise ValidationError(f"{path}theta", "needs exactly three weights")
        _positive(f"{path}eta_short", self.eta_short, allow_zero=True)
        _positive(f"{path}eta_long", self.eta_long, allow_zero=True)


@dataclass(frozen=True)
class ForecasterSection:
    enabled: bool = True
    history: int = 4
    horizon: int = 1
    hidden: int = 4
    blocks: int = 1
    kernel_size: int = 2
    diffusion_steps: int = 1
    steps: int = 20
    learning_rate: float = 0.01
    optimizer: str = "adam"

    def validate(self, path: str) -> None:
        for name in ("history", "horizon", "hidden", "blocks", "kernel_size"):
            _positive(f"{path}{name}", getattr(self, name))
        _positive(f"{path}diffusion_steps", self.diffusion_steps, allow_zero=True)
        _positive(f"{path}steps", self.steps, allow_zero=True)
        _positive(f"{path}learning_rate", self.learning_rate, allow_zero=True)
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"{path}optimizer", f"must be 'adam' or 'sgd', got {self.optimizer!r}")
        rf = 1 + sum(2 ** l * (self.kernel_size - 1) for l in range(self.blocks))
        if rf > self.history:
            raise ValidationError(f"{path}history", f"receptive field {rf} exceeds history {self.history}")


@dataclass(frozen=True)
class Scenario:
    population: int
    duration: int
    name: str = "scenario"
    seed: int = 0
    epoch_length: int = 10
    block_interval: int = 1
    communities: int = 1
    ydr: YDRSection = field(default_factory=YDRSection)
    validators: ValidatorSection = field(default_factory=ValidatorSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    consensus: ConsensusSection = field(default_factory=ConsensusSection)
    interaction: InteractionSection = field(default_factory=InteractionSection)
    governance: GovernanceSection = field(default_factory=GovernanceSection)
    gating: GatingSection = field(default_factory=GatingSection)
    forecaster: ForecasterSection = field(default_factory=ForecasterSection)

    def validate(self, path: str = "") -> None:
        for name in ("population", "duration", "epoch_length", "block_interval", "communities"):
            _positive(name, getattr(self, name))
        _positive("seed", self.seed, allow_zero=True)
        if self.communities > self.population:
            raise ValidationError("communities", "cannot exceed population")
        if self.population < 2:
            raise ValidationError("population", "needs at least two identities to rotate sealers")
        for f in fields(self):
            value = getattr(self, f.name)
            if is_dataclass(value):
                value.validate(f"{f.name}.")
        for key in self.consensus.faults:
            if int(key) >= self.validator_count:
                raise ValidationError(f"consensus.faults.{key}", "no such validator")

    @property
    def validator_count(self) -> int:
        """Bootstrap validators; the configured count is capped by the population"""
        return min(self.validators.count, self.population)

    @property
    def epochs(self) -> int:
        return self.duration // self.epoch_length

    def with_seed(self, seed: Optional[int]) -> "Scenario":
        if seed is None:
            return self
        data = self.to_dict()
        data["seed"] = seed
        return scenario_from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _coerce(path: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValidationError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ValidationError(path, f"expected an array, got {value!r}")
        return tuple(_coerce(f"{path}[{i}]", v, 0.0) for i, v in enumerate(value))
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ValidationError(path, f"expected a table, got {value!r}")
        return {str(k): _coerce(f"{path}.{k}", v, "") for k, v in value.items()}
    return value


def _build(cls, data: Dict[str, Any], prefix: str = ""):
    if not isinstance(data, dict):
        raise ValidationError(prefix.rstrip(".") or "<root>", "expected a table")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ValidationError(f"{prefix}{key}", "unknown key")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        path = f"{prefix}{name}"
        if f.default is not MISSING:
            kwargs[name] = _coerce(path, data[name], f.default)
        elif f.default_factory is MISSING:
            kwargs[name] = _coerce(path, data[name], 0)
        elif is_dataclass(f.default_factory):
            kwargs[name] = _build(f.default_factory, data[name], f"{path}.")
        else:
            kwargs[name] = _coerce(path, data[name], f.default_factory())
    return cls(**kwargs)


def scenario_from_dict(data: Dict[str, Any]) -> Scenario:
    for required in ("population", "duration"):
        if required not in data:
            raise ValidationError(required, "is required")
    scenario = _build(Scenario, data)
    scenario.validate()
    return scenario


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario TOML file"""
    path = Path(path)
    try:
        with open(path, 'rb') as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ParseError(f"scenario file {path} does not exist") from None
    except tomllib.TOMLDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    return scenario_from_dict(data)


# forecaster job files (`dan forecast --config`)

@dataclass(frozen=True)
class SyntheticSection:
    N: int = 10
    T: int = 12
    H: int = 3
    n_sequences: int = 200
    seed: int = 0
    alpha: float = 0.5
    noise: float = 0.01
    drift: float = 0.05
    injection: float = 0.0
    period: int = 4

    def validate(self, path: str) -> None:
        for name in ("N", "T", "H", "n_sequences", "period"):
            _positive(f"{path}{name}", getattr(self, name))
        _probability(f"{path}alpha", self.alpha)
        for name in ("noise", "drift", "injection", "seed"):
            _positive(f"{path}{name}", getattr(self, name), allow_zero=True)

    def params(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ModelSection:
    hidden: int = int(config.get('forecaster.hidden', 8))
    blocks: int = int(config.get('forecaster.blocks', 2))
    kernel_size: int = int(config.get('forecaster.kernel_size', 2))
    diffusion_steps: int = int(config.get('forecaster.diffusion_steps', 2))
    padding: str = str(config.get('forecaster.padding', 'causal'))
    seed: int = 0

    def validate(self, path: str) -> None:
        for name in ("hidden", "blocks", "kernel_size"):
            _positive(f"{path}{name}", getattr(self, name))
        _positive(f"{path}diffusion_steps", self.diffusion_steps, allow_zero=True)
        if self.padding not in ("causal", "valid"):
            raise ValidationError(f"{path}padding", f"must be 'causal' or 'valid', got {self.padding!r}")


@dataclass(frozen=True)
class TrainSection:
    steps: int = 500
    learning_rate: float = float(config.get('forecaster.learning_rate', 0.01))
    optimizer: str = str(config.get('forecaster.optimizer', 'adam'))
    batch_size: int = int(config.get('forecaster.batch_size', 8))
    seed: int = 0
    train_fraction: float = 0.8

    def validate(self, path: str) -> None:
        _positive(f"{path}steps", self.steps, allow_zero=True)
        _positive(f"{path}learning_rate", self.learning_rate, allow_zero=True)
        _positive(f"{path}batch_size", self.batch_size, allow_zero=True)
        _probability(f"{path}train_fraction", self.train_fraction)
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"{path}optimizer", f"must be 'adam' or 'sgd', got {self.optimizer!r}")


@dataclass(frozen=True)
class ForecastJob:
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)

    def validate(self) -> None:
        for f in fields(self):
            getattr(self, f.name).validate(f"{f.name}.")
        receptive = 1 + (self.model.kernel_size - 1) * (2 ** self.model.blocks - 1)
        if receptive > self.synthetic.T:
            raise ValidationError("model.blocks", f"receptive field {receptive} exceeds synthetic.T = {self.synthetic.T}")


def load_forecast_job(path=None) -> ForecastJob:
    """Parse a forecaster job TOML; without a path every section takes its defaults"""
    if path is None:
        job = ForecastJob()
    else:
        path = Path(path)
        try:
            with open(path, 'rb') as f:
                data = tomllib.load(f)
        except FileNotFoundError:
            raise ParseError(f"config file {path} does not exist") from None
        except tomllib.TOMLDecodeError as e:
            raise ParseError(f"{path}: {e}") from e
        job = _build(ForecastJob, data)
    job.validate()
    return job
