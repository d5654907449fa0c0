"""
YIdentityNet: spatiotemporal GNN forecasting transaction density per profile.

Pipeline: feature_extraction -> L spatiotemporal blocks -> output head.
Each block runs a gated temporal convolution over both the signal stream and
the adjacency stream, then fuses them with a dynamic graph convolution: an
evolving-weight GCN branch (weights carried by a matrix GRU) plus a
bidirectional diffusion branch. The transformed adjacency feeds the next block.

Arrays keep the time axis at -3: signals are (..., T, N, C) and adjacencies
(..., T, N, N), so a leading batch axis passes through every layer.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import config
from errors import (
    DivergedLoss,
    InvalidModelConfig,
    NegativeEntry,
    NonFiniteValue,
    ShapeMismatch,
    TemporalUnderflow,
)
from graph_dataset import GraphDataset, GraphSequence, generate_synthetic
from logger import logger
from tensor_kernel import (
    Parameter,
    Tensor,
    as_tensor,
    backward,
    concat,
    eye,
    finite_difference_check,
    getitem,
    identity,
    inv_sqrt_safe,
    matmul,
    mean,
    reciprocal_safe,
    relu,
    save_tensors,
    load_tensors,
    sigmoid,
    square,
    stack,
    swapaxes,
    tanh,
    tsum,
    zero_grad,
)

log = logger.child("forecaster")

ACTIVATIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "linear": identity,
    "relu": relu,
}

HEAD_BIAS_INIT = 0.5

_ALL = slice(None)


def _activation(name: str) -> Callable[[Tensor], Tensor]:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise InvalidModelConfig(f"unknown activation {name!r}") from None


def _time_slice(x: Tensor, start: int, stop: int) -> Tensor:
    return getitem(x, (Ellipsis, slice(start, stop), _ALL, _ALL))


@dataclass(frozen=True)
class ModelConfig:
    n_nodes: int
    in_channels: int
    history: int
    horizon: int
    hidden: int = int(config.get('forecaster.hidden', 8))
    blocks: int = int(config.get('forecaster.blocks', 2))
    kernel_size: int = int(config.get('forecaster.kernel_size', 2))
    dilations: Optional[Tuple[int, ...]] = None
    diffusion_steps: int = int(config.get('forecaster.diffusion_steps', 2))
    adjacency_channels: Optional[int] = None
    padding: str = str(config.get('forecaster.padding', 'causal'))
    activation: str = "tanh"
    gcn_activation: str = "tanh"
    adjacency_activation: str = "sigmoid"
    seed: int = 0

    def __post_init__(self):
        dilations = self.dilations
        if dilations is None:
            dilations = tuple(2 ** l for l in range(self.blocks))
        object.__setattr__(self, "dilations", tuple(int(d) for d in dilations))
        if self.adjacency_channels is None:
            object.__setattr__(self, "adjacency_channels", self.in_channels)

        positive = ("n_nodes", "in_channels", "history", "horizon", "hidden", "blocks", "kernel_size")
        for name in positive:
            if getattr(self, name) < 1:
                raise InvalidModelConfig(f"{name} must be positive, got {getattr(self, name)}")
        if self.diffusion_steps < 0:
            raise InvalidModelConfig("diffusion_steps must be nonnegative")
        if len(self.dilations) != self.blocks or min(self.dilations) < 1:
            raise InvalidModelConfig(f"need {self.blocks} positive dilations, got {self.dilations}")
        if not 1 <= self.adjacency_channels <= self.in_channels:
            raise InvalidModelConfig("adjacency_channels must lie in [1, in_channels]")
        if self.padding not in ("causal", "valid"):
            raise InvalidModelConfig(f"padding must be 'causal' or 'valid', got {self.padding!r}")
        for name in ("activation", "gcn_activation", "adjacency_activation"):
            _activation(getattr(self, name))
        if self.receptive_field > self.history:
            raise InvalidModelConfig(
                f"receptive field {self.receptive_field} exceeds history length {self.history}"
            )

    @property
    def receptive_field(self) -> int:
        return 1 + sum(d * (self.kernel_size - 1) for d in self.dilations)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


# layers

def normalize_adjacency(A: Union[Tensor, np.ndarray]) -> Tensor:
    """Ã = I + D^{-1/2} A D^{-1/2}, D the row sums; zero-degree rows keep only the self term"""
    A = as_tensor(A)
    if np.any(A.data < 0):
        raise NegativeEntry("adjacency has negative entries")
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeMismatch(f"adjacency must be square, got {A.shape}")
    d = inv_sqrt_safe(tsum(A, axis=-1, keepdims=True))
    return eye(A.shape[-1]) + d * A * swapaxes(d, -1, -2)


def transition_matrices(A: Tensor) -> Tuple[Tensor, Tensor]:
    """Forward P_f = D_out^{-1} A and backward P_b = D_in^{-1} Aᵀ; zero rows stay zero"""
    At = swapaxes(A, -1, -2)
    P_f = reciprocal_safe(tsum(A, axis=-1, keepdims=True)) * A
    P_b = reciprocal_safe(tsum(At, axis=-1, keepdims=True)) * At
    return P_f, P_b


def _shift(x: Tensor, k: int, axis: int) -> Tensor:
    """Delay x by k steps along `axis`, zero-filled on the left"""
    if k == 0:
        return x
    n = x.shape[axis]
    pad_shape = list(x.shape)
    pad_shape[axis] = min(k, n)
    pad = Tensor(np.zeros(pad_shape))
    if k >= n:
        return pad
    index = [_ALL] * x.ndim
    index[axis] = slice(0, n - k)
    return concat([pad, getitem(x, tuple(index))], axis=axis)


def dilated_causal_conv(x, g, d: int = 1, padding: str = "causal", axis: int = 0) -> Tensor:
    """x*g(t) = sum_s g(s) x(t - d*s), zero-padded on the left.

    g of shape (K,) applies scalar taps to every series along `axis`; g of shape
    (K, Cin, Cout) mixes the trailing channel axis. "valid" padding drops the
    first d*(K-1) outputs.
    """
    x, g = as_tensor(x), as_tensor(g)
    if d < 1:
        raise ValueError("dilation must be at least 1")
    K = g.shape[0]
    if g.ndim == 3 and (x.shape[-1] != g.shape[1]):
        raise ShapeMismatch(f"filter expects {g.shape[1]} input channels, signal has {x.shape[-1]}")
    if g.ndim not in (1, 3):
        raise ShapeMismatch(f"filter must be (K,) or (K, Cin, Cout), got {g.shape}")
    axis = axis % x.ndim

    out = None
    for s in range(K):
        shifted = _shift(x, d * s, axis)
        term = shifted * getitem(g, s) if g.ndim == 1 else matmul(shifted, getitem(g, s))
        out = term if out is None else out + term

    if padding == "valid":
        cut = d * (K - 1)
        length = x.shape[axis] - cut
        if length < 1:
            raise TemporalUnderflow(f"valid convolution leaves {length} steps (T={x.shape[axis]}, cut={cut})")
        index = [_ALL] * out.ndim
        index[axis] = slice(cut, None)
        out = getitem(out, tuple(index))
    elif padding != "causal":
        raise ValueError(f"unknown padding {padding!r}")
    return out


@dataclass
class GatedTCNParams:
    g1: Parameter
    g2: Parameter
    b: Parameter
    c: Parameter


def gated_tcn(x, params: GatedTCNParams, dilation: int = 1, padding: str = "causal",
              activation: str = "tanh", axis: int = 0) -> Tensor:
    """H(x) = z(x*g1 + b) ⊙ σ(x*g2 + c)"""
    z = _activation(activation)
    branch = dilated_causal_conv(x, params.g1, dilation, padding, axis) + params.b
    gate = dilated_causal_conv(x, params.g2, dilation, padding, axis) + params.c
    return z(branch) * sigmoid(gate)


@dataclass
class GRUParams:
    U_z: Parameter
    V_z: Parameter
    B_z: Parameter
    U_r: Parameter
    V_r: Parameter
    B_r: Parameter
    U_h: Parameter
    V_h: Parameter
    B_h: Parameter


def gru_step(w: Tensor, p: GRUParams) -> Tensor:
    """Matrix GRU with w as both input and hidden state"""
    z = sigmoid(matmul(p.U_z, w) + matmul(p.V_z, w) + p.B_z)
    r = sigmoid(matmul(p.U_r, w) + matmul(p.V_r, w) + p.B_r)
    candidate = tanh(matmul(p.U_h, w) + matmul(p.V_h, r * w) + p.B_h)
    return (1.0 - z) * w + z * candidate


def evolve_gcn(x, A_norm, w1: Tensor, gru: GRUParams, activation: str = "tanh") -> Tensor:
    """x_t' = σ(Ã_t x_t w_t) per snapshot, w_{t+1} = GRU(w_t); outputs stacked on the time axis"""
    x, A_norm = as_tensor(x), as_tensor(A_norm)
    act = _activation(activation)
    T = x.shape[-3]
    if A_norm.shape[-3] != T:
        raise ShapeMismatch(f"signal has {T} snapshots, adjacency {A_norm.shape[-3]}")
    w = w1
    outputs = []
    for t in range(T):
        x_t = getitem(x, (Ellipsis, t, _ALL, _ALL))
        a_t = getitem(A_norm, (Ellipsis, t, _ALL, _ALL))
        outputs.append(act(matmul(matmul(a_t, x_t), w)))
        if t + 1 < T:
            w = gru_step(w, gru)
    return stack(outputs, axis=-3)


def diffusion_conv(x, A, weights: Tensor, steps: int) -> Tensor:
    """sum_{k=0..K} P_f^k x W_{k,1} + P_b^k x W_{k,2}"""
    x, A = as_tensor(x), as_tensor(A)
    P_f, P_b = transition_matrices(A)
    xf, xb = x, x
    out = None
    for k in range(steps + 1):
        term = matmul(xf, getitem(weights, (k, 0))) + matmul(xb, getitem(weights, (k, 1)))
        out = term if out is None else out + term
        if k < steps:
            xf = matmul(P_f, xf)
            xb = matmul(P_b, xb)
    return out


@dataclass
class DGCNParams:
    w1: Parameter
    gru: GRUParams
    diffusion: Parameter


def dgcn(x, A, params: DGCNParams, diffusion_steps: int, gcn_activation: str = "tanh") -> Tensor:
    """EvolveGCN branch over Ã plus the bidirectional diffusion branch over A"""
    x, A = as_tensor(x), as_tensor(A)
    if x.shape[-3:-1] != A.shape[-3:-1]:
        raise ShapeMismatch(f"signal {x.shape} and adjacency {A.shape} disagree on (T, N)")
    evolved = evolve_gcn(x, normalize_adjacency(A), params.w1, params.gru, gcn_activation)
    return evolved + diffusion_conv(x, A, params.diffusion, diffusion_steps)


@dataclass
class BlockParams:
    signal_tcn: GatedTCNParams
    adjacency_tcn: GatedTCNParams
    dgcn: DGCNParams


def st_block(v, A, params: BlockParams, dilation: int, cfg: ModelConfig) -> Tuple[Tensor, Tensor]:
    """v' = Y(H(v), H(A)), A' = H(A)"""
    v, A = as_tensor(v), as_tensor(A)
    T = v.shape[-3]
    if cfg.padding == "valid" and T - dilation * (cfg.kernel_size - 1) < 1:
        raise TemporalUnderflow(f"dilation {dilation} exhausts {T} snapshots")
    hv = gated_tcn(v, params.signal_tcn, dilation, cfg.padding, cfg.activation, axis=-3)
    hA = gated_tcn(A, params.adjacency_tcn, dilation, cfg.padding, cfg.adjacency_activation, axis=-3)
    return dgcn(hv, hA, params.dgcn, cfg.diffusion_steps, cfg.gcn_activation), hA


def feature_extraction(V, A, W_a: Tensor, b_a: Tensor, W_f: Tensor, b_f: Tensor) -> Tensor:
    """1x1 conv of A's last axis to C_A channels, concat with V, 1x1 conv to C' channels"""
    V, A = as_tensor(V), as_tensor(A)
    if A.shape[-1] != W_a.shape[0]:
        raise ShapeMismatch(f"adjacency width {A.shape[-1]} does not match reduction weights {W_a.shape}")
    reduced = matmul(A, W_a) + b_a
    return matmul(concat([reduced, V], axis=-1), W_f) + b_f


class YIdentityNet:
    """Parameters live in self.params, keyed by dotted names in creation order"""

    def __init__(self, cfg: ModelConfig):
        self.config = cfg
        self.params: Dict[str, Parameter] = {}
        self._rng = np.random.default_rng(cfg.seed)
        self._build()

    def _uniform(self, name: str, shape, fan_in: int) -> Parameter:
        r = 1.0 / np.sqrt(fan_in)
        p = Parameter(self._rng.uniform(-r, r, size=shape), name=name)
        self.params[name] = p
        return p

    def _const(self, name: str, shape, value: float = 0.0) -> Parameter:
        p = Parameter(np.full(shape, value, dtype=np.float64), name=name)
        self.params[name] = p
        return p

    def _tcn(self, prefix: str, K: int, channels: Optional[int]) -> GatedTCNParams:
        if channels is None:
            shape, bias, fan_in = (K,), (), K
        else:
            shape, bias, fan_in = (K, channels, channels), (channels,), K * channels
        return GatedTCNParams(
            self._uniform(f"{prefix}.g1", shape, fan_in),
            self._uniform(f"{prefix}.g2", shape, fan_in),
            self._const(f"{prefix}.b", bias),
            self._const(f"{prefix}.c", bias),
        )

    def _build(self):
        cfg = self.config
        N, C, Ca, Ch, K = cfg.n_nodes, cfg.in_channels, cfg.adjacency_channels, cfg.hidden, cfg.kernel_size
        self.W_a = self._uniform("features.W_a", (N, Ca), N)
        self.b_a = self._const("features.b_a", (Ca,))
        self.W_f = self._uniform("features.W_f", (Ca + C, Ch), Ca + C)
        self.b_f = self._const("features.b_f", (Ch,))
        self.blocks: List[BlockParams] = []
        for l in range(cfg.blocks):
            pre = f"block{l}"
            gru = GRUParams(*[
                self._uniform(f"{pre}.gru.{name}", (Ch, Ch), Ch) if name[0] != "B" else self._const(f"{pre}.gru.{name}", (Ch, Ch))
                for name in ("U_z", "V_z", "B_z", "U_r", "V_r", "B_r", "U_h", "V_h", "B_h")
            ])
            dg = DGCNParams(
                self._uniform(f"{pre}.dgcn.w1", (Ch, Ch), Ch),
                gru,
                self._uniform(f"{pre}.dgcn.diffusion", (cfg.diffusion_steps + 1, 2, Ch, Ch), Ch),
            )
            self.blocks.append(BlockParams(self._tcn(f"{pre}.tcn_v", K, Ch), self._tcn(f"{pre}.tcn_a", K, None), dg))
        self.W_o = self._uniform("head.W_o", (Ch, cfg.horizon), Ch)
        self.b_o = self._const("head.b_o", (cfg.horizon,), HEAD_BIAS_INIT)

    def parameters(self, prefix: str = "") -> List[Parameter]:
        return [p for name, p in self.params.items() if name.startswith(prefix)]

    def zero_grad(self):
        zero_grad(self.parameters())

    def _inputs(self, seq) -> Tuple[Tensor, Tensor]:
        if isinstance(seq, GraphSequence):
            V, A = seq.V, seq.A
        else:
            V, A = seq
        V, A = as_tensor(V), as_tensor(A)
        cfg = self.config
        if V.shape[-3:] != (cfg.history, cfg.n_nodes, cfg.in_channels):
            raise ShapeMismatch(
                f"expected V (..., {cfg.history}, {cfg.n_nodes}, {cfg.in_channels}), got {V.shape}"
            )
        if A.shape[-3:] != (cfg.history, cfg.n_nodes, cfg.n_nodes):
            raise ShapeMismatch(f"expected A (..., {cfg.history}, {cfg.n_nodes}, {cfg.n_nodes}), got {A.shape}")
        if np.any(A.data < 0):
            raise NegativeEntry("adjacency has negative entries")
        return V, A

    def trace(self, seq) -> List[Tuple[Tensor, Tensor]]:
        """(signal, adjacency) after feature extraction and after every block"""
        V, A = self._inputs(seq)
        v = feature_extraction(V, A, self.W_a, self.b_a, self.W_f, self.b_f)
        states = [(v, A)]
        for params, d in zip(self.blocks, self.config.dilations):
            v, A = st_block(v, A, params, d, self.config)
            states.append((v, A))
        return states

    def forward(self, seq) -> Tensor:
        """Forecast (..., H, N) from a T-snapshot history"""
        v, _ = self.trace(seq)[-1]
        last = getitem(v, (Ellipsis, -1, _ALL, _ALL))
        out = matmul(last, self.W_o) + self.b_o
        return relu(swapaxes(out, -1, -2))

    __call__ = forward

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise ShapeMismatch(f"checkpoint lacks parameters {sorted(missing)}")
        for name, p in self.params.items():
            value = state[name]
            p.assign(value.data if isinstance(value, Tensor) else value)

    def save(self, path, prefix: str = "") -> Path:
        return save_tensors(path, {prefix + name: p.data for name, p in self.params.items()})

    def load(self, path, prefix: str = "") -> None:
        stored = load_tensors(path)
        self.load_state_dict({name[len(prefix):]: t for name, t in stored.items() if name.startswith(prefix)})


def forward(model: YIdentityNet, seq) -> Tensor:
    return model.forward(seq)


def mse_loss(pred, target) -> Tensor:
    """(1 / (H*N)) sum (f̂ - f)², averaged over any leading batch axes"""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    return mean(square(pred - target))


def persistence_baseline(seq: GraphSequence, horizon: int) -> np.ndarray:
    """Repeat the last observed density H times"""
    if seq.T < 1:
        raise ShapeMismatch("empty sequence")
    return np.tile(seq.density()[-1], (horizon, 1))


# optimization

class SGD:
    def __init__(self, params: Sequence[Parameter], learning_rate: float):
        self.params = list(params)
        self.learning_rate = learning_rate

    def step(self):
        for p in self.params:
            if p.grad is not None:
                p.assign(p.data - self.learning_rate * p.grad)


class Adam:
    def __init__(self, params: Sequence[Parameter], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * p.grad
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * p.grad * p.grad
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            p.assign(p.data - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))


OPTIMIZERS = {"sgd": SGD, "adam": Adam}


@dataclass
class TrainConfig:
    steps: int = 200
    learning_rate: float = float(config.get('forecaster.learning_rate', 0.01))
    optimizer: str = str(config.get('forecaster.optimizer', 'adam'))
    batch_size: Optional[int] = config.get('forecaster.batch_size', 8)
    seed: int = 0
    trainable: str = ""
    log_every: int = 50

    def __post_init__(self):
        if self.steps < 0:
            raise InvalidModelConfig("steps must be nonnegative")
        if self.learning_rate < 0:
            raise InvalidModelConfig("learning rate must be nonnegative")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidModelConfig(f"optimizer must be one of {sorted(OPTIMIZERS)}")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidModelConfig("batch_size must be positive")


@dataclass
class TrainResult:
    losses: List[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"step": range(len(self.losses)), "loss": self.losses})

    def export_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path


def train(model: YIdentityNet, dataset: GraphDataset, train_config: Optional[TrainConfig] = None) -> TrainResult:
    """Gradient descent on the batch MSE; one loss entry per step, taken before the update.

    Only parameters whose names start with `train_config.trainable` are updated.
    """
    tc = train_config or TrainConfig()
    if len(dataset) == 0:
        raise ShapeMismatch("cannot train on an empty dataset")
    params = model.parameters(tc.trainable)
    optimizer = OPTIMIZERS[tc.optimizer](params, tc.learning_rate)
    rng = np.random.default_rng(tc.seed)
    everything = np.arange(len(dataset))
    result = TrainResult()

    for step in range(tc.steps):
        if tc.batch_size is None or tc.batch_size >= len(dataset):
            indices = everything
        else:
            indices = np.sort(rng.choice(len(dataset), size=tc.batch_size, replace=False))
        V, A, target = dataset.batch(indices)
        model.zero_grad()
        try:
            loss = mse_loss(model.forward((V, A)), target)
            value = loss.item()
            backward(loss)
            optimizer.step()
        except NonFiniteValue as e:
            raise DivergedLoss(f"training diverged at step {step}: {e}") from e
        if not np.isfinite(value):
            raise DivergedLoss(f"loss became {value} at step {step}")
        result.losses.append(value)
        if tc.log_every and step % tc.log_every == 0:
            log.debug(f"step {step}: loss {value:.6g}")

    model.zero_grad()
    if result.losses:
        log.info(f"trained {tc.steps} steps: loss {result.losses[0]:.6g} -> {result.losses[-1]:.6g}")
    return result


def evaluate(model: YIdentityNet, dataset: GraphDataset) -> Dict[str, float]:
    """Model MSE against the persistence-baseline MSE over the whole dataset"""
    if len(dataset) == 0:
        return {"model_mse": 0.0, "baseline_mse": 0.0}
    V, A, target = dataset.batch(range(len(dataset)))
    model_mse = mse_loss(model.forward((V, A)), target).item()
    baseline = np.stack([persistence_baseline(s.sequence, dataset.H) for s in dataset])
    baseline_mse = float(np.mean((baseline - target) ** 2))
    return {"model_mse": model_mse, "baseline_mse": baseline_mse}


def tiny_model_gradcheck(h: float = 1e-5, seed: int = 0) -> float:
    """Max relative gradient error of a two-block model (N=4, T=6, C=2, C'=3, H=2) on one synthetic sample"""
    dataset = generate_synthetic(N=4, T=6, H=2, n_sequences=1, seed=seed)
    sample = dataset[0]
    cfg = ModelConfig(n_nodes=4, in_channels=sample.sequence.C, history=6, horizon=2,
                      hidden=3, blocks=2, kernel_size=2, diffusion_steps=2, seed=seed)
    model = YIdentityNet(cfg)
    error = finite_difference_check(lambda: mse_loss(model.forward(sample.sequence), sample.target),
                                    model.parameters(), h=h)
    log.info(f"gradient check over {sum(p.size for p in model.parameters())} coordinates: max relative error {error:.3g}")
    return error
