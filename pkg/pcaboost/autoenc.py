"""
Vase-shaped fully connected autoencoder with per-node PReLU activations.

Row-vector convention: a layer maps ``h -> prelu(h @ W + b, alpha)``. The
output layer is linear unless the params carry an alpha vector for it.
Backpropagation is written out by hand; training is full-batch Adam with
early stopping on a validation set and best-checkpoint restore.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from .config import ConfigError
from .numlin import Matrix, NumericalError, ShapeError, Vector, as_matrix

logger = logging.getLogger(__name__)


class ArchitectureError(ValueError):
    """Layer widths violate the autoencoder invariants."""
    pass


class VaseConstraintError(ArchitectureError):
    """Widths do not form the vase shape the PCA initializations need."""
    pass


class TrainingDivergedError(NumericalError):
    """Raised when a loss becomes NaN or Inf during training."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


@dataclass(frozen=True)
class Architecture:
    """
    Ordered layer widths, input and output included, e.g. (3, 20, 3, 2, 3, 20, 3).

    Raises:
        ArchitectureError: If input and output widths differ or the minimum
            width is not unique and strictly below the input width.
    """
    widths: Tuple[int, ...]

    def __post_init__(self) -> None:
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 3:
            raise ArchitectureError(f"need at least input, bottleneck and output widths, got {widths}")
        if any(w < 1 for w in widths):
            raise ArchitectureError(f"widths must be positive, got {widths}")
        if widths[0] != widths[-1]:
            raise ArchitectureError(f"input width {widths[0]} != output width {widths[-1]}")
        q = min(widths)
        if widths.count(q) != 1:
            raise ArchitectureError(f"bottleneck width {q} must occur exactly once in {widths}")
        if q >= widths[0]:
            raise ArchitectureError(f"bottleneck width {q} must be below input width {widths[0]}")

    @classmethod
    def parse(cls, spec: Union[str, Sequence[int]]) -> "Architecture":
        """Build from '3-20-3-2-3-20-3' or a sequence of ints."""
        if isinstance(spec, str):
            try:
                widths = tuple(int(p) for p in spec.replace(",", "-").split("-") if p.strip())
            except ValueError as e:
                raise ArchitectureError(f"cannot parse architecture '{spec}'") from e
            return cls(widths)
        return cls(tuple(spec))

    def __str__(self) -> str:
        return "-".join(str(w) for w in self.widths)

    @property
    def n(self) -> int:
        return self.widths[0]

    @property
    def q(self) -> int:
        return self.widths[self.bottleneck_index]

    @property
    def bottleneck_index(self) -> int:
        return self.widths.index(min(self.widths))

    @property
    def n_layers(self) -> int:
        """Number of weight matrices."""
        return len(self.widths) - 1

    @property
    def encoder_widths(self) -> List[int]:
        """Widths from the input up to the layer feeding the bottleneck."""
        return list(self.widths[: self.bottleneck_index])

    @property
    def decoder_widths(self) -> List[int]:
        """Widths from the layer after the bottleneck up to the output."""
        return list(self.widths[self.bottleneck_index + 1:])

    def check_vase(self) -> None:
        """
        Check the vase shape required by the PCA initializations.

        Every width before and after the bottleneck must be >= n, and the
        layers adjacent to the bottleneck must have width exactly n.

        Raises:
            VaseConstraintError: If the widths are not vase-shaped.
        """
        n = self.n
        enc, dec = self.encoder_widths, self.decoder_widths
        narrow = [w for w in enc + dec if w < n]
        if narrow:
            raise VaseConstraintError(
                f"{self}: hidden widths {narrow} are below the input width {n}"
            )
        if enc[-1] != n or dec[0] != n:
            raise VaseConstraintError(
                f"{self}: layers adjacent to the bottleneck must have width {n}"
            )


@dataclass
class TrainConfig:
    """Adam and early-stopping settings."""
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_epochs: int = 10_000
    patience: int = 100
    full_batch: bool = True
    seed: int = 0
    freeze_alphas: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.adam_epsilon <= 0:
            raise ConfigError(f"adam_epsilon must be > 0, got {self.adam_epsilon}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not self.full_batch:
            raise ConfigError("only full-batch training is supported")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass
class AeParams:
    """
    Autoencoder parameters.

    weights[i] has shape widths[i] x widths[i+1]; biases[i] has length
    widths[i+1]; alphas[i] holds the PReLU slopes of layer i's output nodes.
    Layers with an index >= len(alphas) are linear.
    """
    weights: List[Matrix]
    biases: List[Vector]
    alphas: List[Vector]

    def __post_init__(self) -> None:
        if not self.weights:
            raise ShapeError("an autoencoder needs at least one weight matrix")
        if len(self.biases) != len(self.weights):
            raise ShapeError(f"{len(self.weights)} weights but {len(self.biases)} biases")
        if len(self.alphas) > len(self.weights):
            raise ShapeError(f"{len(self.alphas)} alpha vectors for {len(self.weights)} layers")
        for i, w in enumerate(self.weights):
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"weights {i - 1} and {i} do not chain: {self.weights[i - 1].shape}, {w.shape}")
            if self.biases[i].shape != (w.shape[1],):
                raise ShapeError(f"bias {i} has shape {self.biases[i].shape}, expected ({w.shape[1]},)")
            if i < len(self.alphas) and self.alphas[i].shape != (w.shape[1],):
                raise ShapeError(f"alpha {i} has shape {self.alphas[i].shape}, expected ({w.shape[1]},)")

    @property
    def widths(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def architecture(self) -> Architecture:
        return Architecture(self.widths)

    def copy(self) -> "AeParams":
        return AeParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            alphas=[a.copy() for a in self.alphas],
        )

    def arrays(self) -> List[np.ndarray]:
        """Flat view of every parameter array, weights then biases then alphas."""
        return [*self.weights, *self.biases, *self.alphas]

    def zeros_like(self) -> "AeParams":
        return AeParams(
            weights=[np.zeros_like(w) for w in self.weights],
            biases=[np.zeros_like(b) for b in self.biases],
            alphas=[np.zeros_like(a) for a in self.alphas],
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def to_dict(self, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "architecture": list(self.widths),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "alphas": [a.tolist() for a in self.alphas],
        }
        if extra:
            data.update(extra)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AeParams":
        return cls(
            weights=[np.asarray(w, dtype=np.float64) for w in data["weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in data["biases"]],
            alphas=[np.asarray(a, dtype=np.float64) for a in data["alphas"]],
        )


@dataclass
class ForwardCache:
    """Per-layer inputs and pre-activations recorded by ``forward``."""
    inputs: List[Matrix] = field(default_factory=list)
    pre_activations: List[Matrix] = field(default_factory=list)


@dataclass
class AdamState:
    step: int
    m: AeParams
    v: AeParams

    @classmethod
    def zeros(cls, params: AeParams) -> "AdamState":
        return cls(step=0, m=params.zeros_like(), v=params.zeros_like())


@dataclass
class TrainHistory:
    """Loss trace of one training run; index 0 is the untrained model."""
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def epochs_trained(self) -> int:
        return len(self.val_loss) - 1

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch]

    def summary(self) -> Dict[str, Any]:
        return {
            "epochs_trained": self.epochs_trained,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "initial_val_loss": self.val_loss[0],
            "stopped_early": self.stopped_early,
        }


def prelu(z: npt.ArrayLike, alpha: npt.ArrayLike) -> np.ndarray:
    """z where z >= 0, alpha * z otherwise (elementwise, broadcasting)."""
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, z, np.asarray(alpha) * z)


def prelu_grad(z: npt.ArrayLike, alpha: npt.ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Partial derivatives (d/dz, d/dalpha) of ``prelu``."""
    z = np.asarray(z, dtype=np.float64)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), z.shape)
    positive = z >= 0
    return np.where(positive, 1.0, alpha), np.where(positive, 0.0, z)


def _run_layers(
    params: AeParams, x: Matrix, start: int, stop: int, cache: Optional[ForwardCache] = None
) -> Matrix:
    h = x
    for i in range(start, stop):
        w = params.weights[i]
        if h.shape[1] != w.shape[0]:
            raise ShapeError(f"layer {i} expects {w.shape[0]} inputs, got {h.shape[1]}")
        z = h @ w + params.biases[i]
        if cache is not None:
            cache.inputs.append(h)
            cache.pre_activations.append(z)
        h = prelu(z, params.alphas[i]) if i < len(params.alphas) else z
    return h


def forward(params: AeParams, x: npt.ArrayLike) -> Tuple[Matrix, ForwardCache]:
    """
    Evaluate the network on the rows of ``x``.

    Returns:
        The output matrix (m x n) and the cache needed for backpropagation.
    """
    data = as_matrix(x, "x")
    cache = ForwardCache()
    out = _run_layers(params, data, 0, len(params.weights), cache)
    return out, cache


def predict(params: AeParams, x: npt.ArrayLike) -> Matrix:
    return forward(params, x)[0]


def encode(params: AeParams, x: npt.ArrayLike) -> Matrix:
    """Bottleneck codes (m x q): the forward pass up to the bottleneck layer."""
    data = as_matrix(x, "x")
    return _run_layers(params, data, 0, params.architecture.bottleneck_index)


def decode(params: AeParams, codes: npt.ArrayLike) -> Matrix:
    """Map bottleneck codes back to the input space (m x n)."""
    data = as_matrix(codes, "codes")
    return _run_layers(params, data, params.architecture.bottleneck_index, len(params.weights))


def loss(x: npt.ArrayLike, x_hat: npt.ArrayLike) -> float:
    """Training objective: mean over rows of the squared L2 distance."""
    diff = np.asarray(x_hat, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    if diff.ndim != 2:
        raise ShapeError(f"expected 2-D inputs, got {diff.ndim}-D")
    return float(np.mean(np.sum(diff * diff, axis=1)))


def mean_distance(x: npt.ArrayLike, x_hat: npt.ArrayLike) -> float:
    """Reporting metric: mean over rows of the L2 distance."""
    diff = np.asarray(x_hat, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    if diff.ndim != 2:
        raise ShapeError(f"expected 2-D inputs, got {diff.ndim}-D")
    return float(np.mean(np.linalg.norm(diff, axis=1)))


def loss_and_gradients(params: AeParams, x: npt.ArrayLike) -> Tuple[float, AeParams]:
    """Loss of ``params`` on ``x`` and its exact gradient for every parameter."""
    data = as_matrix(x, "x")
    out, cache = forward(params, data)
    m = data.shape[0]
    value = loss(data, out)

    grads = params.zeros_like()
    g = 2.0 * (out - data) / m  # dL/d(output)
    for i in reversed(range(len(params.weights))):
        z = cache.pre_activations[i]
        if i < len(params.alphas):
            dz, dalpha = prelu_grad(z, params.alphas[i])
            grads.alphas[i] = np.sum(g * dalpha, axis=0)
            g = g * dz
        grads.weights[i] = cache.inputs[i].T @ g
        grads.biases[i] = np.sum(g, axis=0)
        g = g @ params.weights[i].T
    return value, grads


def gradients(params: AeParams, x: npt.ArrayLike) -> AeParams:
    """Gradient bundle of ``loss`` with respect to weights, biases and alphas."""
    return loss_and_gradients(params, x)[1]


def adam_step(
    params: AeParams, grads: AeParams, state: AdamState, config: TrainConfig
) -> Tuple[AeParams, AdamState]:
    """
    One bias-corrected Adam update. Inputs are not modified.

    Alpha entries are left untouched when ``config.freeze_alphas`` is set.
    """
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_epsilon, config.learning_rate
    step = state.step + 1
    new_params, new_m, new_v = params.copy(), state.m.copy(), state.v.copy()

    groups = [
        (new_params.weights, grads.weights, new_m.weights, new_v.weights, True),
        (new_params.biases, grads.biases, new_m.biases, new_v.biases, True),
        (new_params.alphas, grads.alphas, new_m.alphas, new_v.alphas, not config.freeze_alphas),
    ]
    for p_list, g_list, m_list, v_list, trainable in groups:
        if not trainable:
            continue
        for k, g in enumerate(g_list):
            m_list[k] = b1 * m_list[k] + (1 - b1) * g
            v_list[k] = b2 * v_list[k] + (1 - b2) * g * g
            m_hat = m_list[k] / (1 - b1 ** step)
            v_hat = v_list[k] / (1 - b2 ** step)
            p_list[k] = p_list[k] - lr * m_hat / (np.sqrt(v_hat) + eps)

    return new_params, AdamState(step=step, m=new_m, v=new_v)


def train(
    params: AeParams, train_x: npt.ArrayLike, val_x: npt.ArrayLike, config: TrainConfig
) -> Tuple[AeParams, TrainHistory]:
    """
    Full-batch Adam with early stopping.

    Validation loss is tracked every epoch; training stops after
    ``config.patience`` epochs without improvement or at ``config.max_epochs``.
    The parameters with the lowest validation loss ever seen are returned.

    Raises:
        TrainingDivergedError: If a training or validation loss is not finite.
    """
    train_m = as_matrix(train_x, "train")
    val_m = as_matrix(val_x, "val")
    if train_m.shape[1] != val_m.shape[1]:
        raise ShapeError(f"train has {train_m.shape[1]} columns, val has {val_m.shape[1]}")

    history = TrainHistory()
    current = params.copy()
    train_loss = loss(train_m, predict(current, train_m))
    val_loss = loss(val_m, predict(current, val_m))
    if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
        raise TrainingDivergedError(0, train_loss if not np.isfinite(train_loss) else val_loss)
    history.train_loss.append(train_loss)
    history.val_loss.append(val_loss)

    best, best_val = current.copy(), val_loss
    state = AdamState.zeros(current)
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        _, grads = loss_and_gradients(current, train_m)
        current, state = adam_step(current, grads, state, config)
        train_loss = loss(train_m, predict(current, train_m))
        val_loss = loss(val_m, predict(current, val_m))
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDivergedError(epoch, train_loss if not np.isfinite(train_loss) else val_loss)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        logger.debug(f"epoch {epoch}: train={train_loss:.6g} val={val_loss:.6g}")

        if val_loss < best_val:
            best, best_val = current.copy(), val_loss
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                history.stopped_early = True
                logger.debug(
                    f"Early stopping at epoch {epoch}; best val loss {best_val:.6g} "
                    f"at epoch {history.best_epoch}"
                )
                break

    return best, history


def random_init(
    arch: Architecture, rng: np.random.Generator, prelu_output: bool = False
) -> AeParams:
    """
    Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases, unit alphas.
    """
    widths = arch.widths
    weights = [random_layer(widths[i], widths[i + 1], rng) for i in range(arch.n_layers)]
    return AeParams(
        weights=weights,
        biases=[np.zeros(widths[i + 1]) for i in range(arch.n_layers)],
        alphas=unit_alphas(arch, prelu_output),
    )


def random_layer(fan_in: int, fan_out: int, rng: np.random.Generator) -> Matrix:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def unit_alphas(arch: Architecture, prelu_output: bool = False) -> List[Vector]:
    """Slopes of 1 for every activated layer (all but the output unless requested)."""
    count = arch.n_layers if prelu_output else arch.n_layers - 1
    return [np.ones(arch.widths[i + 1]) for i in range(count)]
