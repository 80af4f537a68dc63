"""
PCA-based autoencoder initializations.

Both initializations make a vase-shaped PReLU autoencoder (all slopes 1,
zero biases) reproduce a rank-q PCA of centered data exactly:

    X @ W_e1 ... W_ei @ W_enc @ W_dec @ W_d1 ... W_dj = X @ V @ V^T

PCA-Naive draws the non-bottleneck layers at random and solves for the two
bottleneck matrices. PCA-Robust builds the non-bottleneck layers with
``rwi`` so that every prefix product on either side of the bottleneck is a
random orthonormal matrix, keeping each layer norm preserving.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from . import pca
from .autoenc import (
    AeParams,
    Architecture,
    VaseConstraintError,
    predict,
    random_layer,
    unit_alphas,
)
from .numlin import (
    Matrix,
    ShapeError,
    as_matrix,
    chain_product,
    condition_number,
    pinv,
    random_orthonormal,
)

logger = logging.getLogger(__name__)

__all__ = [
    "InitReport",
    "VaseConstraintError",
    "rwi",
    "pca_robust_init",
    "pca_naive_init",
    "prefix_products",
    "prefix_condition_numbers",
    "verify_init",
    "INIT_METHODS",
]

# condition number above which PCA-Naive logs an ill-conditioning warning
_ILL_CONDITIONED = 1e8


@dataclass
class InitReport:
    """Diagnostics of an initialization against PCA."""
    pca_equivalence_residual: float
    prefix_condition_numbers: List[float]
    norm_preservation_residual: float
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self) -> None:
        self.passed = bool(self.pca_equivalence_residual <= self.tol)

    @property
    def max_condition_number(self) -> float:
        return max(self.prefix_condition_numbers, default=1.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pca_equivalence_residual": self.pca_equivalence_residual,
            "prefix_condition_numbers": self.prefix_condition_numbers,
            "max_condition_number": self.max_condition_number,
            "norm_preservation_residual": self.norm_preservation_residual,
            "tol": self.tol,
            "passed": self.passed,
        }


def rwi(a: npt.ArrayLike, arch: Sequence[int], rng: np.random.Generator) -> List[Matrix]:
    """
    Robust weight initialization.

    Returns ``len(arch) - 1`` matrices whose product is ``a`` and whose every
    prefix product is a random orthonormal matrix. Recursively: drop the last
    width, draw B = RO(arch[0], new last width), solve B @ W = a with
    W = B^+ @ a, then recurse on B.

    Args:
        a: arch[0] x arch[-1] matrix with orthonormal rows.
        arch: Widths, all >= arch[0].

    Raises:
        VaseConstraintError: If a width is below arch[0].
        ShapeError: If ``a`` does not match the end widths.
    """
    mat = as_matrix(a, "a")
    widths = list(arch)
    if len(widths) < 2:
        return []
    if mat.shape != (widths[0], widths[-1]):
        raise ShapeError(f"a has shape {mat.shape}, arch ends are ({widths[0]}, {widths[-1]})")
    narrow = [w for w in widths if w < widths[0]]
    if narrow:
        raise VaseConstraintError(f"widths {narrow} are below the input width {widths[0]}")

    layers: List[Matrix] = []
    target = mat
    # iterative form of the recursion: peel layers off the end
    while len(widths) > 2:
        widths.pop()
        b = random_orthonormal(widths[0], widths[-1], rng)
        layers.append(pinv(b) @ target)
        target = b
    layers.append(target)
    layers.reverse()
    return layers


def _pca_loadings(x_train: npt.ArrayLike, q: int) -> Tuple[pca.PcaModel, Matrix]:
    data = as_matrix(x_train, "x_train")
    model = pca.fit(data, q)
    return model, model.v


def _resolve_arch(arch: Any) -> Architecture:
    return arch if isinstance(arch, Architecture) else Architecture.parse(arch)


def pca_robust_init(
    x_train: npt.ArrayLike,
    arch: Any,
    rng: np.random.Generator,
    independent_decoder: bool = False,
    prelu_output: bool = False,
    model: Optional[pca.PcaModel] = None,
) -> AeParams:
    """
    Stable PCA-based weight initialization.

    Encoder and decoder non-bottleneck layers come from ``rwi`` applied to a
    random orthonormal n x n matrix A (the same A on both sides unless
    ``independent_decoder``). The bottleneck weights are
    ``W_enc = (prod Enc)^+ @ P`` and ``W_dec = P^T @ (prod Dec)^+``.

    Args:
        x_train: Centered (optionally scaled) training data.
        arch: Vase-shaped architecture.
        rng: Random source for the orthonormal matrices.
        independent_decoder: Draw a fresh A' for the decoder.
        prelu_output: Give the output layer PReLU slopes too.
        model: Precomputed PCA of ``x_train``; fitted here when omitted.

    Raises:
        VaseConstraintError: If ``arch`` is not vase-shaped.
    """
    arch = _resolve_arch(arch)
    arch.check_vase()
    if model is None:
        model, p = _pca_loadings(x_train, arch.q)
    else:
        p = model.v
    _check_model(model, arch)
    n = arch.n

    a = random_orthonormal(n, n, rng)
    enc = rwi(a, arch.encoder_widths, rng)
    a_dec = random_orthonormal(n, n, rng) if independent_decoder else a
    dec = rwi(a_dec, arch.decoder_widths, rng)

    w_enc_minus = chain_product(enc, n)
    w_dec_plus = chain_product(dec, n)
    # both products are orthonormal n x n, so their pseudo-inverse is the transpose
    w_enc = w_enc_minus.T @ p
    w_dec = p.T @ w_dec_plus.T

    return _assemble(arch, enc, w_enc, w_dec, dec, prelu_output)


def pca_naive_init(
    x_train: npt.ArrayLike,
    arch: Any,
    rng: np.random.Generator,
    prelu_output: bool = False,
    model: Optional[pca.PcaModel] = None,
) -> AeParams:
    """
    Random non-bottleneck layers with bottleneck weights solved to match PCA.

    ``W_enc = W_enc-^+ @ V`` and ``W_dec = V^T @ W_dec+^+`` where ``W_enc-`` and
    ``W_dec+`` are the products of the random encoder and decoder layers.
    Conditioning of those products is not controlled.
    """
    arch = _resolve_arch(arch)
    arch.check_vase()
    if model is None:
        model, v = _pca_loadings(x_train, arch.q)
    else:
        v = model.v
    _check_model(model, arch)
    n = arch.n
    enc_w, dec_w = arch.encoder_widths, arch.decoder_widths

    enc = [random_layer(enc_w[i], enc_w[i + 1], rng) for i in range(len(enc_w) - 1)]
    dec = [random_layer(dec_w[i], dec_w[i + 1], rng) for i in range(len(dec_w) - 1)]
    w_enc_minus = chain_product(enc, n)
    w_dec_plus = chain_product(dec, n)

    for side, product in (("encoder", w_enc_minus), ("decoder", w_dec_plus)):
        cond = condition_number(product)
        if cond > _ILL_CONDITIONED:
            logger.warning(
                f"PCA-Naive {side} product is ill-conditioned (cond={cond:.3g}); "
                "pseudo-inverse cutoff applies"
            )

    w_enc = pinv(w_enc_minus) @ v
    w_dec = v.T @ pinv(w_dec_plus)
    return _assemble(arch, enc, w_enc, w_dec, dec, prelu_output)


def _check_model(model: pca.PcaModel, arch: Architecture) -> None:
    if model.n_features != arch.n or model.q != arch.q:
        raise ShapeError(
            f"PCA model (n={model.n_features}, q={model.q}) does not match architecture {arch}"
        )
    if model.rank_deficient:
        logger.warning(f"Training data rank is below q={arch.q}; initialization proceeds")


def _assemble(
    arch: Architecture,
    enc: List[Matrix],
    w_enc: Matrix,
    w_dec: Matrix,
    dec: List[Matrix],
    prelu_output: bool,
) -> AeParams:
    weights = [*enc, w_enc, w_dec, *dec]
    return AeParams(
        weights=weights,
        biases=[np.zeros(w.shape[1]) for w in weights],
        alphas=unit_alphas(arch, prelu_output),
    )


def prefix_products(params: AeParams) -> List[Matrix]:
    """
    Prefix products of the non-bottleneck layers on each side.

    Encoder side: W_e1, W_e1 W_e2, ... up to the layer feeding the
    bottleneck weight. Decoder side: W_d1, W_d1 W_d2, ... after W_dec.
    """
    b = params.architecture.bottleneck_index
    enc = params.weights[: b - 1]
    dec = params.weights[b + 1:]
    out: List[Matrix] = []
    for side in (enc, dec):
        for k in range(1, len(side) + 1):
            out.append(chain_product(side[:k]))
    return out


def prefix_condition_numbers(params: AeParams) -> List[float]:
    return [condition_number(m) for m in prefix_products(params)]


def verify_init(
    params: AeParams,
    x_probe: npt.ArrayLike,
    pca_model: pca.PcaModel,
    tol: float = 1e-8,
) -> InitReport:
    """
    Compare a network against PCA on probe rows.

    ``x_probe`` is given in the network's (centered, scaled) coordinates.
    The equivalence residual is the largest per-row distance between network
    output and ``x V V^T``, relative to the row norm. The norm residual is the
    largest relative change of a probe row's norm under any prefix product.
    Verification is diagnostic: a report is always returned.
    """
    probe = as_matrix(x_probe, "x_probe")
    out = predict(params, probe)
    expected = probe @ pca_model.projector
    row_norms = np.linalg.norm(probe, axis=1)
    safe = np.where(row_norms > 0, row_norms, 1.0)
    equivalence = float(np.max(np.linalg.norm(out - expected, axis=1) / safe))

    norm_residual = 0.0
    nonzero = row_norms > 0
    for product in prefix_products(params):
        mapped = np.linalg.norm(probe[nonzero] @ product, axis=1)
        if mapped.size:
            dev = np.max(np.abs(mapped - row_norms[nonzero]) / row_norms[nonzero])
            norm_residual = max(norm_residual, float(dev))

    report = InitReport(
        pca_equivalence_residual=equivalence,
        prefix_condition_numbers=prefix_condition_numbers(params),
        norm_preservation_residual=norm_residual,
        tol=tol,
    )
    if not report.passed:
        logger.info(f"Init verification: residual {equivalence:.3g} exceeds tol {tol:.3g}")
    return report


INIT_METHODS = {
    "robust": pca_robust_init,
    "naive": pca_naive_init,
}
