"""Joint edge-mask and spectral filter-bank classifier.

Two sigmoid mask networks carve a homophilic and a heterophilic weighted
graph out of a candidate edge set; a low-pass diffusion filter bank runs
on the first graph and a high-pass bank on the second.  Concatenated
filter responses feed one linear layer + softmax.  The training
objective adds two label-similarity structural penalties to the
cross-entropy so the masks are pushed toward genuinely homophilic /
heterophilic edge sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, Tensor
from .datasets import CandidateGraph
from .errors import ContractError, ValidationError
from .graphs import LabeledGraph, normalized_laplacian

KERNEL_MODES = ("fig3", "verbatim")
BANK_KINDS = ("low", "high")
VARIANTS = ("full", "NM", "FBL", "FBH")

CHECKPOINT_FORMAT = "fggsl-checkpoint-v1"


@dataclass
class FilterBankSpec:
    """A bank of J-1 diffusion kernels at scales j = 2..J."""

    j_max: int
    mode: str
    kind: str

    def __post_init__(self):
        if self.j_max < 2:
            raise ContractError(f"FilterBankSpec: j_max={self.j_max} must be >= 2")
        if self.mode not in KERNEL_MODES:
            raise ContractError(f"FilterBankSpec: unknown mode {self.mode!r}")
        if self.kind not in BANK_KINDS:
            raise ContractError(f"FilterBankSpec: unknown kind {self.kind!r}")

    def scales(self) -> range:
        return range(2, self.j_max + 1)


def kernel_value(j: int, lam, mode: str, kind: str):
    """Spectral response of the scale-j kernel at frequency ``lam``.

    ``fig3`` mode uses the diffusion-wavelet family t^(2^(j-1)) - t^(2^j)
    with t = 1 - lam/2 for the low bank and t = lam/2 for the high bank,
    so the low bank concentrates near lam = 0 and the high bank near
    lam = 2.  ``verbatim`` mode swaps in the alternative printed forms:
    low = (lam/2)^(2^(j-1)) - (1/2)^(2^j) (note the frequency-free second
    term) and high = (1 - lam/2)^(2^(j-1)) - (1 - lam/2)^(2^j).
    """
    if j < 2:
        raise ContractError(f"kernel_value: j={j} must be >= 2")
    if mode not in KERNEL_MODES:
        raise ContractError(f"kernel_value: unknown mode {mode!r}")
    if kind not in BANK_KINDS:
        raise ContractError(f"kernel_value: unknown kind {kind!r}")
    lam = np.asarray(lam, dtype=np.float64)
    a = 2 ** (j - 1)
    if mode == "fig3":
        t = 1.0 - 0.5 * lam if kind == "low" else 0.5 * lam
        out = t ** a - t ** (2 * a)
    elif kind == "low":
        out = (0.5 * lam) ** a - 0.5 ** (2 * a)
    else:
        t = 1.0 - 0.5 * lam
        out = t ** a - t ** (2 * a)
    return out if out.ndim else float(out)


def _base_operator(l: Tensor, mode: str, kind: str) -> Tensor:
    """The matrix T whose powers realize the kernel polynomial."""
    n = l.shape[0]
    half = ad.scale(0.5, l)
    if (mode == "fig3" and kind == "low") or (mode == "verbatim" and kind == "high"):
        return ad.sub(ad.constant(np.eye(n)), half)
    return half


def _power_chain(t: Tensor, j_max: int) -> list[Tensor]:
    """powers[k] = T^(2^k) for k = 0..j_max, by repeated squaring."""
    powers = [t]
    for _ in range(j_max):
        powers.append(ad.matmul(powers[-1], powers[-1]))
    return powers


def _bank_block(powers: list[Tensor], x: Tensor, j: int, mode: str, kind: str) -> Tensor:
    if mode == "verbatim" and kind == "low":
        # second kernel term is frequency-free: a scaled identity
        const = 0.5 ** (2 ** j)
        return ad.sub(ad.matmul(powers[j - 1], x), ad.scale(const, x))
    return ad.matmul(ad.sub(powers[j - 1], powers[j]), x)


def filter_apply(l: Tensor, x: Tensor, j: int, mode: str, kind: str) -> Tensor:
    """h_j(L) @ X via repeated matrix squaring; differentiable throughout."""
    if j < 2:
        raise ContractError(f"filter_apply: j={j} must be >= 2")
    powers = _power_chain(_base_operator(l, mode, kind), j)
    return _bank_block(powers, x, j, mode, kind)


def filter_bank_apply(l: Tensor, x: Tensor, spec: FilterBankSpec) -> Tensor:
    """Column-concatenated responses of every scale in the bank.

    Shares one squaring chain across scales, so the whole bank costs
    j_max matrix squarings plus j_max products with X.
    """
    powers = _power_chain(_base_operator(l, spec.mode, spec.kind), spec.j_max)
    blocks = [_bank_block(powers, x, j, spec.mode, spec.kind) for j in spec.scales()]
    return ad.concat_cols(blocks)


class MaskNet:
    """Edge-weight network: w_ij = sigmoid(<z_i, z_j>), z = tanh(x W + b)."""

    def __init__(self, params: ParameterSet, prefix: str, num_features: int,
                 mask_dim: int, rng: np.random.Generator):
        limit = np.sqrt(6.0 / (num_features + mask_dim))
        self.weight = params.add(
            f"{prefix}_w", rng.uniform(-limit, limit, size=(num_features, mask_dim)))
        self.bias = params.add(f"{prefix}_b", np.zeros((1, mask_dim)))


def mask_matrix(net: MaskNet, x: Tensor, a_f: CandidateGraph) -> Tensor:
    """Masked edge-weight matrix S(x) * A_f, exactly symmetric, zero diagonal."""
    if x.shape[1] != net.weight.shape[0]:
        raise ContractError(
            f"mask_matrix: feature width {x.shape[1]} != net input {net.weight.shape[0]}")
    n = x.shape[0]
    bias_rows = ad.matmul(ad.constant(np.ones((n, 1))), net.bias)
    z = ad.tanh(ad.add(ad.matmul(x, net.weight), bias_rows))
    gram = ad.matmul(z, ad.transpose(z))
    # (G + G^T)/2 makes symmetry bitwise regardless of BLAS blocking
    sym = ad.scale(0.5, ad.add(gram, ad.transpose(gram)))
    return ad.hadamard(ad.sigmoid(sym), ad.constant(a_f.adjacency))


class FgGSLModel:
    """Mask networks + filter banks + linear classifier for one variant.

    full : both masks, both banks          (width 2(J-1)F)
    NM   : no masks, both banks on A_f     (width 2(J-1)F)
    FBL  : homophilic mask, low bank only  (width (J-1)F)
    FBH  : heterophilic mask, high bank    (width (J-1)F)
    """

    def __init__(self, num_features: int, num_classes: int, j_max: int = 4,
                 mask_dim: int = 16, kernel_mode: str = "fig3",
                 variant: str = "full", seed: int = 0):
        if variant not in VARIANTS:
            raise ValidationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if kernel_mode not in KERNEL_MODES:
            raise ValidationError(f"unknown kernel mode {kernel_mode!r}")
        if j_max < 2:
            raise ValidationError(f"j_max={j_max} must be >= 2")
        self.num_features = num_features
        self.num_classes = num_classes
        self.j_max = j_max
        self.mask_dim = mask_dim
        self.kernel_mode = kernel_mode
        self.variant = variant
        self.params = ParameterSet()
        rng = np.random.default_rng(seed)
        self.mask_ho = MaskNet(self.params, "mask_ho", num_features, mask_dim, rng)
        self.mask_ht = MaskNet(self.params, "mask_ht", num_features, mask_dim, rng)
        width = self.embedding_width()
        limit = np.sqrt(6.0 / (width + num_classes))
        self.w_clf = self.params.add(
            "w_clf", rng.uniform(-limit, limit, size=(width, num_classes)))

    def num_banks(self) -> int:
        return 2 if self.variant in ("full", "NM") else 1

    def embedding_width(self) -> int:
        return self.num_banks() * (self.j_max - 1) * self.num_features

    def bank(self, kind: str) -> FilterBankSpec:
        return FilterBankSpec(self.j_max, self.kernel_mode, kind)


@dataclass
class ForwardResult:
    yhat: Tensor                 # (n, c) softmax probabilities
    h: Tensor                    # (n, width) concatenated filter responses
    w1: Tensor | None            # homophilic edge weights, if the variant has them
    w2: Tensor | None            # heterophilic edge weights
    logits: Tensor               # (n, c) pre-softmax


def forward(model: FgGSLModel, x: Tensor, a_f: CandidateGraph) -> ForwardResult:
    """Full forward pass; every path is recorded on the autodiff tape."""
    if x.shape[1] != model.num_features:
        raise ContractError(
            f"forward: feature width {x.shape[1]} != model width {model.num_features}")
    w1 = w2 = None
    parts = []
    if model.variant in ("full", "FBL"):
        w1 = mask_matrix(model.mask_ho, x, a_f)
    if model.variant in ("full", "FBH"):
        w2 = mask_matrix(model.mask_ht, x, a_f)
    if model.variant == "NM":
        given = ad.constant(a_f.adjacency)
        w1 = w2 = given
    if w1 is not None:
        parts.append(filter_bank_apply(normalized_laplacian(w1), x, model.bank("low")))
    if w2 is not None:
        parts.append(filter_bank_apply(normalized_laplacian(w2), x, model.bank("high")))
    h = ad.concat_cols(parts)
    logits = ad.matmul(h, model.w_clf)
    return ForwardResult(yhat=ad.softmax_rows(logits), h=h, w1=w1, w2=w2, logits=logits)


def structural_loss_ho(w1: Tensor, yhat: Tensor, pairs) -> Tensor:
    """Mean over candidate edges of w_ij * (1 - cos(yhat_i, yhat_j))."""
    i_idx, j_idx = pairs
    if len(i_idx) == 0:
        raise ContractError("structural_loss_ho: empty edge list")
    cos = ad.cosine_rows(yhat, yhat, pairs)
    w = ad.gather_pairs(w1, i_idx, j_idx)
    dissim = ad.sub(ad.constant(np.ones((len(i_idx), 1))), cos)
    return ad.scale(1.0 / len(i_idx), ad.sum_all(ad.hadamard(w, dissim)))


def structural_loss_ht(w2: Tensor, yhat: Tensor, pairs) -> Tensor:
    """Mean over candidate edges of w_ij * cos(yhat_i, yhat_j)."""
    i_idx, j_idx = pairs
    if len(i_idx) == 0:
        raise ContractError("structural_loss_ht: empty edge list")
    cos = ad.cosine_rows(yhat, yhat, pairs)
    w = ad.gather_pairs(w2, i_idx, j_idx)
    return ad.scale(1.0 / len(i_idx), ad.sum_all(ad.hadamard(w, cos)))


@dataclass
class LossBreakdown:
    ce: float
    ho: float
    ht: float
    total: float
    alpha: float
    beta: float


def total_loss(model: FgGSLModel, graph: LabeledGraph, a_f: CandidateGraph,
               alpha: float, beta: float, train_idx,
               true_labels_on_train: bool = False):
    """Cross-entropy on train rows plus weighted structural losses on all
    candidate edges, evaluated with predicted probabilities.

    Returns (loss tensor, LossBreakdown, ForwardResult).  With
    ``true_labels_on_train`` the similarity source substitutes the known
    one-hot labels on training rows.
    """
    if alpha < 0 or beta < 0:
        raise ContractError(f"total_loss: alpha={alpha}, beta={beta} must be >= 0")
    x = ad.constant(graph.features)
    onehot = ad.constant(graph.labels)
    fwd = forward(model, x, a_f)
    ce, probs = ad.softmax_cross_entropy(fwd.logits, onehot, train_idx)

    sim_source = probs
    if true_labels_on_train:
        keep = np.ones((graph.n, 1))
        keep[np.asarray(train_idx, dtype=np.intp)] = 0.0
        keep = np.broadcast_to(keep, graph.labels.shape).copy()
        sim_source = ad.add(ad.hadamard(probs, ad.constant(keep)),
                            ad.constant(graph.labels * (1.0 - keep)))

    pairs = a_f.edge_pairs()
    zero = ad.constant(0.0)
    ho = structural_loss_ho(fwd.w1, sim_source, pairs) if fwd.w1 is not None else zero
    ht = structural_loss_ht(fwd.w2, sim_source, pairs) if fwd.w2 is not None else zero
    loss = ad.add(ce, ad.add(ad.scale(alpha, ho), ad.scale(beta, ht)))
    breakdown = LossBreakdown(ce=ce.item(), ho=ho.item(), ht=ht.item(),
                              total=loss.item(), alpha=alpha, beta=beta)
    return loss, breakdown, fwd


# ---------------------------------------------------------------------------
# checkpoints: JSON header line + concatenated little-endian float64 blobs


def save_checkpoint(path, model: FgGSLModel, alpha: float, beta: float):
    names = model.params.names()
    header = {
        "format": CHECKPOINT_FORMAT,
        "j_max": model.j_max,
        "kernel_mode": model.kernel_mode,
        "variant": model.variant,
        "mask_dim": model.mask_dim,
        "alpha": alpha,
        "beta": beta,
        "num_features": model.num_features,
        "num_classes": model.num_classes,
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n].data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[FgGSLModel, dict]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{path}: not a checkpoint file") from exc
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValidationError(f"{path}: unexpected format {header.get('format')!r}")
        model = FgGSLModel(
            num_features=header["num_features"], num_classes=header["num_classes"],
            j_max=header["j_max"], mask_dim=header["mask_dim"],
            kernel_mode=header["kernel_mode"], variant=header["variant"])
        for entry in header["params"]:
            rows, cols = entry["shape"]
            blob = fh.read(rows * cols * 8)
            if len(blob) != rows * cols * 8:
                raise ValidationError(f"{path}: truncated parameter {entry['name']}")
            model.params[entry["name"]].data = (
                np.frombuffer(blob, dtype="<f8").reshape(rows, cols).astype(np.float64))
    return model, header
