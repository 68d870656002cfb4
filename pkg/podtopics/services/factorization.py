"""Nonnegative matrix factorization M ~ H W by Frobenius multiplicative updates, plus top words."""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from sklearn.utils.extmath import randomized_svd

from podtopics.exceptions import ConfigError, DataError, NumericalError
from podtopics.schemas.pipeline import InitMethod, NMFOptions
from podtopics.schemas.report import TermWeight, TopicSummary
from podtopics.services.representation import WeightedDocTermMatrix
from podtopics.utils.matrix_io import read_dense_binary, write_dense_binary

logger = logging.getLogger(__name__)

MatrixLike = Union[WeightedDocTermMatrix, sp.spmatrix, np.ndarray]


@dataclass(frozen=True)
class TopicModel:
    """Document-topic factor H (|D| x K) and topic-word factor W (K x |V|)."""

    W: np.ndarray
    H: np.ndarray
    loss_trace: tuple[float, ...]
    seed: int
    n_iter: int
    terms: tuple[str, ...] = ()
    init: str = InitMethod.NNDSVDA.value

    @property
    def K(self) -> int:
        return self.W.shape[0]

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]


def _as_matrix(M: MatrixLike) -> tuple[Union[sp.csr_matrix, np.ndarray], tuple[str, ...]]:
    if isinstance(M, WeightedDocTermMatrix):
        return sp.csr_matrix(M.matrix, dtype=np.float64), M.terms
    if sp.issparse(M):
        return sp.csr_matrix(M, dtype=np.float64), ()
    return np.asarray(M, dtype=np.float64), ()


def _squared_norm(M) -> float:
    data = M.data if sp.issparse(M) else M.ravel()
    return float(np.dot(data, data))


def _mean(M) -> float:
    return float(M.sum()) / (M.shape[0] * M.shape[1])


def _nndsvd(M, K: int, seed: int, fill_mean: bool, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Nonnegative double SVD of the leading K singular triplets."""
    U, S, Vt = randomized_svd(M, K, random_state=seed)
    H = np.zeros((M.shape[0], K))
    W = np.zeros((K, M.shape[1]))
    H[:, 0] = np.sqrt(S[0]) * np.abs(U[:, 0])
    W[0, :] = np.sqrt(S[0]) * np.abs(Vt[0, :])
    for k in range(1, K):
        x, y = U[:, k], Vt[k, :]
        x_pos, y_pos = np.maximum(x, 0), np.maximum(y, 0)
        x_neg, y_neg = np.abs(np.minimum(x, 0)), np.abs(np.minimum(y, 0))
        pos_mass = np.linalg.norm(x_pos) * np.linalg.norm(y_pos)
        neg_mass = np.linalg.norm(x_neg) * np.linalg.norm(y_neg)
        if pos_mass > neg_mass:
            u, v, sigma = x_pos, y_pos, pos_mass
        else:
            u, v, sigma = x_neg, y_neg, neg_mass
        if sigma == 0:
            continue
        scale = np.sqrt(S[k] * sigma)
        H[:, k] = scale * u / np.linalg.norm(u)
        W[k, :] = scale * v / np.linalg.norm(v)
    H[H < eps] = 0
    W[W < eps] = 0
    if fill_mean:
        mean = _mean(M)
        H[H == 0] = mean
        W[W == 0] = mean
    return H, W


def _random_init(M, K: int, seed: int, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Seeded topic-word factor; the document factor is its nonnegative projection, so row order is irrelevant."""
    rng = np.random.default_rng(seed)
    W = np.abs(rng.standard_normal((K, M.shape[1]))) * np.sqrt(_mean(M) / K)
    W = np.maximum(W, eps)
    H = np.asarray(M @ W.T) / np.sum(W * W, axis=1)
    return np.maximum(H, eps), W


def _initialize(M, K: int, opts: NMFOptions, H0, W0) -> tuple[np.ndarray, np.ndarray]:
    init = InitMethod(opts.init)
    if init is InitMethod.CUSTOM:
        if H0 is None or W0 is None:
            raise ConfigError("init 'custom' needs both H0 and W0")
        H, W = np.array(H0, dtype=np.float64), np.array(W0, dtype=np.float64)
        if H.shape != (M.shape[0], K) or W.shape != (K, M.shape[1]):
            raise ConfigError(f"custom factors {H.shape}, {W.shape} do not fit {M.shape} with K={K}")
        if H.min() < 0 or W.min() < 0:
            raise ConfigError("custom factors must be nonnegative")
    elif init is InitMethod.RANDOM:
        H, W = _random_init(M, K, opts.seed, opts.epsilon)
    else:
        H, W = _nndsvd(M, K, opts.seed, init is InitMethod.NNDSVDA, opts.epsilon)
    return np.maximum(H, opts.epsilon), np.maximum(W, opts.epsilon)


def _loss(norm_m: float, H: np.ndarray, W: np.ndarray, MWt: np.ndarray) -> float:
    """||M - HW||_F^2 expanded so M is never densified."""
    cross = float(np.sum(H * MWt))
    quad = float(np.sum((H.T @ H) * (W @ W.T)))
    return max(norm_m - 2.0 * cross + quad, 0.0)


def nmf(
    M: MatrixLike,
    K: int,
    opts: Optional[NMFOptions] = None,
    H0: Optional[np.ndarray] = None,
    W0: Optional[np.ndarray] = None,
) -> TopicModel:
    """
    Factorize a nonnegative matrix by multiplicative updates.

    Each iteration updates W, then H; factors never drop below
    `opts.epsilon`. The loss is recorded after initialization and after every
    iteration; iteration stops when its relative improvement falls below
    `opts.tol` or after `opts.max_iter` iterations.

    Args:
        M: |D| x |V| nonnegative matrix
        K: Number of topics, 1 <= K <= min(|D|, |V|)
        opts: Solver options
        H0: Initial document-topic factor for init "custom"
        W0: Initial topic-word factor for init "custom"

    Returns:
        The fitted model

    Raises:
        ConfigError: If K is out of range
        NumericalError: If M is negative, all zero, or the iteration diverges
    """
    opts = opts or NMFOptions()
    M, terms = _as_matrix(M)
    n_docs, n_terms = M.shape
    if not 1 <= K <= min(n_docs, n_terms):
        raise ConfigError(f"K={K} outside [1, {min(n_docs, n_terms)}] for a {n_docs}x{n_terms} matrix")
    data = M.data if sp.issparse(M) else M
    if not np.all(np.isfinite(data)) or (data.size and data.min() < 0):
        raise NumericalError("NMF input must be finite and nonnegative")
    norm_m = _squared_norm(M)
    if norm_m == 0.0:
        raise NumericalError("NMF input is all zero")

    H, W = _initialize(M, K, opts, H0, W0)
    eps = opts.epsilon
    trace = [_loss(norm_m, H, W, np.asarray(M @ W.T))]
    n_iter = 0
    for n_iter in range(1, opts.max_iter + 1):
        HtM = np.asarray(M.T @ H).T
        W = np.maximum(W * HtM / ((H.T @ H) @ W), eps)
        MWt = np.asarray(M @ W.T)
        H = np.maximum(H * MWt / (H @ (W @ W.T)), eps)
        loss = _loss(norm_m, H, W, MWt)
        if not np.isfinite(loss):
            raise NumericalError(f"NMF loss became non-finite at iteration {n_iter}")
        previous = trace[-1]
        trace.append(loss)
        if previous == 0.0 or (previous - loss) / previous < opts.tol:
            break
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(H))):
        raise NumericalError("NMF factors contain non-finite values")
    logger.info("NMF K=%d: %d iterations, loss %.6g -> %.6g", K, n_iter, trace[0], trace[-1])
    return TopicModel(
        W=W,
        H=H,
        loss_trace=tuple(trace),
        seed=opts.seed,
        n_iter=n_iter,
        terms=terms,
        init=InitMethod(opts.init).value,
    )


def top_words(model: TopicModel, T: int, terms: Optional[tuple[str, ...]] = None) -> list[TopicSummary]:
    """
    The T highest-weighted terms of every topic.

    Ties are broken by lexicographic term order.

    Args:
        model: Fitted model
        T: Words per topic (fewer when |V| < T)
        terms: Vocabulary, defaulting to the model's

    Returns:
        One summary per topic
    """
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    terms = tuple(terms or model.terms)
    if len(terms) != model.W.shape[1]:
        raise ConfigError(f"{len(terms)} terms for a topic-word factor with {model.W.shape[1]} columns")
    rank = np.empty(len(terms), dtype=np.int64)
    rank[np.argsort(np.array(terms), kind="stable")] = np.arange(len(terms))
    summaries = []
    for k, row in enumerate(model.W):
        order = np.lexsort((rank, -row))[:T]
        summaries.append(TopicSummary(
            topic_id=k,
            top_terms=[TermWeight(term=terms[i], weight=float(row[i])) for i in order],
        ))
    return summaries


def save_model(model: TopicModel, directory: Union[str, Path]) -> Path:
    """
    Dump the factors as dense binaries next to a JSON manifest.

    Args:
        model: Fitted model
        directory: Target directory, created if needed

    Returns:
        The directory
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_dense_binary(model.W, directory / "W.bin")
    write_dense_binary(model.H, directory / "H.bin")
    (directory / "terms.txt").write_text("".join(f"{t}\n" for t in model.terms), encoding="utf-8")
    manifest = {
        "K": model.K,
        "seed": model.seed,
        "init": model.init,
        "iterations": model.n_iter,
        "final_loss": model.final_loss,
        "loss_trace": list(model.loss_trace),
        "n_documents": int(model.H.shape[0]),
        "n_terms": int(model.W.shape[1]),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return directory


def load_model(directory: Union[str, Path]) -> TopicModel:
    """Read a model written by `save_model`."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        terms_path = directory / "terms.txt"
        terms = tuple(terms_path.read_text(encoding="utf-8").splitlines()) if terms_path.exists() else ()
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model manifest: {exc}", path=str(directory)) from exc
    W = read_dense_binary(directory / "W.bin")
    H = read_dense_binary(directory / "H.bin")
    if W.shape[0] != manifest["K"] or H.shape != (manifest["n_documents"], manifest["K"]):
        raise DataError("factor shapes disagree with the manifest", path=str(directory))
    return TopicModel(
        W=W,
        H=H,
        loss_trace=tuple(manifest["loss_trace"]),
        seed=manifest["seed"],
        n_iter=manifest["iterations"],
        terms=terms,
        init=manifest.get("init", InitMethod.NNDSVDA.value),
    )
