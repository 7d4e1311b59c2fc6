"""ICA decomposition: PCA whitening, FastICA, extended Infomax, activations,
and artifact-removal back-projection.

Both fitters work in whitened space and are deterministic for a fixed seed.
The composite unmixing (unmixing @ whitener) maps centered sensor data to
unit-variance component activations; the mixing matrix maps activations back.
"""

from __future__ import annotations

import base64
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ParameterError, RankError, ShapeError
from .recording import Recording
from .util import canonical_json

EIGENVALUE_FLOOR = 1e-10  # relative to the largest eigenvalue
MAX_COMPONENTS = 40


@dataclass
class IcaModel:
    whitener: np.ndarray        # (k, n_channels)
    dewhitener: np.ndarray      # (n_channels, k)
    unmixing: np.ndarray        # (k, k), acts in whitened space
    channel_means: np.ndarray   # (n_channels,)
    method: str                 # "fastica" | "extended_infomax"
    seed: int
    n_iterations_used: int
    converged: bool

    @property
    def n_components(self) -> int:
        return self.unmixing.shape[0]

    @property
    def n_channels(self) -> int:
        return self.whitener.shape[1]

    @property
    def composite_unmixing(self) -> np.ndarray:
        """(k, n_channels): centered sensor data -> activations."""
        return self.unmixing @ self.whitener

    @property
    def mixing(self) -> np.ndarray:
        """(n_channels, k): activations -> centered sensor data."""
        return self.dewhitener @ np.linalg.inv(self.unmixing)


@dataclass
class Activations:
    data: np.ndarray  # (k, n_samples)
    component_indices: list[int]

    @property
    def n_components(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


def whiten(
    data: np.ndarray, n_components: int | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """PCA-whiten centered channel-major data.

    Returns (whitened, whitener, dewhitener) where whitened has identity
    covariance (1/n normalization) on the retained subspace. Raises RankError
    when the covariance cannot support the requested component count.
    """
    data = np.asarray(data, dtype=np.float64)
    n_channels, n_samples = data.shape
    if n_samples <= n_channels:
        raise ParameterError(
            f"need more samples than channels, got {n_samples} x {n_channels}"
        )
    row_means = data.mean(axis=1)
    if np.max(np.abs(row_means)) > 1e-6 * max(1.0, float(np.max(np.abs(data)))):
        data = data - row_means[:, None]

    cov = (data @ data.T) / n_samples
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    floor = EIGENVALUE_FLOOR * max(eigvals[0], 0.0)
    rank = int(np.sum(eigvals > floor))
    if rank == 0:
        raise RankError("covariance has no usable eigenvalues")
    if n_components is None:
        n_components = min(rank, MAX_COMPONENTS)
    if n_components > rank:
        raise RankError(
            f"requested {n_components} components but covariance rank is {rank}"
        )
    lam = eigvals[:n_components]
    vec = eigvecs[:, :n_components]
    whitener = (vec / np.sqrt(lam)).T          # (k, n_channels)
    dewhitener = vec * np.sqrt(lam)            # (n_channels, k)
    return whitener @ data, whitener, dewhitener


def _random_orthogonal(k: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((k, k))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def _finalize_model(
    rec: Recording,
    whitener: np.ndarray,
    dewhitener: np.ndarray,
    rotation: np.ndarray,
    whitened: np.ndarray,
    method: str,
    seed: int,
    n_iter: int,
    converged: bool,
) -> IcaModel:
    # Fix the scale ambiguity: activations get unit variance on the fit data.
    acts = rotation @ whitened
    scale = acts.std(axis=1)
    scale[scale == 0] = 1.0
    return IcaModel(
        whitener=whitener,
        dewhitener=dewhitener,
        unmixing=rotation / scale[:, None],
        channel_means=rec.data.mean(axis=1),
        method=method,
        seed=int(seed),
        n_iterations_used=int(n_iter),
        converged=bool(converged),
    )


def _check_sample_budget(rec: Recording) -> None:
    if rec.n_samples < 20 * rec.n_channels:
        warnings.warn(
            f"only {rec.n_samples} samples for {rec.n_channels} channels; "
            f"ICA estimates are unreliable below 20 samples per channel",
            stacklevel=3,
        )


def fit_fastica(
    rec: Recording,
    n_components: int | None = None,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-6,
) -> IcaModel:
    """Symmetric FastICA with the tanh contrast.

    Non-convergence is reported through the model's converged flag rather
    than raised; callers decide whether that is acceptable.
    """
    if n_components is not None and n_components > rec.n_channels:
        raise ParameterError(
            f"n_components {n_components} exceeds channel count {rec.n_channels}"
        )
    _check_sample_budget(rec)
    centered = rec.data - rec.data.mean(axis=1, keepdims=True)
    whitened, whitener, dewhitener = whiten(centered, n_components)
    k, n = whitened.shape

    rng = np.random.default_rng(seed)
    w = _random_orthogonal(k, rng)
    w = _sym_decorrelate(w)

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u = w @ whitened
        g = np.tanh(u)
        g_prime = 1.0 - g**2
        w_new = (g @ whitened.T) / n - np.diag(g_prime.mean(axis=1)) @ w
        w_new = _sym_decorrelate(w_new)
        # Angle change per row: |cos| of the update, 1 means no movement.
        change = float(np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0)))
        w = w_new
        if change < tol:
            converged = True
            break

    return _finalize_model(
        rec, whitener, dewhitener, w, whitened, "fastica", seed, it, converged
    )


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    """Symmetric decorrelation: (W W^T)^{-1/2} W."""
    vals, vecs = np.linalg.eigh(w @ w.T)
    vals = np.maximum(vals, 1e-12)
    return (vecs / np.sqrt(vals)) @ vecs.T @ w


# Extended-Infomax constants.
INFOMAX_ANNEAL_STEP = 0.9
INFOMAX_ANNEAL_DEG = 60.0
INFOMAX_KURT_WINDOW = 3000
INFOMAX_WCHANGE_TOL = 1e-6
INFOMAX_BLOWUP_NORM = 1e9
INFOMAX_MAX_RESTARTS = 3
INFOMAX_SIGN_BIAS = 0.02


def fit_extended_infomax(
    rec: Recording,
    n_components: int | None = None,
    seed: int = 0,
    max_iter: int = 200,
    lrate: float | None = None,
) -> IcaModel:
    """Extended Infomax: natural-gradient updates with a kurtosis-sign switch.

    The per-block update is dW = lrate * (B*I - K tanh(u) u^T - u u^T) W with
    K the diagonal sign matrix from running kurtosis estimates. Kurtosis is
    re-estimated every block through an exponential running window with a
    memory of about 3000 samples. The learning rate anneals by 0.9 whenever
    successive weight changes oscillate by more than 60 degrees. Diverging
    weights (norm above 1e9) restart the fit at half the learning rate, at
    most three times, before DivergenceError is raised.
    """
    if n_components is not None and n_components > rec.n_channels:
        raise ParameterError(
            f"n_components {n_components} exceeds channel count {rec.n_channels}"
        )
    _check_sample_budget(rec)
    centered = rec.data - rec.data.mean(axis=1, keepdims=True)
    whitened, whitener, dewhitener = whiten(centered, n_components)
    k, n = whitened.shape

    if lrate is None:
        lrate = 0.01 / math.log(max(rec.n_channels, 2))
    block = max(8, int(math.floor(math.sqrt(n / 3.0))))
    kurt_momentum = max(0.0, 1.0 - block / INFOMAX_KURT_WINDOW)

    for attempt in range(INFOMAX_MAX_RESTARTS + 1):
        rng = np.random.default_rng(seed)
        w = _random_orthogonal(k, rng)
        rate = lrate / (2.0**attempt)
        try:
            w, n_iter, converged = _infomax_core(
                whitened, w, rate, block, kurt_momentum, max_iter, rng
            )
            return _finalize_model(
                rec, whitener, dewhitener, w, whitened,
                "extended_infomax", seed, n_iter, converged,
            )
        except _Blowup:
            continue
    raise DivergenceError(
        f"extended Infomax diverged after {INFOMAX_MAX_RESTARTS} learning-rate restarts"
    )


class _Blowup(Exception):
    pass


def _infomax_core(
    z: np.ndarray,
    w: np.ndarray,
    lrate: float,
    block: int,
    kurt_momentum: float,
    max_iter: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int, bool]:
    k, n = z.shape
    eye_b = block * np.eye(k)
    kurt_run = np.zeros(k)
    signs = np.ones(k)
    old_w = w.copy()
    old_delta = None
    old_change = 0.0
    converged = False
    step = 0

    for step in range(1, max_iter + 1):
        perm = rng.permutation(n)
        last = (n // block) * block
        for t in range(0, last, block):
            u = w @ z[:, perm[t : t + block]]        # (k, block)
            y = np.tanh(u)
            grad = eye_b - (signs[:, None] * y) @ u.T - u @ u.T
            w = w + lrate * (grad @ w)
            if not np.isfinite(w).all() or np.linalg.norm(w) > INFOMAX_BLOWUP_NORM:
                raise _Blowup()

            # Running kurtosis of the block activations drives the sign switch.
            m2 = np.mean(u**2, axis=1)
            m4 = np.mean(u**4, axis=1)
            kurt_block = m4 / np.maximum(m2**2, 1e-12) - 3.0
            kurt_run = kurt_momentum * kurt_run + (1.0 - kurt_momentum) * kurt_block
            signs = np.sign(kurt_run + INFOMAX_SIGN_BIAS)
            signs[signs == 0] = 1.0

        delta = (w - old_w).ravel()
        change = float(delta @ delta)
        if old_delta is not None and change > 0 and old_change > 0:
            cosang = float(delta @ old_delta) / math.sqrt(change * old_change)
            angle = math.degrees(math.acos(min(1.0, max(-1.0, cosang))))
            if angle > INFOMAX_ANNEAL_DEG:
                lrate *= INFOMAX_ANNEAL_STEP
        old_delta = delta
        old_change = change
        old_w = w.copy()
        if step > 2 and change < INFOMAX_WCHANGE_TOL:
            converged = True
            break

    return w, step, converged


def activations(model: IcaModel, rec: Recording) -> Activations:
    """Component activations S = unmixing @ whitener @ (X - means)."""
    if rec.n_channels != model.n_channels:
        raise ShapeError(
            f"recording has {rec.n_channels} channels, model expects {model.n_channels}"
        )
    centered = rec.data - model.channel_means[:, None]
    return Activations(
        data=model.composite_unmixing @ centered,
        component_indices=list(range(model.n_components)),
    )


def apply_rejection(model: IcaModel, rec: Recording, rejected) -> Recording:
    """Reconstruct the recording with the rejected components zeroed out.

    X_clean = mixing @ zero_rows(S, rejected) + means. Shape and metadata are
    preserved; meta records which components were removed.
    """
    rejected = sorted(set(int(i) for i in rejected))
    for idx in rejected:
        if idx < 0 or idx >= model.n_components:
            raise ParameterError(
                f"rejected component {idx} out of range [0, {model.n_components})"
            )
    acts = activations(model, rec)
    s = acts.data.copy()
    if rejected:
        s[rejected, :] = 0.0
    clean = model.mixing @ s + model.channel_means[:, None]
    return rec.with_data(
        clean, extra_meta={"rejected_components": ",".join(str(i) for i in rejected)}
    )


def amari_index(p: np.ndarray) -> float:
    """Permutation/scale-invariant distance of a square cross-talk matrix
    from a scaled permutation; 0 means perfect separation, 1 is worst case."""
    p = np.abs(np.asarray(p, dtype=np.float64))
    k = p.shape[0]
    if p.shape != (k, k):
        raise ParameterError(f"amari_index needs a square matrix, got {p.shape}")
    row = np.sum(p / np.maximum(p.max(axis=1, keepdims=True), 1e-300), axis=1) - 1.0
    col = np.sum(p / np.maximum(p.max(axis=0, keepdims=True), 1e-300), axis=0) - 1.0
    return float((row.sum() + col.sum()) / (2.0 * k * (k - 1)))


def _encode_matrix(m: np.ndarray) -> dict:
    m = np.ascontiguousarray(m, dtype="<f8")
    return {
        "shape": list(m.shape),
        "data_b64": base64.b64encode(m.tobytes()).decode("ascii"),
    }


def _decode_matrix(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data_b64"])
    return np.frombuffer(raw, dtype="<f8").reshape(doc["shape"]).copy()


def save_model(model: IcaModel, path) -> None:
    """Persist the model as a JSON sidecar (matrices base64 float64 LE)."""
    doc = {
        "whitener": _encode_matrix(model.whitener),
        "dewhitener": _encode_matrix(model.dewhitener),
        "unmixing": _encode_matrix(model.unmixing),
        "channel_means": _encode_matrix(model.channel_means),
        "method": model.method,
        "seed": model.seed,
        "n_iterations_used": model.n_iterations_used,
        "converged": model.converged,
    }
    with open(path, "w", encoding="ascii") as f:
        f.write(canonical_json(doc))


def load_model(path) -> IcaModel:
    with open(path, "r", encoding="ascii") as f:
        doc = json.load(f)
    return IcaModel(
        whitener=_decode_matrix(doc["whitener"]),
        dewhitener=_decode_matrix(doc["dewhitener"]),
        unmixing=_decode_matrix(doc["unmixing"]),
        channel_means=_decode_matrix(doc["channel_means"]).ravel(),
        method=doc["method"],
        seed=int(doc["seed"]),
        n_iterations_used=int(doc["n_iterations_used"]),
        converged=bool(doc["converged"]),
    )


def model_content_hash(model: IcaModel) -> str:
    from .util import sha256_hex

    parts = [
        np.ascontiguousarray(model.whitener, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.dewhitener, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.unmixing, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.channel_means, dtype="<f8").tobytes(),
        model.method.encode(),
        str(model.seed).encode(),
    ]
    return sha256_hex(b"".join(parts))
