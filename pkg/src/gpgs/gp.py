"""Exact Gaussian-process regression over pixel-to-point data.

Six independent single-output GPs map normalized pixel coordinates to the
six target channels (x, y, z, r, g, b). Kernels are Matérn (closed forms
for half-integer smoothness) or RBF; hyperparameters live in log space and
are fitted by plain gradient descent on the negative log marginal
likelihood plus an L2 penalty on the log parameters. The linear algebra
follows Algorithm 2.1 of Rasmussen & Williams, "Gaussian Processes for
Machine Learning" (Cholesky factorisation, no explicit inverses in the
prediction path).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf, dpotri
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, EmptyDataset, NotPositiveDefinite
from .sfm_io import PixelToPointDataset

MATERN = "matern"
RBF = "rbf"

SUPPORTED_NU = (0.5, 1.5, 2.5)

# Initial log-hyperparameters; inputs live in [0,1]^2 so a 0.1 lengthscale
# is a sensible starting neighbourhood.
INIT_LOG_SIGNAL_VAR = 0.0
INIT_LOG_LENGTHSCALE = math.log(0.1)
INIT_LOG_NOISE_VAR = math.log(1e-4)

NOISE_VAR_FLOOR = 1e-10
MAX_JITTER = 1e-2

# Gradient updates are projected into these log-parameter bounds so every
# exp() stays finite and the Gram matrix remains computable even when the
# plain-gradient-descent dynamics try to run a parameter off to infinity.
LOG_PARAM_BOUND = 20.0


# ---------------------------------------------------------------------------
# Configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelConfig:
    family: str = MATERN
    nu: float | None = 0.5
    log_signal_var: float = INIT_LOG_SIGNAL_VAR
    log_lengthscale: float = INIT_LOG_LENGTHSCALE
    log_noise_var: float = INIT_LOG_NOISE_VAR

    def __post_init__(self):
        if self.family not in (MATERN, RBF):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == MATERN and self.nu not in SUPPORTED_NU:
            raise ValueError(f"nu must be one of {SUPPORTED_NU}, got {self.nu}")
        for name in ("log_signal_var", "log_lengthscale", "log_noise_var"):
            value = getattr(self, name)
            if not (np.isfinite(value) and np.isfinite(np.exp(value))):
                raise ValueError(f"{name}={value} gives a non-finite parameter")

    @property
    def signal_var(self) -> float:
        return math.exp(self.log_signal_var)

    @property
    def lengthscale(self) -> float:
        return math.exp(self.log_lengthscale)

    @property
    def noise_var(self) -> float:
        return math.exp(self.log_noise_var)

    def log_params(self) -> np.ndarray:
        return np.array([self.log_signal_var, self.log_lengthscale, self.log_noise_var])

    def with_log_params(self, theta) -> "KernelConfig":
        return replace(
            self,
            log_signal_var=float(theta[0]),
            log_lengthscale=float(theta[1]),
            log_noise_var=float(theta[2]),
        )


def default_kernel(family: str = MATERN, nu: float | None = 0.5) -> KernelConfig:
    """Kernel template at the standard initial hyperparameters."""
    return KernelConfig(family=family, nu=nu if family == MATERN else None)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1000
    learning_rate: float = 0.01
    l2_weight: float = 1e-6
    jitter: float = 1e-8
    max_train_points: int | None = 2000
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.l2_weight < 0:
            raise ValueError(f"l2_weight must be >= 0, got {self.l2_weight}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")


@dataclass(frozen=True)
class OutputNormalizer:
    """Per-output standardisation of the six target channels.

    The stored means double as the constant GP mean functions: each output
    is modelled as a zero-mean GP on standardized targets, so the
    denormalized posterior mean reverts to the training-target mean far
    from data.
    """

    mean: np.ndarray  # (6,)
    std: np.ndarray   # (6,), floored so every entry is strictly positive

    @classmethod
    def fit(cls, targets: np.ndarray) -> "OutputNormalizer":
        mean = targets.mean(axis=0)
        std = np.maximum(targets.std(axis=0), 1e-12)
        return cls(mean, std)

    @classmethod
    def identity(cls, k: int = 6) -> "OutputNormalizer":
        return cls(np.zeros(k), np.ones(k))

    def normalize(self, targets: np.ndarray) -> np.ndarray:
        return (targets - self.mean) / self.std

    def denormalize_mean(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def denormalize_var(self, var: np.ndarray) -> np.ndarray:
        return var * self.std**2


# ---------------------------------------------------------------------------
# Kernel evaluation
# ---------------------------------------------------------------------------

def _correlation(family: str, nu: float | None, t: np.ndarray) -> np.ndarray:
    """Unit-variance kernel profile R(t) at scaled distance t = ||a-b|| / l."""
    if family == RBF:
        return np.exp(-0.5 * t * t)
    if nu == 0.5:
        return np.exp(-t)
    if nu == 1.5:
        s = math.sqrt(3.0) * t
        return (1.0 + s) * np.exp(-s)
    if nu == 2.5:
        s = math.sqrt(5.0) * t
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    raise ValueError(f"unsupported kernel ({family}, nu={nu})")


def _correlation_dlog_ell(family: str, nu: float | None, t: np.ndarray) -> np.ndarray:
    """dR/d(log l) = -t R'(t), elementwise over scaled distances."""
    if family == RBF:
        return t * t * np.exp(-0.5 * t * t)
    if nu == 0.5:
        return t * np.exp(-t)
    if nu == 1.5:
        return 3.0 * t * t * np.exp(-math.sqrt(3.0) * t)
    if nu == 2.5:
        s = math.sqrt(5.0) * t
        return (5.0 / 3.0) * t * t * (1.0 + s) * np.exp(-s)
    raise ValueError(f"unsupported kernel ({family}, nu={nu})")


def kernel_value(cfg: KernelConfig, a, b) -> float:
    """Covariance between two input vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"input shapes differ: {a.shape} vs {b.shape}")
    t = np.linalg.norm(a - b) / cfg.lengthscale
    return float(cfg.signal_var * _correlation(cfg.family, cfg.nu, np.asarray(t)))


def cross_covariance(cfg: KernelConfig, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Noise-free kernel matrix k(A, B), shape (len(A), len(B))."""
    t = cdist(A, B) / cfg.lengthscale
    return cfg.signal_var * _correlation(cfg.family, cfg.nu, t)


def gram_matrix(cfg: KernelConfig, X: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """k(X, X) with noise variance and jitter added to the diagonal."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = cross_covariance(cfg, X, X)
    K[np.diag_indices_from(K)] += cfg.noise_var + jitter
    return K


# ---------------------------------------------------------------------------
# Cholesky with jitter escalation
# ---------------------------------------------------------------------------

def _factorize(K_noise: np.ndarray, jitter: float) -> tuple[np.ndarray, float]:
    """Lower-Cholesky of K_noise + jitter*I, escalating jitter on failure.

    Escalation multiplies by 10 (starting from 1e-10 when the configured
    jitter is zero) and gives up past MAX_JITTER.
    """
    j = jitter
    while True:
        try:
            shifted = K_noise.copy()
            if j:
                shifted[np.diag_indices_from(shifted)] += j
            return np.linalg.cholesky(shifted), j
        except np.linalg.LinAlgError:
            nxt = 1e-10 if j == 0.0 else j * 10.0
            if nxt > MAX_JITTER:
                raise NotPositiveDefinite("Gram matrix is not positive definite", j)
            j = nxt


# ---------------------------------------------------------------------------
# Negative log marginal likelihood and its gradient
# ---------------------------------------------------------------------------

class _Workspace:
    """Preallocated n x n scratch buffers for the training loop.

    The gradient-descent loop touches several full matrices per iteration;
    reusing Fortran-ordered buffers keeps LAPACK in-place and avoids
    allocation churn. `mask` weights the strict lower triangle by 2 and the
    diagonal by 1 so that symmetric trace sums can be taken directly from
    the lower-triangular dpotri output.
    """

    def __init__(self, D: np.ndarray):
        n = D.shape[0]
        self.n = n
        self.D = np.asfortranarray(D)
        self.S = np.empty((n, n), order="F")   # scaled distances
        self.E = np.empty((n, n), order="F")   # exponential factor
        self.K = np.empty((n, n), order="F")   # correlation -> Gram -> Cholesky -> inverse
        self.dR = np.empty((n, n), order="F")  # dR/d(log l)
        mask = np.full((n, n), 2.0, order="F")
        mask[np.triu_indices(n)] = 0.0
        np.einsum("ii->i", mask)[:] = 1.0
        self.mask = mask


_SCALED_FACTOR = {0.5: 1.0, 1.5: math.sqrt(3.0), 2.5: math.sqrt(5.0)}


def _fill_correlation(family, nu, ell, ws: _Workspace, want_grad: bool) -> None:
    """Fill ws.K with R and (optionally) ws.dR with dR/d(log l).

    Works on the scaled distance s = c * ||a-b|| / l, where c folds the
    sqrt(2 nu) factor of the half-integer Matérn closed forms.
    """
    S, E, K, dR = ws.S, ws.E, ws.K, ws.dR
    if family == RBF:
        np.multiply(ws.D, 1.0 / ell, out=S)
        np.multiply(S, S, out=E)
        np.multiply(E, -0.5, out=E)
        np.exp(E, out=E)  # E = exp(-t^2/2) = R
        np.copyto(K, E)
        if want_grad:
            np.multiply(S, S, out=dR)
            np.multiply(dR, E, out=dR)  # dR = t^2 exp(-t^2/2)
        return
    np.multiply(ws.D, _SCALED_FACTOR[nu] / ell, out=S)
    np.negative(S, out=E)
    np.exp(E, out=E)  # E = exp(-s)
    if nu == 0.5:
        np.copyto(K, E)
        if want_grad:
            np.multiply(S, E, out=dR)  # dR = t exp(-t)
    elif nu == 1.5:
        np.add(S, 1.0, out=K)
        np.multiply(K, E, out=K)  # R = (1+s) exp(-s)
        if want_grad:
            np.multiply(S, S, out=dR)
            np.multiply(dR, E, out=dR)  # dR = 3 t^2 exp(-s), s^2 = 3 t^2
    else:  # nu == 2.5
        np.multiply(S, S, out=K)
        np.multiply(K, 1.0 / 3.0, out=K)
        np.add(K, S, out=K)
        np.add(K, 1.0, out=K)
        np.multiply(K, E, out=K)  # R = (1+s+s^2/3) exp(-s)
        if want_grad:
            np.multiply(S, S, out=dR)
            np.multiply(dR, 1.0 / 3.0, out=dR)
            np.add(S, 1.0, out=S)
            np.multiply(dR, S, out=dR)
            np.multiply(dR, E, out=dR)  # dR = (s^2/3)(1+s) exp(-s)


def _objective(theta, family, nu, ws: _Workspace, y, l2_weight, jitter, want_grad):
    """Loss (and gradient) at theta = (log sf2, log l, log sn2).

    loss = 0.5 y^T K^-1 y + 0.5 log|K| + n/2 log(2 pi) + l2 |theta|^2.
    The gradient uses the trace identity
    dL/dtheta_j = 0.5 tr((K^-1 - aa^T) dK/dtheta_j) + 2 l2 theta_j,
    with tr(K^-1 R) folded through tr(K^-1 K) = n so that only the
    lengthscale derivative needs an explicit elementwise pass.
    """
    n = ws.n
    sf2 = math.exp(theta[0])
    ell = math.exp(theta[1])
    sn2 = math.exp(theta[2])

    j = jitter
    while True:
        _fill_correlation(family, nu, ell, ws, want_grad)
        np.multiply(ws.K, sf2, out=ws.K)
        np.einsum("ii->i", ws.K)[:] += sn2 + j
        L, info = dpotrf(ws.K, lower=1, clean=0, overwrite_a=1)
        if info == 0:
            break
        j = 1e-10 if j == 0.0 else j * 10.0
        if j > MAX_JITTER:
            raise NotPositiveDefinite("Gram matrix is not positive definite", j / 10.0)

    diag_L = np.einsum("ii->i", L)
    logdet_half = float(np.sum(np.log(diag_L)))
    w = solve_triangular(L, y, lower=True, check_finite=False)
    alpha = solve_triangular(L, w, lower=True, trans="T", check_finite=False)
    y_alpha = float(y @ alpha)
    loss = (
        0.5 * y_alpha
        + logdet_half
        + 0.5 * n * math.log(2.0 * math.pi)
        + l2_weight * float(theta @ theta)
    )
    if not want_grad:
        return loss, None

    inv, info = dpotri(L, lower=1, overwrite_c=1)
    if info != 0:
        raise NotPositiveDefinite("dpotri failed on the Cholesky factor", j)
    np.multiply(inv, ws.mask, out=inv)  # lower triangle now weighted for symmetric sums
    tr_kinv = float(np.einsum("ii->", inv))
    tr_kinv_dr = float(np.einsum("ij,ij->", inv, ws.dR))
    alpha_dr_alpha = float(alpha @ (ws.dR @ alpha))
    alpha_sq = float(alpha @ alpha)
    c_diag = sn2 + j

    grad = np.array(
        [
            0.5 * ((n - c_diag * tr_kinv) - (y_alpha - c_diag * alpha_sq)),
            0.5 * sf2 * (tr_kinv_dr - alpha_dr_alpha),
            0.5 * sn2 * (tr_kinv - alpha_sq),
        ]
    )
    grad += 2.0 * l2_weight * np.asarray(theta)
    return loss, grad


def nll(cfg: KernelConfig, X, y, l2_weight: float = 0.0, jitter: float = 0.0) -> float:
    """Training loss for one output: NLL plus the L2 log-parameter penalty."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    ws = _Workspace(cdist(X, X))
    loss, _ = _objective(cfg.log_params(), cfg.family, cfg.nu, ws, y, l2_weight, jitter, False)
    return loss


def nll_gradient(
    cfg: KernelConfig, X, y, l2_weight: float = 0.0, jitter: float = 0.0
) -> np.ndarray:
    """Analytic gradient of nll over the three log-hyperparameters."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    ws = _Workspace(cdist(X, X))
    _, grad = _objective(cfg.log_params(), cfg.family, cfg.nu, ws, y, l2_weight, jitter, True)
    return grad


# ---------------------------------------------------------------------------
# Trained model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainedGP:
    """Six conditioned single-output GPs sharing one set of inputs.

    Immutable after construction; posterior evaluation is a pure read and
    may run concurrently from many threads.
    """

    configs: tuple[KernelConfig, ...]      # one per output
    normalizer: OutputNormalizer
    X: np.ndarray                          # (n, d) training inputs
    Z: np.ndarray                          # (n, 6) normalized targets
    factors: tuple[np.ndarray, ...]        # per-output lower Cholesky of K + sn2 I (+ jitter)
    alphas: tuple[np.ndarray, ...]         # per-output (K + sn2 I)^-1 z
    jitters: tuple[float, ...]             # jitter actually used per output
    width: int
    height: int
    loss_curves: tuple[np.ndarray, ...] = ()

    @property
    def n_outputs(self) -> int:
        return len(self.configs)

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    @classmethod
    def fit(
        cls,
        X: np.ndarray,
        Z: np.ndarray,
        configs,
        normalizer: OutputNormalizer,
        width: int,
        height: int,
        jitter=0.0,
        loss_curves=(),
    ) -> "TrainedGP":
        """Condition the six GPs on (X, Z) at fixed hyperparameters.

        Z is already normalized. jitter may be a scalar or a per-output
        sequence; each output records the value escalation settled on.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[0] != X.shape[0]:
            raise DimensionMismatch(f"targets {Z.shape} do not match inputs {X.shape}")
        configs = tuple(configs)
        if len(configs) != Z.shape[1]:
            raise DimensionMismatch(f"{len(configs)} kernel configs for {Z.shape[1]} outputs")
        jitters_in = (
            tuple(jitter) if np.ndim(jitter) else (float(jitter),) * len(configs)
        )
        D = cdist(X, X)
        factors, alphas, jitters = [], [], []
        for j_out, (cfg, j0) in enumerate(zip(configs, jitters_in)):
            K = cfg.signal_var * _correlation(cfg.family, cfg.nu, D / cfg.lengthscale)
            K[np.diag_indices_from(K)] += cfg.noise_var
            L, j = _factorize(K, j0)
            factors.append(L)
            alphas.append(
                solve_triangular(L.T, solve_triangular(L, Z[:, j_out], lower=True), lower=False)
            )
            jitters.append(j)
        return cls(
            configs,
            normalizer,
            X,
            Z,
            tuple(factors),
            tuple(alphas),
            tuple(jitters),
            width,
            height,
            tuple(loss_curves),
        )


@dataclass(frozen=True)
class PosteriorBatch:
    mean_norm: np.ndarray  # (m, 6) in standardized target space
    var_norm: np.ndarray   # (m, 6), clamped at zero
    mean: np.ndarray       # (m, 6) denormalized
    var: np.ndarray        # (m, 6) denormalized (scaled by per-output std^2)


def posterior(model: TrainedGP, Q) -> PosteriorBatch:
    """Predictive mean and variance at query inputs Q (m, d).

    mu = k*^T alpha and var = k(q,q) - ||L^-1 k*||^2 per output, evaluated
    through the cached Cholesky factors.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[1] != model.input_dim:
        raise DimensionMismatch(
            f"query dimension {Q.shape[1]} != training dimension {model.input_dim}"
        )
    m = Q.shape[0]
    k = model.n_outputs
    mean_norm = np.zeros((m, k))
    var_norm = np.zeros((m, k))
    if m:
        for j, (cfg, L, alpha) in enumerate(zip(model.configs, model.factors, model.alphas)):
            Ks = cross_covariance(cfg, model.X, Q)  # (n, m)
            mean_norm[:, j] = Ks.T @ alpha
            V = solve_triangular(L, Ks, lower=True)
            var_norm[:, j] = np.maximum(cfg.signal_var - np.sum(V * V, axis=0), 0.0)
    mean = model.normalizer.denormalize_mean(mean_norm)
    var = model.normalizer.denormalize_var(var_norm)
    return PosteriorBatch(mean_norm, var_norm, mean, var)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train_gp(ds: PixelToPointDataset, kernel: KernelConfig, cfg: TrainConfig) -> TrainedGP:
    """Fit six GPs to a pixel-to-point dataset by gradient descent.

    Targets are standardized per output, then each output runs
    cfg.iterations updates theta <- theta - lr * grad in log-parameter
    space. The loss curve records the objective entering each iteration.
    Oversized datasets are first reduced to a seeded uniform subsample of
    max_train_points.
    """
    if len(ds) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    X = ds.input_matrix()
    Y = ds.target_matrix()
    n = X.shape[0]
    if cfg.max_train_points is not None and n > cfg.max_train_points:
        rng = np.random.default_rng(cfg.seed)
        keep = np.sort(rng.choice(n, size=cfg.max_train_points, replace=False))
        X, Y = X[keep], Y[keep]

    normalizer = OutputNormalizer.fit(Y)
    Z = normalizer.normalize(Y)
    ws = _Workspace(cdist(X, X))
    lower = np.array([-LOG_PARAM_BOUND, -LOG_PARAM_BOUND, math.log(NOISE_VAR_FLOOR)])
    upper = np.full(3, LOG_PARAM_BOUND)

    trained_configs = []
    curves = []
    for j in range(Z.shape[1]):
        theta = kernel.log_params()
        z = np.ascontiguousarray(Z[:, j])
        curve = np.empty(cfg.iterations)
        for it in range(cfg.iterations):
            loss, grad = _objective(
                theta, kernel.family, kernel.nu, ws, z, cfg.l2_weight, cfg.jitter, True
            )
            curve[it] = loss
            theta = np.clip(theta - cfg.learning_rate * grad, lower, upper)
        trained_configs.append(kernel.with_log_params(theta))
        curves.append(curve)

    return TrainedGP.fit(
        X,
        Z,
        trained_configs,
        normalizer,
        ds.width,
        ds.height,
        jitter=cfg.jitter,
        loss_curves=curves,
    )
