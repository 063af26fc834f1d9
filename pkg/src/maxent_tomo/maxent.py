"""Maximum-entropy state reconstruction on a fixed observation level.

The reconstructed state is the canonical form
    rho(lambda) = exp(-sum_nu lambda_nu G_nu) / Z(lambda),
which is Hermitian, positive and unit trace for any real multipliers, so
positivity never needs to be imposed by hand.  The multipliers are fixed by
minimizing the deviation functional

    dF(lambda) = sum_nu w_nu (Tr[rho(lambda) G_nu] - g_nu)^2,

the weighted squared mismatch between the model means and the measured
means g_nu.  For data consistent with some density operator the minimum is
dF = 0 and rho is the maximum-entropy state reproducing the data; for
noisy data the minimum stays positive and rho is the closest canonical
state in the dF sense.

The gradient of dF needs the derivative of the matrix exponential, which
in the eigenbasis of A = sum lambda_nu G_nu is a Hadamard product with the
divided-difference kernel phi(x, y) = (e^x - e^y)/(x - y) (Daleckii-Krein).
Everything below works with a spectral shift so only decaying
exponentials are ever formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .hilbert import DensityOperator, EigError, _eigh, entropy
from .measurement import ObservableSet

__all__ = [
    "LagrangeVector",
    "CanonicalState",
    "FitReport",
    "MissingMeans",
    "canonical_state",
    "deviation",
    "deviation_gradient",
    "mean_jacobian",
    "fit",
]

CONVERGED_DF = 1e-14


class MissingMeans(ValueError):
    """The observable set has no (or incomplete) target means."""


@dataclass(frozen=True)
class LagrangeVector:
    """Multipliers in the standard layout: one per (rotation, bin) plus one
    for the number operator.  ``lambda_bins`` may be empty for sets without
    bin observables."""

    lambda_n: float
    lambda_bins: np.ndarray

    def __post_init__(self):
        bins = np.asarray(self.lambda_bins, dtype=np.float64)
        if bins.ndim != 2:
            raise ValueError("lambda_bins must be 2-D (rotations x bins)")
        if not (np.isfinite(self.lambda_n) and np.all(np.isfinite(bins))):
            raise ValueError("multipliers must be finite")
        object.__setattr__(self, "lambda_bins", bins)
        object.__setattr__(self, "lambda_n", float(self.lambda_n))

    @classmethod
    def zeros(cls, n_rotations: int, n_bins: int) -> "LagrangeVector":
        return cls(0.0, np.zeros((n_rotations, n_bins)))

    @classmethod
    def from_flat(cls, flat: np.ndarray, bin_shape: tuple) -> "LagrangeVector":
        flat = np.asarray(flat, dtype=np.float64)
        return cls(float(flat[-1]), flat[:-1].reshape(bin_shape))

    def flat(self) -> np.ndarray:
        """Bin multipliers row-major, then lambda_n, matching the operator
        ordering of sets built by build_observation_level."""
        return np.concatenate([self.lambda_bins.ravel(), [self.lambda_n]])


def _flat_lambdas(lambdas, observables: ObservableSet) -> np.ndarray:
    if isinstance(lambdas, LagrangeVector):
        vec = lambdas.flat()
    else:
        vec = np.asarray(lambdas, dtype=np.float64).ravel()
    if vec.size != observables.n_ops:
        raise ValueError(
            f"{vec.size} multipliers for {observables.n_ops} observables"
        )
    return vec


@dataclass(frozen=True)
class CanonicalState:
    """exp(-A)/Z for A = sum lambda_nu G_nu, with its spectral data cached."""

    rho: DensityOperator
    log_partition: float
    lambdas: object
    _eigvals: np.ndarray = field(repr=False, compare=False, default=None)
    _eigvecs: np.ndarray = field(repr=False, compare=False, default=None)


def canonical_state(lambdas, observables: ObservableSet) -> CanonicalState:
    """Build the canonical state for the given multipliers.

    The exponent is diagonalized and shifted by its lowest eigenvalue before
    exponentiation, so arbitrarily large multipliers only underflow harmlessly.
    log_partition is ln Tr exp(-A) for the unshifted A.
    """
    vec = _flat_lambdas(lambdas, observables)
    stack = observables.matrix_stack
    a = np.tensordot(vec, stack, axes=1)
    a = 0.5 * (a + a.conj().T)
    d, v = _eigh(a)
    q = np.exp(-(d - d[0]))  # eigh sorts ascending, d[0] is the minimum
    z_shift = q.sum()
    probs = q / z_shift
    rho = (v * probs) @ v.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return CanonicalState(
        rho=DensityOperator(rho),
        log_partition=float(logsumexp(-d)),
        lambdas=lambdas,
        _eigvals=d,
        _eigvecs=v,
    )


def _model_means(state: CanonicalState, stack_flat: np.ndarray, dim: int) -> np.ndarray:
    rho_t = state.rho.matrix.T.reshape(-1)
    return np.real(stack_flat @ rho_t)


def _require_means(observables: ObservableSet) -> np.ndarray:
    if observables.means is None or not np.all(np.isfinite(observables.means)):
        raise MissingMeans("observable set has unset target means")
    return observables.means


def deviation(state: CanonicalState, observables: ObservableSet) -> float:
    """Weighted squared mismatch between model and target means."""
    data = _require_means(observables)
    stack = observables.matrix_stack
    model = _model_means(state, stack.reshape(stack.shape[0], -1), observables.dim)
    r = model - data
    return float(np.dot(observables.weights * r, r))


def _phi_kernel(e: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Divided differences (q_a - q_b)/(e_b - e_a) for q = exp(-e), with the
    confluent limit q_a on the diagonal; expm1 form where gaps are small."""
    de = e[:, None] - e[None, :]
    small = np.abs(de) < 0.1
    with np.errstate(divide="ignore", invalid="ignore"):
        wide = (q[:, None] - q[None, :]) / (-de)
        ratio = np.expm1(np.clip(de, -0.5, 0.5))
        np.divide(ratio, de, out=ratio, where=~np.eye(len(e), dtype=bool))
        narrow = q[:, None] * np.where(de == 0.0, 1.0, ratio)
    return np.where(small, narrow, wide)


def deviation_gradient(state: CanonicalState, observables: ObservableSet):
    """Gradient of the deviation functional with respect to the multipliers.

    d<G_nu>/d lambda_mu = <G_nu><G_mu> - Tr[G_mu V (phi o (V+ R V)) V+]/Z terms
    assembled so only two stack contractions are needed per call.  Returns
    the same layout as the state's multipliers (LagrangeVector in, LagrangeVector
    out)."""
    data = _require_means(observables)
    w = observables.weights
    stack = observables.matrix_stack
    stack_flat = stack.reshape(stack.shape[0], -1)
    d, v = state._eigvals, state._eigvecs
    e = d - d[0]
    q = np.exp(-e)
    z = q.sum()

    model = _model_means(state, stack_flat, observables.dim)
    r = model - data
    wr = w * r

    rmat = (wr @ stack_flat).reshape(observables.dim, observables.dim)
    rt = v.conj().T @ rmat @ v
    sprime = rt * _phi_kernel(e, q)
    shat = v @ sprime @ v.conj().T
    term = np.real(stack_flat @ shat.T.reshape(-1))

    grad = 2.0 * (np.dot(wr, model) * model - term / z)
    if isinstance(state.lambdas, LagrangeVector):
        return LagrangeVector.from_flat(grad, state.lambdas.lambda_bins.shape)
    return grad


def mean_jacobian(state: CanonicalState, observables: ObservableSet) -> np.ndarray:
    """Full matrix J_{nu mu} = d<G_nu>/d lambda_mu at the state's multipliers.

    For commuting (diagonal) observables this reduces to minus the classical
    covariance matrix of the eigenvalue distributions.  Test and diagnostic
    helper; the fit itself uses the cheaper contracted form above."""
    stack = observables.matrix_stack
    d, v = state._eigvals, state._eigvecs
    e = d - d[0]
    q = np.exp(-e)
    z = q.sum()
    model = _model_means(state, stack.reshape(stack.shape[0], -1), observables.dim)
    gt = np.matmul(np.matmul(v.conj().T, stack), v)
    phi = _phi_kernel(e, q)
    k = np.einsum("vab,ab,wba->vw", gt, phi, gt, optimize=True)
    return np.real(np.outer(model, model) - k / z)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class FitReport:
    """Outcome of one reconstruction: deviation at the optimum, entropy and
    mean occupation of the fitted state, iteration counts and residuals."""

    delta_f: float
    entropy: float
    nbar_fit: float
    iterations: int
    converged: bool
    residuals: np.ndarray
    grad_inf_norm: float
    restarts: int
    message: str = ""
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "delta_f": self.delta_f,
            "entropy": self.entropy,
            "nbar_fit": self.nbar_fit,
            "iterations": self.iterations,
            "converged": self.converged,
            "residuals": [float(x) for x in np.asarray(self.residuals)],
            "grad_inf_norm": self.grad_inf_norm,
            "restarts": self.restarts,
            "message": self.message,
        }


def _objective_factory(observables: ObservableSet):
    data = _require_means(observables)
    w = observables.weights
    stack = observables.matrix_stack
    nops, dim = stack.shape[0], stack.shape[1]
    stack_flat = np.ascontiguousarray(stack.reshape(nops, -1))

    def fg(lam: np.ndarray):
        a = np.tensordot(lam, stack, axes=1)
        a = 0.5 * (a + a.conj().T)
        d, v = _eigh(a)
        e = d - d[0]
        q = np.exp(-e)
        z = q.sum()
        probs = q / z
        rho = (v * probs) @ v.conj().T
        model = np.real(stack_flat @ rho.T.reshape(-1))
        r = model - data
        wr = w * r
        f = float(np.dot(wr, r))

        rmat = (wr @ stack_flat).reshape(dim, dim)
        rt = v.conj().T @ rmat @ v
        sprime = rt * _phi_kernel(e, q)
        shat = v @ sprime @ v.conj().T
        term = np.real(stack_flat @ shat.T.reshape(-1))
        grad = 2.0 * (np.dot(wr, model) * model - term / z)
        return f, grad

    return fg


def fit(
    observables: ObservableSet,
    *,
    initial=None,
    max_iter: int = 20000,
    grad_tol: float = 1e-9,
    max_restarts: int = 3,
    restart_seed: int = 0,
) -> tuple[CanonicalState, FitReport]:
    """Minimize the deviation functional over the multipliers.

    L-BFGS with the analytic gradient, starting from lambda = 0 (the
    maximally mixed state) unless ``initial`` is given.  Convergence means
    either the sup-norm of the gradient fell below ``grad_tol`` or the
    deviation itself is below 1e-14.  On stagnation the search restarts
    from a seeded jitter of the best point, at most ``max_restarts`` times;
    a fit that still fails is returned with ``converged=False`` rather than
    raised, so callers can inspect the partial result.
    """
    data = _require_means(observables)
    fg = _objective_factory(observables)

    if initial is None:
        x0 = np.zeros(observables.n_ops)
    else:
        x0 = _flat_lambdas(initial, observables).copy()

    history: list = []
    last_eval = {"x": None, "f": None}

    def wrapped(lam):
        f, g = fg(lam)
        last_eval["x"], last_eval["f"] = lam.copy(), f
        return f, g

    def callback(xk):
        if last_eval["x"] is not None and np.array_equal(xk, last_eval["x"]):
            f = last_eval["f"]
        else:
            f = fg(xk)[0]
        history.append(f)
        if f < CONVERGED_DF:
            # deviation at its floor; the gradient test cannot add anything
            raise StopIteration

    rng = np.random.default_rng(restart_seed)
    best = None
    total_iter = 0
    restarts_used = 0
    message = ""
    for attempt in range(max_restarts + 1):
        res = minimize(
            wrapped, x0, jac=True, method="L-BFGS-B", callback=callback,
            options={
                "maxiter": max_iter, "maxfun": 3 * max_iter,
                "ftol": 0.0, "gtol": grad_tol, "maxcor": 30, "maxls": 60,
            },
        )
        total_iter += int(res.nit)
        f_res, g_res = fg(res.x)
        ginf = float(np.max(np.abs(g_res)))
        if best is None or f_res < best[1]:
            best = (res.x.copy(), f_res, ginf)
        message = str(res.message)
        if ginf < grad_tol or f_res < CONVERGED_DF:
            break
        restarts_used = attempt + 1
        if attempt < max_restarts:
            x0 = best[0] + 0.05 * rng.standard_normal(best[0].size) * (1.0 + np.abs(best[0]))
    else:
        restarts_used = max_restarts

    x_best, f_best, ginf_best = best
    converged = bool(ginf_best < grad_tol or f_best < CONVERGED_DF)

    if observables.bin_shape is not None:
        lam_out = LagrangeVector.from_flat(x_best, observables.bin_shape)
    else:
        lam_out = x_best
    state = canonical_state(lam_out, observables)
    stack = observables.matrix_stack
    model = _model_means(state, stack.reshape(stack.shape[0], -1), observables.dim)
    nbar_idx = observables.nbar_index
    nbar_fit = float(model[nbar_idx]) if nbar_idx is not None else float("nan")
    report = FitReport(
        delta_f=f_best,
        entropy=entropy(state.rho),
        nbar_fit=nbar_fit,
        iterations=total_iter,
        converged=converged,
        residuals=model - data,
        grad_inf_norm=ginf_best,
        restarts=min(restarts_used, max_restarts),
        message=message,
        history=history,
    )
    return state, report
