"""End-to-end synthetic measurement generation.

Ideal records are exact expectation values of the ballistic-expansion bin
operators; detection noise follows the shot-noise-like model
value' = value + eta * xi * sqrt(value) with unit-variance Gaussian xi and
values clamped at zero.  A separately measured mean occupation accompanies
every record because the reconstruction needs it as an anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import (
    DensityOperator,
    FockSpace,
    PureState,
    TruncationError,
    fock_state,
    harmonic_evolve,
    ladder_operators,
    unitary_expm,
)
from .measurement import BinGrid, ObservableSet, TrapConfig

__all__ = [
    "NoiseSpec",
    "PrepSpec",
    "MeasurementRecord",
    "DimensionMismatch",
    "simulate_ideal",
    "add_noise",
    "prepare_free_expansion",
    "estimate_nbar_heuristic",
]


class DimensionMismatch(ValueError):
    """State and observables live in different truncated spaces."""


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative-sqrt noise amplitude and RNG seed."""

    eta: float
    seed: int = 0

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")


@dataclass(frozen=True)
class PrepSpec:
    """State preparation: an initial state, an optional free flight of
    duration t1 with the trap off (which squeezes and heats the motional
    state), and an optional extra in-trap rotation."""

    initial: PureState
    free_flight_t1: float | None = None
    rotation_s: float = 0.0

    def prepare(self, cfg: TrapConfig, space: FockSpace) -> PureState:
        state = self.initial
        if self.free_flight_t1:
            if np.allclose(state.amplitudes, fock_state(space, 0).amplitudes):
                state = prepare_free_expansion(cfg, self.free_flight_t1, space)
            else:
                state = _free_flight(cfg, self.free_flight_t1, space, state)
        if self.rotation_s:
            state = harmonic_evolve(state, cfg.omega_z * self.rotation_s)
        return state


@dataclass(frozen=True)
class MeasurementRecord:
    """One synthetic or ingested data set: a (rotation, bin) value matrix
    plus the separately measured mean occupation."""

    rotations: tuple
    grid: BinGrid
    values: np.ndarray
    nbar: float
    provenance: dict = field(default_factory=lambda: {"kind": "ideal"})

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(self.rotations), self.grid.n_bins):
            raise ValueError(
                f"values shape {vals.shape} does not match "
                f"{len(self.rotations)} rotations x {self.grid.n_bins} bins"
            )
        if np.any(vals < 0):
            raise ValueError("bin values must be non-negative")
        if not np.isfinite(self.nbar) or self.nbar < 0:
            raise ValueError("nbar must be finite and non-negative")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "rotations", tuple(float(t) for t in self.rotations))

    def flat_means(self) -> np.ndarray:
        """Bin values row-major then nbar, the observable-set ordering."""
        return np.concatenate([self.values.ravel(), [self.nbar]])


def simulate_ideal(state, observables: ObservableSet) -> MeasurementRecord:
    """Noise-free record: exact means of every observable in the set."""
    if observables.bin_shape is None:
        raise ValueError("observables carry no (rotation, bin) layout to record")
    dim = state.dim if isinstance(state, (PureState, DensityOperator)) else None
    if dim != observables.dim:
        raise DimensionMismatch(
            f"state dim {dim} vs observables dim {observables.dim}"
        )
    rho = state.density().matrix if isinstance(state, PureState) else state.matrix
    stack = observables.matrix_stack
    vals = np.real(stack.reshape(stack.shape[0], -1) @ rho.T.reshape(-1))
    bins = np.clip(vals[:-1].reshape(observables.bin_shape), 0.0, None)
    return MeasurementRecord(
        rotations=observables.rotations,
        grid=observables.grid,
        values=bins,
        nbar=max(float(vals[-1]), 0.0),
        provenance={"kind": "ideal"},
    )


def add_noise(
    record: MeasurementRecord,
    spec: NoiseSpec,
    nbar_noisy: float | None = None,
) -> MeasurementRecord:
    """Apply value' = clamp(value + eta xi sqrt(value), 0) with a seeded RNG.

    xi is drawn once as a standard-normal array of the record's shape
    (row-major), so records of equal shape and seed perturb identically.
    The mean occupation is not resampled; pass ``nbar_noisy`` to emulate an
    imperfect independent calibration.
    """
    if record.provenance.get("kind") != "ideal":
        raise ValueError("refusing to add noise on top of a non-ideal record")
    rng = np.random.default_rng(spec.seed)
    xi = rng.standard_normal(record.values.shape)
    noisy = np.clip(record.values + spec.eta * xi * np.sqrt(record.values), 0.0, None)
    nbar = record.nbar if nbar_noisy is None else float(nbar_noisy)
    return MeasurementRecord(
        rotations=record.rotations,
        grid=record.grid,
        values=noisy,
        nbar=nbar,
        provenance={"kind": "noisy", "eta": spec.eta, "seed": spec.seed},
    )


# ---------------------------------------------------------------------------
# free-flight preparation


def _squeezed_leakage(kappa: float, dim: int) -> float:
    """Population of exp(-i kappa p^2)|0> above level dim-1 (untruncated).

    The free-flight state is a squeezed vacuum with sinh r = kappa, occupying
    even levels with p_2k = C(2k, k) (tanh^2 r / 4)^k / cosh r.
    """
    if kappa == 0.0:
        return 0.0
    t2 = kappa * kappa / (1.0 + kappa * kappa)  # tanh^2 r
    inv_cosh = 1.0 / math.sqrt(1.0 + kappa * kappa)
    head = 0.0
    term = inv_cosh  # k = 0
    k = 0
    while 2 * k < dim:
        head += term
        k += 1
        term *= t2 * (2 * k - 1) / (2.0 * k)
    return max(1.0 - head, 0.0)


def _free_flight(cfg: TrapConfig, t1: float, space: FockSpace, state: PureState) -> PureState:
    kappa = 0.5 * cfg.omega_z * t1
    p = ladder_operators(space).p
    amps = unitary_expm(p @ p, kappa) @ state.amplitudes
    # unitary on the truncated space: norm preserved up to roundoff
    return PureState(amps / np.linalg.norm(amps))


def prepare_free_expansion(cfg: TrapConfig, t1: float, space: FockSpace) -> PureState:
    """Ground state after the trap is off for t1 seconds: exp(-i kappa p^2)|0>
    with kappa = omega_z t1 / 2.  Mean occupation grows as kappa^2.

    Raises TruncationError when the squeezed state no longer fits; the
    analytic even-level populations provide the leakage estimate.
    """
    if t1 < 0:
        raise ValueError("t1 must be non-negative")
    kappa = 0.5 * cfg.omega_z * t1
    leak = _squeezed_leakage(kappa, space.dim)
    if leak > 1e-6:
        raise TruncationError(
            f"free flight t1={t1:.3e} s (kappa={kappa:.3f}) leaks {leak:.3e} "
            f"above level {space.dim - 1}; raise the Fock dimension"
        )
    if kappa == 0.0:
        return fock_state(space, 0)
    return _free_flight(cfg, t1, space, fock_state(space, 0))


def estimate_nbar_heuristic(cfg: TrapConfig, t1: float) -> float:
    """Back-of-envelope mean occupation after a free flight of t1 seconds,
    (dv0 t1)^2 / (2 dz0)^2; equals (omega_z t1 / 2)^2 when dv0 = omega_z dz0."""
    return (cfg.dv0 * t1) ** 2 / (4.0 * cfg.dz0 ** 2)
