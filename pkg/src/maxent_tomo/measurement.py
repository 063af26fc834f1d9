"""Measurement model for time-of-flight (ballistic-expansion) imaging.

The sequence: the motional state evolves in the harmonic well for a time
tau (phase-space rotation theta = omega_z tau), the trap is switched off,
and after a long flight time T an absorption image is taken along z.  A
particle starting at xi0 with velocity v lands near z = xi0 + v T, so each
image column is the velocity distribution of the rotated state convolved
with the initial cloud profile.  In dimensionless oscillator units the
velocity of the theta-rotated state is the (theta + pi/2) quadrature of
the state before rotation, which is where all phase factors below come
from.

Scales: one unit of dimensionless position is sqrt(2) dz0 meters, one unit
of dimensionless velocity is sqrt(2) dv0 m/s, with dz0 (dv0) the vacuum
position (velocity) rms.  After a flight time T one velocity unit maps to
``drop_scale`` = sqrt(2) dv0 T meters on the detector.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from .hilbert import (
    DensityOperator,
    FockSpace,
    HermitianOperator,
    PureState,
    harmonic_evolve,
    hermite_functions,
    ladder_operators,
)

__all__ = [
    "TrapConfig",
    "BinGrid",
    "ObservableSet",
    "QuadratureError",
    "DegenerateRotationError",
    "default_bin_grid",
    "build_be_observable",
    "build_observation_level",
    "ideal_quadrature_distribution",
]

SPECTRUM_TOL = 1e-10
SET_HERMITICITY_TOL = 1e-12


class QuadratureError(ValueError):
    """Integration rule too coarse to be meaningful."""


class DegenerateRotationError(ValueError):
    """Two requested rotations coincide and carry no new information."""


@dataclass(frozen=True)
class TrapConfig:
    """Trap and imaging parameters, all in SI units.

    omega_z   angular trap frequency (rad/s)
    dz0       vacuum position rms (m)
    dv0       vacuum velocity rms (m/s)
    cloud_rms initial cloud size along z (m), one sigma
    be_time   ballistic-expansion (flight) time (s)

    dz0 and dv0 are independent inputs because they come from independent
    calibrations; they are checked for consistency with dv0 = omega_z dz0
    and a warning is emitted above 5 percent disagreement.
    """

    omega_z: float
    dz0: float
    dv0: float
    cloud_rms: float
    be_time: float

    def __post_init__(self):
        for name in ("omega_z", "dz0", "dv0", "cloud_rms", "be_time"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        mismatch = abs(self.dv0 - self.omega_z * self.dz0) / self.dv0
        if mismatch > 0.05:
            warnings.warn(
                f"dv0 and omega_z*dz0 disagree by {mismatch:.1%}; "
                "check the trap calibration",
                stacklevel=2,
            )

    @property
    def velocity_scale(self) -> float:
        """Meters per second per unit of dimensionless velocity."""
        return math.sqrt(2.0) * self.dv0

    @property
    def position_scale(self) -> float:
        """Meters per unit of dimensionless position (in the trap)."""
        return math.sqrt(2.0) * self.dz0

    @property
    def drop_scale(self) -> float:
        """Meters on the detector per unit of dimensionless velocity."""
        return self.velocity_scale * self.be_time


@dataclass(frozen=True)
class BinGrid:
    """Uniform detector binning, bins indexed -half_count..half_count.

    ``center`` is the detector coordinate of the cloud center in meters;
    any gravity-induced uniform displacement during the flight is absorbed
    into it.
    """

    center: float
    width: float
    half_count: int

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bin width must be positive")
        if self.half_count < 1 or int(self.half_count) != self.half_count:
            raise ValueError("half_count must be a positive integer")
        object.__setattr__(self, "half_count", int(self.half_count))

    @property
    def n_bins(self) -> int:
        return 2 * self.half_count + 1

    def indices(self) -> np.ndarray:
        return np.arange(-self.half_count, self.half_count + 1)

    def centers(self) -> np.ndarray:
        return self.center + self.width * self.indices()

    def edges(self) -> np.ndarray:
        return self.center + self.width * (np.arange(-self.half_count, self.half_count + 2) - 0.5)


def default_bin_grid(
    cfg: TrapConfig,
    nbar: float,
    half_count: int = 25,
    margin: float = 3.5,
    center: float = 0.0,
) -> BinGrid:
    """Grid covering the velocity spread of a state with mean occupation nbar.

    Span is sqrt(2 nbar + 1) (the largest quadrature rms a state with that
    nbar can have) plus ``margin`` vacuum widths, mapped to meters.
    """
    span_u = math.sqrt(2.0 * max(nbar, 0.0) + 1.0) + margin
    width = 2.0 * span_u * cfg.drop_scale / (2 * half_count + 1)
    return BinGrid(center=center, width=width, half_count=half_count)


# ---------------------------------------------------------------------------
# observable construction


def _resolve_workers(workers) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("MAXENT_TOMO_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _gauss_hermite(n: int):
    if n < 2:
        raise QuadratureError("need at least 2 Gauss-Hermite nodes")
    return hermgauss(n)


def _gauss_legendre(n: int):
    if n < 2:
        raise QuadratureError("need at least 2 Gauss-Legendre nodes")
    return leggauss(n)


def _bin_base_matrices(
    cfg: TrapConfig,
    space: FockSpace,
    bin_centers: np.ndarray,
    bin_width: float,
    grid_center: float,
    gh_nodes: int,
    gl_nodes: int,
    workers: int = 1,
) -> np.ndarray:
    """Real symmetric matrices R_k with [R_k]_mn = int G(xi0) dxi0
    int_bin dz psi_m(u) psi_n(u) / drop_scale, u = (z - center - xi0)/drop_scale.

    Gauss-Hermite over the cloud coordinate, Gauss-Legendre inside each bin.
    The full measurement operator is R_k dressed with rotation phases.
    """
    t, v = _gauss_hermite(gh_nodes)
    xi0 = math.sqrt(2.0) * cfg.cloud_rms * t  # cloud positions
    w_cloud = v / math.sqrt(math.pi)
    tl, wl = _gauss_legendre(gl_nodes)
    scale = cfg.drop_scale
    nmax = space.dim - 1

    def _build(centers: np.ndarray) -> np.ndarray:
        # z samples inside each bin, then the dimensionless velocity u
        z = centers[:, None] + 0.5 * bin_width * tl[None, :]
        u = (z[:, None, :] - grid_center - xi0[None, :, None]) / scale
        psi = hermite_functions(nmax, u.reshape(-1))
        psi = psi.reshape(space.dim, centers.size, -1)
        wq = (w_cloud[:, None] * (0.5 * bin_width * wl)[None, :] / scale).reshape(-1)
        return np.einsum("q,mkq,nkq->kmn", wq, psi, psi, optimize=True)

    if workers <= 1 or bin_centers.size < 2 * workers:
        return _build(bin_centers)
    chunks = np.array_split(bin_centers, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_build, chunks))
    return np.concatenate(parts, axis=0)


def _rotation_phases(dim: int, theta: float) -> np.ndarray:
    """C_mn = exp(i (m-n) (theta + pi/2)); velocity is the shifted quadrature."""
    ph = np.exp(-1j * (theta + 0.5 * math.pi) * np.arange(dim))
    return np.conj(ph)[:, None] * ph[None, :]


def build_be_observable(
    cfg: TrapConfig,
    grid: BinGrid,
    theta: float,
    k: int,
    space: FockSpace,
    gh_nodes: int = 32,
    gl_nodes: int = 8,
) -> HermitianOperator:
    """Operator whose mean is the probability of landing in detector bin k
    after rotation theta, smeared over the initial cloud profile."""
    if abs(k) > grid.half_count:
        raise ValueError(f"bin index {k} outside grid (half_count {grid.half_count})")
    center_k = np.array([grid.center + grid.width * k])
    base = _bin_base_matrices(
        cfg, space, center_k, grid.width, grid.center, gh_nodes, gl_nodes
    )[0]
    return HermitianOperator(_rotation_phases(space.dim, theta) * base)


@dataclass
class ObservableSet:
    """Operators, target means and weights defining one reconstruction.

    Layout for sets built by :func:`build_observation_level`: bin operators
    in row-major (rotation, bin) order, the number operator last.  ``means``
    holds NaN for entries not yet measured; attach data with ``with_means``
    or ``with_record``.
    """

    operators: list
    labels: list
    means: np.ndarray | None = None
    weights: np.ndarray | None = None
    variances: np.ndarray | None = None
    rotations: tuple | None = None
    grid: BinGrid | None = None

    def __post_init__(self):
        if not self.operators:
            raise ValueError("need at least one observable")
        if len(self.labels) != len(self.operators):
            raise ValueError("labels and operators must align")
        dims = {op.dim for op in self.operators}
        if len(dims) != 1:
            raise ValueError("operators live in different spaces")
        if self.means is not None:
            m = np.asarray(self.means, dtype=np.float64)
            if m.shape != (self.n_ops,):
                raise ValueError("means has wrong length")
            self.means = m
        if self.variances is not None:
            var = np.asarray(self.variances, dtype=np.float64)
            if var.shape != (self.n_ops,) or np.any(var <= 0):
                raise ValueError("variances must be positive, one per observable")
            self.variances = var
            self.weights = var ** -2.0
        if self.weights is None:
            self.weights = np.ones(self.n_ops)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (self.n_ops,) or np.any(w <= 0):
                raise ValueError("weights must be positive, one per observable")
            self.weights = w

    @property
    def n_ops(self) -> int:
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    @cached_property
    def matrix_stack(self) -> np.ndarray:
        """(n_ops, N, N) stacked operator matrices (read-only view source)."""
        return np.stack([op.matrix for op in self.operators])

    @property
    def nbar_index(self) -> int | None:
        for i, lab in enumerate(self.labels):
            if lab[0] == "nbar":
                return i
        return None

    @property
    def bin_shape(self) -> tuple | None:
        if self.rotations is None or self.grid is None:
            return None
        return (len(self.rotations), self.grid.n_bins)

    def with_means(self, means: np.ndarray) -> "ObservableSet":
        out = replace(self, means=np.asarray(means, dtype=np.float64).copy())
        return out

    def with_record(self, record) -> "ObservableSet":
        """Attach a MeasurementRecord's bin values and nbar as target means."""
        shape = self.bin_shape
        if shape is None:
            raise ValueError("observable set carries no (rotation, bin) layout")
        if record.values.shape != shape:
            raise ValueError(
                f"record shape {record.values.shape} does not match observables {shape}"
            )
        flat = np.concatenate([record.values.ravel(), [record.nbar]])
        return self.with_means(flat)

    def validate(self) -> None:
        """Spectral sanity checks: hermiticity and bin spectra within [0, 1]."""
        for op, lab in zip(self.operators, self.labels):
            m = op.matrix
            dev = float(np.max(np.abs(m - m.conj().T)))
            if dev > SET_HERMITICITY_TOL:
                raise ValueError(f"operator {lab} hermiticity off by {dev:.3e}")
            if lab[0] == "bin":
                ev = np.linalg.eigvalsh(m)
                if ev[0] < -SPECTRUM_TOL or ev[-1] > 1.0 + SPECTRUM_TOL:
                    raise ValueError(
                        f"bin operator {lab} spectrum [{ev[0]:.3e}, {ev[-1]:.3e}] "
                        "outside [0, 1]"
                    )


def build_observation_level(
    cfg: TrapConfig,
    grid: BinGrid,
    rotations,
    nbar: float | None,
    space: FockSpace,
    *,
    weight_nbar: float = 1.0,
    variances: np.ndarray | None = None,
    gh_nodes: int = 32,
    gl_nodes: int = 8,
    workers: int | None = None,
) -> ObservableSet:
    """All bin operators for every rotation plus the number operator.

    ``nbar`` is the separately measured mean occupation; it is stored as the
    target mean of the number-operator entry (pass None to leave it unset).
    Bin means stay NaN until filled from a simulation or from data.
    """
    rotations = tuple(float(t) for t in rotations)
    if not rotations:
        raise ValueError("need at least one rotation")
    for i, ti in enumerate(rotations):
        for tj in rotations[i + 1:]:
            if ti == tj:
                raise DegenerateRotationError(f"rotation {ti} appears twice")
    if nbar is not None and nbar < 0:
        raise ValueError("nbar must be non-negative")

    nworkers = _resolve_workers(workers)
    base = _bin_base_matrices(
        cfg, space, grid.centers().astype(np.float64), grid.width, grid.center,
        gh_nodes, gl_nodes, workers=nworkers,
    )
    ops, labels = [], []
    for j, theta in enumerate(rotations):
        phases = _rotation_phases(space.dim, theta)
        for idx, k in enumerate(grid.indices()):
            ops.append(HermitianOperator(phases * base[idx]))
            labels.append(("bin", j, int(k)))
    ops.append(HermitianOperator(ladder_operators(space).n))
    labels.append(("nbar",))

    means = np.full(len(ops), np.nan)
    if nbar is not None:
        means[-1] = float(nbar)
    weights = np.ones(len(ops))
    weights[-1] = float(weight_nbar)
    out = ObservableSet(
        operators=ops, labels=labels, means=means, weights=weights,
        variances=variances, rotations=rotations, grid=grid,
    )
    out.validate()
    return out


def ideal_quadrature_distribution(state, theta: float, x) -> np.ndarray:
    """Quadrature distribution w(x; theta) of the state rotated by theta.

    This is the position density of the theta-evolved state on the
    dimensionless axis, the zero-smearing, continuous limit of the
    ballistic-expansion profile at rotation theta - pi/2.
    """
    x = np.asarray(x, dtype=np.float64)
    evolved = harmonic_evolve(state, theta)
    if isinstance(evolved, PureState):
        psi = hermite_functions(evolved.dim - 1, x)
        amp = evolved.amplitudes @ psi
        return np.abs(amp) ** 2
    if isinstance(evolved, DensityOperator):
        psi = hermite_functions(evolved.dim - 1, x)
        return np.real(np.einsum("mn,mx,nx->x", evolved.matrix, psi, psi, optimize=True))
    raise TypeError("state must be a PureState or DensityOperator")
