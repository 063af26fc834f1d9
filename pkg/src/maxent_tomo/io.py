"""File formats, image-cut preprocessing and run configuration.

Formats:
  measurement record   CSV with '#' key=value metadata lines, then a header
                       and rows (rotation_index, theta_rad, bin_index, z_m,
                       value).  Floats are written with repr so a read back
                       is bit identical.
  density matrix       JSON {"dim": N, "real": [...], "imag": [...]} with
                       row-major flattened arrays.
  image cut            CSV rows (z_m, od) for a single rotation, metadata
                       tau_us, pixel_width_m, optionally center_m.
  run config           key = value lines, '#' comments; keys carry unit
                       suffixes (omega_z_hz, be_time_s, ...).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, fields

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .hilbert import DensityOperator, FockSpace
from .measurement import BinGrid, TrapConfig, default_bin_grid
from .simulate import MeasurementRecord

__all__ = [
    "CutFile",
    "GaussianFit",
    "RunConfig",
    "FitDivergence",
    "EmptyAfterClamp",
    "read_cut_file",
    "write_cut_file",
    "gaussian_fit_center",
    "preprocess",
    "write_record",
    "read_record",
    "write_density_matrix",
    "read_density_matrix",
    "parse_config_text",
    "read_config",
]


class FitDivergence(RuntimeError):
    """The Gaussian profile fit failed or ran away."""


class EmptyAfterClamp(ValueError):
    """Background subtraction and clamping removed all signal."""


@dataclass(frozen=True)
class CutFile:
    """A single absorption-image cut: one rotation's histogram along z.

    positions are bin centers in meters (strictly increasing, typically one
    per camera pixel), values are optical densities in arbitrary units.
    center_m, when present, is an externally known cloud center.
    """

    tau_s: float
    positions: np.ndarray
    values: np.ndarray
    pixel_width: float
    center_m: float | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if pos.ndim != 1 or pos.shape != vals.shape:
            raise ValueError("positions and values must be equal-length vectors")
        if pos.size < 2 or np.any(np.diff(pos) <= 0):
            raise ValueError("positions must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        if self.pixel_width <= 0:
            raise ValueError("pixel_width must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", vals)


def read_cut_file(path) -> CutFile:
    meta, rows = _read_csv_with_meta(path)
    pos = np.array([float(r[0]) for r in rows])
    vals = np.array([float(r[1]) for r in rows])
    center = meta.get("center_m")
    return CutFile(
        tau_s=float(meta["tau_us"]) * 1e-6,
        positions=pos,
        values=vals,
        pixel_width=float(meta["pixel_width_m"]),
        center_m=float(center) if center is not None else None,
    )


def write_cut_file(cut: CutFile, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# tau_us={float(cut.tau_s * 1e6)!r}\n")
        fh.write(f"# pixel_width_m={float(cut.pixel_width)!r}\n")
        if cut.center_m is not None:
            fh.write(f"# center_m={float(cut.center_m)!r}\n")
        fh.write("z_m,od\n")
        for z, v in zip(cut.positions, cut.values):
            fh.write(f"{float(z)!r},{float(v)!r}\n")


# ---------------------------------------------------------------------------
# profile fitting and rebinning


@dataclass(frozen=True)
class GaussianFit:
    center: float
    sigma: float
    amplitude: float
    background: float


def _gauss_model(z, amp, center, sigma, background):
    return amp * np.exp(-0.5 * ((z - center) / sigma) ** 2) + background


def gaussian_fit_center(cut: CutFile) -> GaussianFit:
    """Least-squares Gaussian-plus-constant fit of a cut.

    Deterministic moment initialization: center at the maximum, width from
    the FWHM, background from the minimum value.
    """
    z, od = cut.positions, cut.values
    if z.size < 5:
        raise ValueError("need at least 5 points to fit a profile")
    span = float(z[-1] - z[0])
    b0 = float(od.min())
    a0 = float(od.max() - b0)
    i_max = int(np.argmax(od))
    above = od - b0 > 0.5 * a0
    s0 = max(float(np.count_nonzero(above)) * cut.pixel_width / 2.355,
             cut.pixel_width)
    if a0 <= 0:
        raise FitDivergence("flat profile: no peak to fit")
    try:
        with warnings.catch_warnings():
            # the covariance is discarded, so its degeneracy on noise-free
            # synthetic profiles is not worth a warning
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(
                _gauss_model, z, od,
                p0=[a0, float(z[i_max]), s0, b0],
                maxfev=20000,
            )
    except RuntimeError as exc:
        raise FitDivergence(f"profile fit did not converge: {exc}") from exc
    amp, center, sigma, background = (float(v) for v in popt)
    sigma = abs(sigma)
    if not np.isfinite(center) or sigma > 10.0 * span or amp <= 0:
        raise FitDivergence(
            f"degenerate profile fit (center={center!r}, sigma={sigma!r})"
        )
    return GaussianFit(center=center, sigma=sigma, amplitude=amp, background=background)


def _overlap_rebin(src_edges: np.ndarray, src_vals: np.ndarray,
                   dst_edges: np.ndarray) -> np.ndarray:
    """Mass-conserving rebin: each source bin's content is split among the
    destination bins in proportion to geometric overlap."""
    out = np.zeros(dst_edges.size - 1)
    for lo, hi, v in zip(src_edges[:-1], src_edges[1:], src_vals):
        if v == 0.0:
            continue
        left = np.clip(dst_edges[:-1], lo, hi)
        right = np.clip(dst_edges[1:], lo, hi)
        out += v * np.clip(right - left, 0.0, None) / (hi - lo)
    return out


def preprocess(
    cut: CutFile,
    grid: BinGrid,
    *,
    subtract_background: bool = True,
    recenter: bool = True,
    normalize: bool = True,
    fixed_center: float | None = None,
) -> np.ndarray:
    """Turn a raw cut into one row of bin means on the reconstruction grid.

    Steps: fit a Gaussian profile (if needed), subtract the fitted constant
    background, clamp negatives to zero, shift positions so the cloud center
    lands on grid.center, rebin by overlap, normalize to unit sum.  With the
    background already at zero the chain is idempotent apart from the clamp.
    """
    profile = None
    if subtract_background or (recenter and fixed_center is None):
        profile = gaussian_fit_center(cut)

    vals = cut.values.astype(np.float64)
    if subtract_background:
        vals = vals - profile.background
    vals = np.clip(vals, 0.0, None)
    if not np.any(vals > 0):
        raise EmptyAfterClamp("no signal left after background subtraction")

    if recenter:
        center = fixed_center if fixed_center is not None else profile.center
        shifted = cut.positions - center + grid.center
    else:
        shifted = cut.positions

    src_edges = np.concatenate([
        shifted - 0.5 * cut.pixel_width, [shifted[-1] + 0.5 * cut.pixel_width]
    ])
    row = _overlap_rebin(src_edges, vals, grid.edges())
    if normalize:
        total = row.sum()
        if total <= 0:
            raise EmptyAfterClamp("signal fell entirely outside the grid")
        row = row / total
    return row


# ---------------------------------------------------------------------------
# record and matrix serialization


def _read_csv_with_meta(path):
    meta, rows = {}, []
    with open(path) as fh:
        header_seen = False
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                header_seen = True  # column names, layout is fixed per format
                continue
            rows.append([tok.strip() for tok in line.split(",")])
    return meta, rows


def write_record(record: MeasurementRecord, path) -> None:
    grid = record.grid
    prov = record.provenance
    with open(path, "w") as fh:
        fh.write(f"# kind={prov.get('kind', 'ideal')}\n")
        if "eta" in prov:
            fh.write(f"# eta={float(prov['eta'])!r}\n")
        if "seed" in prov:
            fh.write(f"# seed={int(prov['seed'])}\n")
        fh.write(f"# nbar={float(record.nbar)!r}\n")
        fh.write(f"# grid_center_m={float(grid.center)!r}\n")
        fh.write(f"# grid_width_m={float(grid.width)!r}\n")
        fh.write(f"# grid_half_count={grid.half_count}\n")
        fh.write("# rotations_rad="
                 + ",".join(repr(float(t)) for t in record.rotations) + "\n")
        fh.write("rotation_index,theta_rad,bin_index,z_m,value\n")
        ks = grid.indices()
        zs = grid.centers()
        for j, theta in enumerate(record.rotations):
            for k, z, v in zip(ks, zs, record.values[j]):
                fh.write(f"{j},{float(theta)!r},{k},{float(z)!r},{float(v)!r}\n")


def read_record(path) -> MeasurementRecord:
    meta, rows = _read_csv_with_meta(path)
    grid = BinGrid(
        center=float(meta["grid_center_m"]),
        width=float(meta["grid_width_m"]),
        half_count=int(meta["grid_half_count"]),
    )
    rotations = tuple(float(t) for t in meta["rotations_rad"].split(","))
    values = np.zeros((len(rotations), grid.n_bins))
    for row in rows:
        j = int(row[0])
        k = int(row[2])
        values[j, k + grid.half_count] = float(row[4])
    provenance = {"kind": meta.get("kind", "ideal")}
    if "eta" in meta:
        provenance["eta"] = float(meta["eta"])
    if "seed" in meta:
        provenance["seed"] = int(meta["seed"])
    return MeasurementRecord(
        rotations=rotations,
        grid=grid,
        values=values,
        nbar=float(meta["nbar"]),
        provenance=provenance,
    )


def write_density_matrix(rho: DensityOperator, path) -> None:
    m = rho.matrix
    payload = {
        "dim": int(m.shape[0]),
        "real": [float(v) for v in m.real.ravel()],
        "imag": [float(v) for v in m.imag.ravel()],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_density_matrix(path) -> DensityOperator:
    with open(path) as fh:
        payload = json.load(fh)
    dim = int(payload["dim"])
    m = (np.asarray(payload["real"]) + 1j * np.asarray(payload["imag"])).reshape(dim, dim)
    return DensityOperator(m)


# ---------------------------------------------------------------------------
# run configuration


_TRUE_STRINGS = {"1", "true", "yes", "on"}
_FALSE_STRINGS = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in _TRUE_STRINGS:
        return True
    if low in _FALSE_STRINGS:
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    """Everything one run needs, resolvable from a key=value file.

    Unit-suffixed keys: omega_z_hz is the trap frequency omega_z/2pi in Hz;
    lengths are meters, times seconds unless the suffix says otherwise
    (taus_us, free_flight_t1_us).  ``state`` uses kind:args strings, e.g.
    superposition:1,1  fock:2  even_cat:1.414  thermal:0.5  free_expansion:4
    (free-expansion argument in microseconds).
    """

    omega_z_hz: float = 80e3
    dz0_m: float = 22e-9
    dv0_mps: float = 11e-3
    cloud_rms_m: float = 60e-6
    be_time_s: float = 8.7e-3
    dim: int = 16
    taus_us: tuple = (0.0, 1.6, 3.2, 4.8)
    bin_half_count: int = 25
    bin_width_m: float | None = None
    grid_center_m: float = 0.0
    grid_margin: float = 3.5
    nbar: float | None = None
    weight_nbar: float = 1.0
    eta: float = 0.0
    seed: int = 0
    noisy_nbar: float | None = None
    state: str = "superposition:1,1"
    subtract_background: bool = True
    recenter: bool = True
    fixed_center_m: float | None = None
    gh_nodes: int = 32
    gl_nodes: int = 8
    max_iter: int = 20000
    grad_tol: float = 1e-9

    _FLOAT_KEYS = {
        "omega_z_hz", "dz0_m", "dv0_mps", "cloud_rms_m", "be_time_s",
        "bin_width_m", "grid_center_m", "grid_margin", "nbar", "weight_nbar",
        "eta", "noisy_nbar", "fixed_center_m", "grad_tol",
    }
    _INT_KEYS = {"dim", "bin_half_count", "seed", "gh_nodes", "gl_nodes", "max_iter"}
    _BOOL_KEYS = {"subtract_background", "recenter"}

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        kwargs = {}
        for key, text in raw.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            if key == "taus_us":
                kwargs[key] = tuple(float(t) for t in str(text).split(","))
            elif key in cls._INT_KEYS:
                kwargs[key] = int(str(text))
            elif key in cls._FLOAT_KEYS:
                kwargs[key] = float(str(text))
            elif key in cls._BOOL_KEYS:
                kwargs[key] = _parse_bool(str(text))
            else:
                kwargs[key] = str(text)
        return cls(**kwargs)

    # derived objects ------------------------------------------------------

    @property
    def omega_z(self) -> float:
        return 2.0 * math.pi * self.omega_z_hz

    def trap_config(self) -> TrapConfig:
        return TrapConfig(
            omega_z=self.omega_z,
            dz0=self.dz0_m,
            dv0=self.dv0_mps,
            cloud_rms=self.cloud_rms_m,
            be_time=self.be_time_s,
        )

    def space(self) -> FockSpace:
        return FockSpace(self.dim)

    def rotations(self) -> tuple:
        return tuple(self.omega_z * tau * 1e-6 for tau in self.taus_us)

    def grid(self, nbar_hint: float | None = None) -> BinGrid:
        if self.bin_width_m is not None:
            return BinGrid(
                center=self.grid_center_m,
                width=self.bin_width_m,
                half_count=self.bin_half_count,
            )
        nbar = self.nbar if self.nbar is not None else nbar_hint
        if nbar is None:
            raise ValueError(
                "cannot size the bin grid: set bin_width_m or nbar in the config"
            )
        return default_bin_grid(
            self.trap_config(), nbar,
            half_count=self.bin_half_count,
            margin=self.grid_margin,
            center=self.grid_center_m,
        )

    def state_spec(self) -> tuple:
        kind, _, arg = self.state.partition(":")
        return kind.strip(), arg.strip()


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        bare = line.split("#", 1)[0].strip()
        if not bare:
            continue
        if "=" not in bare:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, _, value = bare.partition("=")
        raw[key.strip()] = value.strip()
    return raw


def read_config(path) -> RunConfig:
    with open(path) as fh:
        return RunConfig.from_dict(parse_config_text(fh.read()))
