"""b-sweeps, Hölder-exponent fits, the resolvent comparison and the alpha = 0 chain."""

import dataclasses
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .certificate import admissible_window, build_partition, defect
from .errors import ConfigError
from .models import (
    FieldSpec,
    MagneticField,
    ModelSpec,
    build_harper,
    build_mag_schrodinger,
    field_phase,
    harper_family,
)
from .operators import KernelOperator, PhaseFunction, truncate, twist, uniformity_defect
from .spectral import eigvalsh, hausdorff, op_norm

__all__ = [
    "ZERO_TOL",
    "QUANTITIES",
    "SweepTable",
    "HolderFit",
    "Alpha0Row",
    "Alpha0Report",
    "model_hash",
    "log_grid",
    "check_admissible",
    "harper_operator",
    "hausdorff_sweep",
    "sweep_hausdorff",
    "sweep_defect",
    "fit_holder",
    "theorem2_compare",
    "alpha0_pipeline",
    "format_float",
]

ZERO_TOL = 1e-14
QUANTITIES = ("d_H", "norm_S", "resolvent_gap", "rb_gap")


def format_float(v) -> str:
    return format(float(v), ".17g")


def _canonical(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _canonical(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def model_hash(*parts) -> str:
    """First 16 hex digits of the sha256 of the canonical JSON of ``parts``."""
    text = json.dumps(_canonical(list(parts)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SweepTable:
    """Rows ``(b, value)`` of one swept quantity, ``b`` strictly increasing."""

    b: np.ndarray
    values: np.ndarray
    quantity: str
    model_hash: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.shape != v.shape or b.ndim != 1:
            raise ValueError("b and values must be 1D arrays of equal length")
        if np.any(np.diff(b) <= 0):
            raise ValueError("b must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("sweep values must be finite and nonnegative")
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.b)

    def stamp(self) -> dict:
        out = {"quantity": self.quantity, "model_hash": self.model_hash}
        out.update(self.metadata)
        return out

    def to_csv(self, path, **extra):
        """Write ``# key=value`` stamp lines, then ``b,value`` rows at 17 digits."""
        stamp = self.stamp()
        stamp.update(extra)
        lines = [f"# {k}={stamp[k]}" for k in sorted(stamp)]
        lines.append("b,value")
        lines += [f"{format_float(b)},{format_float(v)}" for b, v in zip(self.b, self.values)]
        Path(path).write_text("\n".join(lines) + "\n")
        return Path(path)

    @classmethod
    def from_csv(cls, path):
        meta, rows = {}, []
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif line and line != "b,value":
                b, v = line.split(",")
                rows.append((float(b), float(v)))
        quantity = meta.pop("quantity")
        mh = meta.pop("model_hash", "")
        arr = np.array(rows).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], quantity, mh, meta)


@dataclass(frozen=True)
class HolderFit:
    """Log-log least-squares fit ``value ~ C b^slope`` and the sup-ratio test."""

    slope: float
    log_constant: float
    r_squared: float
    sup_ratio: float
    ratio_stable: bool
    beta_ref: float
    n_rows: int = 0

    @property
    def constant(self) -> float:
        return float(np.exp(self.log_constant))

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "constant": self.constant,
            "r2": self.r_squared,
            "sup_ratio": self.sup_ratio,
            "ratio_stable": self.ratio_stable,
            "beta_ref": self.beta_ref,
        }

    def to_json(self, path, **stamp):
        payload = self.to_dict()
        payload.update(stamp)
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        return Path(path)


def fit_holder(table, beta_ref: float = 0.5) -> HolderFit:
    """Fit ``log value`` against ``log b`` over rows with ``b > 0`` and ``value > 1e-14``.

    ``ratio_stable`` holds when the largest ``value / b^beta_ref`` over the
    smallest third of the kept ``b`` is at most twice the largest over the
    biggest third.

    Examples
    --------
    >>> b = np.logspace(-4, -1, 8)
    >>> fit = fit_holder(SweepTable(b, 3 * b**0.5, "d_H"))
    >>> round(fit.slope, 10), round(fit.constant, 10)
    (0.5, 3.0)
    """
    b = np.asarray(table.b, dtype=float)
    v = np.asarray(table.values, dtype=float)
    keep = (b > 0) & (v > ZERO_TOL)
    if keep.sum() < 4:
        raise ValueError(f"a Hölder fit needs at least 4 rows with value > {ZERO_TOL:g}, got {keep.sum()}")
    b, v = b[keep], v[keep]
    x, y = np.log(b), np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if sst == 0 else float(np.clip(1 - np.sum(resid**2) / sst, 0.0, 1.0))
    ratios = v / b**beta_ref
    k = max(1, len(b) // 3)
    stable = bool(ratios[:k].max() <= 2 * ratios[-k:].max())
    return HolderFit(float(slope), float(intercept), r2, float(ratios.max()), stable, float(beta_ref), len(b))


def log_grid(lo: float, hi: float, count: Optional[int] = None, per_decade: float = 6.0):
    """Log-spaced ``b`` values; by default 6 per decade (12 per decade pair)."""
    if not 0 < lo < hi:
        raise ConfigError(f"need 0 < b_min < b_max, got {lo:g}, {hi:g}")
    if count is None:
        count = max(2, int(round(per_decade * np.log10(hi / lo))))
    return np.logspace(np.log10(lo), np.log10(hi), int(count))


def check_admissible(grid, b_grid):
    """Raise :class:`ConfigError` unless every nonzero ``|b|`` lies in the partition window."""
    lo, hi = admissible_window(grid)
    for b in b_grid:
        if b != 0 and not (lo * (1 - 1e-12) <= abs(b) <= hi):
            raise ConfigError(
                f"b={b:g} outside the admissible window [{lo:.6g}, {hi:g}] = [(8/L)^2, 1] for L={grid.L:g}"
            )


def _ascending(b_grid):
    b = np.asarray(b_grid, dtype=float).ravel()
    if b.size == 0:
        raise ConfigError("empty b grid")
    if np.any(np.diff(b) <= 0):
        raise ConfigError("b grid must be strictly increasing")
    return b


def _pmap(fn, items, workers):
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(fn, items))


def harper_operator(spec: ModelSpec, field=None):
    """``(H, phi)`` for a Harper-like model.

    ``field`` may be a :class:`FieldSpec` (base intensity pre-twisted), a
    :class:`MagneticField`, a :class:`PhaseFunction` or ``None`` (the 1D default).
    """
    if isinstance(field, FieldSpec):
        return harper_family(spec, field)
    if isinstance(field, PhaseFunction):
        return build_harper(spec, phase=field)
    if isinstance(field, MagneticField) or field is None:
        return build_harper(spec, field)
    raise TypeError(f"unsupported field description {type(field).__name__}")


def hausdorff_sweep(H: KernelOperator, phi: PhaseFunction, b_grid, *, base_b=0.0, workers=1, model_hash=""):
    """``d_H(sigma(H_{base_b + b}), sigma(H_{base_b}))`` for each ``b``."""
    b = _ascending(b_grid)
    Phi = phi.matrix(H.grid.points)
    base = twist(H, Phi, base_b)
    ref = eigvalsh(base)

    def one(bi):
        if bi == 0:
            return 0.0
        return hausdorff(eigvalsh(twist(H, Phi, base_b + bi)), ref)

    vals = _pmap(one, b, workers)
    return SweepTable(b, vals, "d_H", model_hash, {"base_b": format_float(base_b)})


def sweep_hausdorff(spec: ModelSpec, field, b_grid, *, workers=1, base_b=0.0, model_hash=""):
    """Hausdorff distances ``d_H(sigma(twist(H, phi, b)), sigma(H))`` over ``b_grid``.

    ``b = 0`` is allowed; other values must lie in the partition window.
    """
    check_admissible(spec.grid, b_grid)
    H, phi = harper_operator(spec, field)
    return hausdorff_sweep(H, phi, b_grid, base_b=base_b, workers=workers, model_hash=model_hash)


def sweep_defect(
    spec: ModelSpec,
    field,
    z,
    b_grid,
    *,
    workers=1,
    model_hash="",
    inner_fraction=None,
    reports=None,
):
    """Rows ``(b, ||S(z)||)`` of the partition defect over ``b_grid``.

    Pass a list as ``reports`` to collect the full :class:`DefectReport` rows.
    """
    b = _ascending(b_grid)
    check_admissible(spec.grid, b)
    H, phi = harper_operator(spec, field)
    spectrum = eigvalsh(H)
    Phi = phi.matrix(H.grid.points)

    def one(bi):
        P = build_partition(spec.grid, abs(bi)) if bi != 0 else None
        return defect(
            H, phi, bi, z, P, eps=spec.epsilon, spectrum=spectrum, phase_matrix=Phi,
            inner_fraction=inner_fraction,
        )

    rows = _pmap(one, b, workers)
    if reports is not None:
        reports.extend(rows)
    z = complex(z)
    meta = {"re_z": format_float(z.real), "im_z": format_float(z.imag)}
    return SweepTable(b, [r.norm_S for r in rows], "norm_S", model_hash, meta)


def theorem2_compare(
    spec: ModelSpec,
    B0: MagneticField,
    frak_b: MagneticField,
    a_shift: Optional[float],
    b_grid,
    *,
    workers=1,
    model_hash="",
):
    """Compare the resolvent of ``B0 + b frak_b`` with the twisted resolvent of ``B0``.

    ``R = H^{-1}`` and ``R' = H'^{-1}`` where both Hamiltonians already carry
    ``a_shift``; ``R_b = twist(R, phi, b)`` with ``phi`` the line phase of the
    transverse gauge of ``frak_b``.  Returns two tables:
    ``d_H(sigma(R), sigma(R'))`` and ``||R' - R_b||``.
    """
    b = _ascending(b_grid)
    H = build_mag_schrodinger(spec, B0, a_shift)
    R = KernelOperator.from_matrix(H.grid, np.linalg.inv(H.matrix))
    R = KernelOperator(R.grid, 0.5 * (R.entries + R.entries.conj().T), hermitian=True)
    sigma_R = eigvalsh(R)
    Phi = field_phase(frak_b).matrix(H.grid.points)

    def one(bi):
        if bi == 0:
            return 0.0, 0.0
        Hp = build_mag_schrodinger(spec, B0.plus(frak_b, bi), a_shift)
        Rp = np.linalg.inv(Hp.matrix)
        Rp = 0.5 * (Rp + Rp.conj().T)
        Rp_op = KernelOperator.from_matrix(H.grid, Rp, hermitian=True)
        Rb = twist(R, Phi, bi)
        return hausdorff(sigma_R, eigvalsh(Rp_op)), op_norm(Rp - Rb.matrix)

    out = _pmap(one, b, workers)
    gap = SweepTable(b, [o[0] for o in out], "resolvent_gap", model_hash)
    rb = SweepTable(b, [o[1] for o in out], "rb_gap", model_hash)
    return gap, rb


@dataclass(frozen=True)
class Alpha0Row:
    b: float
    M: float
    u: float
    d_full: float
    d_trunc: float

    @property
    def bound(self) -> float:
        return 2 * self.u + self.d_trunc

    @property
    def holds(self) -> bool:
        return self.d_full <= self.bound + 1e-8


@dataclass(frozen=True)
class Alpha0Report:
    """Triangle chain ``d_H(H_b, H) <= 2 u(M) + d_H((H_b)_M, H_M)`` over a ``(b, M)`` grid."""

    rows: tuple
    u: dict
    model_hash: str = ""

    @property
    def all_hold(self) -> bool:
        return all(r.holds for r in self.rows)

    @property
    def u_monotone(self) -> bool:
        us = [self.u[M] for M in sorted(self.u)]
        return all(b <= a for a, b in zip(us, us[1:]))

    def to_csv(self, path, **stamp):
        stamp = dict(stamp, model_hash=self.model_hash, quantity="alpha0")
        lines = [f"# {k}={stamp[k]}" for k in sorted(stamp)]
        lines.append("b,M,u,d_full,d_trunc,bound,holds")
        for r in self.rows:
            nums = [r.b, r.M, r.u, r.d_full, r.d_trunc, r.bound]
            lines.append(",".join(format_float(x) for x in nums) + ("," + ("true" if r.holds else "false")))
        Path(path).write_text("\n".join(lines) + "\n")
        return Path(path)


def alpha0_pipeline(spec: ModelSpec, field, b_grid, M_grid: Sequence[float], *, workers=1, model_hash=""):
    """Check the truncation chain used when only uniform off-diagonal decay is available.

    ``u(M) = ||H - H_M||_{1,0}`` bounds both ``||H - H_M||`` and
    ``||H_b - (H_b)_M||`` (twisting preserves kernel moduli), so Weyl's
    inequality gives ``d_H(H_b, H) <= 2 u(M) + d_H((H_b)_M, H_M)``.
    """
    b = _ascending(b_grid)
    Ms = sorted(float(M) for M in M_grid)
    H, phi = harper_operator(spec, field)
    Phi = phi.matrix(H.grid.points)
    sigma = eigvalsh(H)
    trunc = {M: truncate(H, M) for M in Ms}
    u = {M: uniformity_defect(H, M) for M in Ms}
    sigma_trunc = {M: eigvalsh(trunc[M]) for M in Ms}

    def one(bi):
        Hb = twist(H, Phi, bi)
        d_full = hausdorff(eigvalsh(Hb), sigma)
        out = []
        for M in Ms:
            d_trunc = hausdorff(eigvalsh(twist(trunc[M], Phi, bi)), sigma_trunc[M])
            out.append(Alpha0Row(float(bi), M, u[M], d_full, d_trunc))
        return out

    rows = [r for chunk in _pmap(one, b, workers) for r in chunk]
    return Alpha0Report(tuple(rows), u, model_hash)
