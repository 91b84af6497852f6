"""Batch front-end: ``magspec spectrum|sweep|certify --config FILE``.

Exit codes are 0 on success, 2 for configuration problems and 3 for
numerical failures.  Human-readable messages go to stderr; stdout carries
only the paths of written files.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    alpha0_pipeline,
    check_admissible,
    fit_holder,
    harper_operator,
    log_grid,
    model_hash,
    sweep_defect,
    sweep_hausdorff,
    theorem2_compare,
)
from .certificate import build_partition, defect, write_defect_csv
from .errors import ConfigError, NumericalError, SpectrumProximityError
from .models import build_mag_schrodinger, model_from_dict, tomllib
from .operators import twist
from .spectral import eigvalsh, save_spectrum

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
SWEEP_QUANTITIES = ("hausdorff", "defect", "theorem2", "alpha0")
DEFAULT_Z_OFFSETS = ((-1.0, 0.0), (-2.0, 0.0), (-4.0, 0.0), (-1.0, 1.0))


class RunConfig:
    """Parsed run configuration.

    Holds the model and field blocks, the ``[sweep]`` and ``[certify]``
    tables, the output settings and the seed.  ``config_hash`` covers
    everything except ``[output]``, so moving the output directory does
    not change the stamp.
    """

    def __init__(self, data: dict, source="<dict>"):
        if not isinstance(data, dict):
            raise ConfigError("config must be a table")
        if "model" not in data:
            raise ConfigError(f"{source}: missing [model] block")
        model = dict(data["model"])
        if "field" in data:
            model["field"] = data["field"]
        self.data = data
        self.source = str(source)
        self.spec, self.fspec = model_from_dict(model)
        self.sweep = dict(data.get("sweep", {}))
        self.certify = dict(data.get("certify", {}))
        output = dict(data.get("output", {}))
        self.out_dir = Path(output.get("directory", "out"))
        self.formats = tuple(output.get("formats", ("csv", "json")))
        try:
            self.seed = int(data.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError("seed must be an integer") from None
        hashed = {k: v for k, v in data.items() if k != "output"}
        self.config_hash = model_hash(hashed)
        self.model_hash = model_hash(self.spec, self.fspec)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        return cls(data, path)

    def stamp(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed, "version": __version__}

    def b_grid(self):
        """``b`` values from ``sweep.b`` or ``{b_min, b_max, b_count}``, plus 0 if ``include_zero``."""
        s = self.sweep
        if "b" in s:
            b = [float(v) for v in s["b"]]
        elif "b_min" in s and "b_max" in s:
            count = s.get("b_count")
            b = list(log_grid(float(s["b_min"]), float(s["b_max"]), None if count is None else int(count)))
        else:
            raise ConfigError("[sweep] needs either b = [...] or b_min and b_max")
        if s.get("include_zero", False) and 0.0 not in b:
            b = [0.0] + b
        return np.asarray(sorted(b), dtype=float)

    def z_points(self, spectrum_min: float):
        """Absolute ``z`` from ``z``, or offsets from ``min sigma(H)`` from ``z_offsets``."""
        return _z_from_table(self.sweep, spectrum_min)


def _parse_z(item):
    if isinstance(item, (int, float)):
        return complex(item)
    try:
        parts = [float(p) for p in (item.split(",") if isinstance(item, str) else item)]
    except (TypeError, ValueError):
        raise ConfigError(f"cannot read a complex number from {item!r}") from None
    if len(parts) == 1:
        return complex(parts[0])
    if len(parts) == 2:
        return complex(parts[0], parts[1])
    raise ConfigError(f"cannot read a complex number from {item!r}")


def _z_from_table(table, spectrum_min):
    try:
        if "z" in table:
            return [_parse_z(z) for z in table["z"]]
        offsets = table.get("z_offsets", DEFAULT_Z_OFFSETS)
        return [spectrum_min + _parse_z(o) for o in offsets]
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid z list: {exc}") from None


def _out_dir(cfg, override):
    out = Path(override) if override else cfg.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".magspec-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc.strerror}") from None
    return out


def _is_harper(cfg):
    return cfg.spec.kind in ("harper", "longrange")


def _fit_stamp(cfg, quantity):
    return dict(cfg.stamp(), model_hash=cfg.model_hash, quantity=quantity)


def cmd_spectrum(cfg: RunConfig, b: float, out: Path):
    """Write the spectrum of the model at field increment ``b`` as JSON."""
    spec, fspec = cfg.spec, cfg.fspec
    if _is_harper(cfg):
        check_admissible(spec.grid, [b])
        H, phi = harper_operator(spec, fspec)
        Hb = twist(H, phi, b)
    else:
        dim = spec.grid.dim
        Hb = build_mag_schrodinger(spec, fspec.base_field(dim).plus(fspec.perturbation(dim), b))
    S = eigvalsh(Hb)
    path = out / f"spectrum_b{float(b)!r}.json"
    save_spectrum(path, S, b=float(b), n=len(S), model_hash=cfg.model_hash, **cfg.stamp())
    return [path]


def _fit_and_write(cfg, table, out, name, beta_ref):
    paths = []
    if "csv" in cfg.formats:
        paths.append(table.to_csv(out / f"sweep_{name}.csv", **cfg.stamp()))
    if "json" in cfg.formats:
        try:
            fit = fit_holder(table, beta_ref)
        except ValueError as exc:
            raise NumericalError(f"{name}: {exc}") from None
        paths.append(fit.to_json(out / f"fit_{name}.json", **_fit_stamp(cfg, table.quantity)))
    return paths


def _need_fit_rows(b_grid):
    if np.sum(np.asarray(b_grid) > 0) < 4:
        raise ConfigError("a sweep needs at least 4 positive b values for the Hölder fit")


def cmd_sweep(cfg: RunConfig, out: Path, workers: int = 1):
    """Run ``sweep.quantity`` over the configured b grid; write CSV tables and fit JSON."""
    quantity = cfg.sweep.get("quantity", "hausdorff")
    if quantity not in SWEEP_QUANTITIES:
        raise ConfigError(f"sweep.quantity must be one of {SWEEP_QUANTITIES}, got {quantity!r}")
    spec, fspec = cfg.spec, cfg.fspec
    b_grid = cfg.b_grid()
    mh = cfg.model_hash
    if quantity == "theorem2":
        if spec.kind != "mag_schrodinger":
            raise ConfigError("quantity 'theorem2' needs kind = 'mag_schrodinger'")
        _need_fit_rows(b_grid)
        dim = spec.grid.dim
        gap, rb = theorem2_compare(
            spec, fspec.base_field(dim), fspec.perturbation(dim), None, b_grid, workers=workers, model_hash=mh
        )
        beta = float(cfg.sweep.get("beta_ref", 0.5))
        return _fit_and_write(cfg, gap, out, "resolvent_gap", beta) + _fit_and_write(cfg, rb, out, "rb_gap", 1.0)
    if not _is_harper(cfg):
        raise ConfigError(f"quantity {quantity!r} needs kind 'harper' or 'longrange'")
    check_admissible(spec.grid, b_grid)
    if quantity == "alpha0":
        M_grid = cfg.sweep.get("M")
        if not M_grid:
            raise ConfigError("quantity 'alpha0' needs sweep.M = [...]")
        report = alpha0_pipeline(spec, fspec, b_grid, [float(m) for m in M_grid], workers=workers, model_hash=mh)
        paths = [report.to_csv(out / "alpha0.csv", **cfg.stamp())]
        if "json" in cfg.formats:
            summary = dict(_fit_stamp(cfg, "alpha0"), all_hold=report.all_hold, u_monotone=report.u_monotone)
            p = out / "alpha0_summary.json"
            p.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
            paths.append(p)
        return paths
    _need_fit_rows(b_grid)
    if quantity == "hausdorff":
        table = sweep_hausdorff(spec, fspec, b_grid, workers=workers, model_hash=mh)
        beta = float(cfg.sweep.get("beta_ref", min(0.5, spec.alpha / 2)))
        return _fit_and_write(cfg, table, out, "d_H", beta)
    H, _ = harper_operator(spec, fspec)
    z = cfg.z_points(eigvalsh(H).min)[0]
    table = sweep_defect(spec, fspec, z, b_grid, workers=workers, model_hash=mh)
    beta = float(cfg.sweep.get("beta_ref", spec.epsilon / 2))
    return _fit_and_write(cfg, table, out, "norm_S", beta)


def cmd_certify(cfg: RunConfig, b: float, z_list, out: Path):
    """One DefectReport row per ``z``; points on the spectrum get an error status."""
    spec, fspec = cfg.spec, cfg.fspec
    if not _is_harper(cfg):
        raise ConfigError("certify needs kind 'harper' or 'longrange'")
    check_admissible(spec.grid, [b])
    H, phi = harper_operator(spec, fspec)
    sigma = eigvalsh(H)
    if not z_list:
        z_list = _z_from_table(cfg.certify, sigma.min)
        n_random = int(cfg.certify.get("z_sample", 0))
        if n_random:
            rng = np.random.default_rng(cfg.seed)
            pad = float(cfg.certify.get("z_pad", 2.0))
            re = rng.uniform(sigma.min - pad, sigma.max + pad, n_random)
            im = rng.uniform(-pad, pad, n_random)
            z_list = list(z_list) + [complex(a, c) for a, c in zip(re, im)]
    P = build_partition(spec.grid, abs(b)) if b != 0 else None
    Phi = phi.matrix(spec.grid.points)
    rows = []
    for z in z_list:
        try:
            rows.append(defect(H, phi, b, z, P, eps=spec.epsilon, spectrum=sigma, phase_matrix=Phi))
        except SpectrumProximityError as exc:
            print(f"z={z}: {exc}", file=sys.stderr)
            rows.append((b, z, "error: z too close to the spectrum"))
    header = [f"{k}={v}" for k, v in sorted(dict(cfg.stamp(), model_hash=cfg.model_hash).items())]
    return [write_defect_csv(out / f"certify_b{float(b)!r}.csv", rows, header)]


def build_parser():
    parser = argparse.ArgumentParser(prog="magspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"magspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML or JSON run configuration")
        p.add_argument("--out", help="output directory (default: [output] directory)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("spectrum", help="write the spectrum at one b")
    common(p)
    p.add_argument("--b", type=float, default=0.0)
    p = sub.add_parser("sweep", help="run the configured b sweep")
    common(p)
    p.add_argument("--workers", type=int, default=None)
    p = sub.add_parser("certify", help="defect certificates at one b for a list of z")
    common(p)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--z", action="append", default=None, metavar="RE[,IM]", help="spectral parameter (repeatable)")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = _out_dir(cfg, args.out)
    if args.command == "spectrum":
        return cmd_spectrum(cfg, args.b, out)
    if args.command == "sweep":
        workers = args.workers if args.workers is not None else int(cfg.sweep.get("workers", 1))
        if workers < 1:
            raise ConfigError("--workers must be at least 1")
        return cmd_sweep(cfg, out, workers)
    b = args.b if args.b is not None else cfg.certify.get("b")
    if b is None:
        raise ConfigError("certify needs --b or [certify] b")
    z_list = [_parse_z(z) for z in args.z] if args.z else None
    return cmd_certify(cfg, float(b), z_list, out)


def main(argv=None) -> int:
    try:
        paths = run(argv)
    except ConfigError as exc:
        print(f"magspec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"magspec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
