"""Batch command-line front end: run pipelines, emit CSV/JSON artifacts.

Subcommands
-----------
model     amplitude model -> moments -> coefficients -> evolution -> fits
frm       dense random-matrix ensemble -> per-seed and mean series, fits
spin      disordered-chain ensemble -> coefficients, histograms, series
fit       re-fit an existing coefficient or series CSV
b2-table  two-level form factor values on a time grid

Configuration precedence: command-line flags override the JSON file given
with ``--config``, which overrides built-in defaults.  Exit codes: 0 on
success, 2 for configuration errors, 3 for numerical failures.

All randomness flows from the master ``--seed``; ensemble member r uses
counter stream r, so member sets are reproducible and order-independent.
Identical resolved config and seed give byte-identical data files for any
``--threads``.  ``manifest.json`` (config hash, seeds, package versions,
wall time) is the only file exempt from byte identity.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path

import mpmath
import numpy as np
import scipy
from scipy.linalg import eigh_tridiagonal

from . import __version__
from .analysis import (
    coefficient_stats,
    detect_peak_plateau,
    ensemble_average,
    fit_bn_linear,
    fit_bn_power,
    fit_decay_exponent,
    fit_goe_profile,
)
from .errors import DomainError, NumericalError, WindowError
from .evolution import (
    SpreadComplexitySeries,
    evolve_amplitudes,
    long_time_average,
    spread_complexity,
    write_sidecar,
)
from .hamiltonians import (
    SpinChainSpec,
    build_spin_sector,
    domain_wall_state,
    sample_goe,
)
from .matrix_lanczos import householder_hessenberg, lanczos_tridiagonalize
from .models import eval_b2, model_from_dict, moments_of_model
from .moment_lanczos import LanczosCoefficients, moments_to_lanczos

AMPLITUDE_VARIANTS = ("gaussian", "semicircle", "interpolation",
                      "truncated_quadratic")
FIT_KINDS = ("power", "linear", "goe", "decay")

# saturation window: plateau statements need the grid to extend well past
# the inverse level spacing, so the auto grid ends at 20 Heisenberg times
HEISENBERG_MULTIPLE = 20.0

_COMMON_DEFAULTS = {
    "out": None,
    "seed": 0,
    "threads": 1,
    "tmax": None,
    "tpoints": 600,
    "log_grid": True,
}

DEFAULTS = {
    "model": {
        **_COMMON_DEFAULTS,
        "variant": None,
        "sigma0": None,
        "alpha": None,
        "gamma": None,
        "depth": 40,
        "formal": False,
        "precision_bits": None,
    },
    "frm": {
        **_COMMON_DEFAULTS,
        "dim": None,
        "realizations": 3,
        "depth": None,
    },
    "spin": {
        **_COMMON_DEFAULTS,
        "L": None,
        "h": None,
        "g": 1.0,
        "realizations": 1,
        "depth": None,
        "compare_smaller": False,
    },
    "fit": {
        "out": None,
        "coeffs": None,
        "series": None,
        "kind": None,
        "window": None,
        "origin": False,
        "envelope": False,
        "dim": None,
    },
    "b2-table": {
        "out": None,
        "times": "0,0.5,1,2,10",
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spreadq",
        description="Spread-complexity pipelines for quantum quenches")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, grid=True):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output directory")
        if grid:
            p.add_argument("--seed", type=int, help="master RNG seed (u64)")
            p.add_argument("--threads", type=int,
                           help="worker threads for ensemble members")
            p.add_argument("--tmax", type=float, help="largest grid time")
            p.add_argument("--tpoints", type=int, help="grid size")
            p.add_argument("--log-grid", dest="log_grid",
                           action=argparse.BooleanOptionalAction,
                           default=None,
                           help="logarithmic (default) or linear time grid")
            p.add_argument("--precision-bits", dest="precision_bits",
                           type=int, help="working precision floor for the "
                           "moment pipeline")

    p_model = sub.add_parser("model", help="closed-form amplitude models")
    add_common(p_model)
    p_model.add_argument("--variant", choices=AMPLITUDE_VARIANTS)
    p_model.add_argument("--sigma0", type=float)
    p_model.add_argument("--alpha", type=float)
    p_model.add_argument("--gamma", type=float)
    p_model.add_argument("--K", dest="depth", type=int,
                         help="Krylov depth of the coefficient table")
    p_model.add_argument("--formal", action=argparse.BooleanOptionalAction,
                         default=None,
                         help="continue through Hankel violations")

    p_frm = sub.add_parser("frm", help="dense random-matrix ensemble")
    add_common(p_frm)
    p_frm.add_argument("--dim", type=int, help="matrix dimension")
    p_frm.add_argument("--realizations", type=int,
                       help="number of ensemble members")
    p_frm.add_argument("--K", dest="depth", type=int,
                       help="Krylov depth (default: full dimension)")

    p_spin = sub.add_parser("spin", help="disordered-chain ensemble")
    add_common(p_spin)
    p_spin.add_argument("--L", type=int, help="even chain length")
    p_spin.add_argument("--h", type=float, help="disorder strength")
    p_spin.add_argument("--g", type=float, help="coupling quenched on at t=0")
    p_spin.add_argument("--realizations", type=int,
                        help="number of disorder realizations")
    p_spin.add_argument("--K", dest="depth", type=int,
                        help="Krylov depth (default: full sector)")
    p_spin.add_argument("--compare-smaller", dest="compare_smaller",
                        action=argparse.BooleanOptionalAction, default=None,
                        help="also run the L-2 chain into a subdirectory")

    p_fit = sub.add_parser("fit", help="re-fit existing CSV artifacts")
    add_common(p_fit, grid=False)
    p_fit.add_argument("--coeffs", help="coefficient CSV (n,a_n,b_n)")
    p_fit.add_argument("--series", help="series CSV (t,C,F)")
    p_fit.add_argument("--kind", choices=FIT_KINDS)
    p_fit.add_argument("--window", type=float, nargs=2,
                       metavar=("LO", "HI"))
    p_fit.add_argument("--origin", action=argparse.BooleanOptionalAction,
                       default=None, help="force the linear fit through 0")
    p_fit.add_argument("--envelope", action=argparse.BooleanOptionalAction,
                       default=None, help="fit per-segment maxima")
    p_fit.add_argument("--dim", type=int,
                       help="matrix dimension for the goe profile fit")

    p_b2 = sub.add_parser("b2-table", help="two-level form factor table")
    add_common(p_b2, grid=False)
    p_b2.add_argument("--times", help="comma-separated times")

    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise DomainError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DomainError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})")
    if not isinstance(data, dict):
        raise DomainError(f"{path}: config must be a JSON object")
    return data


def _resolve_config(args: argparse.Namespace) -> dict:
    defaults = DEFAULTS[args.command]
    config = dict(defaults)
    if getattr(args, "config", None):
        loaded = _load_config_file(args.config)
        for key, value in loaded.items():
            if key not in defaults:
                raise DomainError(
                    f"{args.config}: unknown config key {key!r} for "
                    f"command {args.command!r}")
            config[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if config.get("window") is not None:
        config["window"] = tuple(float(v) for v in config["window"])
    return config


def _require(config: dict, key: str, flag: str):
    if config.get(key) is None:
        raise DomainError(f"missing required flag {flag}")
    return config[key]


def _check_positive_int(name: str, value, minimum=1) -> int:
    if not isinstance(value, (int, np.integer)) or value < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, "
                          f"got {value}")
    return int(value)


def _check_seed(value) -> int:
    if not isinstance(value, (int, np.integer)) or not \
            0 <= value < 2**64:
        raise DomainError(f"--seed must be a u64, got {value}")
    return int(value)


def _auto_tmax(lc: LanczosCoefficients, sigma_ref: float) -> float:
    """Grid end covering saturation: HEISENBERG_MULTIPLE Heisenberg times."""
    if lc.K > 1:
        lam = eigh_tridiagonal(lc.a, lc.b, eigvals_only=True)
    else:
        lam = np.asarray(lc.a)
    lam = np.sort(lam)
    gaps = np.diff(lam)
    gaps = gaps[gaps > 1e-12 * max(1.0, abs(lam).max(initial=0.0))]
    if gaps.size == 0:
        return 1e3 / sigma_ref
    return HEISENBERG_MULTIPLE * 2.0 * math.pi / float(np.median(gaps))


def _time_grid(config: dict, sigma_ref: float, tmax_auto: float) \
        -> np.ndarray:
    tmax = config["tmax"] if config["tmax"] is not None else tmax_auto
    points = _check_positive_int("--tpoints", config["tpoints"], minimum=2)
    if not (math.isfinite(tmax) and tmax > 0):
        raise DomainError(f"--tmax must be positive, got {tmax}")
    if config["log_grid"]:
        tmin = 1e-2 / sigma_ref
        if tmax <= tmin:
            raise DomainError(
                f"--tmax {tmax} is below the smallest grid time {tmin:.3g}")
        return np.geomspace(tmin, tmax, points)
    return np.linspace(0.0, tmax, points)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_series_csv(path: Path, times, C, F) -> None:
    with open(path, "w") as fh:
        fh.write("t,C,F\n")
        for t, c, f in zip(times, C, F):
            fh.write(f"{t:.17g},{c:.17g},{f:.17g}\n")


def _write_ensemble_csv(path: Path, ens) -> None:
    with open(path, "w") as fh:
        fh.write("t,C,F,C_stderr,F_stderr\n")
        for row in zip(ens.times, ens.mean_C, ens.mean_F,
                       ens.stderr_C, ens.stderr_F):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _write_manifest(out: Path, command: str, config: dict, seeds: dict,
                    started: float) -> None:
    hashed = {k: v for k, v in sorted(config.items())
              if k not in ("out", "threads")}
    blob = json.dumps(hashed, sort_keys=True, separators=(",", ":"),
                      default=str)
    _write_json(out / "manifest.json", {
        "command": command,
        "config": {k: config[k] for k in sorted(config)},
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "seeds": seeds,
        "versions": {
            "python": platform.python_version(),
            "spreadq": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "mpmath": mpmath.__version__,
        },
        "wall_time_s": time.perf_counter() - started,
    })


def _evolve_series(lc: LanczosCoefficients, times: np.ndarray):
    amp = evolve_amplitudes(lc, times)
    return spread_complexity(amp)


def _peak_plateau_entry(series) -> dict:
    """Peak/plateau diagnostics; a too-short grid is reported, not fatal."""
    try:
        return detect_peak_plateau(series)
    except WindowError as exc:
        return {"skipped": str(exc)}


def _out_dir(config: dict, command: str) -> Path:
    out = Path(config["out"] if config["out"] is not None
               else f"{command}-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_model(config: dict) -> None:
    started = time.perf_counter()
    variant = _require(config, "variant", "--variant")
    depth = _check_positive_int("--K", config["depth"])
    params = {"variant": variant}
    for key in ("sigma0", "alpha", "gamma"):
        if config[key] is not None:
            params[key] = config[key]
    model = model_from_dict(params)
    moments = moments_of_model(model, 2 * depth,
                               precision_bits=config["precision_bits"])
    lc = moments_to_lanczos(moments, depth,
                            precision_bits=config["precision_bits"],
                            formal=config["formal"])

    out = _out_dir(config, "model")
    lc.to_csv(out / "coeffs.csv")
    fits: dict = {"depth": lc.K, "physical": lc.physical}
    if lc.physical:
        sigma_ref = float(lc.b[0]) if lc.K > 1 else max(abs(lc.a[0]), 1.0)
        times = _time_grid(config, sigma_ref, _auto_tmax(lc, sigma_ref))
        series = _evolve_series(lc, times)
        series.to_csv(out / "series.csv")
        avg = long_time_average(lc)
        write_sidecar(avg, lc.K, out / "averages.json")
        fits["b1"] = float(lc.b[0]) if lc.K > 1 else None
        # the default power-fit window (2, len(b)//2) needs 3 points
        if lc.K - 1 >= 8:
            fits["bn_power"] = fit_bn_power(lc).to_dict()
            if variant == "interpolation":
                fits["bn_linear_origin"] = fit_bn_linear(
                    lc, window=(1, lc.K - 1),
                    through_origin=True).to_dict()
        fits["long_time_average"] = {"C_bar": avg.c_bar, "F_bar": avg.f_bar}
        fits["peak_plateau"] = _peak_plateau_entry(series)
    else:
        fits["note"] = ("formal coefficient set: negative b_n^2 carries "
                        "its sign into b_n and defines no Hermitian "
                        "evolution, so series and fits are skipped")
        fits["violation_depth"] = lc.violation_depth
    _write_json(out / "fits.json", fits)
    _write_manifest(out, "model", config,
                    {"master": config["seed"], "streams": []}, started)


def _ensemble_pipeline(config: dict, out: Path, build_lc, dim: int):
    """Shared frm/spin flow: member coefficients, series, mean profiles.

    ``build_lc(stream)`` returns the coefficient set of one member.  The
    time grid is fixed by member 0 before the pool starts, so results do
    not depend on ``--threads``.
    """
    realizations = _check_positive_int("--realizations",
                                       config["realizations"])
    threads = _check_positive_int("--threads", config["threads"])
    streams = list(range(realizations))
    coefficient_sets: dict[int, LanczosCoefficients] = {}

    lc0 = build_lc(0)
    coefficient_sets[0] = lc0
    if lc0.K < 2:
        raise DomainError("member 0 has Krylov dimension 1; nothing to fit")
    sigma_ref = float(lc0.b[0])
    times = _time_grid(config, sigma_ref, _auto_tmax(lc0, sigma_ref))

    def run(stream: int):
        lc = coefficient_sets.get(stream)
        if lc is None:
            lc = build_lc(stream)
            coefficient_sets[stream] = lc
        return _evolve_series(lc, times)

    ens = ensemble_average(run, streams, max_workers=threads)

    # ensemble rows are ordered by stream, so member series come for free
    for stream in streams:
        coefficient_sets[stream].to_csv(out / f"coeffs_{stream:04d}.csv")
        _write_series_csv(out / f"series_{stream:04d}.csv", ens.times,
                          ens.members_C[stream], ens.members_F[stream])

    depth_min = min(coefficient_sets[s].K for s in streams)
    mean_a = np.mean([coefficient_sets[s].a[:depth_min] for s in streams],
                     axis=0)
    mean_b = np.mean([coefficient_sets[s].b[:depth_min - 1] for s in streams],
                     axis=0)
    mean_lc = LanczosCoefficients(mean_a, mean_b)
    mean_lc.to_csv(out / "coeffs_mean.csv")
    _write_ensemble_csv(out / "ensemble.csv", ens)

    averages = [long_time_average(coefficient_sets[s]) for s in streams]
    mean_series = SpreadComplexitySeries(times=ens.times, C=ens.mean_C,
                                         F=ens.mean_F)
    return (streams, coefficient_sets, mean_lc, mean_series, {
        "C_bar": float(np.mean([a.c_bar for a in averages])),
        "F_bar": float(np.mean([a.f_bar for a in averages])),
    })


def _cmd_frm(config: dict) -> None:
    started = time.perf_counter()
    dim = _check_positive_int("--dim", _require(config, "dim", "--dim"),
                              minimum=2)
    seed = _check_seed(config["seed"])
    depth = config["depth"]
    if depth is not None:
        depth = _check_positive_int("--K", depth)
        if depth > dim:
            raise DomainError(f"--K {depth} exceeds the dimension {dim}")

    def build_lc(stream: int) -> LanczosCoefficients:
        sector = sample_goe(dim, seed, stream=stream)
        psi0 = np.zeros(dim)
        psi0[0] = 1.0
        if depth is None:
            return householder_hessenberg(sector.H, psi0)
        return lanczos_tridiagonalize(sector.H, psi0, depth)

    out = _out_dir(config, "frm")
    streams, sets, mean_lc, mean_series, avg = _ensemble_pipeline(
        config, out, build_lc, dim)

    profile_window = (1, min(mean_lc.K - 1, dim - 20))
    fits = {
        "b1_mean": float(mean_lc.b[0]),
        "goe_profile": fit_goe_profile(mean_lc, dim,
                                       window=profile_window).to_dict(),
        "peak_plateau": _peak_plateau_entry(mean_series),
        "long_time_average": avg,
        "realizations": len(streams),
    }
    _write_json(out / "fits.json", fits)
    _write_manifest(out, "frm", config,
                    {"master": seed, "streams": streams}, started)


def _cmd_spin(config: dict) -> None:
    started = time.perf_counter()
    L = _require(config, "L", "--L")
    h = _require(config, "h", "--h")
    seed = _check_seed(config["seed"])
    spec = SpinChainSpec(L=L, h=float(h), g=float(config["g"]), seed=seed)
    depth = config["depth"]
    if depth is not None:
        depth = _check_positive_int("--K", depth)
        if depth > spec.dimension:
            raise DomainError(f"--K {depth} exceeds the sector "
                              f"dimension {spec.dimension}")

    def build_lc(stream: int) -> LanczosCoefficients:
        sector = build_spin_sector(spec, stream=stream)
        psi0 = domain_wall_state(spec)
        if depth is None:
            return householder_hessenberg(sector.H, psi0)
        return lanczos_tridiagonalize(sector.H, psi0, depth)

    out = _out_dir(config, "spin")
    streams, sets, mean_lc, mean_series, avg = _ensemble_pipeline(
        config, out, build_lc, spec.dimension)

    stats = coefficient_stats({"run": [sets[s] for s in streams]})["run"]
    stats.hist_a.to_csv(out / "hist_a.csv")
    stats.hist_b.to_csv(out / "hist_b.csv")
    _write_json(out / "variances.json", {
        "var_a": stats.var_a,
        "var_b": stats.var_b,
        "realizations": stats.realizations,
        "L": spec.L,
        "h": spec.h,
        "g": spec.g,
    })
    fits = {
        "b1_mean": float(mean_lc.b[0]),
        "peak_plateau": _peak_plateau_entry(mean_series),
        "long_time_average": avg,
        "realizations": len(streams),
    }
    _write_json(out / "fits.json", fits)
    _write_manifest(out, "spin", config,
                    {"master": seed, "streams": streams}, started)

    if config["compare_smaller"]:
        if spec.L - 2 < 2:
            raise DomainError(f"no smaller chain below L={spec.L}")
        sub_config = dict(config)
        sub_config.update({"L": spec.L - 2, "compare_smaller": False,
                           "out": str(out / f"compare-L{spec.L - 2}")})
        _cmd_spin(sub_config)


def _load_series_csv(path: str):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError:
        raise DomainError(f"series file not found: {path}")
    except ValueError as exc:
        raise DomainError(f"{path}: not a t,C,F table ({exc})")
    if data.shape[1] != 3:
        raise DomainError(f"{path}: expected 3 columns, got {data.shape[1]}")
    return data[:, 0], data[:, 1], data[:, 2]


def _cmd_fit(config: dict) -> None:
    started = time.perf_counter()
    kind = _require(config, "kind", "--kind")
    if (config["coeffs"] is None) == (config["series"] is None):
        raise DomainError("give exactly one of --coeffs or --series")
    window = config["window"]

    if kind == "decay":
        if config["series"] is None:
            raise DomainError("--kind decay fits a --series file")
        if window is None:
            raise DomainError("--kind decay needs --window T_LO T_HI")
        t, _, f = _load_series_csv(config["series"])
        result = fit_decay_exponent((t, f), window=window,
                                    envelope=bool(config["envelope"]))
        source = config["series"]
    else:
        if config["coeffs"] is None:
            raise DomainError(f"--kind {kind} fits a --coeffs file")
        try:
            lc = LanczosCoefficients.from_csv(config["coeffs"])
        except OSError:
            raise DomainError(f"coefficient file not found: "
                              f"{config['coeffs']}")
        if window is not None:
            window = (int(window[0]), int(window[1]))
        if kind == "power":
            result = fit_bn_power(lc, window=window)
        elif kind == "linear":
            result = fit_bn_linear(lc, window=window,
                                   through_origin=bool(config["origin"]))
        else:
            dim = _check_positive_int(
                "--dim", _require(config, "dim", "--dim"), minimum=2)
            result = fit_goe_profile(lc, dim, window=window)
        source = config["coeffs"]

    out = _out_dir(config, "fit")
    _write_json(out / "fits.json",
                {"kind": kind, "source": str(source),
                 "fit": result.to_dict()})
    _write_manifest(out, "fit", config, {"master": None, "streams": []},
                    started)


def _cmd_b2_table(config: dict) -> None:
    started = time.perf_counter()
    raw = config["times"]
    if isinstance(raw, str):
        try:
            times = [float(tok) for tok in raw.split(",") if tok.strip()]
        except ValueError:
            raise DomainError(f"--times must be comma-separated numbers, "
                              f"got {raw!r}")
    else:
        times = [float(v) for v in raw]
    if not times:
        raise DomainError("--times is empty")
    values = eval_b2(np.asarray(times))

    out = _out_dir(config, "b2-table")
    with open(out / "b2.csv", "w") as fh:
        fh.write("t,B2\n")
        for t, v in zip(times, np.atleast_1d(values)):
            fh.write(f"{t:.17g},{v:.17g}\n")
    _write_manifest(out, "b2-table", config,
                    {"master": None, "streams": []}, started)


_HANDLERS = {
    "model": _cmd_model,
    "frm": _cmd_frm,
    "spin": _cmd_spin,
    "fit": _cmd_fit,
    "b2-table": _cmd_b2_table,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args)
        _HANDLERS[args.command](config)
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error in {args.command!r} "
              f"[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
