"""Command-line interface: config ingestion, dispatch, CSV/JSON emission.

Configs are flat ``section.key = value`` text files ('#' starts a comment).
Every emitted file embeds the full effective configuration, and payload
sections are byte-reproducible for a fixed config and seed.  Exit statuses:
0 success, 2 config error, 3 ill-conditioned design, 4 truncation/domain
error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .criteria import criteria_from_moments, criteria_scan
from .dynamics import ModelParams, MotionalEvolution
from .errors import ConfigError, DomainError, IllConditionedDesign, TruncationError
from .fock import Truncation, moments_from_rho, trace_distance
from .measurement import (
    VibronicState,
    cf_matrix_from_wigner,
    cf_moment_set,
    displace_vibronic,
    extract_rho_nn,
    moments_from_cf,
    p_matrix_series,
    schedule_family,
    wigner_grid,
)
from .oracle import oracle_check
from .phasespace import FilterSpec, PhaseGrid, p_omega_map
from .errors import ConvergenceWarning  # noqa: F401  (re-export convenience)

__all__ = ["RunConfig", "load_config", "main"]


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_complex(text: str) -> complex:
    return complex(text.strip().replace(" ", ""))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, complex):
        return f"{value.real:.17g}{value.imag:+.17g}j"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


#: key -> (parser, default).  The echo of a run lists every key.
SCHEMA: dict[str, tuple] = {
    "model.eta": (float, 0.3),
    "model.delta_phi": (float, 0.0),
    "model.k_sideband": (int, 0),
    "model.delta_omega": (float, 20.0),
    "model.nu": (float, 5000.0),
    "model.omega21": (float, 1e5),
    "model.kappa_phase": (float, 0.0),
    "model.beta0": (_parse_complex, complex(100.0)),
    "model.alpha0": (_parse_complex, complex(math.sqrt(8.0))),
    "truncation.n_max": (int, 64),
    "truncation.tail_tol": (float, 1e-10),
    "truncation.window_sigmas": (float, 7.0),
    "scan.t_start": (float, 0.0),
    "scan.t_end": (float, 0.5),
    "scan.n_points": (int, 200),
    "grid.center": (_parse_complex, complex(math.sqrt(8.0))),
    "grid.half_extent": (float, 5.0),
    "grid.n_side": (int, 41),
    "filter.width": (float, 1.5),
    "filter.kind": (str, "disc_autocorrelation"),
    "measurement.time": (float, 0.2),
    "measurement.kappa_prime": (float, 1.0),
    "measurement.tau0": (float, 1.2),
    "measurement.oversample": (float, 3.0),
    "measurement.mode": (str, "excited"),
    "measurement.displacement": (_parse_complex, complex(0.5, 0.3)),
    "measurement.n_levels": (int, 16),
    "measurement.shots": (int, 0),  # 0 = ideal statistics
    "measurement.fd_step": (float, 0.02),
    "measurement.fd_step4": (float, 0.1),
    "measurement.richardson": (_parse_bool, True),
    "measurement.wigner_half_extent": (float, 8.0),
    "measurement.wigner_spacing": (float, 0.25),
    "oracle.cavity_dim": (int, 26),
    "oracle.threshold": (float, 1e-8),
    "oracle.n_times": (int, 20),
    "oracle.t_max": (float, 1.0),
    "output.directory": (str, "out"),
    "seed": (int, 12345),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated flat configuration of one run."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def model_params(self) -> ModelParams:
        v = self.values
        return ModelParams(
            eta=v["model.eta"],
            delta_phi=v["model.delta_phi"],
            k_sideband=v["model.k_sideband"],
            delta_omega=v["model.delta_omega"],
            nu=v["model.nu"],
            omega21=v["model.omega21"],
            kappa_phase=v["model.kappa_phase"],
            beta0=v["model.beta0"],
            alpha0=v["model.alpha0"],
        )

    def truncation(self) -> Truncation:
        return Truncation(self.values["truncation.n_max"], self.values["truncation.tail_tol"])

    def phase_grid(self) -> PhaseGrid:
        return PhaseGrid(
            center=self.values["grid.center"],
            half_extent=self.values["grid.half_extent"],
            n_side=self.values["grid.n_side"],
        )

    def filter_spec(self) -> FilterSpec:
        return FilterSpec(width=self.values["filter.width"], kind=self.values["filter.kind"])

    def echo_lines(self) -> list[str]:
        return [f"{key} = {_fmt(self.values[key])}" for key in sorted(self.values)]


def parse_config_text(text: str) -> RunConfig:
    values = {key: default for key, (_, default) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'section.key = value'", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in SCHEMA:
            raise ConfigError("unknown configuration key", key=key, line=lineno)
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"could not parse value {value!r}: {exc}", key=key, line=lineno)
    try:
        cfg = RunConfig(values)
        cfg.model_params()
        cfg.truncation()
        cfg.phase_grid()
        cfg.filter_spec()
        if values["scan.n_points"] < 1:
            raise ValueError("scan.n_points must be >= 1")
    except ConfigError:
        raise
    except (ValueError, DomainError) as exc:
        raise ConfigError(str(exc))
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    return parse_config_text(text)


# ---------------------------------------------------------------------------
# Emission helpers


def _csv_cell(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list], config: RunConfig) -> None:
    lines = [f"# config: {line}" for line in config.echo_lines()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_csv_cell(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def write_json(path: Path, data: dict, config: RunConfig) -> None:
    envelope = {
        "artifact_version": __version__,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "config": {key: _fmt(config.values[key]) for key in sorted(config.values)},
        "data": _jsonify(data),
    }
    path.write_text(json.dumps(envelope, indent=1, sort_keys=False) + "\n", newline="\n")


def _outdir(config: RunConfig, override: str | None) -> Path:
    out = Path(override) if override else Path(config["output.directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands


def cmd_criteria(config: RunConfig, outdir: Path) -> int:
    params = config.model_params()
    ts = np.linspace(config["scan.t_start"], config["scan.t_end"], config["scan.n_points"])
    results = criteria_scan(params, ts, config.truncation(), config["truncation.window_sigmas"])
    rows = []
    for r in results:
        rows.append(
            [r.t, r.c_sq, r.phi_sq, r.c_sp, r.c_sp is not None, r.c_ac, r.phi_ac]
        )
    write_csv(
        outdir / "criteria.csv",
        ["t", "c_sq", "phi_sq", "c_sp", "c_sp_defined", "c_ac", "phi_ac"],
        rows,
        config,
    )
    return 0


def cmd_pfunc(config: RunConfig, outdir: Path, method: str) -> int:
    params = config.model_params()
    trunc = config.truncation()
    rho = MotionalEvolution(params, trunc, config["truncation.window_sigmas"]).rho(
        config["measurement.time"]
    )
    grid = config.phase_grid()
    filt = config.filter_spec()
    qmap = p_omega_map(rho, grid, filt, method=method)
    i, j = qmap.argmin()
    data = {
        "grid": {
            "center_re": grid.center.real,
            "center_im": grid.center.imag,
            "half_extent": grid.half_extent,
            "n_side": grid.n_side,
        },
        "method": qmap.method,
        "width_w": filt.width,
        "values": qmap.values.ravel(),
        "min_value": qmap.min_value(),
        "argmin": [i, j],
        "grid_integral": qmap.integral(),
    }
    write_json(outdir / "pfunc.json", data, config)
    return 0


def cmd_oracle_check(config: RunConfig, outdir: Path) -> int:
    params = config.model_params()
    times = np.linspace(0.0, config["oracle.t_max"], config["oracle.n_times"])
    report = oracle_check(
        params,
        times,
        config.truncation(),
        cavity_dim=config["oracle.cavity_dim"],
        coverage_sigmas=max(10.0, config["truncation.window_sigmas"]),
        threshold=config["oracle.threshold"],
    )
    data = {
        "times": report.times,
        "trace_distances": report.distances,
        "threshold": report.threshold,
        "max_distance": report.max_distance,
        "passed": report.passed,
    }
    write_json(outdir / "oracle_check.json", data, config)
    return 0 if report.passed else 1


def cmd_measure(config: RunConfig, outdir: Path, shots_flag: str | None) -> int:
    params = config.model_params()
    trunc = config.truncation()
    seed = config["seed"]
    shots = config["measurement.shots"]
    if shots_flag is not None:
        shots = 0 if shots_flag == "ideal" else int(shots_flag)
    rho = MotionalEvolution(params, trunc, config["truncation.window_sigmas"]).rho(
        config["measurement.time"]
    )
    state = VibronicState.from_motional(rho)
    direct = moments_from_rho(rho)

    # Probe-cycle reconstruction of displaced diagonals at one displacement.
    alpha = config["measurement.displacement"]
    n_levels = config["measurement.n_levels"]
    schedules = schedule_family(
        n_levels,
        alpha,
        config["measurement.kappa_prime"],
        mode=config["measurement.mode"],
        tau0=config["measurement.tau0"],
        oversample=config["measurement.oversample"],
    )
    if not schedules:
        raise ConfigError("empty probe schedule family")
    rec = extract_rho_nn(
        state,
        alpha,
        schedules,
        params,
        n_levels=n_levels,
        mode=config["measurement.mode"],
        shots=shots if shots > 0 else None,
        seed=seed,
    )
    truth = displace_vibronic(state, alpha, out_dim=max(n_levels, state.dim))
    rows = []
    for n in range(n_levels):
        rows.append(
            [
                n,
                rec.rho11[n],
                rec.rho22[n],
                rec.rho12[n].imag,
                truth.blocks[0, 0][n, n].real,
                truth.blocks[1, 1][n, n].real,
                truth.blocks[0, 1][n, n].imag,
            ]
        )
    write_csv(
        outdir / "rho_nn.csv",
        ["n", "rho11", "rho22", "im_rho12", "direct_rho11", "direct_rho22", "direct_im_rho12"],
        rows,
        config,
    )

    # Wigner-function matrix grid and CF-based moment extraction.
    he = config["measurement.wigner_half_extent"]
    spacing = config["measurement.wigner_spacing"]
    n_side = 2 * int(he / spacing) + 1
    wgrid_spec = PhaseGrid(center=direct.mean_a, half_extent=he, n_side=n_side)
    wg = wigner_grid(state, wgrid_spec)
    cf = cf_matrix_from_wigner(wg, state)
    h = config["measurement.fd_step"]
    richardson = config["measurement.richardson"]
    mset = cf_moment_set(cf.traced, h=h, h4=config["measurement.fd_step4"], richardson=richardson)
    direct_crit = criteria_from_moments(config["measurement.time"], direct)
    rec_crit = criteria_from_moments(config["measurement.time"], mset)
    phi = direct_crit.phi_ac
    trio = moments_from_cf(cf.traced, phi, h=h, richardson=richardson)
    trio_plain = moments_from_cf(cf.traced, phi, h=h, richardson=False)
    direct_trio = {
        "mean_x": 2.0 * (np.exp(1j * phi) * direct.mean_a).real,
        "mean_n": direct.mean_n,
        "mean_xn": 2.0 * (np.exp(1j * phi) * direct.mean_na).real,
    }
    moment_rows = []
    for name in ("mean_x", "mean_n", "mean_xn"):
        est = abs(trio[name] - trio_plain[name])
        moment_rows.append(
            [name, phi, direct_trio[name], trio[name], abs(trio[name] - direct_trio[name]), est]
        )
    write_csv(
        outdir / "moments.csv",
        ["moment", "phi", "direct", "reconstructed", "abs_error", "error_estimate"],
        moment_rows,
        config,
    )

    wdata = {
        "grid": {
            "center_re": wgrid_spec.center.real,
            "center_im": wgrid_spec.center.imag,
            "half_extent": wgrid_spec.half_extent,
            "n_side": wgrid_spec.n_side,
        },
        "w11": wg.values[:, 0, 0].real,
        "w22": wg.values[:, 1, 1].real,
        "w12_re": wg.values[:, 0, 1].real,
        "w12_im": wg.values[:, 0, 1].imag,
    }
    write_json(outdir / "wigner.json", wdata, config)

    grid = config.phase_grid()
    filt = config.filter_spec()
    pmaps = p_matrix_series(state, grid, filt)
    traced = pmaps[0, 0].real + pmaps[1, 1].real
    direct_map = p_omega_map(rho, grid, filt, method="series")
    pdata = {
        "grid": {
            "center_re": grid.center.real,
            "center_im": grid.center.imag,
            "half_extent": grid.half_extent,
            "n_side": grid.n_side,
        },
        "width_w": filt.width,
        "p11": pmaps[0, 0].real.ravel(),
        "p22": pmaps[1, 1].real.ravel(),
        "p12_re": pmaps[0, 1].real.ravel(),
        "p12_im": pmaps[0, 1].imag.ravel(),
        "traced_min": float(np.min(traced)),
        "traced_vs_direct_max_diff": float(np.max(np.abs(traced - direct_map.values))),
    }
    write_json(outdir / "pmatrix.json", pdata, config)

    summary = {
        "shots": shots,
        "seed": seed,
        "reconstruction": {
            "alpha": alpha,
            "condition_number": rec.condition_number,
            "residual_norm": rec.residual_norm,
            "max_error_rho22": float(
                np.max(np.abs(rec.rho22 - np.diagonal(truth.blocks[1, 1]).real[:n_levels]))
            ),
        },
        "moments": {
            "direct": {
                "mean_a": direct.mean_a,
                "mean_a2": direct.mean_a2,
                "mean_n": direct.mean_n,
                "mean_na": direct.mean_na,
                "mean_n2": direct.mean_n2,
            },
            "reconstructed": {
                "mean_a": mset.mean_a,
                "mean_a2": mset.mean_a2,
                "mean_n": mset.mean_n,
                "mean_na": mset.mean_na,
                "mean_n2": mset.mean_n2,
            },
        },
        "criteria": {
            "direct": {"c_sq": direct_crit.c_sq, "c_sp": direct_crit.c_sp, "c_ac": direct_crit.c_ac},
            "reconstructed": {"c_sq": rec_crit.c_sq, "c_sp": rec_crit.c_sp, "c_ac": rec_crit.c_ac},
            "c_ac_error": abs(rec_crit.c_ac - direct_crit.c_ac),
            "c_ac_same_sign": bool((rec_crit.c_ac < 0) == (direct_crit.c_ac < 0)),
        },
        "input_state": "excited electronic level times evolved motional state",
    }
    write_json(outdir / "measure.json", summary, config)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vibronic",
        description="Detuned nonlinear Jaynes-Cummings simulator and nonclassicality analysis",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("criteria", "scan the nonclassicality criteria over a time grid (CSV)"),
        ("pfunc", "regularized P map of the evolved motional state (JSON)"),
        ("measure", "simulate the probe-cycle reconstruction pipeline (CSV + JSON)"),
        ("oracle-check", "compare the analytic evolution against the dense oracle (JSON)"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a section.key = value config file")
        p.add_argument("--out", default=None, help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        if name == "pfunc":
            p.add_argument("--method", choices=("series", "integral"), default="series")
        if name == "measure":
            p.add_argument("--shots", default=None, help="shot budget per schedule, or 'ideal'")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which matches the config-error status
        return int(exc.code or 0)

    try:
        config = load_config(args.config)
        if args.seed is not None:
            values = dict(config.values)
            values["seed"] = args.seed
            config = RunConfig(values)
        outdir = _outdir(config, args.out)
        if args.command == "criteria":
            return cmd_criteria(config, outdir)
        if args.command == "pfunc":
            return cmd_pfunc(config, outdir, args.method)
        if args.command == "oracle-check":
            return cmd_oracle_check(config, outdir)
        if args.command == "measure":
            if args.shots is not None and args.shots != "ideal":
                try:
                    int(args.shots)
                except ValueError:
                    raise ConfigError(f"--shots must be an integer or 'ideal', got {args.shots!r}")
            return cmd_measure(config, outdir, args.shots)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IllConditionedDesign as exc:
        print(f"ill-conditioned design: {exc}", file=sys.stderr)
        return 3
    except (TruncationError, DomainError) as exc:
        print(f"numerical domain error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
