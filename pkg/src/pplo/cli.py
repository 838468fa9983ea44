"""Command-line entry point.

Each run reads one YAML (or JSON) file, validates it against the schema below,
applies command-line overrides (``--seed``, ``--threads``; flags win over the
file, which wins over built-in defaults) and writes into ``--out``:
``summary.json`` with the resolved configuration, comma-separated tables and
``run.log``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import time
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from . import __version__, device, experiments, lindblad
from ._core import BACKEND
from .errors import NumericalError, ValidationError
from .io import write_json, write_table
from .semiclassical import PploConfig

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("pplo")

# section -> key -> (kind, unit). kind: float, int, bool, str, list, any
_DEVICE = {
    "l_cav": ("float", "H"), "c_cav": ("float", "F"), "c_j": ("float", "F"),
    "c_in": ("float", "F"), "i0": ("float", "A"), "q_internal": ("float", "1"),
    "q_external": ("float", "1"), "mutual_inductance": ("float", "H"),
}
_PPLO = {
    "pump_ratio": ("float", "1"), "gamma_prime": ("float", "1"), "n_po": ("float", "photons"),
    "theta_s": ("float", "rad"), "operating_frequency_hz": ("float", "Hz"),
}
_SIM = {
    "n_max": ("int", "photons"), "tau_end": ("float", "1 (tau = t kappa/2)"),
    "dtau": ("float", "1"), "resolution": ("int", "points"), "extent": ("float", "1"),
    "stop_when_stationary": ("bool", ""), "backend": ("str", ""),
}
SCHEMA = {
    "device": {
        "device": _DEVICE,
        "target_frequency_hz": ("float", "Hz"),
        "flux_grid": {"start": ("float", "Phi/Phi0"), "stop": ("float", "Phi/Phi0"), "n": ("int", "points")},
        "fit": {"data": ("str", "path"), "flux_window": ("float", "Phi/Phi0"),
                "max_iter": ("int", "")},
    },
    "qfunc": {"device": _DEVICE, "pplo": _PPLO, "simulation": _SIM},
    "sweep": {
        "device": _DEVICE, "pplo": _PPLO, "simulation": _SIM,
        "sweep": {"thetas": ("list", "rad"), "n_theta": ("int", "points"),
                  "n_po_values": ("list", "photons")},
    },
    "bpsk": {
        "device": _DEVICE, "pplo": _PPLO, "simulation": _SIM,
        "bpsk": {"n_bits": ("int", "bits"), "bit_period": ("float", "s"),
                 "flip_probability": ("any", "1 or 'lindblad'"), "pattern": ("str", ""),
                 "n_seeds": ("int", "")},
    },
    "readout": {
        "device": _DEVICE, "pplo": _PPLO, "simulation": _SIM,
        "resonator": {"frequency_hz": ("float", "Hz"), "q_internal": ("float", "1"),
                      "q_external": ("float", "1"), "chi": ("any", "rad/s or 'auto'")},
        "qubit": {"t1": ("float", "s"), "init_error": ("float", "1"),
                  "t_wait": ("float", "s"), "relaxation_loss": ("float", "1")},
        "readout": {"n_theta": ("int", "points"), "thetas": ("list", "rad"),
                    "scale_power": ("bool", "")},
    },
}
_COMMON = {"seed": ("int", ""), "threads": ("int", "")}


def _check_value(path: str, kind: str, value):
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValidationError(f"{path}: expected a finite number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValidationError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ValidationError(f"{path}: expected a string, got {value!r}")
        return value
    if kind == "list":
        if not isinstance(value, list):
            raise ValidationError(f"{path}: expected a list, got {value!r}")
        return [_check_value(f"{path}[{i}]", "float", v) for i, v in enumerate(value)]
    return value


def validate_config(command: str, raw: dict) -> dict:
    """Type-check ``raw`` against the command schema; unknown keys are errors."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValidationError("configuration must be a mapping")
    schema = {**SCHEMA[command], **_COMMON}
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ValidationError(f"unknown key {key!r} for command {command!r}")
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(value, dict):
                raise ValidationError(f"{key}: expected a mapping")
            sub = {}
            for k, v in value.items():
                if k not in spec:
                    raise ValidationError(f"unknown key {key}.{k!r}")
                sub[k] = _check_value(f"{key}.{k}", spec[k][0], v)
            out[key] = sub
        else:
            out[key] = _check_value(key, spec[0], value)
    return out


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 reads 1e-9 or 10.51e9 as strings; accept them as floats
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?$|^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$""",
               re.X),
    list("-+0123456789."),
)


def load_config(path) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        if str(path).endswith(".json"):
            return json.loads(text)
        return yaml.load(text, Loader=_Loader)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from None


def _require(section: dict, key: str, name: str):
    if key not in section:
        raise ValidationError(f"missing required field {name}.{key}")
    return section[key]


def _device(cfg) -> device.DeviceParams:
    return device.DeviceParams(**cfg.get("device", {}))


def _pplo(cfg) -> PploConfig:
    sec = dict(cfg.get("pplo", {}))
    pump = _require(sec, "pump_ratio", "pplo")
    kappa = None
    if "gamma_prime" in sec:
        gamma_prime = sec["gamma_prime"]
    else:
        f = _require(sec, "operating_frequency_hz", "pplo")
        params = _device(cfg)
        op = device.operating_point(params, device.flux_for_frequency(params, 2 * math.pi * f))
        gamma_prime, kappa = op.gamma_prime, op.kappa
        log.info("operating point %.6g Hz: flux %.6g, gamma %.6g 1/s, gamma' %.6g",
                 f, op.flux_ratio, op.gamma, gamma_prime)
    return PploConfig(pump_ratio=pump, gamma_prime=gamma_prime, n_po=sec.get("n_po", 0.0),
                      theta_s=sec.get("theta_s", 0.0), kappa=kappa)


def _settings(cfg) -> lindblad.SimSettings:
    return lindblad.SimSettings(**cfg.get("simulation", {}))


def cmd_device(cfg, out: Path, threads) -> dict:
    params = _device(cfg)
    grid = cfg.get("flux_grid", {})
    start, stop, n = grid.get("start", -0.32), grid.get("stop", 0.32), grid.get("n", 65)
    if max(abs(start), abs(stop)) >= 0.5 or n < 2:
        raise ValidationError("flux grid must lie inside |Phi/Phi0| < 0.5 with n >= 2")
    x = np.linspace(start, stop, n)
    w = device.resonant_frequency(params, x)
    g = device.kerr_coefficient(params, x)
    kappa = params.kappa(w)
    write_table(out / "flux_curve.csv", ["flux_ratio", "frequency_hz", "gamma_per_s", "gamma_prime"],
                [x, w / (2 * math.pi), g, 12 * g / kappa])
    result = {"tables": ["flux_curve.csv"]}
    if "target_frequency_hz" in cfg:
        f = cfg["target_frequency_hz"]
        op = device.operating_point(params, device.flux_for_frequency(params, 2 * math.pi * f))
        result["operating_point"] = {
            "frequency_hz": f, "flux_ratio": op.flux_ratio, "gamma_per_s": op.gamma,
            "kappa_rad_per_s": op.kappa, "gamma_prime": op.gamma_prime,
        }
        log.info("gamma at %.6g Hz = %.4g 1/s", f, op.gamma)
    if "fit" in cfg:
        fit_cfg = cfg["fit"]
        data = device.load_flux_data(_require(fit_cfg, "data", "fit"))
        fit = device.fit_flux_curve(data, params, flux_window=fit_cfg.get("flux_window", 0.32),
                                    max_iter=fit_cfg.get("max_iter", 500))
        result["fit"] = asdict(fit)
        log.info("fit: I0 = %.6g A, C_cav = %.6g F, rms %.3g rad/s", fit.i0, fit.c_cav, fit.rms_residual)
    return result


def cmd_qfunc(cfg, out: Path, threads) -> dict:
    pplo = _pplo(cfg)
    st = _settings(cfg)
    rho = lindblad.evolve(pplo, None, st.tau_end, st.dtau, st.n_max,
                          stop_when_stationary=st.stop_when_stationary, backend=st.backend)
    q = lindblad.q_function(rho, st.extent, st.resolution)
    q.write(out / "qfunc.csv")
    info = rho.info
    write_table(out / "checkpoints.csv", ["tau", "residual", "mean_photon_number"],
                list(zip(*info.checkpoints)) if info.checkpoints else [[], [], []])
    peaks = q.peaks()
    p0 = lindblad.prob_zero_pi(q)
    return {
        "tables": ["qfunc.csv", "checkpoints.csv"],
        "p_zero_pi": p0,
        "two_peaks": len(peaks) == 2,
        "peaks": [list(pk) for pk in peaks],
        "q_normalization": q.normalization(),
        "mean_photon_number": rho.mean_photon_number(),
        "diagnostics": {k: v for k, v in asdict(info).items() if k != "checkpoints"},
    }


def cmd_sweep(cfg, out: Path, threads) -> dict:
    base = _pplo(cfg)
    st = _settings(cfg)
    sec = cfg.get("sweep", {})
    if "thetas" in sec:
        thetas = np.asarray(sec["thetas"])
    else:
        thetas = lindblad.theta_grid(sec.get("n_theta", 24))
    if thetas.size == 0:
        raise ValidationError("sweep.thetas is empty")
    n_pos = sec.get("n_po_values", [base.n_po])
    if not n_pos:
        raise ValidationError("sweep.n_po_values is empty")
    columns, header, depths = [thetas], ["theta_s"], []
    for i, n_po in enumerate(n_pos):
        s = lindblad.sweep_theta(base.replace(n_po=n_po), thetas, st, threads)
        p = s.column("p_zero_pi")
        columns.append(p)
        header.append(f"p_zero_pi_{i}")
        depths.append(float(np.ptp(p)))
        log.info("n_po %.6g: Delta P = %.6f", n_po, depths[-1])
    write_table(out / "theta_sweep.csv", header, columns)
    order = np.argsort(n_pos)
    sorted_depths = np.asarray(depths)[order]
    write_table(out / "non_locking.csv", ["n_po", "delta_p_zero_pi", "non_locking_error"],
                [np.asarray(n_pos)[order], sorted_depths, (1 - sorted_depths) / 2])
    return {
        "tables": ["theta_sweep.csv", "non_locking.csv"],
        "columns": {f"p_zero_pi_{i}": n for i, n in enumerate(n_pos)},
        "delta_p_zero_pi": depths,
        "non_locking_error": [(1 - d) / 2 for d in depths],
        "modulation_increasing_in_n_po": bool(np.all(np.diff(sorted_depths) > 0)),
    }


def cmd_bpsk(cfg, out: Path, threads) -> dict:
    sec = dict(cfg.get("bpsk", {}))
    flip = _require(sec, "flip_probability", "bpsk")
    result = {}
    if flip == "lindblad":
        pplo = _pplo(cfg)
        flip = experiments.flip_probability_from_lock(pplo, _settings(cfg))
        result["flip_probability_source"] = "lindblad"
        log.info("per-bit flip probability from the master equation: %.4g", flip)
    elif isinstance(flip, bool) or not isinstance(flip, (int, float)):
        raise ValidationError("bpsk.flip_probability must be a number or 'lindblad'")
    n_seeds = sec.pop("n_seeds", 1)
    if n_seeds < 1:
        raise ValidationError("bpsk.n_seeds must be >= 1")
    bc = experiments.BpskConfig(n_bits=sec.get("n_bits", 24_000),
                                bit_period=sec.get("bit_period", 500e-9),
                                flip_probability=float(flip), rng_seed=cfg.get("seed", 0),
                                pattern=sec.get("pattern", "alternating"))
    seeds = [bc.rng_seed + i for i in range(n_seeds)]
    if n_seeds == 1:
        r = experiments.simulate_bpsk(bc)
        write_table(out / "bits.csv", ["bit", "sent", "decoded"],
                    [np.arange(bc.n_bits), r.bitstream, r.decoded])
        counts = np.array([r.n_errors])
        result["tables"] = ["bits.csv", "errors.csv"]
    else:
        counts = experiments.bpsk_error_counts(bc, seeds, threads)
        result["tables"] = ["errors.csv"]
    write_table(out / "errors.csv", ["seed", "n_errors", "error_rate"], [seeds, counts, counts / bc.n_bits])
    result.update({
        "flip_probability": bc.flip_probability,
        "n_bits": bc.n_bits,
        "n_errors": int(counts[0]) if n_seeds == 1 else counts.tolist(),
        "mean_errors": float(counts.mean()),
        "error_rate": float(counts.mean() / bc.n_bits),
        "duration_s": bc.n_bits * bc.bit_period,
    })
    return result


def cmd_readout(cfg, out: Path, threads) -> dict:
    pplo = _pplo(cfg)
    st = _settings(cfg)
    rs = dict(cfg.get("resonator", {}))
    chi = rs.pop("chi", "auto")
    freq = rs.pop("frequency_hz", 10.193e9)
    res = experiments.ReadoutResonator(omega0=2 * math.pi * freq, **rs)
    if chi == "auto":
        chi = experiments.solve_chi_for_pi_contrast(res)
    elif isinstance(chi, bool) or not isinstance(chi, (int, float)):
        raise ValidationError("resonator.chi must be a number (rad/s) or 'auto'")
    res = experiments.ReadoutResonator(res.omega0, res.q_internal, res.q_external, float(chi))
    qs = dict(cfg.get("qubit", {}))
    t_wait = qs.pop("t_wait", None)
    loss = qs.pop("relaxation_loss", None)
    qubit = experiments.QubitModel(**qs)
    if t_wait is not None and loss is not None:
        raise ValidationError("give qubit.t_wait or qubit.relaxation_loss, not both")
    if loss is not None:
        if not 0 <= loss < 1:
            raise ValidationError("qubit.relaxation_loss must lie in [0, 1)")
        t_wait = experiments.QubitModel.wait_for_loss(qubit.t1, loss)
    t_wait = 0.0 if t_wait is None else t_wait
    sec = cfg.get("readout", {})
    thetas = np.asarray(sec["thetas"]) if "thetas" in sec else lindblad.theta_grid(sec.get("n_theta", 24))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        r = experiments.readout_fidelity(res, qubit, pplo, thetas, t_wait=t_wait,
                                         scale_power=sec.get("scale_power", True),
                                         settings=st, threads=threads)
    for w in caught:
        log.warning("%s", w.message)
    r.write(out / "readout.csv")
    return {"tables": ["readout.csv"], "chi_rad_per_s": res.chi, "t_wait_s": t_wait,
            "warnings": [str(w.message) for w in caught], **r.meta}


COMMANDS = {"device": cmd_device, "qfunc": cmd_qfunc, "sweep": cmd_sweep,
            "bpsk": cmd_bpsk, "readout": cmd_readout}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pplo", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default runs/<command>)")
        p.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
        p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    return parser


def _setup_logging(out: Path):
    log.setLevel(logging.INFO)
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    fh = logging.FileHandler(out / "run.log", mode="w", encoding="utf-8")
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    sh = logging.StreamHandler(sys.stderr)
    sh.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(fh)
    log.addHandler(sh)
    return fh


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out or Path("runs") / args.command)
    try:
        out.mkdir(parents=True, exist_ok=True)
        handler = _setup_logging(out)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        raw = load_config(args.config)
        cfg = validate_config(args.command, raw)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = args.threads
        seed = cfg.setdefault("seed", 0)
        if not 0 <= seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        threads = cfg.get("threads") or os.cpu_count() or 1
        if threads < 1:
            raise ValidationError("threads must be >= 1")
        log.info("pplo %s, command %s, backend %s, threads %d", __version__, args.command, BACKEND, threads)
        t0 = time.perf_counter()
        result = COMMANDS[args.command](cfg, out, threads)
        log.info("done in %.2f s", time.perf_counter() - t0)
        write_json(out / "summary.json", {"command": args.command, "config": cfg, "seed": seed,
                                          "version": __version__, "result": result})
        return EXIT_OK
    except ValidationError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_VALIDATION
    except NumericalError as exc:
        log.error("numerical failure (%s): %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    finally:
        log.removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
