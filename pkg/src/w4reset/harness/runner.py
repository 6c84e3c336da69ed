"""Execution of configured experiments and persistence of their results."""

from __future__ import annotations

import csv
import io
from importlib import resources
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .. import qcore, tomography
from ..circuit import RandomUnitarySpec
from ..noise import NoiseModel, idle_channel
from ..protocol import (
    TARGET,
    ProtocolConfig,
    ResetFailed,
    build_protocol_circuit,
    run_no_reset_baseline,
    run_protocol,
    success_projector,
)
from .config import ExperimentConfig, as_builtin, derive_seed
from .plots import emit_plot_data

log = logging.getLogger(__name__)

FLOAT_FORMAT = ".12g"


class CalibrationError(RuntimeError):
    pass


@dataclass
class ResultRow:
    case_id: str
    phi_over_pi: float | None
    unitary_index: int | None
    initial_target: str
    p_success: float
    trace_distance: float
    fidelity: float
    depth_single: int
    depth_double: int
    seed: int

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def cells(self) -> list[str]:
        out = []
        for name in self.columns():
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                if not math.isfinite(v):
                    raise ValueError(f"non-finite {name} in result row")
                out.append(format(v, FLOAT_FORMAT))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_cells(cls, cells: dict) -> "ResultRow":
        def num(key, typ):
            return None if cells[key] == "" else typ(cells[key])

        return cls(
            case_id=cells["case_id"],
            phi_over_pi=num("phi_over_pi", float),
            unitary_index=num("unitary_index", int),
            initial_target=cells["initial_target"],
            p_success=float(cells["p_success"]),
            trace_distance=float(cells["trace_distance"]),
            fidelity=float(cells["fidelity"]),
            depth_single=int(cells["depth_single"]),
            depth_double=int(cells["depth_double"]),
            seed=int(cells["seed"]),
        )


def _fmt(x: float) -> float:
    """Round to the canonical 12 significant digits used in every output file."""
    return float(format(x, FLOAT_FORMAT))


def _row(cfg_case: str, res, phi_over_pi, index, initial, seed) -> ResultRow:
    return ResultRow(
        case_id=cfg_case,
        phi_over_pi=phi_over_pi,
        unitary_index=index,
        initial_target=initial,
        p_success=res.p_success,
        trace_distance=res.trace_distance_to_initial,
        fidelity=res.fidelity_to_initial,
        depth_single=res.depth_report.depth_single,
        depth_double=res.depth_report.depth_double,
        seed=seed,
    )


class ResultWriter:
    """Single writer for results.csv; appends rows in index order and flushes each one."""

    def __init__(self, path: Path, resume: bool = False):
        self.path = path
        self.existing: list[ResultRow] = []
        if resume and path.exists():
            with path.open(newline="", encoding="utf-8") as fh:
                self.existing = [ResultRow.from_cells(r) for r in csv.DictReader(fh)]
            self.fh = path.open("a", newline="", encoding="utf-8")
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            self.fh = path.open("w", newline="", encoding="utf-8")
            self.fh.write(",".join(ResultRow.columns()) + "\n")
        self.writer = csv.writer(self.fh, lineterminator="\n")

    def write(self, row: ResultRow):
        self.writer.writerow(row.cells())
        self.fh.flush()

    def close(self):
        self.fh.close()


def _campaign_job(args) -> ResultRow:
    case_id, proto_kwargs, noise, index, seed = args
    cfg = ProtocolConfig(interaction=RandomUnitarySpec.from_seed(seed), noise=noise, **proto_kwargs)
    try:
        res = run_protocol(cfg, ideal_reference=False)
    except ResetFailed as exc:
        rd = build_protocol_circuit(cfg).full.depth_report()
        return ResultRow(case_id, None, index, proto_kwargs["initial_target"], exc.p_success,
                         1.0, 0.0, rd.depth_single, rd.depth_double, seed)
    return _row(case_id, res, None, index, proto_kwargs["initial_target"], seed)


def _map(fn: Callable, jobs: Sequence, workers: int) -> Iterable:
    if workers > 1 and len(jobs) > 1:
        ex = ProcessPoolExecutor(max_workers=workers)
        try:
            yield from ex.map(fn, jobs, chunksize=max(1, len(jobs) // (8 * workers)))
        finally:
            ex.shutdown()
    else:
        for j in jobs:
            yield fn(j)


def _proto_kwargs(cfg: ExperimentConfig, initial_target: str | None = None) -> dict:
    p = cfg.doc["protocol"]
    return {
        "initial_target": initial_target or p["initial_target"],
        "axis": p["axis"],
        "phi": float(p["phi_over_pi"]) * math.pi,
        "probe_order": tuple(p["probe_order"]),
        "projector_mode": p["projector_mode"],
        "prep_idle_us": float(p["prep_idle_us"]),
    }


def random_campaign(cfg: ExperimentConfig, writer: ResultWriter | None = None, stop_after: int | None = None) -> list[ResultRow]:
    """Random-interaction runs with unitaries drawn from (master_seed, case_id, index)."""
    n = int(cfg.doc["n_random"])
    done = list(writer.existing) if writer else []
    noise = cfg.noise_model()
    kwargs = _proto_kwargs(cfg)
    todo = range(len(done), n if stop_after is None else min(n, len(done) + stop_after))
    jobs = [
        (cfg.case_id, kwargs, noise, i, derive_seed(cfg.master_seed, cfg.case_id, i))
        for i in todo
    ]
    rows = done
    for row in _map(_campaign_job, jobs, cfg.workers):
        rows.append(row)
        if writer:
            writer.write(row)
    return rows


def cumulative_average(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return np.cumsum(v) / np.arange(1, len(v) + 1)


def _bloch_record(cfg: ProtocolConfig, res) -> dict:
    r = cfg.evolution()
    evolved = r @ res.rho_initial @ r.conj().T
    return {
        "prep": qcore.bloch_vector(res.rho_initial),
        "evolved": qcore.bloch_vector(evolved),
        "reset": qcore.bloch_vector(res.rho_reset),
        "no_reset": [qcore.bloch_vector(x) for x in run_no_reset_baseline(cfg)],
    }


def measured_reference(case_id: str) -> list[dict]:
    """Hardware numbers for the deterministic cases, for side-by-side comparison only.

    They include readout and cross-talk effects the simulator does not model,
    so nothing compares against them with a tolerance.
    """
    text = resources.files("w4reset").joinpath("data/measured_reference.csv").read_text(encoding="utf-8")
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        if r["case_id"] == case_id:
            out.append({k: (v if k == "case_id" else float(v)) for k, v in r.items()})
    return out


def run_sweep(cfg: ExperimentConfig, writer: ResultWriter | None = None) -> tuple[list[ResultRow], list[dict]]:
    rows = list(writer.existing) if writer else []
    extra = []
    phis = cfg.doc["sweep"]["phi_over_pi"]
    for i, x in enumerate(phis):
        pcfg = cfg.protocol_config(phi_over_pi=x)
        res = run_protocol(pcfg)
        extra.append(
            {
                "phi_over_pi": x,
                "p_success_overlap": res.p_success_overlap,
                "state_fidelity": res.state_fidelity,
                "bloch": _bloch_record(pcfg, res),
            }
        )
        if i < len(rows):
            continue
        row = _row(cfg.case_id, res, x, None, pcfg.initial_target, derive_seed(cfg.master_seed, cfg.case_id, i))
        rows.append(row)
        if writer:
            writer.write(row)
    return rows, extra


def run_qpt(cfg: ExperimentConfig, bootstrap: bool = False) -> tuple[list[ResultRow], dict]:
    """Reset every requested Bloch-axis input, build chi from |0>, |1>, |+>, |i>."""
    rows, states, finals = [], {}, {}
    initials = cfg.doc["initial_states"] or ["0", "1", "+", "i", "-", "-i"]
    for i, label in enumerate(initials):
        pcfg = cfg.protocol_config(initial_target=label)
        res = run_protocol(pcfg)
        states[label] = res.rho_reset
        finals[label] = res.rho_final
        rows.append(_row(cfg.case_id, res, float(cfg.doc["protocol"]["phi_over_pi"]), None, label,
                         derive_seed(cfg.master_seed, cfg.case_id, i)))
    missing = [s for s in tomography.QPT_INPUTS if s not in states]
    if missing:
        raise ValueError(f"process tomography needs the inputs {missing}")
    chi_raw = tomography.qpt_chi(
        [qcore.BLOCH_STATES[s] for s in tomography.QPT_INPUTS], [states[s] for s in tomography.QPT_INPUTS]
    )
    chi = tomography.cptp_project(chi_raw)
    summary = {
        "chi": chi.elements,
        "process_fidelity": tomography.process_fidelity(chi),
        "reset_fidelities": {r.initial_target: r.fidelity for r in rows},
    }
    if bootstrap:
        tomo = cfg.doc["tomography"] or {}
        pcfg = cfg.protocol_config(initial_target="0")
        pc = build_protocol_circuit(pcfg)
        proj = success_projector(pcfg.mode).lifted(pc.probe_devices)
        rep = tomography.bootstrap_qpt(
            [finals[s] for s in tomography.QPT_INPUTS],
            proj,
            target=TARGET,
            n_sets=int(tomo.get("n_bootstrap", 200)),
            shots=tomo.get("shots", 10000),
            seed=cfg.master_seed,
            order=tomo.get("order", "cp_first"),
            workers=cfg.workers,
        )
        summary["bootstrap"] = {
            "n_sets": rep.n_sets,
            "shots_per_setting": rep.shots_per_setting,
            "mean_process_fidelity": rep.mean,
            "error_bar": rep.error_bar,
            "chi_mean": rep.chi_mean,
        }
    return rows, summary


def run_case(cfg: ExperimentConfig, resume: bool = False, bootstrap: bool | None = None,
             stop_after: int | None = None) -> list[ResultRow]:
    """Run a configured experiment and write results.csv, summary.json and plot data."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.doc["noise"]
    calibration = None
    if spec is not None and spec.get("calibrate"):
        base = cfg.noise_model()
        model, achieved = calibrate_noise(spec["calibrate"]["target"], spec["calibrate"]["value"], base)
        calibration = {"target": spec["calibrate"], "achieved": achieved, "t_phi": model.t_phi[0]}
        cfg = cfg.with_noise(model)

    summary: dict = {"case_id": cfg.case_id, "mode": cfg.mode, "master_seed": cfg.master_seed}
    if calibration:
        summary["calibration"] = calibration
    mode = cfg.mode
    if mode == "qpt":
        rows, extra = run_qpt(cfg, bootstrap=bool(cfg.doc["tomography"]) if bootstrap is None else bootstrap)
        writer = ResultWriter(out / "results.csv")
        for r in rows:
            writer.write(r)
        writer.close()
        summary.update(extra)
        emit_plot_data(extra["chi"], "density_matrix_city", out / "plotdata", name="chi")
    else:
        writer = ResultWriter(out / "results.csv", resume=resume)
        try:
            if mode == "random":
                rows = random_campaign(cfg, writer, stop_after=stop_after)
            elif mode == "sweep":
                rows, extra = run_sweep(cfg, writer)
                summary["runs"] = extra
                ref = measured_reference(cfg.case_id)
                if ref:
                    summary["measured_reference"] = ref
            else:
                pcfg = cfg.protocol_config()
                res = run_protocol(pcfg)
                rows = writer.existing or []
                if not rows:
                    rows = [_row(cfg.case_id, res, float(cfg.doc["protocol"]["phi_over_pi"]), None,
                                 pcfg.initial_target, derive_seed(cfg.master_seed, cfg.case_id, 0))]
                    writer.write(rows[0])
                summary["runs"] = [{"bloch": _bloch_record(pcfg, res), "state_fidelity": res.state_fidelity,
                                    "p_success_overlap": res.p_success_overlap}]
        finally:
            writer.close()
        for i, run in enumerate(summary.get("runs", [])):
            emit_plot_data(run["bloch"], "bloch_trajectory", out / "plotdata", name=f"bloch_{i}")
        if mode == "random":
            ps = [r.p_success for r in rows]
            summary["cumulative_average"] = [_fmt(x) for x in cumulative_average(ps)]
            summary["n_completed"] = len(rows)
            emit_plot_data(rows, "cumulative_average", out / "plotdata")
            emit_plot_data(rows, "bar_per_unitary", out / "plotdata")
    summary["mean_p_success"] = float(np.mean([r.p_success for r in rows])) if rows else None
    summary["mean_trace_distance"] = float(np.mean([r.trace_distance for r in rows])) if rows else None
    summary["seeds"] = [r.seed for r in rows]
    summary["config"] = cfg.doc
    (out / "summary.json").write_text(json.dumps(_canonical(as_builtin(summary)), indent=2, sort_keys=True) + "\n")
    return rows


def _canonical(x):
    if isinstance(x, float):
        return _fmt(x) if math.isfinite(x) else str(x)
    if isinstance(x, dict):
        return {k: _canonical(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_canonical(v) for v in x]
    return x


# --- noise calibration --------------------------------------------------------------

CALIBRATION_PHI = 3 * math.pi / 8


def five_qubit_fidelity(model: NoiseModel) -> float:
    """Fidelity of the noisy case-1a register state (before projection) to the ideal one."""
    cfg = ProtocolConfig("-", "z", CALIBRATION_PHI, interaction="XZ_iYX", noise=model)
    return run_protocol(cfg).state_fidelity


def initial_mixed_distance(model: NoiseModel, idle_us: float = 1.0) -> float:
    """Trace distance of |-> from itself after idling for ``idle_us``."""
    rho0 = qcore.ket_to_dm(qcore.KET_MINUS)
    rho = idle_channel(idle_us, model, TARGET)(rho0)
    return qcore.trace_distance(rho, rho0)


OBSERVABLES = {
    "five_qubit_fidelity": five_qubit_fidelity,
    "initial_mixed_D": initial_mixed_distance,
}


def calibrate_noise(target: str, value: float, base: NoiseModel | None = None,
                    bracket: tuple[float, float] = (0.1, 1000.0), tol: float = 0.01) -> tuple[NoiseModel, float]:
    """Solve for a uniform T_phi so the chosen observable matches ``value``.

    T1 and gate durations stay as in ``base``. Returns the model and the
    observable it achieves.
    """
    if target not in OBSERVABLES:
        raise ValueError(f"unknown calibration target {target!r}")
    base = base or NoiseModel()
    obs = OBSERVABLES[target]
    at_inf = obs(base.with_t_phi(math.inf))
    if abs(at_inf - value) < 1e-12:
        return base.with_t_phi(math.inf), at_inf

    def f(t_phi):
        return obs(base.with_t_phi(t_phi)) - value

    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        if abs(fhi) <= tol:
            return base.with_t_phi(hi), fhi + value
        if abs(flo) <= tol:
            return base.with_t_phi(lo), flo + value
        raise CalibrationError(
            f"{target}={value} unreachable for T_phi in [{lo}, {hi}] us "
            f"(observable spans {flo + value:.4f} .. {fhi + value:.4f})"
        )
    t_phi = brentq(f, lo, hi, xtol=1e-6)
    model = base.with_t_phi(t_phi)
    achieved = obs(model)
    if abs(achieved - value) > tol:
        raise CalibrationError(f"calibration reached {achieved}, not within {tol} of {value}")
    return model, achieved


def load_rows(path: str | Path) -> list[ResultRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [ResultRow.from_cells(r) for r in csv.DictReader(fh)]


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(",".join(ResultRow.columns()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()
