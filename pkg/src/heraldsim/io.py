"""On-disk formats: HQTR trace files, record/mode CSVs, density-matrix JSON, Wigner CSV."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .traces import QuadratureRecords, TemporalMode, TraceSet
from .wigner import WignerGrid

MAGIC = b"HQTR"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")  # magic, version, header length


class FormatError(ValueError):
    """A file that does not parse as the expected format."""


def encode_trace_file(samples: np.ndarray, header: dict) -> bytes:
    samples = np.ascontiguousarray(samples, dtype="<f4")
    if samples.ndim != 2:
        raise ValueError("samples must be 2-D")
    header = dict(header, n_traces=samples.shape[0], n_samples=samples.shape[1])
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + samples.tobytes()


def decode_trace_file(data: bytes) -> tuple[np.ndarray, dict]:
    """Parse an HQTR byte string into ``(samples, header)``.

    Raises:
        FormatError: on a bad magic, unsupported version, malformed header, or a
            payload whose size differs from the declared shape.
    """
    if len(data) < _PREFIX.size:
        raise FormatError("file too short for an HQTR header")
    magic, version, n_header = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported HQTR version {version}")
    start = _PREFIX.size + n_header
    if start > len(data):
        raise FormatError("header length exceeds file size")
    try:
        header = json.loads(data[_PREFIX.size:start].decode("utf-8"))
        n_traces, n_samples = int(header["n_traces"]), int(header["n_samples"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed HQTR header: {exc}") from exc
    expected = n_traces * n_samples * 4
    if len(data) - start != expected:
        raise FormatError(f"payload is {len(data) - start} bytes, header declares {expected}")
    samples = np.frombuffer(data, dtype="<f4", offset=start).reshape(n_traces, n_samples)
    return samples.astype(np.float32), header


def write_trace_file(path: Path, samples: np.ndarray, header: dict) -> None:
    Path(path).write_bytes(encode_trace_file(samples, header))


def read_trace_file(path: Path) -> tuple[np.ndarray, dict]:
    return decode_trace_file(Path(path).read_bytes())


def _list_or_none(a):
    return None if a is None else [float(v) for v in a]


def save_traces(directory: Path, traces: TraceSet) -> tuple[Path, Path | None]:
    """Write ``traces.hqtr`` and, when present, ``calibration.hqtr`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    common = {
        "sample_rate_hz": 1.0 / traces.sample_period_s,
        "herald_index": traces.herald_index,
        "params": traces.params,
    }
    main = directory / "traces.hqtr"
    write_trace_file(main, traces.samples, dict(
        common,
        calibration=False,
        true_phase=_list_or_none(traces.true_phase),
        acquisition_time_s=_list_or_none(traces.acquisition_time_s),
    ))
    cal = None
    if traces.calibration is not None:
        cal = directory / "calibration.hqtr"
        write_trace_file(cal, traces.calibration, dict(common, calibration=True, true_phase=None,
                                                        acquisition_time_s=None))
    return main, cal


def load_traces(path: Path, calibration_path: Path | None = None) -> TraceSet:
    """Load a heralded trace file plus its vacuum calibration.

    Without ``calibration_path``, a sibling ``calibration.hqtr`` is used if it exists.
    """
    path = Path(path)
    samples, header = read_trace_file(path)
    if header.get("calibration"):
        raise FormatError(f"{path} holds calibration traces, not heralded ones")
    if calibration_path is None and (path.parent / "calibration.hqtr").exists():
        calibration_path = path.parent / "calibration.hqtr"
    calibration = None
    if calibration_path is not None:
        calibration, cal_header = read_trace_file(calibration_path)
        if cal_header["sample_rate_hz"] != header["sample_rate_hz"]:
            raise FormatError("calibration traces use a different sample rate")
    phase = header.get("true_phase")
    t_acq = header.get("acquisition_time_s")
    return TraceSet(
        samples=samples,
        sample_period_s=1.0 / float(header["sample_rate_hz"]),
        herald_index=int(header["herald_index"]),
        calibration=calibration,
        true_phase=None if phase is None else np.asarray(phase),
        acquisition_time_s=None if t_acq is None else np.asarray(t_acq),
        params=header.get("params", {}),
    )


def write_records_csv(path: Path, records: QuadratureRecords) -> None:
    table = np.column_stack([records.x, records.theta, records.trace_index])
    np.savetxt(path, table, fmt=["%.17g", "%.17g", "%d"], delimiter=",", header="x,theta,trace_index", comments="")


def read_records_csv(path: Path) -> QuadratureRecords:
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"cannot parse records file {path}: {exc}") from exc
    if table.shape[1] != 3:
        raise FormatError(f"{path}: expected 3 columns (x, theta, trace_index)")
    return QuadratureRecords(table[:, 0], table[:, 1], table[:, 2].astype(np.int64))


def write_mode_csv(path: Path, mode: TemporalMode) -> None:
    np.savetxt(path, np.column_stack([mode.t_grid, mode.values]), fmt="%.17g", delimiter=",",
               header="t_s,f", comments="")


def read_mode_csv(path: Path) -> TemporalMode:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return TemporalMode(table[:, 0], table[:, 1])


def write_spectrum_csv(path: Path, eigenvalues: np.ndarray) -> None:
    table = np.column_stack([np.arange(eigenvalues.size), eigenvalues])
    np.savetxt(path, table, fmt=["%d", "%.17g"], delimiter=",", header="index,eigenvalue", comments="")


def rho_to_json(rho: np.ndarray, extra: dict | None = None) -> str:
    doc = {"dim": int(rho.shape[0]), "real": rho.real.tolist(), "imag": rho.imag.tolist()}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=True)


def rho_from_json(text: str) -> tuple[np.ndarray, dict]:
    """Parse a density-matrix document; returns the matrix and the full document."""
    try:
        doc = json.loads(text)
        dim = int(doc["dim"])
        rho = np.asarray(doc["real"], dtype=float) + 1j * np.asarray(doc["imag"], dtype=float)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"not a density-matrix document: {exc}") from exc
    if rho.shape != (dim, dim):
        raise FormatError(f"matrix shape {rho.shape} does not match dim={dim}")
    return rho, doc


def write_loglik_csv(path: Path, history: np.ndarray) -> None:
    table = np.column_stack([np.arange(history.size), history])
    np.savetxt(path, table, fmt=["%d", "%.17g"], delimiter=",", header="iteration,loglik", comments="")


def write_wigner_csv(path: Path, grid: WignerGrid) -> None:
    """Header row of x values, then one row per p value led by that p."""
    with open(path, "w") as fh:
        fh.write("p\\x," + ",".join(f"{v:.10g}" for v in grid.x_values) + "\n")
        for p, row in zip(grid.p_values, grid.w):
            fh.write(f"{p:.10g}," + ",".join(f"{v:.10g}" for v in row) + "\n")


def read_wigner_csv(path: Path) -> WignerGrid:
    with open(path) as fh:
        x = np.array([float(v) for v in fh.readline().strip().split(",")[1:]])
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return WignerGrid(x, table[:, 0], table[:, 1:])


def write_json(path: Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
