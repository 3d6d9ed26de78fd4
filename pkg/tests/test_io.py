from __future__ import annotations

import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from heraldsim import fock, io, synth, wigner
from heraldsim.io import FormatError
from heraldsim.model import ExperimentParams
from heraldsim.traces import QuadratureRecords

HEADER = {"sample_rate_hz": 1e9, "herald_index": 3, "calibration": False, "params": {"a": 1}}

finite32 = st.floats(-1e6, 1e6, allow_nan=False, width=32)


@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, max_side=16), elements=finite32))
def test_trace_file_round_trip(samples):
    blob = io.encode_trace_file(samples, HEADER)
    back, header = io.decode_trace_file(blob)
    assert back.tobytes() == samples.tobytes()
    assert (header["n_traces"], header["n_samples"]) == samples.shape
    assert io.encode_trace_file(back, header) == blob


def test_trace_file_layout():
    samples = np.arange(6, dtype=np.float32).reshape(2, 3)
    blob = io.encode_trace_file(samples, HEADER)
    magic, version, n_header = struct.unpack_from("<4sHI", blob)
    assert magic == b"HQTR" and version == 1
    header = json.loads(blob[10 : 10 + n_header])
    assert header["n_traces"] == 2 and header["n_samples"] == 3
    assert len(blob) == 10 + n_header + 6 * 4
    np.testing.assert_array_equal(np.frombuffer(blob[10 + n_header :], "<f4"), np.arange(6))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"XQTR" + b[4:],
        lambda b: b[:4] + struct.pack("<H", 2) + b[6:],
        lambda b: b[:-4],
        lambda b: b + b"\0\0\0\0",
        lambda b: b[:8],
        lambda b: b[:6] + struct.pack("<I", 10**6) + b[10:],
        lambda b: b[:10] + b"}" + b[11:],
    ],
    ids=["magic", "version", "short-payload", "long-payload", "truncated", "header-length", "header-json"],
)
def test_trace_file_rejects_corruption(mutate):
    blob = io.encode_trace_file(np.zeros((2, 3), np.float32), HEADER)
    with pytest.raises(FormatError):
        io.decode_trace_file(mutate(blob))


def test_save_and_load_trace_set(tmp_path):
    params = ExperimentParams(trace_duration_s=1e-6)
    run = synth.synthesize_run(params, n_traces=20, seed=1, options=synth.SynthOptions(n_calibration=100))
    main, cal = io.save_traces(tmp_path, run)
    back = io.load_traces(main)
    np.testing.assert_array_equal(back.samples, run.samples)
    np.testing.assert_array_equal(back.calibration, run.calibration)
    np.testing.assert_array_equal(back.true_phase, run.true_phase)
    assert back.herald_index == run.herald_index
    assert back.sample_period_s == pytest.approx(run.sample_period_s)
    assert back.params["rng_seed"] == 1
    with pytest.raises(FormatError):
        io.load_traces(cal)


def test_load_rejects_mismatched_calibration(tmp_path):
    io.write_trace_file(tmp_path / "a.hqtr", np.zeros((2, 4), np.float32), dict(HEADER))
    io.write_trace_file(tmp_path / "c.hqtr", np.zeros((2, 4), np.float32), dict(HEADER, sample_rate_hz=2e9))
    with pytest.raises(FormatError):
        io.load_traces(tmp_path / "a.hqtr", tmp_path / "c.hqtr")
    assert io.load_traces(tmp_path / "a.hqtr").calibration is None


def test_records_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rec = QuadratureRecords(rng.normal(size=50), rng.uniform(0, np.pi, 50), np.arange(50) * 3)
    io.write_records_csv(tmp_path / "r.csv", rec)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "x,theta,trace_index"
    back = io.read_records_csv(tmp_path / "r.csv")
    np.testing.assert_array_equal(back.x, rec.x)
    np.testing.assert_array_equal(back.theta, rec.theta)
    np.testing.assert_array_equal(back.trace_index, rec.trace_index)


def test_records_csv_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("x,theta,trace_index\n1,2\n")
    with pytest.raises(FormatError):
        io.read_records_csv(tmp_path / "bad.csv")
    (tmp_path / "text.csv").write_text("x,theta,trace_index\na,b,c\n")
    with pytest.raises(FormatError):
        io.read_records_csv(tmp_path / "text.csv")


def test_mode_csv_round_trip(tmp_path):
    mode = synth.temporal_mode(3e7, np.arange(-40, 1) * 8e-9)
    io.write_mode_csv(tmp_path / "m.csv", mode)
    back = io.read_mode_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.values, mode.values)
    np.testing.assert_array_equal(back.t_grid, mode.t_grid)


def test_rho_json_round_trip():
    rho = fock.rotate(fock.squeezed_vacuum(-3.0, 16), 0.3)
    text = io.rho_to_json(rho, {"povm_efficiency": 0.7})
    back, doc = io.rho_from_json(text)
    np.testing.assert_array_equal(back, rho)
    assert doc["povm_efficiency"] == 0.7 and doc["dim"] == 16


@pytest.mark.parametrize("text", ["", "[]", '{"dim": 2}', '{"dim": 3, "real": [[1, 0], [0, 0]], "imag": [[0, 0], [0, 0]]}'])
def test_rho_json_errors(text):
    with pytest.raises(FormatError):
        io.rho_from_json(text)


def test_wigner_csv_round_trip(tmp_path):
    axis = np.linspace(-6, 6, 61)
    grid = wigner.wigner_grid(fock.fock_state(1, 4), axis, axis[5:-5])
    io.write_wigner_csv(tmp_path / "w.csv", grid)
    back = io.read_wigner_csv(tmp_path / "w.csv")
    np.testing.assert_allclose(back.x_values, grid.x_values)
    np.testing.assert_allclose(back.p_values, grid.p_values)
    np.testing.assert_allclose(back.w, grid.w, rtol=1e-9, atol=1e-15)


def test_write_json_handles_numpy(tmp_path):
    io.write_json(tmp_path / "a.json", {"a": np.float64(1.5), "b": np.arange(3), "c": tmp_path})
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc == {"a": 1.5, "b": [0, 1, 2], "c": str(tmp_path)}
    with pytest.raises(TypeError):
        io.write_json(tmp_path / "b.json", {"a": object()})
