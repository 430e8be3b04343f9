import csv
import json
import sys

import numpy as np
import pytest

from flopforge.backends import ComputeBackend, KernelResult, register_backend, unregister_backend
from flopforge.cli import main
from flopforge.demosaic import demosaic_bilinear, mosaic_from_rgb
from flopforge.imageio import read_ppm, write_pgm, write_ppm
from flopforge.rotbench import CSV_HEADER, read_csv, readout, rotate_closed_form


class InstantBackend(ComputeBackend):
    id = "cli-instant"
    capability = "accelerator"

    def execute(self, spec, workers):
        exact = rotate_closed_form((1.0, 0.0), spec.iterations).astype(np.float32)
        blocks = np.broadcast_to(exact[None, :, None], (workers, 2, spec.dimensionality))
        return KernelResult(1e-3, np.broadcast_to(readout(blocks[0]), (workers,)), blocks)


class FailingBackend(InstantBackend):
    id = "cli-failing"

    def execute(self, spec, workers):
        if workers > 300:
            raise RuntimeError("device lost")
        return super().execute(spec, workers)


@pytest.fixture
def plugins():
    register_backend(InstantBackend.id, InstantBackend)
    register_backend(FailingBackend.id, FailingBackend)
    yield
    unregister_backend(InstantBackend.id)
    unregister_backend(FailingBackend.id)


def csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def load_records(path):
    with open(path, newline="") as fh:
        return read_csv(fh)


# -- bench -------------------------------------------------------------------------

def test_bench_cpu_regime_128_rows(tmp_path):
    out = tmp_path / "cpu.csv"
    assert main(["bench", "--regime", "cpu", "--iterations", "50", "--csv", str(out)]) == 0
    rows = csv_rows(out)
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 129
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 4097, 32))


def test_bench_gpu_regime_4000_rows(tmp_path, plugins):
    out, js = tmp_path / "gpu.csv", tmp_path / "gpu.json"
    rc = main(["bench", "--regime", "gpu", "--dim", "1", "--backend", InstantBackend.id,
               "--no-verify", "--csv", str(out), "--json", str(js)])
    assert rc == 0
    records = load_records(out)
    assert len(records) == 4000
    assert records[0].workers == 256 and records[-1].workers == 1_024_000
    doc = json.loads(js.read_text())
    assert doc["complete"] is True
    assert doc["manifest"]["config"]["sweep"]["points"] == 4000
    assert "dispatch" in doc["timing"]


def test_bench_single_point(tmp_path, capsys):
    assert main(["bench", "--workers", "256:256:256", "--iterations", "100",
                 "--backend", "scalar"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[1].startswith("256,")


def test_bench_backend_failure_keeps_partial_csv(tmp_path, plugins):
    out, js = tmp_path / "p.csv", tmp_path / "p.json"
    rc = main(["bench", "--workers", "256:1024:32", "--backend", FailingBackend.id,
               "--iterations", "10", "--csv", str(out), "--json", str(js)])
    assert rc != 0
    assert [r.workers for r in load_records(out)] == [256, 288]
    doc = json.loads(js.read_text())
    assert doc["complete"] is False and "device lost" in doc["failure"]


def test_bench_unknown_backend(tmp_path, capsys):
    assert main(["bench", "--backend", "nope", "--csv", str(tmp_path / "x.csv")]) == 1
    assert "unknown backend" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


def test_bench_unwritable_output(tmp_path):
    target = tmp_path / "missing" / "x.csv"
    assert main(["bench", "--workers", "1:1:1", "--iterations", "1", "--backend", "scalar",
                 "--csv", str(target)]) == 1


@pytest.mark.parametrize("argv", [
    ["bench", "--workers", "1:2"],
    ["bench", "--regime", "tpu"],
    ["bench", "--dim", "3"],
    ["bench", "--regime", "cpu", "--workers", "1:1:1"],
])
def test_bench_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


# -- images ------------------------------------------------------------------------

def test_demosaic_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    raw = rng.integers(0, 256, (16, 24), dtype=np.uint8)
    write_pgm(tmp_path / "in.pgm", raw)
    assert main(["demosaic", str(tmp_path / "in.pgm"), str(tmp_path / "out.ppm")]) == 0
    np.testing.assert_array_equal(read_ppm(tmp_path / "out.ppm"), demosaic_bilinear(raw))


def test_demosaic_rejects_odd_size(tmp_path):
    write_pgm(tmp_path / "in.pgm", np.zeros((5, 6), np.uint8))
    assert main(["demosaic", str(tmp_path / "in.pgm"), str(tmp_path / "out.ppm")]) == 1
    assert not (tmp_path / "out.ppm").exists()


def test_reproject_constant_image(tmp_path):
    src = np.full((64, 80, 3), 90, np.uint8)
    write_ppm(tmp_path / "fish.ppm", src)
    rc = main(["reproject", "--lens-fov", "195", "--cam-fov", "150", "--out-size", "40x32",
               str(tmp_path / "fish.ppm"), str(tmp_path / "rect.ppm")])
    assert rc == 0
    out = read_ppm(tmp_path / "rect.ppm")
    assert out.shape == (32, 40, 3)
    assert (out == 90).all()


def test_reproject_bad_fov(tmp_path):
    write_ppm(tmp_path / "fish.ppm", np.zeros((8, 8, 3), np.uint8))
    assert main(["reproject", "--cam-fov", "180", str(tmp_path / "fish.ppm"),
                 str(tmp_path / "rect.ppm")]) == 1


# -- pipeline ----------------------------------------------------------------------

@pytest.fixture
def frames(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    rng = np.random.default_rng(0)
    for i in range(4):
        rgb = rng.integers(0, 256, (32, 40, 3), dtype=np.uint8)
        write_pgm(d / f"f{i:03d}.pgm", mosaic_from_rgb(rgb))
    return d


def test_pipeline_report(frames, tmp_path):
    report = tmp_path / "r.json"
    rc = main(["pipeline", "--frames", str(frames), "--out-size", "20x16",
               "--detector", "stub:1,3", "--report", str(report)])
    assert rc == 0
    doc = json.loads(report.read_text())
    assert doc["frames_in"] == doc["frames_out"] == 4
    assert doc["failure"] is None
    assert doc["sd_formula"].startswith("sample")
    assert doc["manifest"]["subcommand"] == "pipeline"
    assert doc["manifest"]["config"]["out_size"] == [20, 16]
    for stage in doc["stages"].values():
        assert stage["n"] == 4 and stage["sd_s"] >= 0


def test_pipeline_detector_failure(frames, tmp_path):
    script = tmp_path / "det.py"
    script.write_text("import sys\nsys.exit(3)\n")
    report = tmp_path / "r.json"
    rc = main(["pipeline", "--frames", str(frames), "--out-size", "20x16",
               "--detector", f"exec:{sys.executable} {script}", "--report", str(report)])
    assert rc == 1
    doc = json.loads(report.read_text())
    assert doc["failure"]["frame"] == 0
    assert doc["failure"]["stage"] == "detect"


def test_pipeline_empty_directory(tmp_path):
    (tmp_path / "none").mkdir()
    assert main(["pipeline", "--frames", str(tmp_path / "none"),
                 "--report", str(tmp_path / "r.json")]) == 1


# -- power-report ------------------------------------------------------------------

def test_power_report(tmp_path):
    log = tmp_path / "log.csv"
    log.write_text("timestamp_s,current_a,voltage_v\n" +
                   "".join(f"{i * 0.1},2.5325,16\n" for i in range(20)))
    report = tmp_path / "p.json"
    rc = main(["power-report", "--log", str(log), "--supply-voltage", "16",
               "--battery", "14.8:3.85", "--flops", "5.25e12", "--efficiency-power", "50.17",
               "--report", str(report)])
    assert rc == 0
    doc = json.loads(report.read_text())
    assert doc["power_w"] == pytest.approx(40.52)
    assert doc["battery_life_min"] == pytest.approx(84.36, rel=0.005)
    assert doc["efficiency"]["gflops_per_w"] == pytest.approx(104.64, rel=1e-3)
    assert doc["manifest"]["config"]["battery"] == "14.8:3.85"


def test_power_report_malformed_log(tmp_path, capsys):
    log = tmp_path / "log.csv"
    log.write_text("0,1,16\n1,oops,16\n")
    assert main(["power-report", "--log", str(log)]) == 1
    assert "row 2" in capsys.readouterr().err


# -- plotdata ----------------------------------------------------------------------

def test_plotdata_sweep_rows_preserved_and_sorted(tmp_path, plugins):
    sweep = tmp_path / "gpu.csv"
    main(["bench", "--regime", "gpu", "--dim", "1", "--backend", InstantBackend.id,
          "--no-verify", "--csv", str(sweep)])
    rows = csv_rows(sweep)
    # shuffle the data rows; the series must come back sorted
    shuffled = [rows[0]] + rows[:0:-1]
    with open(sweep, "w", newline="") as fh:
        csv.writer(fh).writerows(shuffled)
    out = tmp_path / "plots"
    assert main(["plotdata", str(sweep), "--out-dir", str(out)]) == 0
    data = np.loadtxt(out / "gpu.dat")
    assert data.shape == (4000, 2)
    assert (np.diff(data[:, 0]) > 0).all()


def test_plotdata_two_sweeps(tmp_path):
    paths = []
    for name in ("a", "b"):
        p = tmp_path / f"{name}.csv"
        main(["bench", "--workers", "1:65:32", "--iterations", "10", "--backend", "scalar",
              "--csv", str(p)])
        paths.append(str(p))
    assert main(["plotdata", *paths, "--out-dir", str(tmp_path / "o")]) == 0
    assert sorted(f.name for f in (tmp_path / "o").iterdir()) == ["a.dat", "b.dat"]


def test_plotdata_power_log(tmp_path):
    log = tmp_path / "nuc.csv"
    log.write_text("0.2,2.0,16\n0.3,2.5,16\n")
    assert main(["plotdata", str(log), "--out-dir", str(tmp_path)]) == 0
    text = (tmp_path / "nuc.dat").read_text().splitlines()
    assert text[0].startswith("#")
    assert np.loadtxt(tmp_path / "nuc.dat").tolist() == [[0.2, 2.0], [0.3, 2.5]]


def test_plotdata_mixed_inputs(tmp_path):
    sweep = tmp_path / "s.csv"
    main(["bench", "--workers", "1:1:1", "--iterations", "1", "--backend", "scalar",
          "--csv", str(sweep)])
    log = tmp_path / "l.csv"
    log.write_text("0,1,16\n")
    assert main(["plotdata", str(sweep), str(log), "--out-dir", str(tmp_path / "o")]) == 1


def test_plotdata_empty_input_list():
    with pytest.raises(SystemExit) as exc:
        main(["plotdata"])
    assert exc.value.code == 2
