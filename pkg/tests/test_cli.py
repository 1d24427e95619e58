import json

import numpy as np
import pytest

from wastescan.cli import main
from wastescan.georaster import write_raster

from conftest import checkerboard, make_raster


@pytest.fixture
def raster_on_disk(tmp_path):
    px = np.full((400, 400, 3), 128, dtype=np.uint8)
    px[:200, 200:] = checkerboard(200, 200)
    write_raster(make_raster(pixels=px, gsd=0.5), tmp_path / "aoi.png")
    return tmp_path / "aoi.png"


def test_scan_command(tmp_path, raster_on_disk, capsys):
    out = tmp_path / "scanout"
    rc = main(["scan", "--raster", str(raster_on_disk), "--gsd-cm", "50",
               "--context-m", "100", "--workers", "2", "--out", str(out)])
    assert rc == 0
    assert (out / "detections.geojson").exists()
    assert (out / "scan_report.json").exists()
    assert "1 candidate(s)" in capsys.readouterr().out


def test_grid_command(tmp_path, capsys):
    out = tmp_path / "grid.jsonl"
    assert main(["grid", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 48


def test_dataset_pipeline(tmp_path, capsys):
    # sample negatives around positives, build tiles, split, evaluate
    csv = tmp_path / "pos.csv"
    csv.write_text("id,x,y,label,source\n"
                   "p0,500500.0,4999500.0,positive,synth\n"
                   "p1,500900.0,4999100.0,positive,synth\n")
    sampled = tmp_path / "locations.csv"
    rc = main(["dataset", "sample", "--positives", str(csv), "--r-min", "120",
               "--r-max", "240", "--min-separation", "110", "--seed", "3",
               "--out", str(sampled)])
    assert rc == 0
    assert len(sampled.read_text().splitlines()) == 1 + 2 + 4

    big = make_raster(w=4000, h=4000, gsd=0.5, value=128)
    write_raster(big, tmp_path / "src.png")
    built = tmp_path / "tiles"
    rc = main(["dataset", "build", "--locations", str(sampled),
               "--raster", f"synth={tmp_path / 'src.png'}",
               "--gsd-cm", "50", "--context-m", "100", "--out", str(built)])
    assert rc == 0
    manifest_lines = (built / "manifest.jsonl").read_text().splitlines()
    assert len(manifest_lines) == 6

    split_dir = tmp_path / "split"
    rc = main(["dataset", "split", "--manifest", str(built / "manifest.jsonl"),
               "--test-fraction", "0.5", "--seed", "1", "--out", str(split_dir)])
    assert rc == 0
    report = json.loads((split_dir / "split_report.json").read_text())
    assert report["test"]["positive"] == 1
    assert report["test"]["negative"] == 2

    rc = main(["eval", "--manifest", str(built / "manifest.jsonl"),
               "--gsd-cm", "50", "--context-m", "100",
               "--out", str(tmp_path / "metrics.json")])
    assert rc == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    # uniform tiles all score 0: negatives right, positives missed
    assert metrics["percent"]["accuracy"] == "66.67%"


def test_external_backend_flag_parsing(tmp_path, raster_on_disk):
    rc_err = None
    try:
        main(["scan", "--raster", str(raster_on_disk), "--gsd-cm", "50",
              "--context-m", "100", "--backend", "nonsense",
              "--out", str(tmp_path / "x")])
    except SystemExit as exc:
        rc_err = exc.code
    assert rc_err is not None
