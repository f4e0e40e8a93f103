import csv
import json

import numpy as np
import pytest

from curvguide.fieldio import atomic_write_text, read_field, write_field, write_reconstruction_csv
from curvguide.geometry import GuideSpec
from curvguide.inverse import ReconstructionResult, select_branch
from curvguide.operator import Field, Grid


def test_fld_roundtrip_bitwise(tmp_path):
    g = Grid.for_guide(GuideSpec(3, 4.0, d2=1.0, d3=2.0), 7, 3)
    phi = Field(g, np.random.default_rng(0).standard_normal(g.size))
    path = write_field(tmp_path / "phi.fld", phi, eigenvalue=9.5)
    back, header = read_field(path)
    assert back.grid == g and np.array_equal(back.values, phi.values)
    assert header["meta"] == {"eigenvalue": 9.5} and header["shape"] == [7, 3, 3]


def test_fld_layout(tmp_path):
    g = Grid.for_guide(GuideSpec(2, 3.0, 1.0), 4, 3)
    phi = Field(g, np.arange(12.0))
    raw = write_field(tmp_path / "a.fld", phi).read_bytes()
    head, body = raw.split(b"\n", 1)
    assert json.loads(head)["order"] == "s-major"
    assert np.array_equal(np.frombuffer(body, "<f8"), np.arange(12.0))


def test_fld_rejects_bad_files(tmp_path):
    bad = tmp_path / "x.fld"
    bad.write_bytes(b'{"format":"csv"}\n')
    with pytest.raises(ValueError):
        read_field(bad)
    g = Grid.for_guide(GuideSpec(2, 3.0, 1.0), 4, 3)
    path = write_field(tmp_path / "y.fld", Field.zeros(g))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_field(path)


def test_reconstruction_csv_columns(tmp_path):
    r = ReconstructionResult(
        s_nodes=np.array([0.0, 1.0, 2.0]),
        gamma_sq=np.array([np.nan, 0.04, np.nan]),
        mask=np.array([False, True, False]),
    )
    with open(write_reconstruction_csv(tmp_path / "a.csv", r)) as fh:
        assert next(csv.reader(fh)) == ["s", "gamma_sq_recon", "mask"]
    r.gamma_true = np.array([0.1, 0.21, 0.1])
    r = select_branch(r)
    with open(write_reconstruction_csv(tmp_path / "b.csv", r)) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["s", "gamma_true", "gamma_sq_recon", "gamma_recon", "mask", "abs_err"]
    assert rows[0]["gamma_sq_recon"] == "" and rows[1]["mask"] == "1"
    assert float(rows[1]["gamma_recon"]) == pytest.approx(0.2)
    assert float(rows[1]["abs_err"]) == pytest.approx(abs(0.04 - 0.21**2))


def test_atomic_write(tmp_path):
    p = atomic_write_text(tmp_path / "m.json", "{}")
    assert p.read_text() == "{}" and not (tmp_path / "m.json.tmp").exists()
