import json
import math

import numpy as np
import pytest

from elacu.dofs import FieldSpace, build_dof_map
from elacu.errors import ConfigError
from elacu.io_formats import (
    ErrorRow,
    format_csv,
    parse_config,
    read_csv,
    serialize_config,
    write_csv,
    write_vtk,
)
from elacu.mesh import BlockSpec, build_block_mesh

MINIMAL = """
{
  "geometry": {"option": 2, "level": 0},
  "discretization": {"p": 2},
  "time": {"T": 6.2831853, "dt": 0.0031416}
}
"""


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.option == 2 and cfg.level == 0 and cfg.p == 2
    assert cfg.beta == 10.0
    assert cfg.scheme == "partitioned"
    assert cfg.newmark == (0.25, 0.5)
    assert cfg.material_set == 1
    assert cfg.model.kind == "table"
    assert not cfg.conforming


def test_unknown_keys_listed():
    bad = json.loads(MINIMAL)
    bad["geometry"]["shape"] = "cube"
    bad["extra"] = 1
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(bad))
    assert "extra" in str(err.value) or "geometry.shape" in str(err.value)


def test_type_mismatch_has_path():
    bad = json.loads(MINIMAL)
    bad["time"]["dt"] = "fast"
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(bad))
    assert "time.dt" in str(err.value)


def test_negative_beta_rejected():
    bad = json.loads(MINIMAL)
    bad["discretization"]["beta"] = -1.0
    with pytest.raises(ConfigError):
        parse_config(json.dumps(bad))


def test_model_conflict_rejected():
    bad = json.loads(MINIMAL)
    bad["model"] = {"name": "kuznetsov", "k1": {"f": 0.1}}
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(bad))
    assert "one source" in str(err.value)


def test_named_model_parsed():
    data = json.loads(MINIMAL)
    data["model"] = "kuznetsov"
    cfg = parse_config(json.dumps(data))
    assert cfg.model.kind == "named" and cfg.model.name == "kuznetsov"


def test_config_round_trip():
    variants = [
        MINIMAL,
        json.dumps(
            {
                "geometry": {"option": 1, "level": 2, "conforming": True},
                "discretization": {"p": 3, "beta": 25.0},
                "materials": {"set": 2},
                "model": {"k1": {"f": 0.5}, "k2": {"t": 1.0}},
                "time": {
                    "T": 1.0, "dt": 0.01, "scheme": "monolithic",
                    "integrator": "genalpha",
                    "picard": {"tol": 1e-8, "max_iter": 20},
                    "linear_solver": {"method": "cg", "tol": 1e-10, "max_iter": 500},
                },
                "experiment": {"initial": "zero", "forcing": "none", "dirichlet": "zero"},
                "outputs": {"csv": "x.csv", "vtk_stride": 5, "probe": [0, 0, 7.0]},
            }
        ),
    ]
    for text in variants:
        cfg = parse_config(text)
        again = parse_config(serialize_config(cfg))
        assert again == cfg


def test_csv_empty_and_single_row():
    assert format_csv([]) == "level,h_max,n_dofs,err_abs_LinfE,err_rel_LinfE,rate\n"
    rows = [ErrorRow(level=0, h_max=math.pi / 2, n_dofs=843,
                     err_abs=3.0257491032864, err_rel=0.0822456776259)]
    text = format_csv(rows)
    lines = text.splitlines()
    assert len(lines) == 2
    assert lines[1].endswith(",")  # empty rate on the first row
    assert "1.57079632679" in lines[1]  # 12 significant digits


def test_csv_significant_digits_and_round_trip(tmp_path):
    rows = [
        ErrorRow(level=0, h_max=0.2, n_dofs=10, err_abs=1.0, err_rel=0.5),
        ErrorRow(level=1, h_max=0.1, n_dofs=20, err_abs=0.25,
                 err_rel=0.125, rate=1.9983112345),
    ]
    path = tmp_path / "table.csv"
    write_csv(rows, path)
    raw = path.read_text()
    assert "1.9983112345" in raw
    assert "\r" not in raw
    back = read_csv(path)
    assert back[1].rate == pytest.approx(1.9983112345, abs=1e-12)
    assert back[0].rate is None
    assert [r.err_rel for r in back] == [0.5, 0.125]


def _vtk_blocks(p):
    mesh = build_block_mesh(BlockSpec(lo=(0, 0, 0), hi=(1, 1, 1), n=(1, 1, 1), tag="f"))
    return [build_dof_map(mesh, p, 1)]


def test_vtk_p1_counts(tmp_path):
    blocks = _vtk_blocks(1)
    path = tmp_path / "out.vtk"
    write_vtk(blocks, {"f": np.zeros(8)}, None, path)
    text = path.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile Version 3.0")
    assert "POINTS 8 float" in text
    assert "CELLS 1 9" in text
    assert "CELL_TYPES 1" in text
    idx = text.index("LOOKUP_TABLE default")
    assert all(v == "0" for v in text[idx + 1:idx + 9])


def test_vtk_p2_subdivision(tmp_path):
    blocks = _vtk_blocks(2)
    path = tmp_path / "out.vtk"
    write_vtk(blocks, {"f": np.arange(27.0)},
              {"f": np.zeros((27, 3))}, path)
    text = path.read_text()
    assert "POINTS 27 float" in text
    assert "CELLS 8 72" in text
    assert "VECTORS displacement float" in text
