"""Run configuration parsing, CSV error tables, legacy-VTK field export."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

CSV_HEADER = ["level", "h_max", "n_dofs", "err_abs_LinfE", "err_rel_LinfE", "rate"]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Resolved acoustic nonlinearity source.

    kind: "table" (use the material set's k values), "named" (derive k from
    B/A and c), or "explicit" (k values given per block).
    """

    kind: str
    name: str | None = None
    k1: dict | None = None
    k2: dict | None = None
    ba: dict | None = None


@dataclass(frozen=True)
class RunConfig:
    option: int = 2
    level: int = 0
    conforming: bool = False
    p: int = 2
    beta: float = 10.0
    material_set: int | str = 1
    material_override: dict = field(default_factory=dict)
    model: ModelSpec = field(default_factory=lambda: ModelSpec(kind="table"))
    t_final: float = 2.0 * math.pi
    dt: float = 2.0 * math.pi / 2000.0
    scheme: str = "partitioned"
    integrator: str = "newmark"
    newmark: tuple = (0.25, 0.5)
    genalpha: tuple = (4.0 / 9.0, 5.0 / 6.0, 0.0, 1.0 / 3.0)
    picard_tol: float = 1e-10
    picard_maxiter: int = 50
    solver: str = "direct"
    solver_tol: float = 1e-12
    solver_maxiter: int = 0
    initial: str = "manufactured"     # or "zero"
    forcing: str = "manufactured"     # or "none"
    dirichlet: str = "manufactured"   # or "zero"
    csv_path: str | None = None
    vtk_stride: int = 0
    probe: tuple | None = None
    demo_frequency: float = 1500.0
    demo_amplitude: float = 0.01
    demo_zeta: float = 0.0


_SCHEMA = {
    "geometry": {"option": int, "level": int, "conforming": bool},
    "discretization": {"p": int, "beta": (int, float)},
    "materials": {"set": (int, str), "override": dict},
    "model": (str, dict),
    "time": {
        "T": (int, float),
        "dt": (int, float),
        "scheme": str,
        "integrator": str,
        "newmark": {"beta": (int, float), "gamma": (int, float)},
        "genalpha": {
            "beta": (int, float),
            "gamma": (int, float),
            "alpha_m": (int, float),
            "alpha_f": (int, float),
        },
        "picard": {"tol": (int, float), "max_iter": int},
        "linear_solver": {"method": str, "tol": (int, float), "max_iter": int},
    },
    "experiment": {"initial": str, "forcing": str, "dirichlet": str},
    "outputs": {"csv": str, "vtk_stride": int, "probe": list},
    "demo": {"frequency": (int, float), "amplitude": (int, float), "zeta": (int, float)},
}


def _check_keys(data: dict, schema: dict, path: str = ""):
    unknown = [f"{path}{k}" for k in data if k not in schema]
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    for k, v in data.items():
        rule = schema[k]
        where = f"{path}{k}"
        if isinstance(rule, dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where}: expected an object, got {type(v).__name__}")
            _check_keys(v, rule, where + ".")
        else:
            types = rule if isinstance(rule, tuple) else (rule,)
            if isinstance(v, bool) and bool not in types:
                raise ConfigError(f"{where}: expected {rule}, got a boolean")
            if not isinstance(v, rule):
                raise ConfigError(
                    f"{where}: expected {getattr(rule, '__name__', rule)}, "
                    f"got {type(v).__name__}"
                )


def _parse_model(raw, material_set) -> ModelSpec:
    if raw is None:
        return ModelSpec(kind="linear" if material_set == "physical" else "table",
                         name="linear" if material_set == "physical" else None)
    if isinstance(raw, str):
        if raw == "table":
            return ModelSpec(kind="table")
        if raw in ("linear", "westervelt", "kuznetsov"):
            return ModelSpec(kind="named", name=raw)
        raise ConfigError(f"model: unknown name {raw!r}")
    allowed = {"name", "k1", "k2", "ba"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"model: unknown keys {sorted(unknown)}")
    has_named = "name" in raw
    has_explicit = "k1" in raw or "k2" in raw
    if has_named and has_explicit:
        raise ConfigError(
            "model: pick one source for (k1, k2): a named model or explicit values"
        )
    if has_named:
        return ModelSpec(kind="named", name=raw["name"], ba=raw.get("ba"))
    if has_explicit:
        return ModelSpec(kind="explicit", k1=raw.get("k1", {}), k2=raw.get("k2", {}))
    raise ConfigError("model: empty specification")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration, filling defaults."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be an object")
    _check_keys(data, _SCHEMA)

    geo = data.get("geometry", {})
    disc = data.get("discretization", {})
    mats = data.get("materials", {})
    time_cfg = data.get("time", {})
    exp = data.get("experiment", {})
    outs = data.get("outputs", {})
    demo = data.get("demo", {})

    option = geo.get("option", 2)
    if option not in (1, 2):
        raise ConfigError(f"geometry.option: must be 1 or 2, got {option!r}")
    level = geo.get("level", 0)
    if level < 0:
        raise ConfigError("geometry.level: must be >= 0")
    p = disc.get("p", 2)
    if not 1 <= p <= 12:
        raise ConfigError("discretization.p: must be in 1..12")
    beta = float(disc.get("beta", 10.0))
    if not (beta > 0 and math.isfinite(beta)):
        raise ConfigError("discretization.beta: must be positive and finite")

    mset = mats.get("set", 1)
    if mset not in (1, 2, "physical"):
        raise ConfigError("materials.set: must be 1, 2 or 'physical'")

    model = _parse_model(data.get("model"), mset)

    t_final = float(time_cfg.get("T", 2.0 * math.pi))
    dt = float(time_cfg.get("dt", 2.0 * math.pi / 2000.0))
    if not (math.isfinite(t_final) and math.isfinite(dt) and 0 < dt <= t_final):
        raise ConfigError("time: need finite 0 < dt <= T")
    scheme = time_cfg.get("scheme", "partitioned")
    if scheme not in ("partitioned", "monolithic"):
        raise ConfigError(f"time.scheme: unknown {scheme!r}")
    integrator = time_cfg.get("integrator", "newmark")
    if integrator not in ("newmark", "genalpha"):
        raise ConfigError(f"time.integrator: unknown {integrator!r}")
    nm = time_cfg.get("newmark", {})
    newmark = (float(nm.get("beta", 0.25)), float(nm.get("gamma", 0.5)))
    ga = time_cfg.get("genalpha", {})
    genalpha = (
        float(ga.get("beta", 4.0 / 9.0)),
        float(ga.get("gamma", 5.0 / 6.0)),
        float(ga.get("alpha_m", 0.0)),
        float(ga.get("alpha_f", 1.0 / 3.0)),
    )
    pic = time_cfg.get("picard", {})
    sol = time_cfg.get("linear_solver", {})
    method = sol.get("method", "direct")
    if method not in ("direct", "cg"):
        raise ConfigError(f"time.linear_solver.method: unknown {method!r}")

    for key, val in (("initial", exp.get("initial", "manufactured")),
                     ("forcing", exp.get("forcing", "manufactured")),
                     ("dirichlet", exp.get("dirichlet", "manufactured"))):
        choices = {
            "initial": ("manufactured", "zero"),
            "forcing": ("manufactured", "none"),
            "dirichlet": ("manufactured", "zero"),
        }[key]
        if val not in choices:
            raise ConfigError(f"experiment.{key}: must be one of {choices}")

    probe = outs.get("probe")
    if probe is not None:
        if len(probe) != 3 or not all(isinstance(x, (int, float)) for x in probe):
            raise ConfigError("outputs.probe: expected [x, y, z]")
        probe = tuple(float(x) for x in probe)

    return RunConfig(
        option=option,
        level=level,
        conforming=bool(geo.get("conforming", False)),
        p=p,
        beta=beta,
        material_set=mset,
        material_override=mats.get("override", {}),
        model=model,
        t_final=t_final,
        dt=dt,
        scheme=scheme,
        integrator=integrator,
        newmark=newmark,
        genalpha=genalpha,
        picard_tol=float(pic.get("tol", 1e-10)),
        picard_maxiter=int(pic.get("max_iter", 50)),
        solver=method,
        solver_tol=float(sol.get("tol", 1e-12)),
        solver_maxiter=int(sol.get("max_iter", 0)),
        initial=exp.get("initial", "manufactured"),
        forcing=exp.get("forcing", "manufactured"),
        dirichlet=exp.get("dirichlet", "manufactured"),
        csv_path=outs.get("csv"),
        vtk_stride=int(outs.get("vtk_stride", 0)),
        probe=probe,
        demo_frequency=float(demo.get("frequency", 1500.0)),
        demo_amplitude=float(demo.get("amplitude", 0.01)),
        demo_zeta=float(demo.get("zeta", 0.0)),
    )


def serialize_config(cfg: RunConfig) -> str:
    """JSON text that parses back to an equal RunConfig."""
    model: str | dict
    if cfg.model.kind == "table":
        model = "table"
    elif cfg.model.kind == "named" and cfg.model.ba is None:
        model = cfg.model.name
    elif cfg.model.kind == "named":
        model = {"name": cfg.model.name, "ba": cfg.model.ba}
    else:
        model = {"k1": cfg.model.k1 or {}, "k2": cfg.model.k2 or {}}
    data = {
        "geometry": {"option": cfg.option, "level": cfg.level, "conforming": cfg.conforming},
        "discretization": {"p": cfg.p, "beta": cfg.beta},
        "materials": {"set": cfg.material_set, "override": cfg.material_override},
        "model": model,
        "time": {
            "T": cfg.t_final,
            "dt": cfg.dt,
            "scheme": cfg.scheme,
            "integrator": cfg.integrator,
            "newmark": {"beta": cfg.newmark[0], "gamma": cfg.newmark[1]},
            "genalpha": {
                "beta": cfg.genalpha[0],
                "gamma": cfg.genalpha[1],
                "alpha_m": cfg.genalpha[2],
                "alpha_f": cfg.genalpha[3],
            },
            "picard": {"tol": cfg.picard_tol, "max_iter": cfg.picard_maxiter},
            "linear_solver": {
                "method": cfg.solver,
                "tol": cfg.solver_tol,
                "max_iter": cfg.solver_maxiter,
            },
        },
        "experiment": {
            "initial": cfg.initial,
            "forcing": cfg.forcing,
            "dirichlet": cfg.dirichlet,
        },
        "outputs": {
            "csv": cfg.csv_path or "",
            "vtk_stride": cfg.vtk_stride,
            **({"probe": list(cfg.probe)} if cfg.probe else {}),
        },
        "demo": {
            "frequency": cfg.demo_frequency,
            "amplitude": cfg.demo_amplitude,
            "zeta": cfg.demo_zeta,
        },
    }
    if not data["outputs"]["csv"]:
        del data["outputs"]["csv"]
    return json.dumps(data, indent=2)


# ---------------------------------------------------------------------------
# CSV error tables
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.12g}"


@dataclass
class ErrorRow:
    level: int
    h_max: float
    n_dofs: int
    err_abs: float
    err_rel: float
    rate: float | None = None


def format_csv(rows: list[ErrorRow]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for r in rows:
        rate = "" if r.rate is None else _fmt(r.rate)
        buf.write(
            f"{r.level},{_fmt(r.h_max)},{r.n_dofs},{_fmt(r.err_abs)},"
            f"{_fmt(r.err_rel)},{rate}\n"
        )
    return buf.getvalue()


def write_csv(rows: list[ErrorRow], path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(format_csv(rows))


def read_csv(path) -> list[ErrorRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ConfigError(f"unexpected CSV header in {path}")
        for rec in reader:
            rows.append(
                ErrorRow(
                    level=int(rec["level"]),
                    h_max=float(rec["h_max"]),
                    n_dofs=int(rec["n_dofs"]),
                    err_abs=float(rec["err_abs_LinfE"]),
                    err_rel=float(rec["err_rel_LinfE"]),
                    rate=float(rec["rate"]) if rec["rate"] else None,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# legacy VTK export
# ---------------------------------------------------------------------------


def write_vtk(blocks, pressure: dict, displacement: dict | None, path) -> None:
    """Legacy ASCII VTK unstructured grid with p^3 linear sub-hexes per element.

    ``blocks`` is a list of BlockDofs; ``pressure[tag]`` holds a nodal
    scalar per block and ``displacement[tag]`` (optional) a nodal (N, 3)
    vector (missing tags are written as zeros).
    """
    points = []
    cells = []
    offset = 0
    scal = []
    vec = []
    for bd in blocks:
        points.append(bd.nodes)
        nxn, nyn, _ = bd.nodes_per_axis
        n = bd.block.n
        p = bd.p
        iz, iy, ix = np.meshgrid(
            np.arange(n[2] * p), np.arange(n[1] * p), np.arange(n[0] * p), indexing="ij"
        )
        ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()

        def nid(dx, dy, dz):
            return offset + ((iz + dz) * nyn + (iy + dy)) * nxn + (ix + dx)

        cells.append(
            np.column_stack(
                [
                    nid(0, 0, 0), nid(1, 0, 0), nid(1, 1, 0), nid(0, 1, 0),
                    nid(0, 0, 1), nid(1, 0, 1), nid(1, 1, 1), nid(0, 1, 1),
                ]
            )
        )
        scal.append(np.asarray(pressure.get(bd.tag, np.zeros(bd.n_nodes))))
        if displacement is not None and bd.tag in displacement:
            vec.append(np.asarray(displacement[bd.tag]).reshape(bd.n_nodes, 3))
        else:
            vec.append(np.zeros((bd.n_nodes, 3)))
        offset += bd.n_nodes

    pts = np.vstack(points)
    cls = np.vstack(cells)
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("coupled wave fields\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {pts.shape[0]} float\n")
        for row in pts:
            fh.write(f"{row[0]:.9g} {row[1]:.9g} {row[2]:.9g}\n")
        fh.write(f"CELLS {cls.shape[0]} {cls.shape[0] * 9}\n")
        for row in cls:
            fh.write("8 " + " ".join(str(int(v)) for v in row) + "\n")
        fh.write(f"CELL_TYPES {cls.shape[0]}\n")
        for _ in range(cls.shape[0]):
            fh.write("12\n")
        fh.write(f"POINT_DATA {pts.shape[0]}\n")
        fh.write("SCALARS pressure float 1\n")
        fh.write("LOOKUP_TABLE default\n")
        for v in np.concatenate(scal):
            fh.write(f"{v:.9g}\n")
        if displacement is not None:
            fh.write("VECTORS displacement float\n")
            for row in np.vstack(vec):
                fh.write(f"{row[0]:.9g} {row[1]:.9g} {row[2]:.9g}\n")
