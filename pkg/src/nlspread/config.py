"""Problem configuration files (TOML).

Sections ``[cell]``, ``[kernel]``, ``[a0]``, ``[b]`` and ``[solver]`` are
required; omitted solver keys take the defaults of :class:`SolverConfig`.
A coefficient is ``constant + sum amp cos(2 pi m t/T + 2 pi n x/p + phase)``
given by ``constant`` and ``[[a0.modes]]`` tables, or a CSV field via
``file`` (resolved against the config's directory).  See
``configs/homogeneous.toml`` in the repository for a commented example.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .fields import FieldError, FitnessSpec, PeriodicCell, PeriodicField, evaluate_fourier, load_field_csv
from .kernel import BUILTIN_KERNELS, Kernel, KernelError, make_kernel

SECTIONS = ("cell", "kernel", "a0", "b", "solver")


class ConfigError(ValueError):
    def __init__(self, msg: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + msg)
        self.line = line


@dataclass(frozen=True)
class CellConfig:
    T: float = 1.0
    p: float = 1.0
    n_t: int = 512
    n_x: int = 256


@dataclass(frozen=True)
class KernelConfig:
    name: str = "biweight"
    r0: float = 1.0
    table: tuple[float, ...] = ()


@dataclass(frozen=True)
class Mode:
    m: int
    n: int
    amp: float
    phase: float = 0.0


@dataclass(frozen=True)
class CoefficientConfig:
    constant: float = 0.0
    modes: tuple[Mode, ...] = ()
    file: str = ""


@dataclass(frozen=True)
class SolverConfig:
    eigen_tol: float = 1e-10
    eigen_max_iter: int = 20000
    steady_tol: float = 1e-10
    steady_max_periods: int = 10000
    sim_periods: int = 100
    sim_left_cells: int = 10
    sim_right_cells: int = 80
    sim_burn_in: float = 0.3
    sim_theta: float = 0.5
    sim_step_stride: int = 1
    sim_kind: str = "step"
    spread_periods: int = 60
    spread_final_periods: int = 10
    wave_tol: float = 1e-6
    wave_L_factor: float = 30.0
    wave_max_periods: int = 500
    wave_step_stride: int = 1
    wave_n_z: int = 0                # 0: chosen from the medium's spatial spectrum
    wave_n_t_out: int = 16
    seed: int = 0
    output_dir: str = "nlspread_out"


_POSITIVE = ("eigen_tol", "eigen_max_iter", "steady_tol", "steady_max_periods", "sim_periods",
             "sim_left_cells", "sim_right_cells", "sim_step_stride", "spread_periods",
             "spread_final_periods", "wave_tol", "wave_L_factor", "wave_max_periods",
             "wave_step_stride", "wave_n_t_out")


@dataclass(frozen=True)
class ProblemConfig:
    cell: CellConfig
    kernel: KernelConfig
    a0: CoefficientConfig
    b: CoefficientConfig
    solver: SolverConfig = SolverConfig()
    source: str = field(default="", compare=False)

    @property
    def base_dir(self) -> Path:
        return Path(self.source).parent if self.source else Path(".")

    def make_cell(self) -> PeriodicCell:
        c = self.cell
        return PeriodicCell(c.T, c.p, c.n_t, c.n_x)

    def make_kernel(self) -> Kernel:
        k = self.kernel
        return make_kernel(list(k.table) if k.table else k.name, k.r0)

    def _coefficient(self, cc: CoefficientConfig, cell: PeriodicCell) -> PeriodicField:
        if cc.file:
            f = load_field_csv(self.base_dir / cc.file)
            if f.cell != cell:
                raise ConfigError(f"field file {cc.file} lives on {f.cell}, expected {cell}",
                                  self.source or None)
            return f
        return evaluate_fourier([(m.m, m.n, m.amp, m.phase) for m in cc.modes], cell, cc.constant)

    def make_fitness(self, cell: PeriodicCell | None = None) -> FitnessSpec:
        cell = cell or self.make_cell()
        return FitnessSpec(self._coefficient(self.a0, cell), self._coefficient(self.b, cell))

    def with_cell(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, cell=dataclasses.replace(self.cell, **changes))

    def with_solver(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, solver=dataclasses.replace(self.solver, **changes))

    def to_dict(self) -> dict:
        def coef(cc: CoefficientConfig) -> dict:
            out: dict = {"constant": cc.constant}
            if cc.modes:
                out["modes"] = [dataclasses.asdict(m) for m in cc.modes]
            if cc.file:
                out["file"] = cc.file
            return out

        kern: dict = {"name": self.kernel.name, "r0": self.kernel.r0}
        if self.kernel.table:
            kern["table"] = list(self.kernel.table)
        return {"cell": dataclasses.asdict(self.cell), "kernel": kern, "a0": coef(self.a0),
                "b": coef(self.b), "solver": dataclasses.asdict(self.solver)}

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def serialize_config(cfg: ProblemConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    """1-based line of ``[section]`` (or of ``key`` inside it); None if absent."""
    lines = text.splitlines()
    head = re.compile(r"^\s*\[\[?\s*" + re.escape(section) + r"(\.[^\]]*)?\s*\]\]?")
    start = None
    for i, ln in enumerate(lines):
        if head.match(ln):
            start = i
            break
    if start is None:
        return None
    if key is None:
        return start + 1
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i in range(start + 1, len(lines)):
        if re.match(r"^\s*\[", lines[i]) and not re.match(r"^\s*\[\[\s*" + re.escape(section), lines[i]):
            break
        if pat.match(lines[i]):
            return i + 1
    return start + 1


def _typed(cls, raw: dict, err, section: str):
    names = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, val in raw.items():
        if key not in names:
            raise err(f"unknown key {key!r} in [{section}]", section, key)
        default = names[key].default
        if isinstance(default, bool) or default is dataclasses.MISSING:
            out[key] = val
        elif isinstance(default, int) and not isinstance(default, bool):
            if not isinstance(val, int) or isinstance(val, bool):
                raise err(f"{section}.{key} must be an integer, got {val!r}", section, key)
            out[key] = val
        elif isinstance(default, float):
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise err(f"{section}.{key} must be a number, got {val!r}", section, key)
            out[key] = float(val)
        elif isinstance(default, str):
            if not isinstance(val, str):
                raise err(f"{section}.{key} must be a string, got {val!r}", section, key)
            out[key] = val
        else:
            out[key] = val
    return cls(**out)


def parse_config_text(text: str, source: str = "<config>") -> ProblemConfig:
    def err(msg, section=None, key=None):
        line = _line_of(text, section, key) if section else None
        return ConfigError(msg, source, line)

    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}", source) from None
    for sec in SECTIONS:
        if sec not in raw:
            # anchor at end of file, where the section would go
            raise ConfigError(f"missing section [{sec}]", source, max(1, len(text.splitlines())))
    extra = sorted(set(raw) - set(SECTIONS))
    if extra:
        raise err(f"unknown section [{extra[0]}]", extra[0])

    cell = _typed(CellConfig, raw["cell"], err, "cell")
    if not cell.T > 0:
        raise err(f"time period T must be positive, got {cell.T}", "cell", "T")
    if not cell.p > 0:
        raise err(f"spatial period p must be positive, got {cell.p}", "cell", "p")
    for key in ("n_t", "n_x"):
        if getattr(cell, key) < 8:
            raise err(f"cell.{key} must be at least 8", "cell", key)

    kraw = dict(raw["kernel"])
    if "table" in kraw:
        kraw["table"] = tuple(float(v) for v in kraw["table"])
    kern = _typed(KernelConfig, kraw, err, "kernel")
    if not kern.table and kern.name not in BUILTIN_KERNELS:
        raise err(f"unknown kernel {kern.name!r}; built-in kernels are: {', '.join(BUILTIN_KERNELS)}",
                  "kernel", "name")
    if not kern.r0 > 0:
        raise err(f"kernel radius r0 must be positive, got {kern.r0}", "kernel", "r0")

    def coefficient(sec: str) -> CoefficientConfig:
        craw = dict(raw[sec])
        modes = []
        for i, m in enumerate(craw.pop("modes", [])):
            if not isinstance(m, dict):
                raise err(f"{sec}.modes entries must be tables", sec, "modes")
            try:
                modes.append(Mode(int(m["m"]), int(m["n"]), float(m["amp"]), float(m.get("phase", 0.0))))
            except KeyError as exc:
                raise err(f"{sec}.modes[{i}] lacks {exc.args[0]!r}", sec) from None
        cc = _typed(CoefficientConfig, craw, err, sec)
        cc = dataclasses.replace(cc, modes=tuple(modes))
        if cc.file and not (Path(source).parent / cc.file).exists():
            raise err(f"field file {cc.file!r} not found", sec, "file")
        return cc

    a0 = coefficient("a0")
    b = coefficient("b")
    solver = _typed(SolverConfig, raw["solver"], err, "solver")
    for key in _POSITIVE:
        if not getattr(solver, key) > 0:
            raise err(f"solver.{key} must be positive", "solver", key)
    if solver.wave_n_z < 0:
        raise err("solver.wave_n_z must be nonnegative", "solver", "wave_n_z")
    if not 0 <= solver.sim_burn_in < 1:
        raise err("solver.sim_burn_in must lie in [0, 1)", "solver", "sim_burn_in")

    cfg = ProblemConfig(cell, kern, a0, b, solver, source=source)
    try:
        cell_obj = cfg.make_cell()
        fs = cfg.make_fitness(cell_obj)
        cfg.make_kernel()
    except (FieldError, KernelError) as exc:
        raise err(str(exc)) from None
    if not fs.b_min > 0:
        raise err(f"saturation must be strictly positive (min b = {fs.b_min:.6g})", "b")
    return cfg


def parse_config(path: str | Path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config_text(text, str(path))
