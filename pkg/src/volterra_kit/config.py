"""JSON experiment configuration: strict parsing and range validation.

Every section rejects unknown keys.  Errors carry the dotted field name and, when it
can be located, the line of the offending key in the source file.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .bsvie import MODES
from .catalog import CATALOG
from .errors import ConfigError
from .mv import STATE_KINDS
from .pde import BOUNDARIES, SCHEMES

SCHEMA_VERSION = 1
EXPERIMENTS = ("pde", "bsvie", "feynman-kac", "mv", "convergence", "malliavin")
BUNDLED_DIR = Path(__file__).with_name("examples")

# tolerance keys understood by each experiment; values are echoed in the report
CHECK_KEYS = {
    "pde": {"max_error", "l2_error"},
    "bsvie": {
        "rms_y", "rms_z", "max_node_rms_y", "max_node_rms_z", "recon_rel_y", "recon_rel_z",
        "bmo_rel", "picard_iters", "picard_monotone",
    },
    "feynman-kac": {"rms_y", "rms_z", "rms_yd", "rms_zd"},
    "mv": {"p0_rel", "M0_rel", "qn_zero_se", "hedging_zero_se"},
    "convergence": {"min_order", "monotone", "self_shrink"},
    "malliavin": {"rel_tol"},
}


@dataclass(frozen=True)
class ModelSection:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GridSection:
    T: float
    N: int


@dataclass(frozen=True)
class SpaceSection:
    x_lo: float | None = None
    x_hi: float | None = None
    M_x: int = 200


@dataclass(frozen=True)
class MonteCarloSection:
    J: int = 100_000
    seed: int = 0
    basis: str = "monomial"
    degree: int = 3
    keep_paths: int = 2048


@dataclass(frozen=True)
class SolverSection:
    mode: str = "explicit-diagonal"
    sweeps: int = 3
    theta: float = 1.0
    implicit_y: bool = False
    picard: bool = False
    max_iters: int = 20
    tol: float = 1e-3
    derivative: bool = False
    bmo: str | None = None
    shifted: bool = False
    scheme: str = "semi-implicit-diffusion"
    boundary: str = "linear-extrapolation"
    cfl_safety: float = 0.9
    inner_sweeps: int = 0


@dataclass(frozen=True)
class ConvergenceSection:
    experiment: str = "pde"
    levels: tuple = (25, 50, 100)
    quantity: str = "u"
    reference: str = "exact"


@dataclass(frozen=True)
class StateSection:
    kind: str = "HoLee"
    theta: float = 0.0
    kappa: float = 0.0
    sigma_R: float = 0.2
    r0: float = 0.0
    target: float = 0.0
    end_time: float | None = None
    r_min: float = 1e-3


@dataclass(frozen=True)
class MVSection:
    gamma: float
    r_f: float = 0.0
    corr: float = 0.0
    rho: tuple = (1.0,)
    state_model: StateSection = StateSection()
    beta: tuple = (0.3, 0.0)
    sigma: tuple = (0.2, 0.0)
    quantiles: tuple = (0.1, 0.5, 0.9)
    oracle_steps: int = 0


@dataclass(frozen=True)
class MalliavinSection:
    pairs: int = 100
    eps: float = 1e-4
    J: int = 1000


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    grid: GridSection
    model: ModelSection | None = None
    space: SpaceSection = SpaceSection()
    monte_carlo: MonteCarloSection = MonteCarloSection()
    solver: SolverSection = SolverSection()
    convergence: ConvergenceSection | None = None
    mv: MVSection | None = None
    malliavin: MalliavinSection = MalliavinSection()
    checks: dict = field(default_factory=dict)
    output: str = "out"
    source: str = ""


class _Ctx:
    def __init__(self, text: str):
        self.lines = text.splitlines()

    def line_of(self, key: str) -> int | None:
        pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
        for i, line in enumerate(self.lines, start=1):
            if pat.search(line):
                return i
        return None

    def fail(self, path: str, msg: str) -> ConfigError:
        return ConfigError(msg, field=path, line=self.line_of(path.rsplit(".", 1)[-1]))


def _keys(ctx: _Ctx, raw, allowed: set, path: str, required: set = frozenset()) -> dict:
    if not isinstance(raw, dict):
        raise ctx.fail(path, "expected a JSON object")
    for k in raw:
        if k not in allowed:
            raise ctx.fail(f"{path}.{k}" if path else k, f"unknown key '{k}'")
    for k in required:
        if k not in raw:
            raise ConfigError(f"missing required key '{k}'", field=f"{path}.{k}" if path else k)
    return raw


def _num(ctx, v, path, lo=None, hi=None, lo_open=False, integer=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ctx.fail(path, f"expected a number, got {v!r}")
    if integer and (float(v) != int(v)):
        raise ctx.fail(path, f"expected an integer, got {v!r}")
    v = int(v) if integer else float(v)
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ctx.fail(path, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ctx.fail(path, f"must be <= {hi}, got {v}")
    return v


def _bool(ctx, v, path):
    if not isinstance(v, bool):
        raise ctx.fail(path, f"expected true/false, got {v!r}")
    return v


def _choice(ctx, v, path, options):
    if v not in options:
        raise ctx.fail(path, f"must be one of {list(options)}, got {v!r}")
    return v


def _coeffs(ctx, v, path, length=None):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        raise ctx.fail(path, "expected a number or a non-empty list of numbers")
    out = tuple(_num(ctx, c, path) for c in v)
    if length is not None:
        if len(out) > length:
            raise ctx.fail(path, f"at most {length} coefficients allowed")
        out = out + (0.0,) * (length - len(out))
    return out


def _parse_grid(ctx, raw):
    r = _keys(ctx, raw, {"T", "N"}, "grid", {"T", "N"})
    return GridSection(_num(ctx, r["T"], "grid.T", lo=0.0, lo_open=True),
                       _num(ctx, r["N"], "grid.N", lo=1, integer=True))


def _parse_model(ctx, raw):
    r = _keys(ctx, raw, {"name", "params"}, "model", {"name"})
    name = r["name"]
    if name not in CATALOG:
        raise ctx.fail("model.name", f"unknown catalog model '{name}' (known: {sorted(CATALOG)})")
    params = r.get("params", {})
    if not isinstance(params, dict):
        raise ctx.fail("model.params", "expected a JSON object")
    for k, v in params.items():
        _num(ctx, v, f"model.params.{k}")
    return ModelSection(name, dict(params))


def _parse_space(ctx, raw):
    r = _keys(ctx, raw, {"x_lo", "x_hi", "M_x"}, "space")
    sp = SpaceSection(
        _num(ctx, r.get("x_lo"), "space.x_lo", allow_none=True),
        _num(ctx, r.get("x_hi"), "space.x_hi", allow_none=True),
        _num(ctx, r.get("M_x", 200), "space.M_x", lo=2, integer=True),
    )
    if (sp.x_lo is None) != (sp.x_hi is None):
        raise ctx.fail("space.x_lo", "give both x_lo and x_hi or neither")
    if sp.x_lo is not None and not sp.x_lo < sp.x_hi:
        raise ctx.fail("space.x_hi", "x_hi must exceed x_lo")
    return sp


def _parse_mc(ctx, raw):
    r = _keys(ctx, raw, {"J", "seed", "basis", "degree", "keep_paths"}, "monte_carlo")
    d = MonteCarloSection()
    return MonteCarloSection(
        _num(ctx, r.get("J", d.J), "monte_carlo.J", lo=2, integer=True),
        _num(ctx, r.get("seed", d.seed), "monte_carlo.seed", lo=0, hi=2**64 - 1, integer=True),
        _choice(ctx, r.get("basis", d.basis), "monte_carlo.basis", ("monomial", "hermite")),
        _num(ctx, r.get("degree", d.degree), "monte_carlo.degree", lo=0, hi=12, integer=True),
        _num(ctx, r.get("keep_paths", d.keep_paths), "monte_carlo.keep_paths", lo=1, integer=True),
    )


def _parse_solver(ctx, raw):
    d = SolverSection()
    r = _keys(ctx, raw, set(SolverSection.__dataclass_fields__), "solver")
    bmo = r.get("bmo", d.bmo)
    if bmo is not None:
        _choice(ctx, bmo, "solver.bmo", ("Z", "Z_t", "Yd", "Zd"))
    return SolverSection(
        mode=_choice(ctx, r.get("mode", d.mode), "solver.mode", MODES),
        sweeps=_num(ctx, r.get("sweeps", d.sweeps), "solver.sweeps", lo=1, hi=50, integer=True),
        theta=_num(ctx, r.get("theta", d.theta), "solver.theta", lo=0.0, hi=1.0),
        implicit_y=_bool(ctx, r.get("implicit_y", d.implicit_y), "solver.implicit_y"),
        picard=_bool(ctx, r.get("picard", d.picard), "solver.picard"),
        max_iters=_num(ctx, r.get("max_iters", d.max_iters), "solver.max_iters", lo=1, integer=True),
        tol=_num(ctx, r.get("tol", d.tol), "solver.tol", lo=0.0, lo_open=True),
        derivative=_bool(ctx, r.get("derivative", d.derivative), "solver.derivative"),
        bmo=bmo,
        shifted=_bool(ctx, r.get("shifted", d.shifted), "solver.shifted"),
        scheme=_choice(ctx, r.get("scheme", d.scheme), "solver.scheme", SCHEMES),
        boundary=_choice(ctx, r.get("boundary", d.boundary), "solver.boundary", BOUNDARIES),
        cfl_safety=_num(ctx, r.get("cfl_safety", d.cfl_safety), "solver.cfl_safety", lo=0.0, hi=1.0, lo_open=True),
        inner_sweeps=_num(ctx, r.get("inner_sweeps", d.inner_sweeps), "solver.inner_sweeps", lo=0, integer=True),
    )


def parse_levels(ctx, v, path) -> tuple:
    if not isinstance(v, list):
        raise ctx.fail(path, "expected a list of step counts")
    levels = tuple(_num(ctx, x, path, lo=1, integer=True) for x in v)
    if len(levels) < 3:
        raise ctx.fail(path, "at least 3 refinement levels are required")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ctx.fail(path, "refinement levels must be strictly increasing")
    return levels


def _parse_convergence(ctx, raw):
    d = ConvergenceSection()
    r = _keys(ctx, raw, {"experiment", "levels", "quantity", "reference"}, "convergence")
    exp = _choice(ctx, r.get("experiment", d.experiment), "convergence.experiment", ("pde", "bsvie"))
    qty = r.get("quantity", "u" if exp == "pde" else "Yd")
    _choice(ctx, qty, "convergence.quantity", ("u",) if exp == "pde" else ("Y", "Yd", "Zd"))
    return ConvergenceSection(
        experiment=exp,
        levels=parse_levels(ctx, r.get("levels", list(d.levels)), "convergence.levels"),
        quantity=qty,
        reference=_choice(ctx, r.get("reference", d.reference), "convergence.reference", ("exact", "self")),
    )


def _parse_state(ctx, raw):
    d = StateSection()
    r = _keys(ctx, raw, set(StateSection.__dataclass_fields__), "mv.state_model")
    return StateSection(
        kind=_choice(ctx, r.get("kind", d.kind), "mv.state_model.kind", [k for k in STATE_KINDS if k != "custom"]),
        theta=_num(ctx, r.get("theta", d.theta), "mv.state_model.theta"),
        kappa=_num(ctx, r.get("kappa", d.kappa), "mv.state_model.kappa"),
        sigma_R=_num(ctx, r.get("sigma_R", d.sigma_R), "mv.state_model.sigma_R"),
        r0=_num(ctx, r.get("r0", d.r0), "mv.state_model.r0"),
        target=_num(ctx, r.get("target", d.target), "mv.state_model.target"),
        end_time=_num(ctx, r.get("end_time"), "mv.state_model.end_time", allow_none=True),
        r_min=_num(ctx, r.get("r_min", d.r_min), "mv.state_model.r_min", lo=0.0, lo_open=True),
    )


def _parse_mv(ctx, raw):
    keys = {"gamma", "r_f", "corr", "rho", "state_model", "beta", "sigma", "quantiles", "oracle_steps"}
    r = _keys(ctx, raw, keys, "mv", {"gamma"})
    q = r.get("quantiles", [0.1, 0.5, 0.9])
    if not isinstance(q, list) or not q:
        raise ctx.fail("mv.quantiles", "expected a non-empty list")
    return MVSection(
        gamma=_num(ctx, r["gamma"], "mv.gamma", lo=0.0, lo_open=True),
        r_f=_num(ctx, r.get("r_f", 0.0), "mv.r_f"),
        corr=_num(ctx, r.get("corr", 0.0), "mv.corr", lo=-1.0, hi=1.0),
        rho=_coeffs(ctx, r.get("rho", [1.0]), "mv.rho"),
        state_model=_parse_state(ctx, r.get("state_model", {})),
        beta=_coeffs(ctx, r.get("beta", [0.3]), "mv.beta", length=2),
        sigma=_coeffs(ctx, r.get("sigma", [0.2]), "mv.sigma", length=2),
        quantiles=tuple(_num(ctx, v, "mv.quantiles", lo=0.0, hi=1.0) for v in q),
        oracle_steps=_num(ctx, r.get("oracle_steps", 0), "mv.oracle_steps", lo=0, integer=True),
    )


def _parse_malliavin(ctx, raw):
    d = MalliavinSection()
    r = _keys(ctx, raw, {"pairs", "eps", "J"}, "malliavin")
    return MalliavinSection(
        _num(ctx, r.get("pairs", d.pairs), "malliavin.pairs", lo=1, integer=True),
        _num(ctx, r.get("eps", d.eps), "malliavin.eps", lo=0.0, lo_open=True),
        _num(ctx, r.get("J", d.J), "malliavin.J", lo=1, integer=True),
    )


def _parse_checks(ctx, raw, experiment):
    if not isinstance(raw, dict):
        raise ctx.fail("checks", "expected a JSON object")
    allowed = CHECK_KEYS[experiment]
    out = {}
    for k, v in raw.items():
        if k not in allowed:
            raise ctx.fail(f"checks.{k}", f"unknown check '{k}' for experiment '{experiment}' (known: {sorted(allowed)})")
        out[k] = _bool(ctx, v, f"checks.{k}") if isinstance(v, bool) else _num(ctx, v, f"checks.{k}", lo=0.0)
    return out


TOP_KEYS = {
    "schema_version", "experiment", "model", "grid", "space", "monte_carlo", "solver",
    "convergence", "mv", "malliavin", "checks", "output", "description",
}


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    ctx = _Ctx(text)
    _keys(ctx, raw, TOP_KEYS, "", {"schema_version", "experiment", "grid"})
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ctx.fail("schema_version", f"unsupported schema_version {raw['schema_version']!r} (expected {SCHEMA_VERSION})")
    exp = _choice(ctx, raw["experiment"], "experiment", EXPERIMENTS)
    grid = _parse_grid(ctx, raw["grid"])
    model = _parse_model(ctx, raw["model"]) if "model" in raw else None
    mv = _parse_mv(ctx, raw["mv"]) if "mv" in raw else None
    if exp == "mv":
        if mv is None:
            raise ConfigError("experiment 'mv' needs an 'mv' section", field="mv")
        if model is not None:
            raise ctx.fail("model", "experiment 'mv' takes its model from the 'mv' section")
    elif model is None:
        raise ConfigError(f"experiment '{exp}' needs a 'model' section", field="model")
    conv = None
    if exp == "convergence":
        conv = _parse_convergence(ctx, raw.get("convergence", {}))
    elif "convergence" in raw:
        raise ctx.fail("convergence", "only valid for experiment 'convergence'")
    output = raw.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ctx.fail("output", "expected a directory name")
    desc = raw.get("description", "")
    if not isinstance(desc, str):
        raise ctx.fail("description", "expected a string")
    return RunConfig(
        experiment=exp,
        grid=grid,
        model=model,
        space=_parse_space(ctx, raw.get("space", {})),
        monte_carlo=_parse_mc(ctx, raw.get("monte_carlo", {})),
        solver=_parse_solver(ctx, raw.get("solver", {})),
        convergence=conv,
        mv=mv,
        malliavin=_parse_malliavin(ctx, raw.get("malliavin", {})),
        checks=_parse_checks(ctx, raw.get("checks", {}), exp),
        output=output,
        source=source,
    )


def resolve_config_path(path: str | Path) -> Path:
    """Use the file if it exists, else fall back to a bundled example of the same name."""
    p = Path(path)
    if p.is_file():
        return p
    bundled = BUNDLED_DIR / p.name
    if bundled.is_file():
        return bundled
    raise ConfigError(f"config file not found: {path}")


def load_config(path: str | Path) -> RunConfig:
    p = resolve_config_path(path)
    return parse_config(p.read_text(), source=str(p))


def bundled_configs() -> list[Path]:
    return sorted(BUNDLED_DIR.glob("*.json"))
