# lab/config/run_config.py
"""Run configuration: YAML in, validated pydantic model out."""
import hashlib
import io
import json
import logging
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from ruamel.yaml import YAML
from ruamel.yaml.comments import CommentedMap, CommentedSeq
from ruamel.yaml.error import MarkedYAMLError, YAMLError

from lab.exceptions import SchemaError
from lab.services.initial_conditions import InitialLaw

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.2"
INITIAL_TRUNCATION_TOL = 1e-8


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ======================
# Model coefficients
# ======================

class DriftSection(_Section):
    family: Literal["affine"] = "affine"
    zeta0: float = Field(gt=0)
    zeta1: float = 0.0
    zeta2: float = Field(0.0, ge=0)
    theta: float = Field(1.0, gt=0)


class DiffusionSection(_Section):
    family: Literal["multiplicative", "resource_free"] = "multiplicative"
    delta0: float = Field(ge=0)
    delta1: float = Field(0.0, ge=0)
    amplitude: float = Field(0.0, ge=0)
    theta: float = Field(1.0, gt=0)


class BirthSection(_Section):
    family: Literal["monod", "constant", "none"] = "monod"
    b0: float = Field(0.0, ge=0)
    kappa: float = Field(1.0, gt=0)
    amplitude: float = Field(0.0, ge=0)
    theta: float = Field(1.0, gt=0)


class DeathSection(_Section):
    family: Literal["constant_plus_bounded"] = "constant_plus_bounded"
    d0: float = Field(1.0, ge=0)
    d1: float = Field(0.0, ge=0)
    theta: float = Field(1.0, gt=0)


class ConsumptionSection(_Section):
    family: Literal["monod", "none"] = "none"
    chi0: float = Field(0.0, ge=0)
    kappa: float = Field(1.0, gt=0)
    amplitude: float = Field(0.0, ge=0)
    theta: float = Field(1.0, gt=0)


class ModelSection(_Section):
    r_in: float = Field(gt=0)
    zeta: DriftSection
    diffusion: DiffusionSection
    birth: BirthSection
    death: DeathSection = DeathSection()
    consumption: ConsumptionSection = ConsumptionSection()


# ======================
# Kernel, initial law, numerics, experiment
# ======================

class KernelSection(_Section):
    variant: Literal["dirac_half", "uniform", "symmetric_beta", "discrete"] = "uniform"
    shape: float = Field(1.0, gt=0)
    atoms: list[tuple[float, float]] = []

    @model_validator(mode="after")
    def _atoms_for_discrete(self):
        if self.variant == "discrete" and not self.atoms:
            raise ValueError("kernel.atoms: discrete kernel needs at least one atom")
        for alpha, weight in self.atoms:
            if not 0.0 < alpha < 1.0 or weight < 0.0:
                raise ValueError("kernel.atoms: atoms need 0 < alpha < 1 and weight >= 0")
        return self


class InitialSection(_Section):
    mass: float = Field(ge=0)
    shape: Literal["point", "truncated_gaussian", "grid_profile"] = "truncated_gaussian"
    x0: float = Field(1.0, ge=0)
    mean: float = 1.0
    std: float = Field(0.25, gt=0)
    profile: list[tuple[float, float]] = []
    resource: float = Field(ge=0)

    @model_validator(mode="after")
    def _profile_for_grid(self):
        if self.shape == "grid_profile" and len(self.profile) < 2:
            raise ValueError("initial.profile: grid_profile needs at least two knots")
        if self.shape == "grid_profile" and any(x < 0 for x, _ in self.profile):
            raise ValueError("initial.profile: knot positions must be >= 0")
        return self


class MildSection(_Section):
    time_nodes: int = Field(8, ge=2)
    space_nodes: int = Field(16, ge=2)
    paths: int = Field(10_000, ge=10)
    output_bins: int = Field(48, ge=10)
    tolerance: float = Field(0.1, gt=0)


class NumericsSection(_Section):
    dt_ibm: float = Field(gt=0)
    dt_pde: float = Field(gt=0)
    dt_sde: float = Field(1e-3, gt=0)
    dx: float = Field(gt=0)
    x_max: float = Field(gt=0)
    n_quad: int = Field(16, ge=1)
    dictionary_size: int = Field(64, ge=4)
    h_grid: Optional[list[float]] = None
    pde_scheme: Literal["imex_heun", "imex_euler"] = "imex_heun"
    truncation_tol: float = Field(1e-6, gt=0)
    summary_bins: int = Field(32, ge=1)
    sde_paths: int = Field(20_000, ge=10)
    density_bins: int = Field(200, ge=10)
    epsilons: list[float] = [1e-2, 1e-3, 1e-4]
    validation_grid: int = Field(201, ge=2)
    mild: MildSection = MildSection()

    @model_validator(mode="after")
    def _grid_resolves(self):
        cells = self.x_max / self.dx
        if abs(cells - round(cells)) > 1e-6 * max(cells, 1.0) or round(cells) < 10:
            raise ValueError("numerics.dx: x_max / dx must be an integer number of at least 10 cells")
        if self.h_grid is not None:
            if any(h <= 0 or h > 1 for h in self.h_grid):
                raise ValueError("numerics.h_grid: shifts must lie in (0, 1]")
        return self


class ExperimentSection(_Section):
    horizon: float = Field(gt=0)
    k_values: list[int] = [100, 400, 1600]
    seeds: list[int] = [0, 1, 2, 3, 4]
    snapshot_times: list[float] = []
    run_seed: int = Field(20240501, ge=0)
    diagnostic_time: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _consistent(self):
        if any(t < 0 or t > self.horizon for t in self.snapshot_times):
            raise ValueError("experiment.snapshot_times: times must lie in [0, horizon]")
        if list(self.snapshot_times) != sorted(set(self.snapshot_times)):
            raise ValueError("experiment.snapshot_times: times must be strictly increasing")
        if any(k <= 0 for k in self.k_values) or list(self.k_values) != sorted(set(self.k_values)):
            raise ValueError("experiment.k_values: capacities must be positive and strictly increasing")
        if any(s < 0 for s in self.seeds):
            raise ValueError("experiment.seeds: seeds must be non-negative")
        return self


class RunConfig(_Section):
    model: ModelSection
    kernel: KernelSection = KernelSection()
    initial: InitialSection
    numerics: NumericsSection
    experiment: ExperimentSection

    @model_validator(mode="after")
    def _truncation(self):
        law = InitialLaw.from_config(self.initial)
        tail = law.tail_fraction(self.numerics.x_max / 2.0)
        if tail >= INITIAL_TRUNCATION_TOL:
            raise ValueError(
                f"numerics.x_max: initial mass fraction {tail:.3g} beyond x_max/2 "
                f"exceeds {INITIAL_TRUNCATION_TOL}"
            )
        return self

    @model_validator(mode="after")
    def _snapshots_resolve(self):
        dt = self.experiment.horizon / self.ibm_step_count
        times = sorted(set([0.0, *self.experiment.snapshot_times, self.experiment.horizon]))
        steps = [int(round(t / dt)) for t in times]
        if len(set(steps)) < len(steps):
            raise ValueError(
                "experiment.snapshot_times: two times fall on the same IBM step; "
                "space them at least numerics.dt_ibm apart"
            )
        return self

    @property
    def ibm_step_count(self):
        return max(int(round(self.experiment.horizon / self.numerics.dt_ibm)), 1)

    @property
    def r_bar(self):
        return max(self.model.r_in, self.initial.resource)

    @property
    def n_cells(self):
        return int(round(self.numerics.x_max / self.numerics.dx))

    @property
    def diagnostic_time(self):
        return min(self.experiment.diagnostic_time, self.experiment.horizon)

    def config_hash(self):
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_run_seed(self, run_seed):
        return self.model_copy(update={
            "experiment": self.experiment.model_copy(update={"run_seed": int(run_seed)}),
        })

    def with_numerics(self, **changes):
        return self.model_copy(update={"numerics": self.numerics.model_copy(update=changes)})

    def with_initial(self, **changes):
        return self.model_copy(update={"initial": self.initial.model_copy(update=changes)})

    def with_experiment(self, **changes):
        return self.model_copy(update={"experiment": self.experiment.model_copy(update=changes)})


# ======================
# Loading
# ======================

def _line_of(document, loc):
    """1-based line of the deepest key along ``loc`` present in the document."""
    line = None
    node = document
    for key in loc:
        if isinstance(node, CommentedMap) and key in node:
            line = node.lc.key(key)[0] + 1
            node = node[key]
        elif isinstance(node, CommentedSeq) and isinstance(key, int) and key < len(node):
            line = node.lc.item(key)[0] + 1
            node = node[key]
        else:
            break
    return line


def _schema_error(error, document):
    first = error.errors()[0]
    loc = [part for part in first["loc"] if not (isinstance(part, str) and part.startswith("function-"))]
    message = first["msg"]
    field = ".".join(str(part) for part in loc)
    # model-level validators name the offending field in their message
    if "Value error, " in message:
        message = message.split("Value error, ", 1)[1]
    if ": " in message and "." in message.split(": ", 1)[0]:
        field, message = message.split(": ", 1)
        loc = field.split(".")
    field = field or "<root>"
    return SchemaError(field, message, line=_line_of(document, loc))


def parse_config(text, source="<string>"):
    """Validate YAML text against the RunConfig schema."""
    yaml = YAML()
    try:
        document = yaml.load(io.StringIO(text))
    except MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise SchemaError("<yaml>", str(e.problem or e), line=line) from e
    except YAMLError as e:
        raise SchemaError("<yaml>", str(e)) from e

    if not isinstance(document, CommentedMap):
        raise SchemaError("<root>", f"{source} must hold a mapping of sections")

    try:
        config = RunConfig.model_validate(document)
    except ValidationError as e:
        error = _schema_error(e, document)
        logger.error(f"❌ Invalid config {source}: {error}")
        raise error from e
    logger.info(f"✅ Loaded config {source} ({config.config_hash()[:12]})")
    return config


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise SchemaError("<file>", f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def dump_config(config):
    """Canonical YAML text for a config; parse_config(dump_config(c)) == c."""
    yaml = YAML(typ="safe")
    yaml.default_flow_style = False
    stream = io.StringIO()
    yaml.dump(config.model_dump(mode="json"), stream)
    return stream.getvalue()
