"""Experiment configuration: a single JSON document validated before any computation.

Every model forbids unknown keys and runs in strict mode, so a typo or a
quoted number is an error rather than a silent default.
"""

from __future__ import annotations

from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

__all__ = [
    "TASKS",
    "ExperimentConfig",
    "BesovConfig",
    "GaussianConfig",
    "HierarchicalConfig",
    "BuiltinProblemConfig",
    "FileProblemConfig",
    "SolverOptions",
    "SamplerOptions",
    "TASK_OPTIONS",
]

TASKS = (
    "sample-prior",
    "solve-map",
    "estimate-cm",
    "verify-om",
    "verify-wmap",
    "bregman-compare",
    "refine-study",
)

# builtin problem -> allowed parameters and their types
BUILTIN_PARAMS = {
    "gauss-1d": {"m": float},
    "hier-1d": {"m": float},
    "smoothing": {"M": int, "alpha": float},
    "gauss-random": {"M": int},
    "hier-random": {"M": int, "rho_variance": float},
}
# builtins with a fixed truncation
FIXED_TRUNC = {"gauss-1d": 1, "hier-1d": 1}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


PositiveFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]


class BesovConfig(_Strict):
    family: Literal["besov"]
    s: Annotated[float, Field(allow_inf_nan=False)]
    p: Annotated[float, Field(gt=1, le=2)]
    d: Annotated[int, Field(ge=1)] = 1


class GaussianConfig(_Strict):
    family: Literal["gaussian"]
    cm_weights: list[PositiveFloat] | None = None
    white: bool = False

    @model_validator(mode="after")
    def _one_source(self):
        if (self.cm_weights is None) == (not self.white):
            raise ValueError("give exactly one of cm_weights or white=true")
        if self.cm_weights is not None and not self.cm_weights:
            raise ValueError("cm_weights must be non-empty")
        return self


class HierarchicalConfig(_Strict):
    family: Literal["hierarchical"]
    cov_weights: Annotated[list[PositiveFloat], Field(min_length=1)]
    mean_direction: Annotated[list[Annotated[float, Field(allow_inf_nan=False)]], Field(min_length=1)]
    rho_variance: PositiveFloat = 1.0

    @model_validator(mode="after")
    def _lengths(self):
        if len(self.cov_weights) != len(self.mean_direction):
            raise ValueError("cov_weights and mean_direction must have equal length")
        return self


PriorConfig = Annotated[Union[BesovConfig, GaussianConfig, HierarchicalConfig], Field(discriminator="family")]


class BuiltinProblemConfig(_Strict):
    builtin: Literal["gauss-1d", "hier-1d", "smoothing", "gauss-random", "hier-random"]
    params: dict[str, float | int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _params(self):
        allowed = BUILTIN_PARAMS[self.builtin]
        for key, value in self.params.items():
            if key not in allowed:
                raise ValueError(f"unknown parameter {key!r} for builtin {self.builtin!r}; allowed: {sorted(allowed)}")
            if allowed[key] is int and not isinstance(value, int):
                raise ValueError(f"parameter {key!r} must be an integer")
        if self.params.get("M", 1) < 1:
            raise ValueError("M must be >= 1")
        if self.params.get("rho_variance", 1.0) <= 0:
            raise ValueError("rho_variance must be positive")
        return self


class FileProblemConfig(_Strict):
    matrix_file: str
    data_file: str
    noise_std: PositiveFloat | list[PositiveFloat] | None = None


class SolverOptions(_Strict):
    method: Literal["auto", "direct", "gd", "dual-newton"] = "auto"
    max_iter: Annotated[int, Field(ge=0)] = 50_000
    grad_tol: PositiveFloat = 1e-8


class SamplerOptions(_Strict):
    sampler: Literal["is", "rwm"] = "is"
    count: Annotated[int, Field(ge=1)] = 10_000
    step_size: PositiveFloat = 0.5
    burn_in: Annotated[int, Field(ge=0)] = 1000
    n_chains: Annotated[int, Field(ge=1)] = 1

    @model_validator(mode="after")
    def _chains(self):
        if self.count % self.n_chains:
            raise ValueError("count must be divisible by n_chains")
        return self


class SamplePriorOptions(_Strict):
    count: Annotated[int, Field(ge=1)] = 1000


class SolveMapOptions(_Strict):
    solver: SolverOptions = SolverOptions()


class EstimateCmOptions(_Strict):
    sampling: SamplerOptions = SamplerOptions()


class VerifyOmOptions(_Strict):
    n_directions: Annotated[int, Field(ge=1)] = 10
    nodes: Annotated[int, Field(ge=2)] = 64
    point: Literal["map", "zero"] = "map"
    rel_tol: PositiveFloat = 1e-6
    solver: SolverOptions = SolverOptions()


class VerifyWmapOptions(_Strict):
    n_directions: Annotated[int, Field(ge=0)] = 20
    tol: PositiveFloat = 1e-8
    delta: PositiveFloat = 1e-3
    eps: list[PositiveFloat] = Field(default_factory=list)
    ball_count: Annotated[int, Field(ge=2)] = 100_000
    ball_directions: Annotated[int, Field(ge=1)] = 10
    ball_shift: PositiveFloat = 0.2
    solver: SolverOptions = SolverOptions()


class BregmanCompareOptions(_Strict):
    sampling: SamplerOptions = SamplerOptions()
    solver: SolverOptions = SolverOptions()


class RefineStudyOptions(_Strict):
    levels: Annotated[list[Annotated[int, Field(ge=1)]], Field(min_length=1)]
    solver: SolverOptions = SolverOptions()

    @model_validator(mode="after")
    def _increasing(self):
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        return self


TASK_OPTIONS = {
    "sample-prior": SamplePriorOptions,
    "solve-map": SolveMapOptions,
    "estimate-cm": EstimateCmOptions,
    "verify-om": VerifyOmOptions,
    "verify-wmap": VerifyWmapOptions,
    "bregman-compare": BregmanCompareOptions,
    "refine-study": RefineStudyOptions,
}


def _prior_length(prior) -> int | None:
    if isinstance(prior, GaussianConfig) and prior.cm_weights is not None:
        return len(prior.cm_weights)
    if isinstance(prior, HierarchicalConfig):
        return len(prior.cov_weights)
    return None


class ExperimentConfig(_Strict):
    problem: Union[BuiltinProblemConfig, FileProblemConfig]
    prior: PriorConfig | None = None
    trunc: Annotated[int, Field(ge=1)] | None = None
    seed: Annotated[int, Field(ge=0)] = 0
    task: Literal[TASKS]
    options: dict = Field(default_factory=dict)

    _task_options: BaseModel = PrivateAttr()

    @model_validator(mode="after")
    def _cross_checks(self):
        self._task_options = TASK_OPTIONS[self.task].model_validate(self.options, strict=True)
        builtin = self.problem.builtin if isinstance(self.problem, BuiltinProblemConfig) else None
        fixed_len = _prior_length(self.prior)
        if self.task == "refine-study":
            if builtin is None:
                raise ValueError("refine-study needs a builtin problem family")
            if builtin in FIXED_TRUNC:
                raise ValueError(f"{builtin!r} has a fixed truncation and cannot be refined")
            if fixed_len is not None:
                raise ValueError("refine-study needs a prior defined at every truncation (besov, white gaussian)")
            if self.trunc is not None:
                raise ValueError("refine-study takes its truncations from options.levels; drop trunc")
            return self
        if builtin in FIXED_TRUNC and self.trunc not in (None, FIXED_TRUNC[builtin]):
            raise ValueError(f"{builtin!r} has truncation {FIXED_TRUNC[builtin]}")
        if fixed_len is not None and self.trunc not in (None, fixed_len):
            raise ValueError(f"prior weights have length {fixed_len} but trunc is {self.trunc}")
        if builtin is not None and builtin not in FIXED_TRUNC and self.trunc is None and fixed_len is None:
            raise ValueError(f"builtin {builtin!r} needs trunc")
        if builtin == "hier-1d" and self.prior is not None and not isinstance(self.prior, HierarchicalConfig):
            raise ValueError("hier-1d needs a hierarchical prior")
        return self

    @property
    def task_options(self) -> BaseModel:
        return self._task_options

    @property
    def effective_trunc(self) -> int | None:
        """Truncation implied by the config; ``None`` for file problems without a hint."""
        if self.trunc is not None:
            return self.trunc
        fixed_len = _prior_length(self.prior)
        if fixed_len is not None:
            return fixed_len
        if isinstance(self.problem, BuiltinProblemConfig):
            return FIXED_TRUNC.get(self.problem.builtin)
        return None

    def echo(self) -> dict:
        """Fully expanded config (defaults included) that reproduces the run on its own."""
        data = self.model_dump(mode="json")
        data["options"] = self._task_options.model_dump(mode="json")
        return data
