import logging

import numpy as np

from typing import Dict, List, Optional, Tuple
from pydantic import BaseModel, PositiveInt, field_validator, model_validator

from quantum_integration.oracles import GridDomain, IntegrandOracle, make_grid_oracle
from quantum_integration.stochastic import random_walk_spec, make_stochastic_oracle

logger = logging.getLogger(__name__)

BUILTIN_INTEGRANDS = ("const", "linear", "product", "gaussian-bump", "walk")

DEFAULT_BUMP_WIDTH = 0.25
DEFAULT_BUMP_CENTER = 0.5

class UnknownIntegrandException(Exception):
    """
    Raised when a registry name does not resolve to a built-in integrand or process.
    """

    def __init__(self, message: str, name: str):
        super().__init__(message)

        self.message = message
        self.name = name

def split_name(name: str) -> Tuple[str, Optional[str]]:
    kind, _, argument = name.strip().partition(":")
    return kind.strip().lower(), (argument.strip() or None)

class IntegrandSpec(BaseModel):
    """
    A registry entry: `const:c` (g = c), `linear` (mean of the coordinates), `product` (product of the coordinates),
    `gaussian-bump` (exp(-|x - center|^2 / (2 sigma^2)), params sigma and center) and `walk:steps`
    (fair +-1 walk, scaled final position, param moment; the domain is steps axes of 2 points, d and M are ignored).
    """
    name: str
    d: PositiveInt = 1
    M: PositiveInt = 4
    params: Dict[str, float] = {}
    label: Optional[str] = None

    @field_validator("name")
    def check_name(cls, v):
        kind, argument = split_name(v)
        if kind not in BUILTIN_INTEGRANDS:
            raise ValueError(f"Unknown integrand '{v}', expected one of {BUILTIN_INTEGRANDS}.")
        if kind in ("const", "walk") and argument is None:
            raise ValueError(f"Integrand '{kind}' needs an argument, e.g. '{kind}:{'0.5' if kind == 'const' else '6'}'.")
        return v

    @model_validator(mode="after")
    def check_arguments(self):
        kind, argument = split_name(self.name)
        if kind == "const" and not 0.0 <= float(argument) <= 1.0:
            raise ValueError(f"Constant integrand value must lie in [0, 1], got {argument}.")
        if kind == "walk" and int(argument) < 1:
            raise ValueError(f"A walk needs at least one step, got {argument}.")
        return self

    @property
    def display_name(self) -> str:
        return self.label or self.name

    def build(self) -> IntegrandOracle:
        kind, argument = split_name(self.name)

        if kind == "walk":
            spec = random_walk_spec(steps=int(argument), moment=int(self.params.get("moment", 1)))
            return make_stochastic_oracle(spec)

        domain = GridDomain(d=self.d, M=self.M)

        if kind == "const":
            value = float(argument)
            return make_grid_oracle(lambda x: np.full(x.shape[0], value), domain, name=self.display_name)
        if kind == "linear":
            return make_grid_oracle(lambda x: x.mean(axis=1), domain, name=self.display_name)
        if kind == "product":
            return make_grid_oracle(lambda x: x.prod(axis=1), domain, name=self.display_name)
        if kind == "gaussian-bump":
            sigma = float(self.params.get("sigma", DEFAULT_BUMP_WIDTH))
            center = float(self.params.get("center", DEFAULT_BUMP_CENTER))
            return make_grid_oracle(lambda x: np.exp(-np.sum((x - center) ** 2, axis=1) / (2.0 * sigma ** 2)), domain, name=self.display_name)

        raise UnknownIntegrandException(f"No integrand registered under '{self.name}'.", self.name)

def resolve_integrand(name: str, d: int = 1, M: int = 4, **params) -> IntegrandOracle:
    try:
        spec = IntegrandSpec(name=name, d=d, M=M, params=params)
    except ValueError as exception:
        raise UnknownIntegrandException(str(exception), name) from exception
    return spec.build()

def builtin_integrand_set() -> List[IntegrandSpec]:
    return [
        IntegrandSpec(name="const:0.25", d=1, M=4),
        IntegrandSpec(name="linear", d=1, M=4),
        IntegrandSpec(name="linear", d=1, M=8, label="linear-fine"),
        IntegrandSpec(name="product", d=2, M=4),
        IntegrandSpec(name="gaussian-bump", d=1, M=8),
        IntegrandSpec(name="walk:4"),
    ]
