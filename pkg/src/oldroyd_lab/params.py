from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the Oldroyd-B system.

    mu: viscosity, mu1: stress coupling in the momentum equation,
    mu2: strain coupling in the stress equation, a: stress damping rate,
    b: slip parameter of the objective derivative.
    """

    mu: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0
    a: float = 1.0
    b: float = 0.0
    # strict=False admits the degenerate limits mu1 = 0 or mu2 = 0 (decoupled
    # linear analysis); the dynamics always use strict parameters
    strict: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        out = []
        for name in ("mu", "mu1", "mu2", "a"):
            v = getattr(self, name)
            if not self.strict and name in ("mu1", "mu2") and v == 0:
                continue
            if not v > 0:
                out.append(f"{name} must be positive, got {getattr(self, name)}")
        if not -1.0 <= self.b <= 1.0:
            out.append(f"b must satisfy b ∈ [−1, 1], got {self.b}")
        return out

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("strict")
        return out

    def replace(self, strict: bool | None = None, **changes) -> "ModelParams":
        kw = self.as_dict()
        kw.update(changes)
        return ModelParams(**kw, strict=self.strict if strict is None else strict)
