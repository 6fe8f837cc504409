"""Hyperparameter set and method variants for map building and localization."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass


class Variant(enum.Enum):
    """Full method or one of its two ablations."""

    PM = "pm"
    # Habituation gate disabled: every observation within range consolidates,
    # even an exact repeat of the previous one.
    PM_NO_VH = "pm-no-vh"
    # Persistence disabled: a new node starts from the raw input features
    # instead of blending in the previous node's consolidated vector.
    PM_NO_VP = "pm-no-vp"


@dataclass(frozen=True)
class Hyperparameters:
    """The full knob set of the mapping and localization equations.

    Attributes:
        lambda_: spatial distance threshold in meters; an observation farther
            than this from every node spawns a new node.
        alpha: feature learning rate, strictly in ]0, 1[.
        tau: habituation threshold, in units of squared feature distance;
            consolidation is skipped when the input is closer than this to
            the node's last consolidated vector. Zero disables the gate.
        gamma: persistence rate, strictly in ]0, 1[; how much of the previous
            node's consolidated vector a new node inherits.
        beta: moving-average rate for the per-dimension distance vector,
            strictly in ]0, 1[.
        s_slope: slope of the relevance sigmoid, > 0.
        epsilon: stabilizer added to the activation denominator, > 0.

    Defaults: lambda_ = 0.9 (the value used throughout the experiments);
    the rates sit at the midpoints of the default search ranges.
    """

    lambda_: float = 0.9
    alpha: float = 0.0505
    tau: float = 50.5
    gamma: float = 0.5
    beta: float = 0.5
    s_slope: float = 0.0505
    epsilon: float = 1e-7

    def __post_init__(self) -> None:
        for name in ("alpha", "gamma", "beta"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be strictly inside ]0,1[, got {value}")
        if not self.lambda_ > 0.0:
            raise ValueError(f"lambda_ must be > 0, got {self.lambda_}")
        if self.tau < 0.0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if not self.s_slope > 0.0:
            raise ValueError(f"s_slope must be > 0, got {self.s_slope}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        for field in dataclasses.fields(self):
            if not math.isfinite(getattr(self, field.name)):
                raise ValueError(f"{field.name} must be finite")

    def replace(self, **changes) -> "Hyperparameters":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """Plain dict with the external spelling ("lambda", "slope")."""
        return {
            "lambda": self.lambda_,
            "alpha": self.alpha,
            "tau": self.tau,
            "gamma": self.gamma,
            "beta": self.beta,
            "slope": self.s_slope,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparameters":
        """Inverse of to_dict; missing keys fall back to defaults."""
        known = {
            "lambda": "lambda_",
            "alpha": "alpha",
            "tau": "tau",
            "gamma": "gamma",
            "beta": "beta",
            "slope": "s_slope",
            "epsilon": "epsilon",
        }
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return cls(**{known[k]: float(v) for k, v in data.items()})
