"""Box constraints on the physical parameter vector.

The estimator head emits 17 unconstrained reals; `project` squashes each
through a sigmoid onto a per-slot interval, so any network output decodes
to a physically admissible parameter set.  Two built-in bounds profiles
cover the small-scale simulated car and the full-size real car; a TOML file
can override individual slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # py3.10
    import tomli as tomllib

from .physics import PARAM_NAMES, ModelParams

_N = len(PARAM_NAMES)

# lo/hi per slot, ordered as PARAM_NAMES.
_SIM_TABLE = {
    "Bf": (5.0, 30.0), "Cf": (0.5, 2.0), "Df": (0.1, 0.9), "Ef": (-2.0, 0.0),
    "Br": (5.0, 30.0), "Cr": (0.5, 2.0), "Dr": (0.1, 0.9), "Er": (-2.0, 0.0),
    "Shf": (-0.02, 0.02), "Svf": (-0.003, 0.003),
    "Shr": (-0.02, 0.02), "Svr": (-0.003, 0.003),
    "Cm1": (0.0, 12.0), "Cm2": (0.0, 1.0), "Cr0": (0.0, 1.0), "Cr2": (0.0, 1.0),
    "Iz": (1.4e-5, 5.6e-5),
}

_REAL_TABLE = {
    "Bf": (5.0, 30.0), "Cf": (0.5, 2.0), "Df": (100.0, 1.0e4), "Ef": (-2.0, 0.0),
    "Br": (5.0, 30.0), "Cr": (0.5, 2.0), "Dr": (100.0, 1.0e4), "Er": (-2.0, 0.0),
    "Shf": (-0.02, 0.02), "Svf": (-300.0, 300.0),
    "Shr": (-0.02, 0.02), "Svr": (-300.0, 300.0),
    "Cm1": (0.0, 4000.0), "Cm2": (0.0, 200.0),
    "Cr0": (0.0, 2000.0), "Cr2": (0.0, 20.0),
    "Iz": (500.0, 2000.0),
}


@dataclass(frozen=True)
class ParamBounds:
    """Joint box for the 17-slot parameter vector."""

    lo: np.ndarray
    hi: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float).reshape(-1)
        hi = np.array(self.hi, dtype=float).reshape(-1)
        if lo.shape != (_N,) or hi.shape != (_N,):
            raise ValueError(f"bounds must have {_N} slots")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if not np.all(lo < hi):
            bad = [PARAM_NAMES[i] for i in np.nonzero(~(lo < hi))[0]]
            raise ValueError(f"lo must be strictly below hi for {', '.join(bad)}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        lo.setflags(write=False)
        hi.setflags(write=False)

    @classmethod
    def from_table(cls, table: dict, name: str = "custom") -> "ParamBounds":
        unknown = set(table) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown bounds slots: {', '.join(sorted(unknown))}")
        missing = set(PARAM_NAMES) - set(table)
        if missing:
            raise ValueError(f"missing bounds slots: {', '.join(sorted(missing))}")
        lo = np.array([table[n][0] for n in PARAM_NAMES], dtype=float)
        hi = np.array([table[n][1] for n in PARAM_NAMES], dtype=float)
        return cls(lo=lo, hi=hi, name=name)

    def slot(self, name: str) -> tuple:
        i = PARAM_NAMES.index(name)
        return float(self.lo[i]), float(self.hi[i])

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def with_overrides(self, overrides: dict, name: str | None = None) -> "ParamBounds":
        """New bounds with some slots replaced; overrides maps slot -> (lo, hi)."""
        table = {n: (float(self.lo[i]), float(self.hi[i]))
                 for i, n in enumerate(PARAM_NAMES)}
        unknown = set(overrides) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown bounds slots: {', '.join(sorted(unknown))}")
        table.update({k: (float(v[0]), float(v[1])) for k, v in overrides.items()})
        return ParamBounds.from_table(table, name=name or self.name + "+overrides")


def sim_profile() -> ParamBounds:
    """Bounds for the small-scale simulated car."""
    return ParamBounds.from_table(_SIM_TABLE, name="sim")


def real_profile() -> ParamBounds:
    """Bounds for the full-size car."""
    return ParamBounds.from_table(_REAL_TABLE, name="real")


_PROFILES = {"sim": sim_profile, "real": real_profile}


def get_profile(name: str) -> ParamBounds:
    try:
        return _PROFILES[name]()
    except KeyError:
        raise ValueError(f"unknown bounds profile {name!r}; "
                         f"known: {', '.join(sorted(_PROFILES))}") from None


def load_bounds(path, base: str = "sim") -> ParamBounds:
    """Read per-slot overrides from a TOML file on top of a base profile.

    Layout: one `[bounds.<slot>]` table per overridden slot with `lo` and
    `hi` keys.  Slots not mentioned keep the base profile values.
    """
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    section = doc.get("bounds", {})
    if not isinstance(section, dict):
        raise ValueError("bounds section must be a table of tables")
    overrides = {}
    for slot, entry in section.items():
        if not isinstance(entry, dict) or not {"lo", "hi"} <= set(entry):
            raise ValueError(f"bounds.{slot} needs lo and hi keys")
        overrides[slot] = (float(entry["lo"]), float(entry["hi"]))
    base_bounds = get_profile(base)
    return base_bounds.with_overrides(overrides, name=f"{base}+{getattr(path, 'name', path)}")


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.abs(z))          # never overflows
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def project(z, bounds: ParamBounds) -> np.ndarray:
    """Map unconstrained latents onto the open box, slotwise.

    p = lo + sigmoid(z) * (hi - lo), then nudged one ulp off either face so
    extreme latents still decode strictly inside the interval.  Accepts any
    (..., 17) array.
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != _N:
        raise ValueError(f"latents must have trailing dimension {_N}")
    p = bounds.lo + _sigmoid(z) * (bounds.hi - bounds.lo)
    return np.clip(p, np.nextafter(bounds.lo, bounds.hi),
                   np.nextafter(bounds.hi, bounds.lo))


def project_grad(z, bounds: ParamBounds) -> np.ndarray:
    """Elementwise dp/dz of `project` (the ulp nudge is gradient-inert)."""
    s = _sigmoid(z)
    return s * (1.0 - s) * (bounds.hi - bounds.lo)


def validate(params, bounds: ParamBounds) -> list:
    """Check one parameter vector against the closed box.

    Accepts a ModelParams or a (17,) vector.  Returns a list of violation
    strings, empty iff every component lies inside its closed interval.
    """
    if isinstance(params, ModelParams):
        vec = params.to_vector()
    else:
        vec = np.asarray(params, dtype=float).reshape(-1)
        if vec.shape != (_N,):
            raise ValueError(f"expected {_N} components, got {vec.shape[0]}")
    out = []
    for i, name in enumerate(PARAM_NAMES):
        if not (bounds.lo[i] <= vec[i] <= bounds.hi[i]):
            out.append(f"{name}={vec[i]:.6g} outside "
                       f"[{bounds.lo[i]:.6g}, {bounds.hi[i]:.6g}]")
    return out


def count_violations(params, bounds: ParamBounds) -> int:
    """Vectorized violation count over a (..., 17) batch of vectors."""
    p = np.asarray(params, dtype=float)
    if p.shape[-1] != _N:
        raise ValueError(f"parameters must have trailing dimension {_N}")
    return int(np.sum((p < bounds.lo) | (p > bounds.hi)))


@dataclass(frozen=True)
class GuardedParams:
    """A parameter vector certified to lie strictly inside its bounds."""

    values: np.ndarray
    bounds: ParamBounds

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.shape != (_N,):
            raise ValueError(f"expected {_N} components")
        if not np.all((self.bounds.lo < v) & (v < self.bounds.hi)):
            bad = validate(v, self.bounds)
            inside_closed = not bad
            detail = "on a bound" if inside_closed else "; ".join(bad)
            raise ValueError(f"parameters not strictly inside bounds: {detail}")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    @classmethod
    def from_latent(cls, z, bounds: ParamBounds) -> "GuardedParams":
        return cls(values=project(np.asarray(z, dtype=float).reshape(-1), bounds),
                   bounds=bounds)

    def to_model_params(self) -> ModelParams:
        return ModelParams.from_vector(self.values)
