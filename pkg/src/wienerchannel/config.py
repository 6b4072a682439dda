"""Experiment configuration files (YAML).

Example::

    prior:
      kind: scaled_shape          # atomic | point_mass | gaussian_diagonal | scaled_shape
      shape: constant             # or an explicit coefficient list of length n
      amplitude: {kind: atomic, values: [-1, 1], weights: [0.5, 0.5]}
    basis: {n: 64, T: 1.0}
    rho_grid: [0.5, 1.0, 2.0]
    mc: {samples: 200000, batches: 50, seed: 7}
    fd_step: null                 # default max(1e-3, rho/100)
    tolerance: {sigmas: 4.0}
    convergence: {n_list: [16, 64, 256]}
    output: {dir: results}

Every problem is reported with the offending field and its line.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .identities import Tolerance
from .montecarlo import McConfig
from .priors import (
    Atomic,
    AtomicLaw,
    GaussianDiagonal,
    GaussianLaw,
    ScaledShape,
    SignalPrior,
)
from .wiener_space import Basis

SEED_ENV = "WIENERCHANNEL_SEED"

_TOP_KEYS = {
    "prior", "basis", "rho_grid", "mc", "fd_step", "tolerance", "sweep",
    "convergence", "analytic_samples", "output",
}


class ConfigError(ValueError):
    """Invalid configuration; ``str(err)`` lists ``line N: field: problem`` entries."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n".join(problems))


def _line_map(text: str) -> dict[tuple, int]:
    """1-based line of every mapping key / sequence item, keyed by path."""
    lines: dict[tuple, int] = {}

    def walk(node, path):
        lines.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is not None:
        walk(root, ())
    return lines


class _Reader:
    """Collects every problem instead of stopping at the first."""

    def __init__(self, lines):
        self.lines = lines
        self.problems: list[str] = []

    def fail(self, path, msg):
        line = None
        p = tuple(path)
        while line is None and p:
            line = self.lines.get(p)
            p = p[:-1]
        where = f"line {line}: " if line else ""
        name = ".".join(str(x) for x in path) or "<root>"
        self.problems.append(f"{where}{name}: {msg}")

    def mapping(self, obj, path, allowed, required=()):
        if not isinstance(obj, dict):
            self.fail(path, "expected a mapping")
            return {}
        for k in obj:
            if k not in allowed:
                self.fail(list(path) + [k], f"unknown key (allowed: {', '.join(sorted(allowed))})")
        for k in required:
            if k not in obj:
                self.fail(path, f"missing required key {k!r}")
        return obj

    def number(self, obj, path, lo=None, hi=None, integer=False, strict_lo=False):
        ok_type = isinstance(obj, int) if integer else isinstance(obj, (int, float))
        if isinstance(obj, bool) or not ok_type:
            self.fail(path, f"expected {'an integer' if integer else 'a number'}, got {obj!r}")
            return None
        if lo is not None and (obj <= lo if strict_lo else obj < lo):
            self.fail(path, f"must be {'>' if strict_lo else '>='} {lo}, got {obj!r}")
            return None
        if hi is not None and obj > hi:
            self.fail(path, f"must be <= {hi}, got {obj!r}")
            return None
        return obj

    def vector(self, obj, path, length=None):
        if not isinstance(obj, list) or not obj:
            self.fail(path, "expected a nonempty list of numbers")
            return None
        vals = [self.number(x, list(path) + [i]) for i, x in enumerate(obj)]
        if any(v is None for v in vals):
            return None
        if length is not None and len(vals) != length:
            self.fail(path, f"expected {length} entries, got {len(vals)}")
            return None
        return np.array(vals, dtype=float)


@dataclass(frozen=True)
class PriorSpec:
    """Parsed prior description; :meth:`build` instantiates it on a basis."""

    kind: str
    params: dict

    @property
    def resolution_free(self) -> bool:
        """True when the prior can be rebuilt at any resolution n."""
        if self.kind == "scaled_shape":
            return isinstance(self.params["shape"], str)
        if self.kind == "point_mass":
            return self.params["atom"] is None
        if self.kind == "gaussian_diagonal":
            return np.ndim(self.params["mean"]) == 0 and np.ndim(self.params["variances"]) == 0
        return False

    def build(self, basis: Basis) -> SignalPrior:
        n = basis.n
        p = self.params
        if self.kind == "atomic":
            return Atomic(p["atoms"], p["weights"])
        if self.kind == "point_mass":
            return Atomic.point_mass(np.zeros(n) if p["atom"] is None else p["atom"])
        if self.kind == "gaussian_diagonal":
            # scalars describe a derivative that is constant on each interval:
            # coordinate mean = mean * sqrt(step), coordinate variance = var * step
            mean = p["mean"] if np.ndim(p["mean"]) else np.full(n, p["mean"] * np.sqrt(basis.step))
            var = p["variances"] if np.ndim(p["variances"]) else np.full(n, p["variances"] * basis.step)
            return GaussianDiagonal(mean, var)
        shape = basis.constant_shape() if isinstance(p["shape"], str) else p["shape"]
        return ScaledShape(shape, p["amplitude"])


@dataclass(frozen=True)
class ExperimentConfig:
    prior: PriorSpec
    basis: Basis
    rho_grid: tuple
    mc: McConfig
    fd_step: float | None = None
    tolerance: Tolerance = field(default_factory=Tolerance)
    max_spacing: float = 0.05
    n_list: tuple = ()
    analytic_samples: int = 100
    output_dir: str = "results"

    def build_prior(self, n: int | None = None) -> SignalPrior:
        if n is None or n == self.basis.n:
            return self.prior.build(self.basis)
        if not self.prior.resolution_free:
            raise ConfigError([
                f"prior: explicit {self.prior.kind} coefficients fix n = {self.basis.n}; "
                f"cannot rebuild at n = {n}"
            ])
        return self.prior.build(Basis(n, self.basis.T))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, mc=self.mc.with_seed(seed))

    def echo(self) -> dict:
        """Plain-data summary (for JSON outputs)."""
        p = {k: _plain(v) for k, v in self.prior.params.items()}
        return {
            "prior": {"kind": self.prior.kind, **p},
            "basis": {"n": self.basis.n, "T": self.basis.T},
            "rho_grid": list(self.rho_grid),
            "mc": {"samples": self.mc.samples, "batches": self.mc.batches, "seed": self.mc.seed},
            "fd_step": self.fd_step,
            "tolerance": {
                "sigmas": self.tolerance.sigmas, "analytic": self.tolerance.analytic,
                "fd": self.tolerance.fd, "disc_factor": self.tolerance.disc_factor,
                "per_sample": self.tolerance.per_sample,
            },
            "max_spacing": self.max_spacing,
            "n_list": list(self.n_list),
        }


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, AtomicLaw):
        return {"kind": "atomic", "values": v.values.tolist(), "weights": v.weights.tolist()}
    if isinstance(v, GaussianLaw):
        return {"kind": "gaussian", "mean": v.mean, "var": v.var}
    return v


def _amplitude(r: _Reader, obj, path):
    obj = r.mapping(obj, path, {"kind", "values", "weights", "mean", "var"}, ("kind",))
    kind = obj.get("kind")
    if kind == "atomic":
        values = r.vector(obj.get("values"), path + ["values"])
        weights = r.vector(obj.get("weights"), path + ["weights"])
        if values is None or weights is None:
            return None
        try:
            return AtomicLaw(values, weights)
        except ValueError as e:
            r.fail(path, str(e))
    elif kind == "gaussian":
        mean = r.number(obj.get("mean", 0.0), path + ["mean"])
        var = r.number(obj.get("var", 1.0), path + ["var"], lo=0)
        if mean is not None and var is not None:
            return GaussianLaw(float(mean), float(var))
    elif kind is not None:
        r.fail(path + ["kind"], f"unknown amplitude kind {kind!r} (atomic | gaussian)")
    return None


def _prior(r: _Reader, obj, n) -> PriorSpec | None:
    path = ["prior"]
    obj = r.mapping(obj, path, {"kind", "atoms", "weights", "atom", "mean", "variances",
                                "shape", "amplitude"}, ("kind",))
    kind = obj.get("kind")
    if kind == "atomic":
        atoms = obj.get("atoms")
        if not isinstance(atoms, list) or not atoms:
            r.fail(path + ["atoms"], "expected a nonempty list of coefficient lists")
            return None
        rows = [r.vector(a, path + ["atoms", i], n) for i, a in enumerate(atoms)]
        weights = r.vector(obj.get("weights"), path + ["weights"], len(atoms))
        if any(x is None for x in rows) or weights is None:
            return None
        try:
            Atomic(np.stack(rows), weights)
        except ValueError as e:
            r.fail(path, str(e))
            return None
        return PriorSpec(kind, {"atoms": np.stack(rows), "weights": weights})
    if kind == "point_mass":
        atom = obj.get("atom")
        if atom is not None:
            atom = r.vector(atom, path + ["atom"], n)
            if atom is None:
                return None
        return PriorSpec(kind, {"atom": atom})
    if kind == "gaussian_diagonal":
        out = {}
        for key, default, lo in (("mean", 0.0, None), ("variances", 1.0, 0)):
            val = obj.get(key, default)
            if isinstance(val, list):
                vec = r.vector(val, path + [key], n)
                if vec is None:
                    return None
                if lo is not None and np.any(vec < lo):
                    r.fail(path + [key], "variances must be nonnegative")
                    return None
                out[key] = vec
            else:
                num = r.number(val, path + [key], lo=lo)
                if num is None:
                    return None
                out[key] = float(num)
        return PriorSpec(kind, out)
    if kind == "scaled_shape":
        shape = obj.get("shape", "constant")
        if isinstance(shape, str):
            if shape != "constant":
                r.fail(path + ["shape"], f"unknown shape {shape!r} (constant or a list)")
                return None
        else:
            shape = r.vector(shape, path + ["shape"], n)
            if shape is None:
                return None
            if not np.sum(shape**2) > 0:
                r.fail(path + ["shape"], "shape must have positive norm")
                return None
        if "amplitude" not in obj:
            r.fail(path, "missing required key 'amplitude'")
            return None
        amp = _amplitude(r, obj["amplitude"], path + ["amplitude"])
        if amp is None:
            return None
        return PriorSpec(kind, {"shape": shape, "amplitude": amp})
    if kind is not None:
        r.fail(path + ["kind"],
               f"unknown prior kind {kind!r} (atomic | point_mass | gaussian_diagonal | scaled_shape)")
    return None


def parse_config(text: str, default_seed: int | None = None) -> ExperimentConfig:
    """Parse and validate a YAML experiment description."""
    try:
        lines = _line_map(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ConfigError([f"{where}YAML syntax error: {getattr(e, 'problem', e)}"]) from None
    r = _Reader(lines)
    required = ("prior", "basis", "rho_grid")
    data = r.mapping(data, [], _TOP_KEYS, required)
    if any(k not in data for k in required):
        raise ConfigError(r.problems)

    b = r.mapping(data["basis"], ["basis"], {"n", "T"}, ("n",))
    n = r.number(b.get("n"), ["basis", "n"], lo=1, integer=True)
    T = r.number(b.get("T", 1.0), ["basis", "T"], lo=0, strict_lo=True)
    prior = _prior(r, data["prior"], n) if n is not None else None

    grid = data["rho_grid"]
    rho_grid = None
    if not isinstance(grid, list) or not grid:
        r.fail(["rho_grid"], "expected a nonempty list of rho values")
    else:
        vals = [r.number(x, ["rho_grid", i], lo=0) for i, x in enumerate(grid)]
        if all(v is not None for v in vals):
            if any(b2 <= a for a, b2 in zip(vals[:-1], vals[1:])):
                r.fail(["rho_grid"], "rho values must be strictly increasing")
            else:
                rho_grid = tuple(float(v) for v in vals)

    m = r.mapping(data.get("mc", {}), ["mc"], {"samples", "batches", "seed"})
    samples = r.number(m.get("samples", 100_000), ["mc", "samples"], lo=1, integer=True)
    batches = r.number(m.get("batches", 50), ["mc", "batches"], lo=2, integer=True)
    seed_default = 0 if default_seed is None else default_seed
    seed = r.number(m.get("seed", seed_default), ["mc", "seed"], lo=0, integer=True)
    mc = None
    if None not in (samples, batches, seed):
        try:
            mc = McConfig(samples, batches, seed)
        except ValueError as e:
            r.fail(["mc"], str(e))

    fd_step = data.get("fd_step")
    if fd_step is not None:
        fd_step = r.number(fd_step, ["fd_step"], lo=0, strict_lo=True)

    t = r.mapping(data.get("tolerance", {}), ["tolerance"],
                  {"sigmas", "analytic", "fd", "disc_factor", "per_sample"})
    tol_kw = {}
    for k, v in t.items():
        if k in Tolerance.__dataclass_fields__:
            val = r.number(v, ["tolerance", k], lo=0)
            if val is not None:
                tol_kw[k] = float(val)

    s = r.mapping(data.get("sweep", {}), ["sweep"], {"max_spacing"})
    max_spacing = r.number(s.get("max_spacing", 0.05), ["sweep", "max_spacing"], lo=0, strict_lo=True)

    c = r.mapping(data.get("convergence", {}), ["convergence"], {"n_list"})
    n_list = ()
    if "n_list" in c:
        nl = c["n_list"]
        if not isinstance(nl, list) or not nl:
            r.fail(["convergence", "n_list"], "expected a nonempty list of resolutions")
        else:
            vals = [r.number(x, ["convergence", "n_list", i], lo=1, integer=True)
                    for i, x in enumerate(nl)]
            if all(v is not None for v in vals):
                if any(b2 <= a for a, b2 in zip(vals[:-1], vals[1:])):
                    r.fail(["convergence", "n_list"], "resolutions must be increasing")
                elif any(vals[-1] % v for v in vals):
                    r.fail(["convergence", "n_list"], "every resolution must divide the finest")
                n_list = tuple(vals)

    analytic_samples = r.number(data.get("analytic_samples", 100), ["analytic_samples"],
                                lo=1, integer=True)
    o = r.mapping(data.get("output", {}), ["output"], {"dir"})
    out_dir = o.get("dir", "results")
    if not isinstance(out_dir, str):
        r.fail(["output", "dir"], "expected a path string")

    if prior is not None and n_list and not prior.resolution_free and n_list[-1] != n:
        r.fail(["convergence", "n_list"],
               f"explicit prior coefficients fix n = {n}; the finest resolution must equal it")
    if r.problems:
        raise ConfigError(r.problems)
    return ExperimentConfig(
        prior=prior,
        basis=Basis(n, float(T)),
        rho_grid=rho_grid,
        mc=mc,
        fd_step=None if fd_step is None else float(fd_step),
        tolerance=Tolerance(**tol_kw),
        max_spacing=float(max_spacing),
        n_list=n_list,
        analytic_samples=analytic_samples,
        output_dir=out_dir,
    )


def env_default_seed() -> int | None:
    """Default seed from the ``WIENERCHANNEL_SEED`` environment variable, if set."""
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError([f"{SEED_ENV}: expected a nonnegative integer, got {raw!r}"]) from None
    if seed < 0:
        raise ConfigError([f"{SEED_ENV}: expected a nonnegative integer, got {raw!r}"])
    return seed


def load_config(path, default_seed: int | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError([f"{path}: cannot read config ({e.strerror})"]) from None
    return parse_config(text, default_seed)


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PriorSpec",
    "SEED_ENV",
    "env_default_seed",
    "load_config",
    "parse_config",
]

