"""Run configuration: a line-oriented ``[section]`` / ``key = value`` format.

Example::

    [model]
    n = 2
    s = 3
    a0 = 1, 1
    a = 1, 0.5; 0.5, 1      # rows separated by ';'
    [noise]
    kind = bounded_multiplicative
    c = 0.1                  # scalar means c * identity

Comments start with ``#``.  Unset keys take documented defaults; ``pi``
defaults to the detailed-balance solution.  Every problem found is reported
with its line number, not only the first.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .assumptions import solve_detailed_balance
from .errors import ConfigError, DomainError
from .galerkin import GridSpec
from .model import DOMINANCE_FLAGS, ModelParams
from .noise import NOISE_KINDS, NoiseModel
from .steppers import SCHEMES, StepConfig

__all__ = [
    "PROFILES",
    "InitialProfile",
    "RunConfig",
    "parse_config",
    "load_config",
    "default_config",
    "config_text",
]

PROFILES = ("constant", "bump", "cosine")


@dataclass(frozen=True)
class InitialProfile:
    """Closed-form nonnegative initial data, identical in form for each species.

    constant: base
    bump:     base + amplitude * exp(-((x - center) / width)**2)
    cosine:   base + amplitude * cos(mode * pi * x / L)
    ``base`` and ``amplitude`` may be per-species tuples.
    """

    profile: str = "bump"
    base: tuple = (0.5,)
    amplitude: tuple = (1.0,)
    center: float = 0.5
    width: float = 0.15
    mode: int = 1

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise DomainError(f"profile must be one of {PROFILES}")
        object.__setattr__(self, "base", tuple(np.atleast_1d(self.base).astype(float)))
        object.__setattr__(self, "amplitude", tuple(np.atleast_1d(self.amplitude).astype(float)))
        if self.profile == "bump" and not self.width > 0:
            raise DomainError("bump width must be positive")

    def _per_species(self, values, n):
        v = np.asarray(values, dtype=float)
        if v.size == 1:
            return np.full(n, v[0])
        if v.size != n:
            raise DomainError(f"expected 1 or {n} values, got {v.size}")
        return v

    def evaluate(self, x, n: int, length: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        base = self._per_species(self.base, n)[:, None]
        amp = self._per_species(self.amplitude, n)[:, None]
        if self.profile == "constant":
            return base + 0.0 * x[None, :]
        if self.profile == "bump":
            return base + amp * np.exp(-(((x - self.center) / self.width) ** 2))[None, :]
        return base + amp * np.cos(self.mode * math.pi * x / length)[None, :]

    def minimum(self, n: int, length: float) -> float:
        x = np.linspace(0.0, length, 4001)
        return float(self.evaluate(x, n, length).min())


@dataclass(frozen=True, eq=False)
class RunConfig:
    params: ModelParams
    grid: GridSpec = GridSpec()
    step: StepConfig = StepConfig()
    noise: NoiseModel = NoiseModel()
    T: float = 0.1
    eta: float = 1e-2
    scheme: str = "entropy"
    initial: InitialProfile = InitialProfile()
    seed: int = 42
    n_paths: int = 20
    output_dir: str = "out"
    workers: int = 1
    converge_kind: str = "tau"
    converge_levels: tuple = (4e-3, 2e-3, 1e-3)
    source: str = ""

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise DomainError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        tau, eta, T = self.step.tau, self.eta, self.T
        if T < 0:
            out.append("T must be nonnegative")
        if not eta > 0:
            out.append("eta must be positive")
            return out
        big, small = max(tau, eta), min(tau, eta)
        r = big / small
        if abs(r - round(r)) > 1e-9 * r:
            out.append(f"tau={tau} and eta={eta}: one must be an integer multiple of the other")
        if T > 0:
            meshes = (("tau", tau),) if self.noise.is_zero else (("tau", tau), ("eta", eta))
            for name, h in meshes:
                m = T / h
                if abs(m - round(m)) > 1e-9 * m:
                    out.append(f"T={T} must be an integer multiple of {name}={h}")
        if self.scheme not in SCHEMES:
            out.append(f"scheme must be one of {SCHEMES}")
        if self.noise.first_mode + self.noise.K > self.grid.N:
            out.append(f"noise modes need first_mode + K <= N={self.grid.N}")
        if self.noise.c is not None and self.noise.c.shape != (self.params.n, self.params.n):
            out.append(f"noise c must be {self.params.n}x{self.params.n}")
        if self.n_paths < 1:
            out.append("n_paths must be positive")
        if self.workers < 1:
            out.append("workers must be positive")
        try:
            lo = self.initial.minimum(self.params.n, self.grid.domain_length)
            if lo < 0:
                out.append(f"initial profile is negative somewhere (min {lo:.3g})")
        except DomainError as exc:
            out.append(f"initial profile: {exc}")
        return out

    @property
    def warnings(self) -> list[str]:
        return [f"s={self.params.s} < 2 is outside the existence theory"] if self.params.s_warning else []


def default_config(n: int = 1, **overrides) -> RunConfig:
    params = ModelParams(n, 2.0, np.ones(n), np.eye(n), np.ones(n))
    return RunConfig(params, **overrides)


# ---------------------------------------------------------------------------
# parsing

_SCHEMA = {
    "model": {"n": "int", "s": "float", "a0": "vector", "a": "matrix", "pi": "vector", "dominance": "str"},
    "grid": {"L": "float", "N": "int", "Q": "int"},
    "time": {
        "T": "float",
        "tau": "float",
        "eta": "float",
        "epsilon": "float",
        "newton_tol": "float",
        "newton_max_iter": "int",
        "continuation_steps": "int",
        "scheme": "str",
    },
    "noise": {"kind": "str", "c": "matrix", "K": "int", "first_mode": "int"},
    "initial": {
        "profile": "str",
        "base": "vector",
        "amplitude": "vector",
        "center": "float",
        "width": "float",
        "mode": "int",
    },
    "run": {"seed": "int", "n_paths": "int", "output_dir": "str", "workers": "int"},
    "converge": {"kind": "str", "levels": "vector"},
}

_TYPE_NAMES = {
    "int": "an integer",
    "float": "a number",
    "vector": "a comma-separated list of numbers",
    "matrix": "rows of numbers separated by ';'",
    "str": "a word",
}


def _convert(kind: str, raw: str):
    if kind == "int":
        v = float(raw)
        if not v.is_integer():
            raise ValueError
        return int(v)
    if kind == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError
        return v
    if kind == "vector":
        vals = [float(x) for x in raw.split(",") if x.strip()]
        if not vals:
            raise ValueError
        return np.array(vals)
    if kind == "matrix":
        rows = [[float(x) for x in r.split(",") if x.strip()] for r in raw.split(";") if r.strip()]
        if not rows or len({len(r) for r in rows}) != 1:
            raise ValueError
        return np.array(rows)
    if not raw or any(ch.isspace() for ch in raw):
        raise ValueError
    return raw


def _tokenise(text: str):
    """{(section, key): (value, line)} plus syntax problems."""
    entries, problems = {}, []
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                problems.append((lineno, f"malformed section header {stripped!r}"))
                continue
            section = stripped[1:-1].strip()
            if section not in _SCHEMA:
                problems.append((lineno, f"unknown section [{section}]"))
            continue
        if "=" not in stripped:
            problems.append((lineno, f"expected 'key = value', got {stripped!r}"))
            continue
        key, value = (p.strip() for p in stripped.split("=", 1))
        if section is None:
            problems.append((lineno, f"key {key!r} appears before any section header"))
            continue
        if section not in _SCHEMA:
            continue
        if key not in _SCHEMA[section]:
            problems.append((lineno, f"unknown key {key!r} in [{section}]"))
            continue
        if (section, key) in entries:
            problems.append((lineno, f"duplicate key {key!r} in [{section}] (first on line {entries[section, key][1]})"))
            continue
        try:
            entries[section, key] = (_convert(_SCHEMA[section][key], value), lineno)
        except ValueError:
            problems.append((lineno, f"{key}: expected {_TYPE_NAMES[_SCHEMA[section][key]]}, got {value!r}"))
    return entries, problems


def parse_config(text: str) -> RunConfig:
    """Validated RunConfig, or ConfigError listing every problem with its line.

    Defaults: n = 1, s = 2, a0 = 1, a = identity, pi from detailed balance,
    dominance = strong, L = 1, N = 16, Q = 64, T = 0.1, tau = 1e-3, eta = 1e-2,
    epsilon = 1e-8 * tau, scheme = entropy, noise kind = zero, K = min(N, 8),
    first_mode = 0, bump initial data, seed = 42, n_paths = 20.
    """
    entries, problems = _tokenise(text)

    def get(section, key, default=None):
        return entries[section, key][0] if (section, key) in entries else default

    def line(section, key):
        return entries[section, key][1] if (section, key) in entries else 0

    def fail(section, key, msg):
        problems.append((line(section, key), msg))

    n = get("model", "n", 1)
    if n < 1:
        fail("model", "n", f"n: must be a positive integer, got {n}")
        n = 1
    s = get("model", "s", 2.0)
    a0 = get("model", "a0", np.ones(n))
    a = get("model", "a", np.eye(n))
    if a0.size == 1 and n > 1:
        a0 = np.full(n, a0[0])
    checks_ok = True
    if a0.shape != (n,):
        fail("model", "a0", f"a0: expected {n} values, got {a0.size}")
        checks_ok = False
    elif np.any(a0 <= 0):
        fail("model", "a0", "a0: entries must be positive")
        checks_ok = False
    if a.shape != (n, n):
        fail("model", "a", f"a: expected a {n}x{n} matrix, got {a.shape[0]}x{a.shape[1]}")
        checks_ok = False
    elif np.any(a < 0):
        bad = [(i + 1, j + 1) for i, j in zip(*np.nonzero(a < 0))]
        fail("model", "a", "a: entries must be nonnegative (a_ij >= 0); negative at "
             + ", ".join(f"a_{i}{j}" for i, j in bad))
        checks_ok = False
    if s < 1:
        fail("model", "s", f"s: must be >= 1, got {s}")
        checks_ok = False
    dominance = get("model", "dominance", "strong")
    if dominance not in DOMINANCE_FLAGS:
        fail("model", "dominance", f"dominance: must be one of {DOMINANCE_FLAGS}")
        checks_ok = False
    pi = get("model", "pi")
    if checks_ok and pi is None:
        sol = solve_detailed_balance(a)
        if not sol.feasible:
            fail("model", "a", f"a: {sol.describe()}")
            checks_ok = False
        pi = sol.pi
    params = None
    if checks_ok:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                params = ModelParams(n, s, a0, a, pi, dominance)
        except DomainError as exc:
            key = "pi" if ("pi" in str(exc) and ("model", "pi") in entries) else "a"
            for msg in str(exc).split("; "):
                fail("model", key, f"{key}: {msg}")

    grid = step = noise = initial = None
    try:
        grid = GridSpec(get("grid", "L", 1.0), get("grid", "N", 16), get("grid", "Q", 64))
    except DomainError as exc:
        problems.append((line("grid", "Q") or line("grid", "N") or line("grid", "L"), f"grid: {exc}"))
    tau = get("time", "tau", 1e-3)
    try:
        step = StepConfig(
            tau,
            get("time", "epsilon", 1e-8 * tau),
            get("time", "newton_tol", 1e-11),
            get("time", "newton_max_iter", 30),
            get("time", "continuation_steps", 8),
        )
    except DomainError as exc:
        problems.append((line("time", "tau") or line("time", "epsilon"), f"time: {exc}"))
    c = get("noise", "c")
    if c is not None and c.size == 1:
        c = c.reshape(()) * np.eye(n)
    try:
        K_default = min(grid.N, 8) if grid is not None else 8
        noise = NoiseModel(get("noise", "kind", "zero"), c, get("noise", "K", K_default), get("noise", "first_mode", 0))
    except DomainError as exc:
        problems.append((line("noise", "kind") or line("noise", "K"), f"noise: {exc}"))
    if noise is not None and noise.kind != "zero" and noise.c is None:
        fail("noise", "kind", f"noise: kind {noise.kind!r} needs an amplitude c")
    if noise is not None and noise.c is not None and np.any(noise.c < 0):
        fail("noise", "c", "c: amplitudes must be nonnegative")
    try:
        initial = InitialProfile(
            get("initial", "profile", "bump"),
            tuple(get("initial", "base", np.array([0.5]))),
            tuple(get("initial", "amplitude", np.array([1.0]))),
            get("initial", "center", 0.5),
            get("initial", "width", 0.15),
            get("initial", "mode", 1),
        )
    except DomainError as exc:
        problems.append((line("initial", "profile"), f"initial: {exc}"))

    ckind = get("converge", "kind", "tau")
    if ckind not in ("tau", "eta", "epsilon"):
        fail("converge", "kind", "kind: must be tau, eta or epsilon")
    levels = tuple(get("converge", "levels", np.array([4e-3, 2e-3, 1e-3])))

    if problems or params is None or None in (grid, step, noise, initial):
        raise ConfigError(sorted(problems, key=lambda p: p[0]))

    cfg = dict(
        params=params,
        grid=grid,
        step=step,
        noise=noise,
        T=get("time", "T", 0.1),
        eta=get("time", "eta", 1e-2),
        scheme=get("time", "scheme", "entropy"),
        initial=initial,
        seed=get("run", "seed", 42),
        n_paths=get("run", "n_paths", 20),
        output_dir=get("run", "output_dir", "out"),
        workers=get("run", "workers", 1),
        converge_kind=ckind,
        converge_levels=levels,
        source=text,
    )
    try:
        return RunConfig(**cfg)
    except DomainError as exc:
        owner = {
            "tau": ("time", "tau"),
            "eta": ("time", "eta"),
            "T=": ("time", "T"),
            "scheme": ("time", "scheme"),
            "noise": ("noise", "K"),
            "initial": ("initial", "profile"),
            "n_paths": ("run", "n_paths"),
            "workers": ("run", "workers"),
        }
        for msg in str(exc).split("; "):
            where = next((line(*v) for k, v in owner.items() if k in msg and line(*v)), 0)
            problems.append((where, msg))
        raise ConfigError(sorted(problems, key=lambda p: p[0])) from None


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(v) -> str:
    return f"{v:.17g}"


def config_text(cfg: RunConfig) -> str:
    """Canonical text form of a config; parsing it gives back the same run."""
    p = cfg.params
    ini = cfg.initial
    lines = [
        "[model]",
        f"n = {p.n}",
        f"s = {_fmt(p.s)}",
        "a0 = " + ", ".join(_fmt(x) for x in p.a0),
        "a = " + "; ".join(", ".join(_fmt(x) for x in row) for row in p.a),
        "pi = " + ", ".join(_fmt(x) for x in p.pi),
        f"dominance = {p.dominance}",
        "[grid]",
        f"L = {_fmt(cfg.grid.domain_length)}",
        f"N = {cfg.grid.N}",
        f"Q = {cfg.grid.Q}",
        "[time]",
        f"T = {_fmt(cfg.T)}",
        f"tau = {_fmt(cfg.step.tau)}",
        f"eta = {_fmt(cfg.eta)}",
        f"epsilon = {_fmt(cfg.step.epsilon)}",
        f"newton_tol = {_fmt(cfg.step.newton_tol)}",
        f"newton_max_iter = {cfg.step.newton_max_iter}",
        f"continuation_steps = {cfg.step.continuation_steps}",
        f"scheme = {cfg.scheme}",
        "[noise]",
        f"kind = {cfg.noise.kind}",
    ]
    if cfg.noise.c is not None:
        lines.append("c = " + "; ".join(", ".join(_fmt(x) for x in row) for row in cfg.noise.c))
    lines += [
        f"K = {cfg.noise.K}",
        f"first_mode = {cfg.noise.first_mode}",
        "[initial]",
        f"profile = {ini.profile}",
        "base = " + ", ".join(_fmt(x) for x in ini.base),
        "amplitude = " + ", ".join(_fmt(x) for x in ini.amplitude),
        f"center = {_fmt(ini.center)}",
        f"width = {_fmt(ini.width)}",
        f"mode = {ini.mode}",
        "[run]",
        f"seed = {cfg.seed}",
        f"n_paths = {cfg.n_paths}",
        f"output_dir = {cfg.output_dir}",
        f"workers = {cfg.workers}",
        "[converge]",
        f"kind = {cfg.converge_kind}",
        "levels = " + ", ".join(_fmt(x) for x in cfg.converge_levels),
    ]
    return "\n".join(lines) + "\n"
