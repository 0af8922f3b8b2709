"""Run configuration: flat key = value files with dotted sections.

One file describes one experiment; CLI flags override file values.  The
effective configuration (defaults included) is canonicalized and hashed, and
that hash plus the global seed are stamped into every output artifact so a
results file can always be traced back to the exact settings that made it.

Example::

    env.name = pendulum
    env.g = 10.0
    lqr.Q = 450 20
    lqr.R = 0.1
    train.iterations = 60
    out_dir = runs/pendulum
    seed = 7
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .envs import CostSpec, EnvParams, Environment, make_env, rod_inertia
from .lqr import CostWeights
from .trainer import TrainConfig

_ENV_FIELDS = ("m", "M", "l", "I", "g", "dt", "u_max", "horizon")

# LQR design weights per environment.  The pendulum design is deliberately
# stiff: the sweep protocol scales mass and gravity up to 5x, and a softer
# gain (e.g. Q = I, R = 1) loses closed-loop stability above roughly 2.5x.
# These weights keep it Hurwitz across the whole sweep range while the fast
# closed-loop pole stays well inside the RK4 stability disc at dt = 0.05.
DEFAULT_LQR_WEIGHTS = {
    "pendulum": ([450.0, 20.0], 0.1),
    "cartpole": ([1.0, 1.0, 1.0, 1.0], 1.0),
    "mountaincar": ([1.0, 1.0], 1.0),
}


class ConfigError(ValueError):
    """A config file or override could not be interpreted."""


@dataclass
class RunConfig:
    env_name: str = "pendulum"
    env_overrides: dict = field(default_factory=dict)
    cost_a: list | None = None
    cost_K: list | None = None
    cost_k: float | None = None
    lqr_Q: list | None = None
    lqr_R: float | None = None
    lqr_b_scale: float = 1.0
    n_centers: int = 50
    lam_init: list | float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)
    respond_magnitude: float | None = None
    respond_horizon: int | None = None
    robust_factors: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 3.0, 5.0])
    robust_seeds: int = 10
    robust_horizon: int = 200
    robust_jitter: float = 0.01
    out_dir: str = "runs"
    seed: int = 0

    # -- builders -----------------------------------------------------------
    def make_env(self) -> Environment:
        base = make_env(self.env_name).params
        values = {f: getattr(base, f) for f in _ENV_FIELDS}
        values.update(self.env_overrides)
        # the inertia field tracks the uniform-rod assumption unless pinned
        if ("m" in self.env_overrides or "l" in self.env_overrides) and \
                "I" not in self.env_overrides:
            values["I"] = rod_inertia(values["m"], values["l"])
        return make_env(self.env_name, EnvParams(**values))

    def make_cost(self, env: Environment) -> CostSpec:
        base = env.default_cost()
        return CostSpec(
            a=self.cost_a if self.cost_a is not None else base.a,
            K=self.cost_K if self.cost_K is not None else base.K,
            k=self.cost_k if self.cost_k is not None else base.k,
        )

    def make_weights(self, env: Environment) -> CostWeights:
        q_default, r_default = DEFAULT_LQR_WEIGHTS[self.env_name]
        q = self.lqr_Q if self.lqr_Q is not None else q_default
        r = self.lqr_R if self.lqr_R is not None else r_default
        q = np.asarray(q, dtype=float)
        if q.size != env.state_dim:
            raise ConfigError(
                f"lqr.Q needs {env.state_dim} diagonal entries for {env.name}")
        return CostWeights(Q=np.diag(q), R=np.array([[float(r)]]))

    def lam_vector(self, obs_dim: int) -> np.ndarray:
        if np.isscalar(self.lam_init):
            return np.full(obs_dim, float(self.lam_init))
        lam = np.asarray(self.lam_init, dtype=float)
        if lam.size != obs_dim:
            raise ConfigError(f"policy.lambda needs {obs_dim} entries")
        return lam

    # -- identity ------------------------------------------------------------
    def canonical_items(self) -> list[tuple[str, str]]:
        items: list[tuple[str, str]] = [("env.name", self.env_name)]
        for key in sorted(self.env_overrides):
            items.append((f"env.{key}", repr(float(self.env_overrides[key]))))
        for name, value in (("cost.a", self.cost_a), ("cost.K", self.cost_K)):
            if value is not None:
                items.append((name, " ".join(repr(float(v)) for v in value)))
        if self.cost_k is not None:
            items.append(("cost.k", repr(float(self.cost_k))))
        if self.lqr_Q is not None:
            items.append(("lqr.Q", " ".join(repr(float(v)) for v in self.lqr_Q)))
        if self.lqr_R is not None:
            items.append(("lqr.R", repr(float(self.lqr_R))))
        items.append(("lqr.b_scale", repr(float(self.lqr_b_scale))))
        items.append(("policy.n_centers", str(self.n_centers)))
        if np.isscalar(self.lam_init):
            items.append(("policy.lambda", repr(float(self.lam_init))))
        else:
            items.append(("policy.lambda",
                          " ".join(repr(float(v)) for v in self.lam_init)))
        t = self.train
        items.extend([
            ("train.population", str(t.population)),
            ("train.elite_frac", repr(float(t.elite_frac))),
            ("train.init_std", repr(float(t.init_std))),
            ("train.std_decay", repr(float(t.std_decay))),
            ("train.iterations", str(t.iterations)),
            ("train.episodes", str(t.episodes_per_candidate)),
            ("train.horizon", str(t.horizon)),
            ("train.seed", str(t.seed)),
            ("train.train_lambda", str(t.train_lambda).lower()),
        ])
        if self.respond_magnitude is not None:
            items.append(("respond.magnitude", repr(float(self.respond_magnitude))))
        if self.respond_horizon is not None:
            items.append(("respond.horizon", str(self.respond_horizon)))
        items.append(("robust.factors",
                      " ".join(repr(float(v)) for v in self.robust_factors)))
        items.append(("robust.seeds", str(self.robust_seeds)))
        items.append(("robust.horizon", str(self.robust_horizon)))
        items.append(("robust.jitter", repr(float(self.robust_jitter))))
        items.append(("out_dir", self.out_dir))
        items.append(("seed", str(self.seed)))
        return sorted(items)

    def config_hash(self) -> str:
        text = "\n".join(f"{k} = {v}" for k, v in self.canonical_items())
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def stamp(self, env: Environment | None = None) -> list[str]:
        """Comment lines embedded in every output artifact.

        The physical parameters (including the assumed dt and horizon) are
        echoed so a results file is interpretable without the config file.
        """
        lines = [f"config_hash={self.config_hash()} seed={self.seed}"]
        if env is not None:
            p = env.params
            lines.append(
                f"env={env.name} m={p.m!r} M={p.M!r} l={p.l!r} I={p.I!r} "
                f"g={p.g!r} dt={p.dt!r} u_max={p.u_max!r} horizon={p.horizon}")
        return lines


def _parse_bool(value: str, key: str) -> bool:
    low = value.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _parse_floats(value: str) -> list[float]:
    return [float(v) for v in value.replace(",", " ").split()]


def parse_config_text(text: str) -> dict[str, str]:
    """Read key = value lines; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_run_config(pairs: dict[str, str]) -> RunConfig:
    cfg = RunConfig()
    train_kwargs: dict = {}
    for key, value in pairs.items():
        try:
            if key == "env.name":
                cfg.env_name = value
            elif key.startswith("env."):
                name = key[4:]
                if name not in _ENV_FIELDS:
                    raise ConfigError(f"unknown environment field {name!r}")
                cfg.env_overrides[name] = int(value) if name == "horizon" else float(value)
            elif key == "cost.a":
                cfg.cost_a = _parse_floats(value)
            elif key == "cost.K":
                cfg.cost_K = _parse_floats(value)
            elif key == "cost.k":
                cfg.cost_k = float(value)
            elif key == "lqr.Q":
                cfg.lqr_Q = _parse_floats(value)
            elif key == "lqr.R":
                cfg.lqr_R = float(value)
            elif key == "lqr.b_scale":
                cfg.lqr_b_scale = float(value)
            elif key == "policy.n_centers":
                cfg.n_centers = int(value)
            elif key == "policy.lambda":
                vals = _parse_floats(value)
                cfg.lam_init = vals[0] if len(vals) == 1 else vals
            elif key == "train.population":
                train_kwargs["population"] = int(value)
            elif key == "train.elite_frac":
                train_kwargs["elite_frac"] = float(value)
            elif key == "train.init_std":
                train_kwargs["init_std"] = float(value)
            elif key == "train.std_decay":
                train_kwargs["std_decay"] = float(value)
            elif key == "train.iterations":
                train_kwargs["iterations"] = int(value)
            elif key == "train.episodes":
                train_kwargs["episodes_per_candidate"] = int(value)
            elif key == "train.horizon":
                train_kwargs["horizon"] = int(value)
            elif key == "train.train_lambda":
                train_kwargs["train_lambda"] = _parse_bool(value, key)
            elif key == "train.seed":
                train_kwargs["seed"] = int(value)
            elif key == "respond.magnitude":
                cfg.respond_magnitude = float(value)
            elif key == "respond.horizon":
                cfg.respond_horizon = int(value)
            elif key == "robust.factors":
                cfg.robust_factors = _parse_floats(value)
            elif key == "robust.seeds":
                cfg.robust_seeds = int(value)
            elif key == "robust.horizon":
                cfg.robust_horizon = int(value)
            elif key == "robust.jitter":
                cfg.robust_jitter = float(value)
            elif key == "out_dir":
                cfg.out_dir = value
            elif key == "seed":
                cfg.seed = int(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{key}: {exc}") from None
    if train_kwargs:
        cfg.train = TrainConfig(**{**_train_defaults(), **train_kwargs})
    return cfg


def _train_defaults() -> dict:
    return {f.name: f.default for f in dc_fields(TrainConfig)}


def load_run_config(path: str | None, overrides: dict[str, str] | None = None) -> RunConfig:
    pairs: dict[str, str] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            pairs.update(parse_config_text(fh.read()))
    pairs.update(overrides or {})
    cfg = build_run_config(pairs)
    # the trainer seed follows the global seed unless the file pinned it
    if "train.seed" not in pairs:
        cfg.train.seed = cfg.seed
    return cfg
