"""YAML model configuration.

A config is a nested mapping::

    name: scalar                 # optional label
    dims: {n: 1, k: 1, d: 1}
    grid: {T: 1.0, N: 2000}
    tau: 1.0                     # entropy weight
    delta: 0.5                   # lower bound for the eigenvalues of R_t
    sigma_floor: 0.01            # lower bound for policy covariances (optional)
    matrices:
      A: [[0.0]]                 # constant matrix, rows listed in order
      B: [[1.0]]
      Q: {nodes: [...]}          # or one matrix per grid node (N+1 of them)
      R: [[1.0]]
      sigma: [[1.0]]
      Qprime: [[1.0]]            # terminal weight, never time dependent
    init:
      mean: [0.0]
      cov: [[1.0]]

A scalar may stand in for a 1x1 matrix.  ``builtin:<name>`` in place of a
path loads one of the packaged benchmark configs.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .core import InitialDistribution, LQRModel, MatrixPath, TimeGrid
from .errors import ConfigError, LQRError

PATH_SLOTS = ("A", "B", "Q", "R", "sigma")
BUILTINS = ("scalar", "double-integrator", "diffusion-scalar")


@dataclass(frozen=True)
class Config:
    name: str
    model: LQRModel
    sigma_floor: float


def _matrix(value, shape, where):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: not a numeric matrix ({exc})") from None
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1 and shape[1] == 1 and M.size == shape[0]:
        M = M.reshape(shape)
    elif M.ndim == 1 and shape[0] == 1 and M.size == shape[1]:
        M = M.reshape(shape)
    if M.shape != shape:
        raise ConfigError(f"{where}: expected shape {shape}, got {M.shape}")
    return M


def _path(value, grid, shape, where):
    if isinstance(value, dict):
        if set(value) != {"nodes"}:
            raise ConfigError(f"{where}: per-node form needs exactly one key 'nodes'")
        nodes = value["nodes"]
        if not isinstance(nodes, list) or len(nodes) != grid.N + 1:
            raise ConfigError(f"{where}: 'nodes' must list N+1 = {grid.N + 1} matrices")
        return MatrixPath(grid, np.stack([_matrix(v, shape, f"{where}[{i}]")
                                          for i, v in enumerate(nodes)]))
    return MatrixPath.constant(grid, _matrix(value, shape, where))


def _require(mapping, key, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"missing field '{where}{key}'")
    return mapping[key]


def parse_config(data: dict, name: str = "config") -> Config:
    """Build a ``Config`` from an already-parsed mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    dims = _require(data, "dims", "")
    try:
        n, k, d = (int(_require(dims, key, "dims.")) for key in ("n", "k", "d"))
        g = _require(data, "grid", "")
        grid = TimeGrid(float(_require(g, "T", "grid.")), int(_require(g, "N", "grid.")))
        tau = float(_require(data, "tau", ""))
        delta = float(_require(data, "delta", ""))
        sigma_floor = float(data.get("sigma_floor", 1e-6))
    except ConfigError:
        raise
    except (TypeError, ValueError, LQRError) as exc:
        raise ConfigError(f"bad scalar field: {exc}") from None
    shapes = {"A": (n, n), "B": (n, k), "Q": (n, n), "R": (k, k), "sigma": (n, d)}
    mats = _require(data, "matrices", "")
    paths = {s: _path(_require(mats, s, "matrices."), grid, shapes[s], f"matrices.{s}")
             for s in PATH_SLOTS}
    Qprime = _matrix(_require(mats, "Qprime", "matrices."), (n, n), "matrices.Qprime")
    init = _require(data, "init", "")
    mean = _matrix(_require(init, "mean", "init."), (n, 1), "init.mean").ravel()
    cov = _matrix(_require(init, "cov", "init."), (n, n), "init.cov")
    try:
        model = LQRModel(Qprime=Qprime, tau=tau, delta=delta,
                         init=InitialDistribution(mean, cov), **paths)
    except LQRError as exc:
        raise ConfigError(str(exc)) from None
    return Config(str(data.get("name", name)), model, sigma_floor)


def load_config(source) -> Config:
    """Load a config from a file path or ``builtin:<name>``."""
    source = str(source)
    if source.startswith("builtin:"):
        key = source.split(":", 1)[1]
        if key not in BUILTINS:
            raise ConfigError(f"unknown builtin '{key}' (choose from {', '.join(BUILTINS)})")
        text = resources.files("entlqr.benchmarks").joinpath(f"{key}.yaml").read_text()
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config '{source}': {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config '{source}': {exc}") from None
    return parse_config(data, name=Path(source).stem)


def builtin(name: str, N: int | None = None) -> LQRModel:
    """One of the packaged benchmark models, optionally regridded to N steps."""
    model = load_config(f"builtin:{name}").model
    return model if N is None else model.regrid(N)


def dump_config(model: LQRModel, name: str = "model", sigma_floor: float = 1e-6) -> str:
    """Serialize a model to the YAML format read by ``load_config``."""
    def mat(M):
        return np.asarray(M).tolist()

    def path(p):
        return mat(p.values[0]) if p.is_constant() else {"nodes": [mat(v) for v in p.values]}

    data = {
        "name": name,
        "dims": {"n": model.n, "k": model.k, "d": model.d},
        "grid": {"T": model.grid.T, "N": model.grid.N},
        "tau": model.tau,
        "delta": model.delta,
        "sigma_floor": sigma_floor,
        "matrices": {**{s: path(getattr(model, s)) for s in PATH_SLOTS},
                     "Qprime": mat(model.Qprime)},
        "init": {"mean": mat(model.init.mean), "cov": mat(model.init.cov)},
    }
    return yaml.safe_dump(data, sort_keys=False)
