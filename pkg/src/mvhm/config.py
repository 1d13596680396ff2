"""Configuration loading: packaged YAML defaults, optional user file, overrides."""

import copy
from functools import lru_cache
from importlib import resources

import yaml

from .errors import ConfigError


@lru_cache(maxsize=None)
def _defaults():
    text = resources.files("mvhm.data").joinpath("default_config.yaml").read_text()
    return yaml.safe_load(text)


def default_config():
    return copy.deepcopy(_defaults())


def default_pose_limits():
    return {k: tuple(v) for k, v in _defaults()["pose_limits"].items()}


def merge(base, update):
    """Recursive dict merge; values in `update` win. `None` values are skipped."""
    out = copy.deepcopy(base)
    for key, value in update.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, overrides=None):
    cfg = default_config()
    if path is not None:
        try:
            with open(path) as fh:
                user = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config {path} must be a mapping")
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = merge(cfg, user)
    if overrides:
        cfg = merge(cfg, overrides)
    check_config(cfg)
    return cfg


def check_config(cfg):
    """Raise ConfigError on values no run could use."""
    def need(ok, msg):
        if not ok:
            raise ConfigError(msg)

    try:
        need(int(cfg["count"]) >= 0, "count must be >= 0")
        need(int(cfg["workers"]) >= 1, "workers must be >= 1")
        rig, r = cfg["rig"], cfg["render"]
        need(int(rig["views"]) >= 2, "rig.views must be >= 2")
        need(float(rig["radius"]) > 0, "rig.radius must be positive")
        need(0 < float(rig["fill"]) <= 1, "rig.fill must lie in (0, 1]")
        need(rig.get("focal") is None or float(rig["focal"]) > 0, "rig.focal must be positive")
        need(int(r["resolution"]) > 0, "render.resolution must be positive")
        need(0 < float(r["near"]) < float(r["far"]), "render needs 0 < near < far")
        need(float(r["depth_scale"]) > 0, "render.depth_scale must be positive")
        lo, hi = r["light_intensity"]
        need(0 <= float(lo) <= float(hi) <= 2, "render.light_intensity must satisfy 0 <= lo <= hi <= 2")
        need(int(cfg["mesh"]["vertex_budget"]) > 0, "mesh.vertex_budget must be positive")
        need(int(cfg["coarsening"]["levels"]) >= 0, "coarsening.levels must be >= 0")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
