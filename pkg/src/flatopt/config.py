"""Flat ``key = value`` run configuration.

The on-disk format is deliberately primitive: one ``key = value`` pair per
line, ``#``/``;`` comments, optional ``[section]`` headers that serve as
visual grouping only (keys live in one flat namespace and must be unique).
Every key is validated against the schema of the subcommand consuming it;
unknown keys and bad values fail with the offending key named.
"""

from .errors import ConfigError
from .optimizers import OPTIMIZER_NAMES, StepSchedule


def parse_config_text(text: str) -> dict:
    """Parse flat key=value text (sections allowed, keys globally unique)."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            continue  # grouping only
        if "=" not in stripped:
            raise ConfigError(stripped.split()[0], f"line {lineno} is not 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.split("#")[0].strip()
        if key in raw:
            raise ConfigError(key, "duplicate key")
        raw[key] = value
    return raw


def parse_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def parse_schedule(text: str) -> StepSchedule:
    """'60:0.2,120:0.04' -> StepSchedule; empty string means no schedule."""
    text = text.strip()
    if not text:
        return StepSchedule()
    breakpoints = []
    for part in text.split(","):
        epoch_text, _, mult_text = part.partition(":")
        breakpoints.append((int(epoch_text.strip()), float(mult_text.strip())))
    return StepSchedule(tuple(breakpoints))


def schedule_to_text(schedule: StepSchedule) -> str:
    return ",".join(f"{e}:{m:g}" for e, m in schedule.breakpoints)


# -- typed fields -----------------------------------------------------------


def _int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected integer, got {text!r}") from None


def _float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(key, f"expected number, got {text!r}") from None


def _choice(options):
    def convert(key, text):
        if text not in options:
            raise ConfigError(key, f"must be one of {sorted(options)}, got {text!r}")
        return text

    return convert


def _int_tuple(key, text):
    try:
        return tuple(int(part.strip()) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(key, f"expected comma-separated integers, got {text!r}") from None


def _schedule(key, text):
    try:
        return parse_schedule(text)
    except (ValueError, ConfigError):
        raise ConfigError(key, f"expected 'epoch:mult,...', got {text!r}") from None


def _positive(kind):
    def convert(key, text):
        value = kind(key, text)
        if value <= 0:
            raise ConfigError(key, f"must be positive, got {value}")
        return value

    return convert


def _nonnegative(kind):
    def convert(key, text):
        value = kind(key, text)
        if value < 0:
            raise ConfigError(key, f"must be nonnegative, got {value}")
        return value

    return convert


def _unit_interval(key, text):
    value = _float(key, text)
    if not 0.0 <= value < 1.0:
        raise ConfigError(key, f"must lie in [0, 1), got {value}")
    return value


def _open_unit(key, text):
    value = _float(key, text)
    if not 0.0 < value < 1.0:
        raise ConfigError(key, f"must lie in (0, 1), got {value}")
    return value


TRAIN_SCHEMA = {
    # optimizer surface
    "optimizer": (_choice(set(OPTIMIZER_NAMES)), "sam"),
    "rho": (_nonnegative(_float), 0.05),
    "sigma0": (_positive(_float), 1.0),
    "lr": (_positive(_float), 0.1),
    "lr_sigma": (_nonnegative(_float), 0.01),
    "momentum": (_unit_interval, 0.9),
    "weight_decay": (_nonnegative(_float), 0.0005),
    "label_smoothing": (_unit_interval, 0.1),
    "schedule": (_schedule, StepSchedule()),
    "epochs": (_positive(_int), 200),
    "batch_size": (_positive(_int), 128),
    "seed": (_int, 0),
    "asam_rule": (_choice({"table1", "weight_squared"}), "table1"),
    "fisher_damping": (_nonnegative(_float), 1e-8),
    "epoch_parity": (_choice({"flops", "equal"}), "flops"),
    # dataset / model surface
    "dataset": (_choice({"two_moons", "blobs"}), "two_moons"),
    "n": (_positive(_int), 400),
    "noise": (_nonnegative(_float), 0.2),
    "k": (_positive(_int), 3),
    "spread": (_positive(_float), 0.5),
    "test_fraction": (_open_unit, 0.25),
    "hidden": (_int_tuple, (32,)),
}

LANDSCAPE_SCHEMA = {
    "bound_min": (_float, -4.0),
    "bound_max": (_float, 4.0),
    "resolution": (_positive(_int), 200),
    "rho": (_nonnegative(_float), 8.0),
    "mc_samples": (_positive(_int), 200),
    "max_points": (_positive(_int), 512),
    "seed": (_int, 0),
    "a1": (_positive(_float), 1.0),
    "a2": (_positive(_float), 1.0),
    "s1": (_positive(_float), 0.3),
    "s2": (_positive(_float), 1.5),
    "c1x": (_float, -2.0),
    "c1y": (_float, 0.0),
    "c2x": (_float, 2.0),
    "c2y": (_float, 0.0),
    "kappa": (_nonnegative(_float), 0.01),
}

BOUND_SCHEMA = {
    "p": (_nonnegative(_int), 2),
    "n": (_positive(_int), 100),
    "delta": (_open_unit, 0.05),
    "kl": (_nonnegative(_float), 0.0),
    "empirical_sam_loss": (_float, 0.0),
    "l_max": (_nonnegative(_float), 1.0),
    "c_cover": (_nonnegative(_float), 1.0),
    "gamma_form": (_choice({"main", "appendix"}), "main"),
}


def resolve(raw: dict, schema: dict) -> dict:
    """Apply a schema: type every provided key, fill defaults, reject unknowns."""
    resolved = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(key, "unknown key")
        resolved[key] = schema[key][0](key, str(value))
    for key, (_, default) in schema.items():
        resolved.setdefault(key, default)
    return resolved


def config_to_jsonable(resolved: dict) -> dict:
    """Stable-order dict with schedules/tuples rendered as config text."""
    out = {}
    for key in sorted(resolved):
        value = resolved[key]
        if isinstance(value, StepSchedule):
            out[key] = schedule_to_text(value)
        elif isinstance(value, tuple):
            out[key] = ",".join(str(v) for v in value)
        else:
            out[key] = value
    return out


def resolve_from_jsonable(snapshot: dict, schema: dict) -> dict:
    """Re-type a config snapshot (e.g. read back from run.json)."""
    return resolve({k: str(v) for k, v in snapshot.items()}, schema)
