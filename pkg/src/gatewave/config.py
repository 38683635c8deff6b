"""Scenario files: flat ``section.field = value`` keys in TOML syntax.

A scenario file lists only the keys it changes; everything else keeps its
default. Keys (each model field is addressable under its section)::

    label = "my run"
    chain = "full"                 # or "low_side" (low-side isolator -> GaN gate only)
    base = "prototype_a"           # optional: preset name or relative path to include first
    pwm.<field>                    # PwmSpec
    isolator.<field>               # both isolators; isolator_hi.* / isolator_lo.* per side
    totem.<field>                  # both totem-poles; totem_hi.* / totem_lo.* per side
    pushpull.<field>               # GanPushPullModel
    thermal.<field>                # ThermalModel
    load.kind                      # "hardswitch" or "open"
    load.v_link_v / load.r_limit_ohm / load.r_gate_ext_ohm   (hardswitch)
    load.c_load_f                  # (open)
    device.<field>                 # SicMosfetModel; cgd_table / cds_table are CSV paths
    solver.<field>                 # SolverOptions
    rails.v_dsig / rails.v_dsih / rails.v_dsil / rails.v_dgan
    rails.bootstrap_drop_v         # what-if: high-side rail lowered by a diode drop

Rail shorthands win over the per-section ``rail_v`` keys and keep each
totem-pole on the same rail as its isolator. ``preset.*`` and ``bounds.*``
keys describe experiments (see :mod:`gatewave.harness`) and are ignored here.
"""

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli

from .chain import ChainSystem, side_system
from .errors import BadParamPath, ParseError, ValidationError
from .load import CapTable, HardSwitchCircuit, OpenLoad, SicMosfetModel
from .signal import PwmSpec
from .solver import SolverOptions
from .stages import GanPushPullModel, IsolatorModel, ThermalModel, TotemPoleModel

PRESET_DIR = Path(__file__).parent / "presets"

_SECTIONS = {
    "pwm": PwmSpec,
    "isolator": IsolatorModel,
    "isolator_hi": IsolatorModel,
    "isolator_lo": IsolatorModel,
    "totem": TotemPoleModel,
    "totem_hi": TotemPoleModel,
    "totem_lo": TotemPoleModel,
    "pushpull": GanPushPullModel,
    "thermal": ThermalModel,
    "solver": SolverOptions,
}
_LOAD_KEYS = {"kind", "v_link_v", "r_limit_ohm", "r_gate_ext_ohm", "c_load_f"}
_DEVICE_KEYS = {"vth_v", "kp_a_per_v2", "cgs_f", "rg_internal_ohm", "cgd_table", "cds_table"}
_RAIL_KEYS = {"v_dsig", "v_dsih", "v_dsil", "v_dgan", "bootstrap_drop_v"}
_TOP_KEYS = {"label", "chain", "base"}
_EXPERIMENT_PREFIXES = ("preset.", "bounds.")


@dataclass(frozen=True)
class Scenario:
    pwm: PwmSpec = field(default_factory=PwmSpec)
    isolator_hi: IsolatorModel = field(default_factory=IsolatorModel)
    isolator_lo: IsolatorModel = field(default_factory=IsolatorModel)
    totem_hi: TotemPoleModel = field(default_factory=TotemPoleModel)
    totem_lo: TotemPoleModel = field(default_factory=TotemPoleModel)
    pushpull: GanPushPullModel = field(default_factory=GanPushPullModel)
    thermal: ThermalModel = field(default_factory=ThermalModel)
    load: object = field(default_factory=HardSwitchCircuit)
    solver: SolverOptions = field(default_factory=SolverOptions)
    label: str = "default"
    chain: str = "full"
    # flat keys this scenario was built from; sweeps rebuild from them
    config: dict = field(default_factory=dict, compare=False, repr=False)
    base_dir: str = field(default=".", compare=False, repr=False)

    def __post_init__(self):
        if self.chain not in ("full", "low_side"):
            raise ValidationError("chain", "must be 'full' or 'low_side'")
        if not isinstance(self.load, (HardSwitchCircuit, OpenLoad)):
            raise ValidationError("load.kind", "exactly one of hardswitch / open")
        for side in ("hi", "lo"):
            iso, tp = getattr(self, f"isolator_{side}"), getattr(self, f"totem_{side}")
            if not math.isclose(iso.rail_v, tp.rail_v, rel_tol=1e-12):
                raise ValidationError(f"totem_{side}.rail_v",
                                      f"must equal isolator_{side}.rail_v ({iso.rail_v:g} V)")

    @property
    def rails(self):
        """The four supply voltages: dsig, dsih, dsil, dgan."""
        return {"dsig": self.pwm.logic_high_v, "dsih": self.isolator_hi.rail_v,
                "dsil": self.isolator_lo.rail_v, "dgan": self.pushpull.rail_v}

    def system(self):
        if self.chain == "low_side":
            return side_system(self.pwm, self.isolator_lo, self.totem_lo, self.pushpull, "lo")
        return ChainSystem(self.pwm, self.isolator_hi, self.isolator_lo, self.totem_hi,
                           self.totem_lo, self.pushpull, load=self.load)

    def with_value(self, path, value):
        """Copy with one config key replaced; ``path`` must name a numeric field."""
        check_param_path(path)
        cfg = dict(self.config)
        cfg[path] = value
        return build_scenario(cfg, base_dir=self.base_dir)


def _flatten(data, prefix=""):
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_text(text, source="<string>"):
    """Parse TOML text into a flat ``{dotted.key: value}`` dict."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from exc
    return _flatten(data)


def resolve_preset_path(name):
    """Path of a shipped preset by name (with or without ``.toml``), else None."""
    stem = name[:-5] if name.endswith(".toml") else name
    path = PRESET_DIR / f"{stem}.toml"
    return path if path.is_file() else None


def read_flat(path, _seen=None):
    """Flat keys of ``path`` with its ``base`` chain merged underneath."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc
    flat = parse_text(text, str(path))
    base = flat.pop("base", None)
    if base is None:
        return flat
    seen = set(_seen or ()) | {path.resolve()}
    if not isinstance(base, str):
        raise ValidationError("base", "must be a preset name or a path")
    base_path = resolve_preset_path(base)
    if base_path is None:
        base_path = (path.parent / base).resolve()
        if not base_path.is_file():
            raise ValidationError("base", f"no preset or file named {base!r}")
    if base_path.resolve() in seen:
        raise ValidationError("base", "include cycle")
    inherited = {k: v for k, v in read_flat(base_path, seen).items()
                 if not k.startswith(_EXPERIMENT_PREFIXES) and k != "label"}
    return overlay(inherited, flat)


def overlay(base, own):
    """``own`` keys over ``base`` keys; switching ``load.kind`` drops the old load keys."""
    merged = dict(base)
    if "load.kind" in own and own["load.kind"] != base.get("load.kind", "hardswitch"):
        merged = {k: v for k, v in merged.items() if not k.startswith(("load.", "device."))}
    merged.update(own)
    return merged


def _field_types(cls):
    return {f.name: f.type for f in fields(cls)}


def _coerce(key, value, typ):
    if typ in (float, "float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(key, "must be a number")
        v = float(value)
        if not math.isfinite(v):
            raise ValidationError(key, "must be finite")
        return v
    if typ in (int, "int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(key, "must be an integer")
        return value
    if typ in (bool, "bool"):
        if not isinstance(value, bool):
            raise ValidationError(key, "must be true or false")
        return value
    return value


def _known(key):
    if key in _TOP_KEYS or key.startswith(_EXPERIMENT_PREFIXES):
        return True
    section, _, name = key.partition(".")
    if section in _SECTIONS:
        return name in _field_types(_SECTIONS[section])
    if section == "load":
        return name in _LOAD_KEYS
    if section == "device":
        return name in _DEVICE_KEYS
    if section == "rails":
        return name in _RAIL_KEYS
    return False


def _numeric(key):
    section, _, name = key.partition(".")
    if section in _SECTIONS:
        return _field_types(_SECTIONS[section]).get(name) in (float, int, "float", "int")
    if section == "load":
        return name in _LOAD_KEYS - {"kind"}
    if section == "device":
        return name in _DEVICE_KEYS - {"cgd_table", "cds_table"}
    return section == "rails" and name in _RAIL_KEYS


def check_param_path(path):
    if not isinstance(path, str) or not _known(path) or not _numeric(path):
        raise BadParamPath(f"{path!r} does not address a numeric scenario field")


def _build(cls, section_keys, cfg, extra=None):
    types = _field_types(cls)
    kwargs = {}
    for sec in section_keys:
        for name, typ in types.items():
            key = f"{sec}.{name}"
            if key in cfg:
                kwargs[name] = _coerce(key, cfg[key], typ)
    kwargs.update(extra or {})
    try:
        return cls(**kwargs)
    except ValidationError:
        raise
    except (ValueError, TypeError) as exc:
        raise ValidationError(_guess_key(section_keys[-1], str(exc), kwargs), str(exc)) from exc


def _guess_key(section, message, kwargs):
    for name in kwargs:
        if name in message:
            return f"{section}.{name}"
    return section


def build_scenario(cfg, base_dir="."):
    """Validated :class:`Scenario` from flat keys (unknown keys are rejected)."""
    cfg = dict(cfg)
    for key in cfg:
        if not _known(key):
            raise ValidationError(key, "unknown key")
    base_dir = str(base_dir)
    label = cfg.get("label", "default")
    if not isinstance(label, str):
        raise ValidationError("label", "must be a string")
    chain = cfg.get("chain", "full")

    rails = {k: _coerce(f"rails.{k}", cfg[f"rails.{k}"], float)
             for k in _RAIL_KEYS if f"rails.{k}" in cfg}
    drop = rails.get("bootstrap_drop_v", 0.0)
    if drop < 0:
        raise ValidationError("rails.bootstrap_drop_v", "must be >= 0")

    pwm_extra = {"logic_high_v": rails["v_dsig"]} if "v_dsig" in rails else {}
    pwm = _build(PwmSpec, ["pwm"], cfg, pwm_extra)

    models = {}
    for side in ("hi", "lo"):
        rail = rails.get(f"v_dsi{side[0]}")
        if rail is None:
            iso_key = f"isolator_{side}.rail_v" if f"isolator_{side}.rail_v" in cfg else "isolator.rail_v"
            rail = _coerce(iso_key, cfg[iso_key], float) if iso_key in cfg else None
        if rail is not None and side == "hi":
            rail -= drop
        extra = {"rail_v": rail} if rail is not None else {}
        iso = _build(IsolatorModel, ["isolator", f"isolator_{side}"], cfg, extra)
        explicit_tp = any(k in cfg for k in ("totem.rail_v", f"totem_{side}.rail_v"))
        # an explicit totem rail is kept so the Scenario check can reject a mismatch
        tp_extra = {} if explicit_tp else {"rail_v": iso.rail_v}
        tp = _build(TotemPoleModel, ["totem", f"totem_{side}"], cfg, tp_extra)
        models[side] = (iso, tp)

    pp_extra = {"rail_v": rails["v_dgan"]} if "v_dgan" in rails else {}
    pushpull = _build(GanPushPullModel, ["pushpull"], cfg, pp_extra)
    thermal = _build(ThermalModel, ["thermal"], cfg)
    solver = _build(SolverOptions, ["solver"], cfg)
    load = _build_load(cfg, base_dir)

    return Scenario(pwm=pwm, isolator_hi=models["hi"][0], isolator_lo=models["lo"][0],
                    totem_hi=models["hi"][1], totem_lo=models["lo"][1], pushpull=pushpull,
                    thermal=thermal, load=load, solver=solver, label=label, chain=chain,
                    config=cfg, base_dir=base_dir)


def _build_load(cfg, base_dir):
    kind = cfg.get("load.kind", "hardswitch")
    if kind not in ("hardswitch", "open"):
        raise ValidationError("load.kind", "must be 'hardswitch' or 'open'")
    if kind == "open":
        for k in _LOAD_KEYS - {"kind", "c_load_f"}:
            if f"load.{k}" in cfg:
                raise ValidationError(f"load.{k}", "only valid with load.kind = 'hardswitch'")
        kw = {}
        if "load.c_load_f" in cfg:
            kw["c_load_f"] = _coerce("load.c_load_f", cfg["load.c_load_f"], float)
        try:
            return OpenLoad(**kw)
        except ValueError as exc:
            raise ValidationError("load.c_load_f", str(exc)) from exc
    if "load.c_load_f" in cfg:
        raise ValidationError("load.c_load_f", "only valid with load.kind = 'open'")
    dev_kw = {}
    for name in _DEVICE_KEYS:
        key = f"device.{name}"
        if key not in cfg:
            continue
        if name.endswith("_table"):
            path = Path(base_dir) / str(cfg[key])
            try:
                dev_kw[name] = CapTable.from_csv(path)
            except (OSError, ValueError) as exc:
                raise ValidationError(key, str(exc)) from exc
        else:
            dev_kw[name] = _coerce(key, cfg[key], float)
    try:
        device = SicMosfetModel(**dev_kw)
    except ValueError as exc:
        raise ValidationError(_guess_key("device", str(exc), dev_kw), str(exc)) from exc
    kw = {k: _coerce(f"load.{k}", cfg[f"load.{k}"], float)
          for k in ("v_link_v", "r_limit_ohm", "r_gate_ext_ohm") if f"load.{k}" in cfg}
    try:
        return HardSwitchCircuit(device=device, **kw)
    except ValueError as exc:
        raise ValidationError(_guess_key("load", str(exc), kw), str(exc)) from exc


def load_scenario(path):
    """Read and validate a scenario file (a shipped preset name also works)."""
    p = Path(path)
    if not p.is_file():
        shipped = resolve_preset_path(str(path))
        if shipped is None:
            raise ParseError(f"{path}: no such file")
        p = shipped
    flat = read_flat(p)
    cfg = {k: v for k, v in flat.items() if not k.startswith(_EXPERIMENT_PREFIXES)}
    return build_scenario(cfg, base_dir=p.parent)


def experiment_keys(path):
    """``preset.*`` and ``bounds.*`` keys of a scenario file (own keys only)."""
    flat = parse_text(Path(path).read_text(), str(path))
    return {k: v for k, v in flat.items() if k.startswith(_EXPERIMENT_PREFIXES)}
