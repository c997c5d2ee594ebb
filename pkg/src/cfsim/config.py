"""System configuration: defaults, file parsing, and validation.

Config files are plain ``key = value`` text (``#`` starts a comment);
command-line flags override file values.  Unknown keys are rejected.
"""

import math
from dataclasses import dataclass, fields, replace

PRECODERS = ("mr", "lpmmse", "pmmse")
SCHEMES = ("conventional", "dstbc")
POWER_ALLOCATIONS = ("distributed", "fractional")
PILOT_PHASE_MODES = ("off", "on")
DSTBC_CLUSTER_SIZES = (2, 4)


class ConfigError(ValueError):
    """Raised when a configuration violates an invariant."""


@dataclass(frozen=True)
class SystemConfig:
    # Network size
    L: int = 40  # APs
    N: int = 4  # antennas per AP
    K: int = 20  # UEs
    L_k: int = 8  # serving APs per UE
    K_max: int = 10  # served UEs per AP (<= tau_p)

    # Coherence block split
    tau_c: int = 200
    tau_d: int = 190
    tau_p: int = 10

    # Phase misalignment half-width (radians, 0..pi)
    alpha: float = 0.0

    # Powers (mW)
    rho_max: float = 200.0  # per-AP downlink budget
    p_k: float = 100.0  # UE pilot power (eta)
    sigma2_override: float | None = None  # noise power (mW); None -> thermal

    # Propagation
    area_side: float = 500.0  # m
    wrap: bool = True
    fc: float = 3.5e9  # Hz
    bandwidth: float = 20e6  # Hz
    noise_figure_db: float = 8.0
    ap_height: float = 11.65  # m
    ue_height: float = 1.65  # m
    shadow_std_db: float = 4.0
    shadow_decorr: float = 9.0  # m
    asd_deg: float = 15.0  # azimuth angular spread

    # Fractional power allocation design parameters
    varsigma: float = 0.2
    kappa: float = 0.5
    zeta: float = -0.5

    # Modulation / processing
    M_o: int = 8  # PSK order (power of two)
    precoder: str = "mr"
    power_alloc: str | None = None  # None -> distributed for mr/lpmmse, fractional for pmmse
    schemes: tuple = ("conventional",)
    pilot_phase_mode: str = "off"  # apply e^{-j theta} to pilots when "on"

    # Hardening-bound variant: the printed interference-only denominator
    # or the classical use-and-forget form with the self-variance term.
    hardening_printed_form: bool = False

    # Coherence-factor convention for the SE bounds: "exact" evaluates
    # (sin a / a)^2; "normalized" is the replication mode matching the
    # reference degradation figures (see README).
    sinc_convention: str = "exact"

    # Experiment sizes
    seed: int = 1
    setups: int = 200
    realizations: int = 100
    norm_draws: int = 2000  # sample size for MMSE-type normalization moments
    moment_draws: int = 500  # sample size for empirical hardening moments
    with_bounds: bool = True
    with_ber: bool = True

    @property
    def eta(self) -> float:
        """Pilot transmit power per UE (mW)."""
        return self.p_k

    @property
    def sigma2(self) -> float:
        """Receiver noise power in mW: thermal floor + noise figure."""
        if self.sigma2_override is not None:
            return self.sigma2_override
        noise_dbm = -174.0 + 10.0 * math.log10(self.bandwidth) + self.noise_figure_db
        return 10.0 ** (noise_dbm / 10.0)

    @property
    def resolved_power_alloc(self) -> str:
        if self.power_alloc is not None:
            return self.power_alloc
        return "fractional" if self.precoder == "pmmse" else "distributed"

    def validate(self) -> "SystemConfig":
        def check(cond, message):
            if not cond:
                raise ConfigError(message)

        check(self.L >= 1 and self.K >= 1 and self.N >= 1, "L, K, N must be >= 1")
        check(self.tau_p >= 1, "tau_p must be >= 1")
        check(
            self.tau_p + self.tau_d <= self.tau_c,
            f"tau_p + tau_d <= tau_c violated ({self.tau_p} + {self.tau_d} > {self.tau_c})",
        )
        check(
            self.K_max <= self.tau_p,
            f"K_max <= tau_p violated ({self.K_max} > {self.tau_p})",
        )
        check(self.K_max >= 1, "K_max must be >= 1")
        check(1 <= self.L_k <= self.L, f"L_k must lie in 1..L ({self.L_k} vs L={self.L})")
        check(
            0.0 <= self.alpha <= math.pi,
            f"alpha must lie in [0, pi] (got {self.alpha})",
        )
        check(self.precoder in PRECODERS, f"precoder must be one of {PRECODERS}")
        check(
            all(s in SCHEMES for s in self.schemes),
            f"schemes must be among {SCHEMES} (got {self.schemes})",
        )
        if "dstbc" in self.schemes:
            check(
                self.L_k in DSTBC_CLUSTER_SIZES,
                f"DSTBC supports L_k in {DSTBC_CLUSTER_SIZES} (got {self.L_k})",
            )
        check(
            self.M_o >= 2 and (self.M_o & (self.M_o - 1)) == 0,
            f"M_o must be a power of two >= 2 (got {self.M_o})",
        )
        if self.power_alloc is not None:
            check(
                self.power_alloc in POWER_ALLOCATIONS,
                f"power_alloc must be one of {POWER_ALLOCATIONS}",
            )
        check(
            not (self.precoder == "pmmse" and self.resolved_power_alloc == "distributed"),
            "pmmse is a centralized precoder and requires fractional power allocation",
        )
        check(
            self.pilot_phase_mode in PILOT_PHASE_MODES,
            f"pilot_phase_mode must be one of {PILOT_PHASE_MODES}",
        )
        check(
            self.sinc_convention in ("exact", "normalized"),
            "sinc_convention must be 'exact' or 'normalized'",
        )
        check(self.rho_max > 0 and self.p_k > 0, "powers must be positive")
        check(self.sigma2 > 0, "noise power must be positive")
        check(
            self.setups >= 1 and self.realizations >= 1,
            "setups and realizations must be >= 1",
        )
        check(self.norm_draws >= 2 and self.moment_draws >= 2, "draw counts must be >= 2")
        return self


_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(name: str, raw: str, target_type):
    raw = raw.strip()
    if target_type is bool or (target_type == "bool"):
        if raw.lower() not in _BOOL_VALUES:
            raise ConfigError(f"{name}: expected boolean, got {raw!r}")
        return _BOOL_VALUES[raw.lower()]
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is tuple:
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def _field_types():
    types = {}
    for f in fields(SystemConfig):
        if f.name in ("sigma2_override", "power_alloc"):
            types[f.name] = "optional"
        elif f.type in (int, "int"):
            types[f.name] = int
        elif f.type in (float, "float"):
            types[f.name] = float
        elif f.type in (bool, "bool"):
            types[f.name] = bool
        elif f.type in (tuple, "tuple"):
            types[f.name] = tuple
        else:
            types[f.name] = str
    return types


def parse_config(path=None, overrides=None) -> SystemConfig:
    """Build a validated SystemConfig from a key=value file plus overrides.

    `overrides` maps field names to already-typed values (CLI flags win
    over the file).  Unknown keys raise ConfigError.
    """
    types = _field_types()
    values = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = (part.strip() for part in text.split("=", 1))
                if key not in types:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                kind = types[key]
                if kind == "optional":
                    if raw.lower() in ("none", ""):
                        values[key] = None
                    elif key == "sigma2_override":
                        values[key] = float(raw)
                    else:
                        values[key] = raw
                else:
                    values[key] = _coerce(key, raw, kind)
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in types:
                raise ConfigError(f"unknown config field {key!r}")
            values[key] = value
    try:
        cfg = SystemConfig(**values)
    except TypeError as exc:  # pragma: no cover - defensive
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def with_updates(cfg: SystemConfig, **updates) -> SystemConfig:
    """Functional update helper that re-validates the result."""
    return replace(cfg, **updates).validate()
