"""Off-grid sizing math for the solar-powered stop display.

Covers the whole sizing chain: per-component daily consumption from a
min/max power profile, the solar panel wattage needed for a given peak-sun
budget, battery amp-hour backup, annual grid savings, and an hourly
state-of-charge simulation that tells you how often the display actually
stays lit.

The bundled profile (``data/stop_display_profile.csv``) lists the display
hardware: OLED, microcontroller, WiFi and RTC modules, and the LED light.
Its LED row is profiled at 10 h/day; ``with_led_hours`` switches to the
always-on 24 h variant used for worst-case sizing.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional

DEFAULT_PROFILE_RESOURCE = "stop_display_profile.csv"
PROFILE_FIELDS = ("name", "power_min_w", "power_max_w", "daily_usage_h")


class ProfileError(ValueError):
    """Malformed profile CSV; carries the 1-based offending row."""

    def __init__(self, row: int, message: str):
        super().__init__(f"profile row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class ComponentDraw:
    """One hardware component's power range and daily duty."""

    name: str
    power_min_w: float
    power_max_w: float
    daily_usage_h: float

    def __post_init__(self):
        if not 0 <= self.power_min_w <= self.power_max_w:
            raise ValueError(f"{self.name}: need 0 <= power_min_w <= power_max_w")
        if not 0 <= self.daily_usage_h <= 24:
            raise ValueError(f"{self.name}: daily_usage_h must be within [0, 24]")


@dataclass(frozen=True)
class SolarConfig:
    panel_w: float
    peak_sun_hours: float
    battery_voltage_v: float
    battery_capacity_ah: float
    initial_soc: float = 1.0
    controller_efficiency: float = 1.0  # PWM/MPPT losses; flat factor

    def __post_init__(self):
        for name in ("panel_w", "peak_sun_hours", "battery_voltage_v", "battery_capacity_ah"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0 <= self.initial_soc <= 1:
            raise ValueError("initial_soc must be within [0, 1]")
        if not 0 < self.controller_efficiency <= 1:
            raise ValueError("controller_efficiency must be within (0, 1]")


@dataclass
class SocTrace:
    """Hourly state-of-charge samples plus bookkeeping for energy balance."""

    hourly_soc: list = field(default_factory=list)
    uptime_fraction: float = 0.0
    generated_wh: float = 0.0
    consumed_wh: float = 0.0
    spilled_wh: float = 0.0


def load_profile(lines) -> list[ComponentDraw]:
    """Parse a component profile CSV (header + rows in PROFILE_FIELDS order)."""
    reader = csv.reader(lines)
    profile = []
    for row_no, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row_no == 1:
            if [c.strip() for c in row] != list(PROFILE_FIELDS):
                raise ProfileError(row_no, f"header must be {','.join(PROFILE_FIELDS)}")
            continue
        if len(row) != 4:
            raise ProfileError(row_no, f"expected 4 fields, got {len(row)}")
        try:
            draw = ComponentDraw(
                row[0].strip(), float(row[1]), float(row[2]), float(row[3])
            )
        except ValueError as exc:
            raise ProfileError(row_no, str(exc)) from exc
        profile.append(draw)
    if not profile:
        raise ProfileError(1, "profile has no component rows")
    return profile


def load_profile_file(path) -> list[ComponentDraw]:
    with open(path, newline="", encoding="utf-8") as handle:
        return load_profile(handle)


def default_profile() -> list[ComponentDraw]:
    """The bundled stop-display hardware profile."""
    text = resources.files("smartbus.data").joinpath(DEFAULT_PROFILE_RESOURCE).read_text()
    return load_profile(text.splitlines())


def with_led_hours(profile: list[ComponentDraw], hours: float) -> list[ComponentDraw]:
    """Copy of the profile with LED rows forced to ``hours`` of daily use."""
    return [
        replace(draw, daily_usage_h=hours) if "led" in draw.name.lower() else draw
        for draw in profile
    ]


def daily_energy_wh(profile: list[ComponentDraw], bound: str) -> float:
    """Total daily watt-hours at the chosen power bound ("min" or "max")."""
    if bound not in ("min", "max"):
        raise ValueError("bound must be 'min' or 'max'")
    if not profile:
        raise ValueError("profile must be non-empty")
    if bound == "min":
        return sum(d.power_min_w * d.daily_usage_h for d in profile)
    return sum(d.power_max_w * d.daily_usage_h for d in profile)


def required_panel_w(daily_wh: float, peak_sun_hours: float) -> float:
    """Panel rating that replaces ``daily_wh`` within the daily sun budget."""
    if peak_sun_hours <= 0:
        raise ValueError("peak_sun_hours must be strictly positive")
    return daily_wh / peak_sun_hours


def battery_ah(daily_wh: float, voltage_v: float) -> float:
    """Amp-hours needed to carry one day's consumption at ``voltage_v``."""
    if voltage_v <= 0:
        raise ValueError("voltage_v must be strictly positive")
    return daily_wh / voltage_v


def annual_savings_kwh(daily_wh: float) -> float:
    """Grid energy displaced per year, in kWh."""
    if daily_wh < 0:
        raise ValueError("daily_wh must be non-negative")
    return daily_wh * 365.0 / 1000.0


def default_irradiance() -> list[float]:
    """Raised-cosine daylight curve over 08:00-18:00.

    The ten daylight buckets sum to exactly 5.0 peak-sun-hour equivalents
    with every sample <= 1.0 (a nine-bucket window would need samples
    above the panel's rating to carry the same total).
    """
    curve = [0.0] * 24
    for i in range(10):
        curve[8 + i] = (1.0 - math.cos(2.0 * math.pi * (i + 0.5) / 10.0)) / 2.0
    return curve


def load_irradiance_file(path) -> list[float]:
    """Read 24 hourly irradiance fractions (one CSV value per line)."""
    values = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                value = float(text)
            except ValueError as exc:
                raise ProfileError(line_no, f"bad irradiance value {text!r}") from exc
            if not 0 <= value <= 1:
                raise ProfileError(line_no, "irradiance must be within [0, 1]")
            values.append(value)
    if len(values) != 24:
        raise ProfileError(len(values) + 1, f"need 24 hourly values, got {len(values)}")
    return values


def simulate_soc(
    config: SolarConfig,
    load_profile_w: list[float],
    irradiance: list[float],
    days: int,
) -> SocTrace:
    """Hour-by-hour energy balance of the battery-backed display.

    Each hour adds panel generation (rating x irradiance x controller
    efficiency) and, when the stored energy covers that hour's load, serves
    the display; otherwise the display goes dark for the hour and only
    charging happens.  Stored energy is clamped to the battery capacity and
    the excess is accounted as spill so generation - consumption - delta
    SoC - spill balances exactly.
    """
    if len(load_profile_w) != 24:
        raise ValueError("load_profile_w must have 24 hourly entries")
    if len(irradiance) != 24:
        raise ValueError("irradiance must have 24 hourly entries")
    if days < 1:
        raise ValueError("days must be >= 1")

    capacity_wh = config.battery_voltage_v * config.battery_capacity_ah
    stored = config.initial_soc * capacity_wh
    trace = SocTrace()
    served = 0
    total_hours = days * 24
    for hour in range(total_hours):
        slot = hour % 24
        gen = config.panel_w * irradiance[slot] * config.controller_efficiency
        load = load_profile_w[slot]
        trace.generated_wh += gen
        available = stored + gen
        if available >= load:
            served += 1
            trace.consumed_wh += load
            stored = available - load
        else:
            stored = available
        if stored > capacity_wh:
            trace.spilled_wh += stored - capacity_wh
            stored = capacity_wh
        trace.hourly_soc.append(stored / capacity_wh)
    trace.uptime_fraction = served / total_hours
    return trace


def constant_load_profile(daily_wh: float) -> list[float]:
    """Spread a daily energy budget into a flat 24-entry hourly load."""
    return [daily_wh / 24.0] * 24


def render_report(
    profile: list[ComponentDraw],
    bound: str,
    sun_hours: float,
    voltage: float,
    led_hours: Optional[float] = None,
    recommended_panel_w: float = 10.0,
    recommended_battery: str = "12 V 5 Ah",
) -> str:
    """Sizing walkthrough for one bound: daily Wh, panel W, battery Ah, kWh/yr."""
    if led_hours is not None:
        profile = with_led_hours(profile, led_hours)
    daily = daily_energy_wh(profile, bound)
    panel = required_panel_w(daily, sun_hours)
    backup = battery_ah(daily, voltage)
    annual = annual_savings_kwh(daily)
    led_note = f", LED hours={led_hours:g}" if led_hours is not None else ""
    lines = [
        f"Stop display energy report (bound={bound}{led_note})",
        f"Daily energy consumption: {daily:.4f} Wh ({daily / 1000.0:.4f} kWh)",
        f"Required solar panel: {panel:.4f} W at {sun_hours:g} peak sun hours"
        f" (recommended: {recommended_panel_w:g} W)",
        f"Battery backup: {backup:.4f} Ah at {voltage:g} V"
        f" (recommended: {recommended_battery})",
        f"Annual grid savings: {annual:.4f} kWh",
    ]
    return "\n".join(lines)
