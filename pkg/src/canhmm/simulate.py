"""Synthetic speed/RPM drive traces on a uniform grid.

Speed follows a seeded sequence of maneuvers (accelerate or brake toward a
target, then hold it with small jitter, with occasional full stops). RPM
tracks ``ratio[gear] * speed`` through a five-speed gearbox, rate-limited
to 300 rpm per step, or 800 rpm on the step of a gear change. Speed never
changes by more than 3 km/h per step.
"""

from __future__ import annotations

import numpy as np

PROFILES = ("idle", "urban", "highway", "mixed")

IDLE_RPM = 800.0
GEAR_RATIOS = (110.0, 68.0, 48.0, 37.0, 30.0)  # rpm per km/h, gears 1..5
MAX_DSPEED = 3.0
MAX_DRPM = 300.0
MAX_SHIFT_DRPM = 800.0


def _targets(rng: np.random.Generator, zone: str) -> tuple[float, int]:
    """Next (target speed, hold steps) for the zone."""
    if zone == "highway":
        return rng.uniform(90, 130), int(rng.integers(60, 300))
    if rng.random() < 0.15:
        return 0.0, int(rng.integers(5, 30))
    return rng.uniform(15, 65), int(rng.integers(20, 120))


def _speed_trace(steps: int, rng: np.random.Generator, profile: str) -> np.ndarray:
    v = np.zeros(steps)
    t = 1
    speed = 0.0
    zone = "highway" if profile == "highway" else "urban"
    zone_left = int(rng.integers(600, 1500))
    while t < steps:
        if profile == "mixed" and zone_left <= 0:
            zone = "urban" if zone == "highway" else "highway"
            zone_left = int(rng.integers(600, 1500))
        target, hold = _targets(rng, zone)
        rate = rng.uniform(0.8, 2.5)
        # ramp toward target
        while t < steps and abs(target - speed) > rate:
            step = np.sign(target - speed) * rate + rng.normal(0, 0.15)
            speed = max(0.0, speed + float(np.clip(step, -MAX_DSPEED, MAX_DSPEED)))
            v[t] = speed
            t += 1
            zone_left -= 1
        speed = target
        if t < steps:
            v[t] = speed = max(0.0, float(np.clip(target, v[t - 1] - MAX_DSPEED, v[t - 1] + MAX_DSPEED)))
            t += 1
        # hold with mean-reverting jitter
        for _ in range(hold):
            if t >= steps:
                break
            if target > 0:
                step = 0.2 * (target - speed) + rng.normal(0, 0.3)
                speed = max(0.0, speed + float(np.clip(step, -1.0, 1.0)))
            v[t] = speed
            t += 1
            zone_left -= 1
    return v


def _rpm_trace(speed: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rpm = np.empty_like(speed)
    rpm[0] = IDLE_RPM
    gear = 0
    upshift = rng.uniform(2300, 3200)
    for t in range(1, speed.size):
        s = speed[t]
        shifted = False
        if s < 3:
            gear = 0
            target = IDLE_RPM
        else:
            if gear == 0:
                gear, shifted = 1, True
            while gear < 5 and GEAR_RATIOS[gear - 1] * s > upshift:
                gear += 1
                shifted = True
                upshift = rng.uniform(2300, 3200)
            while gear > 1 and GEAR_RATIOS[gear - 1] * s < 1200:
                gear -= 1
                shifted = True
            target = max(IDLE_RPM, GEAR_RATIOS[gear - 1] * s)
        lim = MAX_SHIFT_DRPM if shifted else MAX_DRPM
        delta = target - rpm[t - 1] + rng.normal(0, 25.0)
        rpm[t] = max(0.0, rpm[t - 1] + float(np.clip(delta, -lim, lim)))
    return rpm


def simulate_drive(steps: int, seed: int = 0, profile: str = "mixed") -> dict[str, np.ndarray]:
    """Seeded ``{"speed": km/h, "rpm": rev/min}`` series of `steps` grid points.

    Profiles: ``idle`` (parked, engine idling), ``urban`` (stop-and-go up to
    65 km/h), ``highway`` (90-130 km/h cruising) and ``mixed`` (alternating
    urban and highway stretches).
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {PROFILES}")
    if steps < 2:
        raise ValueError("need at least two steps")
    rng = np.random.default_rng(seed)
    if profile == "idle":
        jitter = np.clip(np.cumsum(rng.normal(0, 5.0, steps)), -40, 40)
        return {"speed": np.zeros(steps), "rpm": IDLE_RPM + jitter}
    speed = _speed_trace(steps, rng, profile)
    return {"speed": speed, "rpm": _rpm_trace(speed, rng)}
