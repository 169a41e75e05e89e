"""Unit conversions shared by configs, the scenario file format and tests.

Scenario files use the radio-engineering units that are natural to write down
(dBm, Mbps, MHz); everything internal is SI (watts, bits/s, Hz).
"""

import math


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0.0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(value: float) -> float:
    if value <= 0.0:
        raise ValueError("value must be positive to express in dB")
    return 10.0 * math.log10(value)


def mbps_to_bps(mbps: float) -> float:
    return mbps * 1e6


def mhz_to_hz(mhz: float) -> float:
    return mhz * 1e6


def kbit_to_bits(kbit: float) -> float:
    return kbit * 1e3
