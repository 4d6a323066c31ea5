"""Named codes, interleavers and channel parameters used by configs.

The MB-OFDM mother code is the rate-1/3, K=7 code with generators
(133, 165, 171) octal. Its rate-1/2 and rate-3/4 puncture patterns follow
the ECMA-368 layout; the lower rates repeat every transmitted bit. These
are documented choices, not a bit-exact copy of the proposal.
"""

from __future__ import annotations

from fractions import Fraction

from .channels import CM1, SVParams
from .code import CodeSpec

MBOFDM_GENERATORS = (0o133, 0o165, 0o171)

_HALF = ((True, True), (True, False), (False, True))
_THREE_QUARTER = ((True, True, False), (True, False, False), (False, False, True))


def _mbofdm(puncture, repetition: int, rate: Fraction, name: str) -> CodeSpec:
    return CodeSpec(7, MBOFDM_GENERATORS, puncture=puncture, repetition=repetition,
                    nominal_rate=rate, name=name)


CODES: dict[str, CodeSpec] = {
    "mbofdm-1/3": _mbofdm(None, 1, Fraction(1, 3), "mbofdm-1/3"),
    "mbofdm-1/2": _mbofdm(_HALF, 1, Fraction(1, 2), "mbofdm-1/2"),
    "mbofdm-3/4": _mbofdm(_THREE_QUARTER, 1, Fraction(3, 4), "mbofdm-3/4"),
    "mbofdm-1/4": _mbofdm(_HALF, 2, Fraction(1, 4), "mbofdm-1/4"),
    "mbofdm-1/8": _mbofdm(_HALF, 4, Fraction(1, 8), "mbofdm-1/8"),
    "k7-1/2": CodeSpec(7, (0o133, 0o171), nominal_rate=Fraction(1, 2), name="k7-1/2"),
    "k3-1/2": CodeSpec(3, (0o7, 0o5), nominal_rate=Fraction(1, 2), name="k3-1/2"),
}

CHANNELS: dict[str, SVParams] = {"cm1": CM1}


def code_preset(name: str) -> CodeSpec:
    try:
        return CODES[name]
    except KeyError:
        raise KeyError(f"unknown code preset {name!r}; known: {', '.join(sorted(CODES))}") from None


def channel_preset(name: str) -> SVParams:
    try:
        return CHANNELS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown channel preset {name!r}; known: {', '.join(sorted(CHANNELS))}") from None
