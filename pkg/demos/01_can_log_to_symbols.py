"""
From raw CAN frames to observation symbols
==========================================

A short walk through ingestion: parse a few candump lines, decode the
OBD-II replies, resample onto a one-second grid, take gradients and
quantize them into joint symbols.
"""

import io

import numpy as np

from canhmm.codec import extract_channel_series, iter_log
from canhmm.observations import ObservationAlphabet, Quantizer, decode_joint, encode_sequence, resample

# A capture mixes OBD replies (0x7E8) with unrelated broadcast traffic.
# PID 0x0D is vehicle speed (km/h), PID 0x0C is engine speed ((256A+B)/4 rpm).
log = io.StringIO("""\
(1436509052.000000) can0 7E8#410D28
(1436509052.100000) can0 7E8#410C1AF8
(1436509052.500000) can0 0D1#11D6
(1436509053.000000) can0 7E8#410D2A
(1436509053.100000) can0 7E8#410C1B58
(1436509054.000000) can0 7E8#410D2B
(1436509054.100000) can0 7E8#410C1BBC
(1436509055.000000) can0 7E8#410D64
(1436509055.100000) can0 7E8#410C1BBC
(1436509056.000000) can0 7E8#410D2C
(1436509056.100000) can0 7E8#410C1C20
""")
frames = list(iter_log(log))
print(f"{len(frames)} frames parsed")

speed = extract_channel_series(frames, "speed")
rpm = extract_channel_series(frames, "rpm")
print("speed samples:", [s.value for s in speed])
print("rpm samples:  ", [s.value for s in rpm])

# Both channels go onto the same grid; nearest sample wins, ties go to the
# earlier one, and anything further than three grid steps away becomes NaN.
t0 = speed[0].timestamp
series = {"speed": resample(speed, 1.0, t0, t0 + 4), "rpm": resample(rpm, 1.0, t0, t0 + 4)}
print("speed on grid:", series["speed"])

# The model never sees raw values, only how fast they change.
# Fixed edges keep the example readable: five speed bins, three rpm bins.
alphabet = ObservationAlphabet((
    Quantizer("speed", (-10.0, -2.0, 2.0, 10.0)),
    Quantizer("rpm", (-50.0, 50.0)),
))
print("alphabet size M =", alphabet.n_symbols)

symbols = encode_sequence(alphabet, series)[0]
print("speed gradients:", np.diff(series["speed"]))
for s in symbols:
    sp, rp = decode_joint(alphabet, int(s))
    print(f"  symbol {s:2d} = speed bin {sp}, rpm bin {rp}")

# The jump from 43 to 100 km/h in one second lands in the top speed bin,
# immediately followed by the bottom one as the value drops back.
