"""Writes WFDB fixtures with the Python wfdb package and dumps what it reads back.

Run from this directory: python3 make_fixtures.py
"""
import json

import numpy as np
import wfdb

rng = np.random.default_rng(2024)
n = 1001  # odd on purpose
t = np.arange(n)
ch0 = (600 * np.sin(2 * np.pi * t / 97)).astype(int) + rng.integers(-40, 40, n)
ch1 = (-900 * np.cos(2 * np.pi * t / 53)).astype(int) + rng.integers(-20, 20, n)
ch0[5] = -2048
ch1[6] = 2047
d = np.stack([ch0, ch1], axis=1).astype(int)

wfdb.wrsamp(
    "fx",
    fs=360,
    units=["mV", "mV"],
    sig_name=["MLII", "V5"],
    d_signal=d,
    fmt=["212", "212"],
    adc_gain=[200.0, 200.0],
    baseline=[1024, 1024],
    write_dir=".",
)

samples = np.array([3, 77, 370, 650, 651, 980, 990])
symbols = ["+", "N", "V", "A", "~", "F", "/"]
aux = ["(N", "", "", "", "", "", ""]
subtype = np.array([0, 0, 1, 0, 2, 0, 0])
chan = np.array([0, 0, 0, 1, 1, 0, 0])
num = np.array([0, 0, 0, 3, 0, 0, 0])
wfdb.wrann("fx", "atr", samples, symbol=symbols, subtype=subtype, chan=chan,
           num=num, aux_note=aux, write_dir=".")

# long gaps force SKIP codes
long_samples = np.array([10, 5000, 200000, 200001])
wfdb.wrann("fxlong", "atr", long_samples, symbol=["N", "N", "V", "N"], write_dir=".")

rec = wfdb.rdrecord("fx", physical=False)
ann = wfdb.rdann("fx", "atr")
lng = wfdb.rdann("fxlong", "atr")
json.dump(
    {
        "n_samples": int(rec.sig_len),
        "channels": [rec.d_signal[:, c].tolist() for c in range(2)],
        "adc_gain": [float(g) for g in rec.adc_gain],
        "baseline": [int(b) for b in rec.baseline],
        "checksum": [int(c) for c in rec.checksum],
        "ann_samples": ann.sample.tolist(),
        "ann_symbols": ann.symbol,
        "ann_subtype": ann.subtype.tolist(),
        "ann_chan": ann.chan.tolist(),
        "ann_aux": ann.aux_note,
        "long_samples": lng.sample.tolist(),
        "long_symbols": lng.symbol,
    },
    open("fx_expected.json", "w"),
    indent=1,
)
