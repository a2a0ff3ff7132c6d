# Identify k and c of a single synthetic drop by grid search over a
# 400 x 400 logarithmic lattice (k in 1e3..1e7 N/m, c in 1..1e4 N s/m).
import math

import numpy as np

from impactid import ident, signal, synth
from impactid.signal import ConditionKey, TimeSeries, TrialRecord

M = 0.5
cond = ConditionKey("rigid", 0, 0, 200)

# A truth that sits between lattice points, plus 1 N of sensor noise.
k_true, c_true = 2.7e4, 23.0
spec = synth.SynthSpec(M, [synth.SynthCondition(cond, k_true, c_true)], 1, noise_sigma=1.0, seed=4)
force, height, contact = synth.synth_trial(spec, spec.conditions[0], 1)
trial = signal.apply_offsets(TrialRecord(cond, 1, TimeSeries(force), TimeSeries(height)))
print(f"{len(force)} samples at 300 Hz, contact at sample {contact}")

# Registration: the first peak reaching half the maximum, and the contact
# onset just before it.
f = trial.force.values
s_p = signal.main_peak_index(f, rel_height=0.5)
onset = signal.contact_onset(f, 0.05, s_p)
print(f"main peak {f[s_p]:.1f} N at sample {s_p}, onset at sample {onset}")

res = ident.identify(trial, M)
zeta_true = c_true / (2 * math.sqrt(M * k_true))
print(f"truth     k={k_true:10.1f}  c={c_true:7.3f}  zeta={zeta_true:.4f}")
print(f"estimate  k={res.k:10.1f}  c={res.c:7.3f}  zeta={res.zeta:.4f}  lattice {res.grid_index}")

# The error surface around the minimum: a narrow valley along which
# stiffness and damping trade off.
ev = ident.evaluate_grid(trial, M, cond.drop_height_mm / 1000)
n_k, n_c = res.grid_index
surface = ev.errors.reshape(400, 400)[n_k - 3:n_k + 2, n_c - 3:n_c + 2]
np.set_printoptions(precision=1, suppress=True, linewidth=120)
print("weighted error near the minimum (rows k, columns c):")
print(surface)
