"""What the network is built on: causal derivative estimates, the Gaussian
training targets, and second-order Taylor extrapolation.

    python demos/kinematics_tour.py
"""
import numpy as np

from fingermotion import kinematics as kin
from fingermotion.data import SynthSpec, synth_generate
from fingermotion.model import Model, ModelConfig

seq = synth_generate(SynthSpec(duration_s=20.0, seed=3))
x = seq.frames[:, 2]                                  # J11_z, degrees
ts = seq.t_s

window = x[500:516]
feats = kin.kinematic_features(window[:, None], ts)
oracle_v = kin.gaussian_derivative_oracle(x, ts, 1)[515]
oracle_a = kin.gaussian_derivative_oracle(x, ts, 2)[515]
print(f"causal velocity {feats.velocity[-1, 0]:8.2f} deg/s   Gaussian target {oracle_v:8.2f}")
print(f"causal accel.   {feats.acceleration[-1, 0]:8.1f} deg/s2  Gaussian target {oracle_a:8.1f}")

# diagnostic mode is the bare Taylor predictor with the filter delay removed
diag = Model(ModelConfig(use_kfe=False, use_gcn=False, diagnostic=True))
t = np.array([0.04, 0.12, 0.2, 0.4])
pred = diag.predict(seq.frames[500:516], t)[:, 2]
for ti, p in zip(t, pred):
    k = 515 + int(round(ti / ts))
    print(f"t = {ti * 1000:3.0f} ms  taylor {p:7.2f}  zero-velocity {x[515]:7.2f}  truth {x[k]:7.2f}")
