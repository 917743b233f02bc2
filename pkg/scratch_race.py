import time

import numpy as np

from racedyn.estimator import NetworkConfig
from racedyn.generate import tabletop_geometry, tabletop_params
from racedyn.guard import sim_profile
from racedyn.physics import PhysicsMode
from racedyn.raceloop import (NmpcConfig, nmpc_solve, plan_cost_and_grad,
                              plan_references, run_race)
from racedyn.tracks import bundled_track

geom = tabletop_geometry()
params = tabletop_params()
pvec = params.to_vector()
bounds = sim_profile()
dt = 0.02
cfg = NmpcConfig()

for name in ("stadium", "clover"):
    track = bundled_track(name)
    profile = track.speed_profile(2.0, 5.0, 3.0)

    t0 = time.perf_counter()
    res = run_race(track, geom, params, model_params=pvec, laps=2, nmpc=cfg)
    t1 = time.perf_counter()
    print(f"{name} NMPC(truth): {t1 - t0:.1f}s, laps {res.completed}, "
          f"times {['%.2f' % t for t in res.lap_times]}, "
          f"viol {res.total_violations}, handoff {res.handoff_step}, "
          f"aborted {res.aborted}")

    t0 = time.perf_counter()
    pp = run_race(track, geom, params, controller="pursuit", laps=2, nmpc=cfg)
    t1 = time.perf_counter()
    print(f"{name} pursuit:     {t1 - t0:.1f}s, laps {pp.completed}, "
          f"times {['%.2f' % t for t in pp.lap_times]}, "
          f"viol {pp.total_violations}, handoff {pp.handoff_step}")
    print(f"  nmpc faster on every lap: "
          f"{[float(a) <= float(b) for a, b in zip(res.lap_times, pp.lap_times)]}")

# estimator path with a truth-latent stub
track = bundled_track("stadium")
lo, hi = bounds.lo, bounds.hi
frac = np.clip((pvec - lo) / (hi - lo), 1e-9, 1 - 1e-9)
z_true = np.log(frac / (1 - frac))


class TruthNet:
    def __init__(self, config, z):
        self.config = config
        self.z = z

    def forward(self, feats, train=False):
        return np.tile(self.z, (feats.shape[0], 1)), None


net = TruthNet(NetworkConfig(history_len=12, gru_layers=1, gru_hidden=8,
                             dense_widths=(8,)), z_true)
t0 = time.perf_counter()
res = run_race(track, geom, params, network=net, bounds=bounds, laps=1)
t1 = time.perf_counter()
print(f"stadium NMPC(net): {t1 - t0:.1f}s, laps {res.completed}, "
      f"times {['%.2f' % t for t in res.lap_times]}, "
      f"viol {res.total_violations}, handoff {res.handoff_step}")
lap = res.laps[0]
print("lap fields:", lap.steps, lap.trajectory.shape, lap.forces.shape,
      "%.3f %.4f %.4f" % (lap.mean_vx, lap.mean_vy, lap.mean_omega))

# slow-scale sanity
slow = NmpcConfig(speed_scale=0.6)
r1 = run_race(track, geom, params, model_params=pvec, laps=1, nmpc=slow)
print("speed_scale 0.6: lap", "%.2f" % r1.lap_times[0],
      "vs 1.0:", "%.2f" % res.lap_times[0],
      "ratio", "%.2f" % (r1.lap_times[0] / res.lap_times[0]))
