"""Fly the stock chipping scenario and narrate what the FDI engine does.

A helicoid flight loses 10% of one blade on rotor 2 at t=10 s. The
monitoring residual trips within a quarter second, the allocator then
pins each rotor in turn to a low isolation speed, and the rotor whose
pinned tone dominates the isolation band is named. Run with an output
directory argument to also dump the cycle-resolved log:

    python3 demos/chipping_demo.py [out_dir]
"""

import sys

import numpy as np

from rotorfdi.config import RunConfig

cfg = RunConfig()
print("scenario: %s flight, %.0f%% chip on rotor %d at t=%.0f s, "
      "damping %.2f, rho=%.3f"
      % (cfg.trajectory.kind, 100 * cfg.fault.depth, cfg.fault.rotor,
         cfg.fault.onset, cfg.imu.damping, cfg.residual.rho_fd))

res = cfg.fly()

# -- detection ---------------------------------------------------------
k_on = int(cfg.fault.onset * cfg.residual.sample_rate)
floor = res.r_fd[400:k_on].max()
print("\nmonitoring floor before the chip: %.4f g (threshold %.3f)"
      % (floor, cfg.residual.rho_fd))
print("detected at t=%.3f s (%.3f s after onset)"
      % (res.detected_at, res.detected_at - cfg.fault.onset))

# -- isolation ---------------------------------------------------------
t_iso = cfg.vehicle.n_rotors * cfg.residual.stage_time
print("\nisolation stages: %d rotors x %.3f s = %.1f s"
      % (cfg.vehicle.n_rotors, cfg.residual.stage_time, t_iso))
print("interval [%.2f, %.2f] s" % (res.detected_at, res.detected_at + t_iso))
order = np.argsort(res.stage_peaks)[::-1]
print("stage peaks (g), largest first:")
for i in order:
    mark = "  <- chipped" if i + 1 == cfg.fault.rotor else ""
    print("  rotor %d: %.4f%s" % (i + 1, res.stage_peaks[i], mark))
ratio = res.stage_peaks[order[0]] / res.stage_peaks[order[1]]
print("winner-to-runner-up ratio %.1f (needs %.1f)"
      % (ratio, cfg.residual.prominence))
print("\nverdict: rotor %d (%s)"
      % (res.verdict, "correct" if res.verdict == cfg.fault.rotor
         else "WRONG"))

# -- why the faulty rotor speeds up ------------------------------------
spd = np.abs(res.thetadot)
pre = spd[k_on - 400:k_on].mean(axis=0)
post = spd[k_on + 400:k_on + 1200].mean(axis=0)
print("\nmean rotor speed before -> after the chip (rad/s):")
for i in range(cfg.vehicle.n_rotors):
    print("  rotor %d: %6.1f -> %6.1f  (%+.1f)"
          % (i + 1, pre[i], post[i], post[i] - pre[i]))
print("the chipped blade loses drag, the allocator answers the yaw "
      "imbalance\nwith extra lift on that spin group, so the faulty "
      "rotor runs fastest --\nwhich is what pushes its vibration tone "
      "toward the detection band.")

if len(sys.argv) > 1:
    from rotorfdi.cli import cmd_simulate
    cmd_simulate(None, sys.argv[1])
    print("\ncycle-resolved log written to %s" % sys.argv[1])
