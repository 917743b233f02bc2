"""A tour of the tire and load model at the heart of the simulator.

Run it directly:  python3 demos/tire_curves.py

The lateral force curve is the magic-formula shape: linear near zero
slip, a peak, then gentle fall-off.  Its magnitude scales with the
vertical load on the axle, and that load moves front-to-rear whenever
the car accelerates — which is exactly the coupling the full physics
mode captures and the nominal-load ablation ignores.
"""

import numpy as np

from racedyn.generate import tabletop_geometry, tabletop_params
from racedyn.physics import BodyState, axle_loads, longitudinal_force, \
    pacejka_lateral, slip_angles

geom = tabletop_geometry()
params = tabletop_params()
front = params.front

# ---------------------------------------------------------------------------
# The lateral force curve.  Nominal front load for the tabletop car:
fz0 = geom.m * geom.g * geom.lr / geom.wheelbase
print(f"tabletop car: m = {geom.m} kg, wheelbase = {geom.wheelbase*1000:.0f} mm, "
      f"nominal front load = {fz0:.4f} N")
print()
print("front lateral force vs slip angle, at three vertical loads")
print(f"{'slip [deg]':>10} {'0.8*Fz0 [N]':>12} {'Fz0 [N]':>12} {'1.2*Fz0 [N]':>12}")
for deg in (-12, -8, -4, -2, -1, 0, 1, 2, 4, 8, 12):
    alpha = np.deg2rad(deg)
    row = [pacejka_lateral(alpha, s * fz0, front, fz0) for s in (0.8, 1.0, 1.2)]
    print(f"{deg:>10} {row[0]:>12.5f} {row[1]:>12.5f} {row[2]:>12.5f}")

# The peak and where it sits:
sweep = np.linspace(0.0, 0.5, 20001)
forces = np.array([pacejka_lateral(a, fz0, front, fz0) for a in sweep])
k = int(np.argmax(forces))
print(f"\npeak front force {forces[k]:.5f} N at slip {np.rad2deg(sweep[k]):.2f} deg")

# ---------------------------------------------------------------------------
# Where slip angles come from.  In a steady left-hand corner the body
# yaws while the velocity vector lags, so the front tire sees the
# steering angle minus the kinematic angle of its own velocity.
state = BodyState(vx=1.5, vy=-0.05, omega=2.0)
for steer_deg in (0, 5, 10):
    steer = np.deg2rad(steer_deg)
    af, ar = slip_angles(state, steer, geom, params)
    print(f"steer {steer_deg:>2} deg at vx=1.5 m/s: "
          f"front slip {np.rad2deg(af):+6.2f} deg, "
          f"rear slip {np.rad2deg(ar):+6.2f} deg")

# ---------------------------------------------------------------------------
# Load transfer.  Throttle produces rear thrust; the reaction tips load
# off the front axle onto the rear, pivoting about the center of gravity.
print(f"\n{'throttle':>8} {'Frx [N]':>9} {'front [N]':>10} {'rear [N]':>10} "
      f"{'front loss':>10}")
for throttle in (-0.5, 0.0, 0.5, 1.0):
    frx = longitudinal_force(1.5, throttle, params.drivetrain)
    loads = axle_loads(frx, geom)
    print(f"{throttle:>8.1f} {frx:>9.5f} {loads.front:>10.5f} "
          f"{loads.rear:>10.5f} {fz0 - loads.front:>10.5f}")

total = loads.front + loads.rear
print(f"\nfront + rear = {total:.6f} N = m*g = {geom.m * geom.g:.6f} N "
      "(transfer moves load, never creates it)")
