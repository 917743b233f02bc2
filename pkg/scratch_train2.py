"""Desk experiment: find a training config that recovers the tire/drivetrain
parameters well enough to clear the acceptance margins with room to spare."""

import sys
import time

import numpy as np

from racedyn.estimator import Network, NetworkConfig
from racedyn.evaluation import evaluate_open_loop
from racedyn.generate import (GeneratorConfig, generate, tabletop_geometry,
                              without_actuator_lag)
from racedyn.guard import sim_profile
from racedyn.physics import PhysicsMode
from racedyn.telemetry import WindowBatch
from racedyn.training import TrainConfig, fit

GEOM = tabletop_geometry()
BOUNDS = sim_profile()
DT = 0.02


def one_step_mse(report):
    return float(np.mean(report.step_state_err ** 2))


def main(lr, batch, epochs, hidden, dense, history, seed,
         tn=0.04, sn=0.02, final_frac=0.1):
    train_series = generate(without_actuator_lag(
        GeneratorConfig(track="clover", laps=3, seed=11,
                        throttle_noise=tn, steer_noise=sn)))
    test_series = generate(without_actuator_lag(
        GeneratorConfig(track="stadium", laps=2, seed=12)))
    print(f"train rows {len(train_series)}, test rows {len(test_series)}")

    config = NetworkConfig(history_len=history, gru_layers=2,
                           gru_hidden=hidden, dense_widths=(dense, dense))
    network = Network.init(config, seed=seed)
    batch_windows = WindowBatch.from_series(train_series, history)
    print(f"windows {batch_windows.features.shape[0]}")

    tc = TrainConfig(epochs=epochs, batch_size=batch, base_lr=lr,
                     warmup_steps=50, final_lr_fraction=final_frac, seed=seed)
    t0 = time.perf_counter()
    result = fit(network, BOUNDS, batch_windows, GEOM, DT, tc)
    wall = time.perf_counter() - t0
    print(f"trained {result.steps} steps in {wall:.1f}s; "
          f"loss {result.step_losses[0]:.4g} -> {result.step_losses[-1]:.4g}")

    midpoint = 0.5 * (BOUNDS.lo + BOUNDS.hi)

    rep1 = evaluate_open_loop(network, BOUNDS, test_series, GEOM, horizon=1)
    base1 = evaluate_open_loop(None, None, test_series, GEOM, horizon=1,
                               params_vec=midpoint, history_len=history)
    mse_net, mse_mid = one_step_mse(rep1), one_step_mse(base1)
    print(f"one-step MSE: net {mse_net:.4g}  midpoint {mse_mid:.4g}  "
          f"ratio {mse_mid / mse_net:.1f}x (need >= 10x)")

    rep15 = evaluate_open_loop(network, BOUNDS, test_series, GEOM, horizon=15)
    print(f"ADE15: net {rep15.ade:.5g}  const-vel {rep15.baseline_ade:.5g}  "
          f"ratio {rep15.baseline_ade / rep15.ade:.2f}x (need >= 2x)")

    rep15tr = evaluate_open_loop(network, BOUNDS, train_series, GEOM,
                                 horizon=15)
    print(f"ADE15 on train track: net {rep15tr.ade:.5g}  "
          f"const-vel {rep15tr.baseline_ade:.5g}")

    from racedyn.estimator import estimate_params
    from racedyn.generate import tabletop_params
    from racedyn.telemetry import WindowBatch as WB
    truth = tabletop_params().to_vector()
    test_batch = WB.from_series(test_series, history)
    est = estimate_params(network, BOUNDS, test_batch.features)
    err = (est - truth) / np.maximum(np.abs(truth), 1e-12)
    print("per-param rel err (mean +- std over test windows):")
    from racedyn.physics import PARAM_NAMES
    for i, name in enumerate(PARAM_NAMES):
        print(f"  {name:4s} {err[:, i].mean():+8.3f} +- {err[:, i].std():6.3f}")


if __name__ == "__main__":
    lr = float(sys.argv[1]) if len(sys.argv) > 1 else 2e-2
    batch = int(sys.argv[2]) if len(sys.argv) > 2 else 64
    epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 50
    hidden = int(sys.argv[4]) if len(sys.argv) > 4 else 96
    dense = int(sys.argv[5]) if len(sys.argv) > 5 else 128
    history = int(sys.argv[6]) if len(sys.argv) > 6 else 12
    seed = int(sys.argv[7]) if len(sys.argv) > 7 else 0
    tn = float(sys.argv[8]) if len(sys.argv) > 8 else 0.04
    sn = float(sys.argv[9]) if len(sys.argv) > 9 else 0.02
    final_frac = float(sys.argv[10]) if len(sys.argv) > 10 else 0.1
    main(lr, batch, epochs, hidden, dense, history, seed, tn, sn, final_frac)
