"""Utilization uplift from dynamic backfill.

A cell whose compute demand averages ~35% of one GPU leaves most of the
device idle. The dynamic policy forecasts RAN demand every epoch (max over
a trailing window), keeps a safety margin, and grants the rest to a
saturating inference backlog, reclaiming newest-first whenever the
forecast rises. Result: average utilization climbs from the thirties to
~95% with zero radio deadline misses.

Run:  python demos/02_dynamic_backfill_uplift.py
"""

import dataclasses

from ranshare import (
    AiWorkload,
    ArrivalKind,
    Calibration,
    CellConfig,
    CellSpec,
    ForecastKind,
    GpuDevice,
    LoadProfile,
    Policy,
    PolicyKind,
    ProfileKind,
    Scenario,
    Server,
    run,
)

cell = CellConfig(bandwidth_mhz=100.0, scs_khz=30, tx_antennas=4, rx_antennas=4)

scenario = Scenario(
    name="backfill-uplift",
    servers=(Server(id="edge1", gpus=(GpuDevice("gpu1"),)),),
    cells=(
        CellSpec("cell1", cell, LoadProfile(kind=ProfileKind.CONSTANT, level=0.875), "edge1"),
    ),
    calibration=Calibration(),
    ai_workloads=(AiWorkload(id="backlog", arrival=ArrivalKind.SATURATING),),
    policy=Policy(
        kind=PolicyKind.DYNAMIC_BACKFILL,
        epoch_s=0.1,
        safety_margin=0.05,
        forecast=ForecastKind.MAX_OVER_WINDOW,
        window_s=0.2,
    ),
    horizon_s=60.0,
    seed=2,
    sample_interval_s=0.01,
)

baseline = dataclasses.replace(scenario, name="ran-only", ai_workloads=())

r_base = run(baseline)
r_dyn = run(scenario)

b = r_base.summary.per_gpu["gpu1"]
d = r_dyn.summary.per_gpu["gpu1"]
print("=== RAN-only baseline vs dynamic backfill, 60 s ===")
print(f"baseline : avg total {b.avg_total:.3f}  (all of it RAN)")
print(
    f"backfill : avg total {d.avg_total:.3f}  "
    f"(RAN {d.avg_ran:.3f} + AI {d.avg_ai:.3f})"
)
print(
    f"misses   : baseline {len(r_base.deadline_misses)}, "
    f"backfill {len(r_dyn.deadline_misses)}"
)
uplift = d.avg_total / b.avg_total
print(f"\nutilization uplift: {uplift:.2f}x on the same hardware")
